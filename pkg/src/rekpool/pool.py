"""Capacity-bounded knowledge pool with the dual interaction mechanism.

Incoming (context, realizations) requests are answered from existing
knowledge, refined, warm-started from the most similar entry, or
learned from scratch, depending on where the best context similarity
falls relative to the two thresholds.  Insertions that exceed capacity
trigger similarity/utilization/age-based eviction.

The pool is a single-writer state machine: every mutating operation
(ingest, query hits, evict) must be externally serialized.  All
timestamps are caller-supplied logical times so that replaying an
ingest log reproduces the pool file byte-for-byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import forest as rf
from .features import FEATURE_NAMES
from .geometry import as_vec3, atomic_write_text
from .spectrum import (GroupWeights, KnowledgeSpectrum, SUBSETS, group_weights,
                       spectrum)

POOL_FORMAT_VERSION = 1

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class PoolFileError(ValueError):
    """Malformed pool file."""


class PoolVersionError(PoolFileError):
    """Pool file written by an unknown format version."""


class Outcome(Enum):
    ANSWERED_EXISTING = "AnsweredExisting"
    REFINED = "Refined"
    TRANSFERRED = "Transferred"
    GENERATED_NEW = "GeneratedNew"


@dataclass(frozen=True)
class Context:
    scene_fingerprint: int
    position_id: int
    rx: np.ndarray
    los: bool
    frequency_hz: float

    def __post_init__(self):
        object.__setattr__(self, "rx", as_vec3(self.rx))


#: Distance scale of the RX-proximity similarity term [m].
SIMILARITY_RX_SCALE_M = 10.0


def similarity(a: Context, b: Context) -> float:
    """Weighted context similarity in [0, 1].

    0.4 scene fingerprint match + 0.3 RX proximity + 0.2 LOS-state
    match + 0.1 frequency proximity; equals 1 only for identical
    contexts.
    """
    s = 0.0
    if a.scene_fingerprint == b.scene_fingerprint:
        s += 0.4
    s += 0.3 * math.exp(-float(np.linalg.norm(a.rx - b.rx)) / SIMILARITY_RX_SCALE_M)
    if a.los == b.los:
        s += 0.2
    s += 0.1 * math.exp(-abs(math.log(a.frequency_hz / b.frequency_hz)))
    return s


@dataclass
class KnowledgeEntry:
    """One unit of stored knowledge.

    `model` holds the trees fit on this entry's own realizations and is
    what predictions evaluate.  `warm_trees` are trees retained from the
    transfer source; they extend the forest for knowledge derivation
    (weights/spectrum are recomputed over own + retained trees) but do
    not vote in predictions, so transfer never biases the predictive
    path toward the source's position.
    """

    entry_id: int
    context: Context
    weights: GroupWeights
    spectrum: KnowledgeSpectrum | None  # None when weights are degenerate
    model: rf.RandomForestModel
    train_X: np.ndarray
    train_y: np.ndarray
    created_at: float
    updated_at: float
    utilization_count: int = 0
    warm_trees: list = field(default_factory=list)

    def combined_model(self) -> rf.RandomForestModel:
        """Own plus retained trees, for knowledge derivation."""
        if not self.warm_trees:
            return self.model
        return rf.RandomForestModel(
            trees=self.model.trees + self.warm_trees,
            bootstrap_indices=self.model.bootstrap_indices
            + [np.array([], dtype=int)] * len(self.warm_trees),
            params=self.model.params, feature_names=self.model.feature_names,
            n_train_rows=self.model.n_train_rows, oob_r2=self.model.oob_r2)


@dataclass
class Pool:
    capacity: int = 32
    theta_high: float = 0.95
    theta_low: float = 0.40
    alpha: float = 1.0   # redundancy (max similarity to another entry)
    beta: float = 0.5    # utilization discount
    gamma: float = 0.25  # age discount
    forest_params: rf.ForestParams = field(default_factory=rf.ForestParams)
    entries: dict = field(default_factory=dict)  # entry_id -> KnowledgeEntry
    next_entry_id: int = 1
    # dependency-injection points for harnesses that memoize fits; not
    # part of the persisted state
    fit_fn: object = field(default=None, repr=False, compare=False)
    importance_fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not (0.0 <= self.theta_low < self.theta_high <= 1.0):
            raise ValueError("need 0 <= theta_low < theta_high <= 1")

    # -- read side ---------------------------------------------------------

    def _best_match(self, ctx: Context):
        best = None
        for eid in sorted(self.entries):
            s = similarity(self.entries[eid].context, ctx)
            if best is None or s > best[1]:
                best = (eid, s)
        return best

    def query(self, ctx: Context):
        """Best entry with similarity >= theta_low, or None.

        A returned hit counts as a utilization of that entry.
        """
        best = self._best_match(ctx)
        if best is None or best[1] < self.theta_low:
            return None
        entry = self.entries[best[0]]
        entry.utilization_count += 1
        return entry, best[1]

    # -- write side --------------------------------------------------------

    def _fit(self, X, y):
        fn = self.fit_fn if self.fit_fn is not None else rf.fit
        return fn(X, y, self.forest_params, feature_names=FEATURE_NAMES)

    def _importance(self, model, X, y):
        fn = self.importance_fn if self.importance_fn is not None else rf.permutation_importance
        return fn(model, X, y, seed=self.forest_params.seed)

    def _entry_from_fit(self, ctx, model, X, y, now) -> KnowledgeEntry:
        imp = self._importance(model, X, y)
        w = group_weights(imp)
        sp = None if w.degenerate else spectrum(w, position_id=ctx.position_id, los=ctx.los)
        eid = self.next_entry_id
        self.next_entry_id += 1
        return KnowledgeEntry(entry_id=eid, context=ctx, weights=w, spectrum=sp,
                              model=model, train_X=X, train_y=y,
                              created_at=now, updated_at=now)

    def ingest(self, ctx: Context, X, y, now: float = 0.0, force_refresh: bool = False):
        """Dual interaction flow; returns (Outcome, entry_id)."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(X) == 0:
            raise ValueError("realizations must be nonempty")
        best = self._best_match(ctx)
        if best is not None and best[1] >= self.theta_high:
            entry = self.entries[best[0]]
            if not force_refresh:
                entry.utilization_count += 1
                return Outcome.ANSWERED_EXISTING, entry.entry_id
            # Refine: retrain on stored provenance plus the new data.
            X2 = np.vstack([entry.train_X, X])
            y2 = np.concatenate([entry.train_y, y])
            model = self._fit(X2, y2)
            imp = self._importance(model, X2, y2)
            w = group_weights(imp)
            entry.model = model
            entry.warm_trees = []
            entry.train_X = X2
            entry.train_y = y2
            entry.weights = w
            entry.spectrum = None if w.degenerate else spectrum(
                w, position_id=ctx.position_id, los=ctx.los)
            entry.updated_at = now
            return Outcome.REFINED, entry.entry_id
        if best is not None and best[1] >= self.theta_low:
            outcome, entry = Outcome.TRANSFERRED, self._transfer(
                self.entries[best[0]], ctx, X, y, now)
        else:
            model = self._fit(X, y)
            outcome, entry = Outcome.GENERATED_NEW, self._entry_from_fit(ctx, model, X, y, now)
        self.entries[entry.entry_id] = entry
        if len(self.entries) > self.capacity:
            self.sort_and_evict()
        return outcome, entry.entry_id

    def _transfer(self, source: KnowledgeEntry, ctx, X, y, now) -> KnowledgeEntry:
        """Warm start: retain the source's own trees, extend with trees
        fit on the new realizations, and re-derive weights and spectrum
        on the combined forest (knowledge completion).  Only the fresh
        trees vote in predictions (see KnowledgeEntry)."""
        fresh = self._fit(X, y)
        eid = self.next_entry_id
        self.next_entry_id += 1
        entry = KnowledgeEntry(entry_id=eid, context=ctx, weights=group_weights(
            np.zeros(len(FEATURE_NAMES))), spectrum=None,
            model=fresh, train_X=X, train_y=y, created_at=now, updated_at=now,
            warm_trees=list(source.model.trees))
        imp = self._importance(entry.combined_model(), X, y)
        w = group_weights(imp)
        entry.weights = w
        entry.spectrum = None if w.degenerate else spectrum(
            w, position_id=ctx.position_id, los=ctx.los)
        return entry

    def sort_and_evict(self) -> list:
        """Evict highest-scoring entries until within capacity.

        score = alpha * (max similarity to any other entry)
              - beta * log(1 + utilization)
              - gamma * normalized age rank (oldest -> 0)
        """
        removed = []
        while len(self.entries) > self.capacity:
            ids = sorted(self.entries)
            by_age = sorted(ids, key=lambda i: (self.entries[i].created_at, i))
            denom = max(len(ids) - 1, 1)
            age_rank = {eid: k / denom for k, eid in enumerate(by_age)}
            scored = []
            for eid in ids:
                e = self.entries[eid]
                max_sim = max((similarity(e.context, self.entries[o].context)
                               for o in ids if o != eid), default=0.0)
                score = (self.alpha * max_sim
                         - self.beta * math.log1p(e.utilization_count)
                         - self.gamma * age_rank[eid])
                scored.append((score, eid))
            # highest score evicted; ties broken by highest entry id
            _, victim = max(scored, key=lambda se: (se[0], se[1]))
            del self.entries[victim]
            removed.append(victim)
        return removed


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _context_to_dict(c: Context) -> dict:
    return {"scene_fingerprint": c.scene_fingerprint, "position_id": c.position_id,
            "rx": [float(x) for x in c.rx], "los": c.los,
            "frequency_hz": c.frequency_hz}


def _context_from_dict(d: dict) -> Context:
    return Context(scene_fingerprint=int(d["scene_fingerprint"]),
                   position_id=int(d["position_id"]), rx=d["rx"],
                   los=bool(d["los"]), frequency_hz=float(d["frequency_hz"]))


def _weights_to_dict(w: GroupWeights) -> dict:
    return {"w_L": w.w_L, "w_V": w.w_V, "w_B": w.w_B, "w_D": w.w_D,
            "degenerate": w.degenerate}


def pool_to_dict(pool: Pool) -> dict:
    entries = []
    for eid in sorted(pool.entries):
        e = pool.entries[eid]
        entries.append({
            "entry_id": e.entry_id,
            "context": _context_to_dict(e.context),
            "weights": _weights_to_dict(e.weights),
            "spectrum": None if e.spectrum is None else {
                "values": list(e.spectrum.values),
                "position_id": e.spectrum.position_id,
                "los": e.spectrum.los,
            },
            "model": e.model.to_dict(),
            "warm_trees": [t.to_dict() for t in e.warm_trees],
            "train_X": [[float(v) for v in row] for row in e.train_X],
            "train_y": [float(v) for v in e.train_y],
            "created_at": e.created_at,
            "updated_at": e.updated_at,
            "utilization_count": e.utilization_count,
        })
    fp = pool.forest_params
    return {
        "version": POOL_FORMAT_VERSION,
        "capacity": pool.capacity,
        "thresholds": {"theta_high": pool.theta_high, "theta_low": pool.theta_low},
        "coefficients": {"alpha": pool.alpha, "beta": pool.beta, "gamma": pool.gamma},
        "forest_params": {"n_trees": fp.n_trees, "max_depth": fp.max_depth,
                          "min_leaf": fp.min_leaf,
                          "features_per_split": fp.features_per_split, "seed": fp.seed},
        "next_entry_id": pool.next_entry_id,
        "entries": entries,
    }


def pool_from_dict(doc: dict) -> Pool:
    if not isinstance(doc, dict) or "version" not in doc:
        raise PoolFileError("not a pool file")
    if doc["version"] != POOL_FORMAT_VERSION:
        raise PoolVersionError(f"unsupported pool format version: {doc['version']!r}")
    fp = doc["forest_params"]
    pool = Pool(capacity=int(doc["capacity"]),
                theta_high=float(doc["thresholds"]["theta_high"]),
                theta_low=float(doc["thresholds"]["theta_low"]),
                alpha=float(doc["coefficients"]["alpha"]),
                beta=float(doc["coefficients"]["beta"]),
                gamma=float(doc["coefficients"]["gamma"]),
                forest_params=rf.ForestParams(
                    n_trees=int(fp["n_trees"]), max_depth=int(fp["max_depth"]),
                    min_leaf=int(fp["min_leaf"]),
                    features_per_split=fp["features_per_split"], seed=int(fp["seed"])),
                next_entry_id=int(doc["next_entry_id"]))
    for ed in doc["entries"]:
        w = ed["weights"]
        sp = ed["spectrum"]
        entry = KnowledgeEntry(
            entry_id=int(ed["entry_id"]),
            context=_context_from_dict(ed["context"]),
            weights=GroupWeights(w_L=float(w["w_L"]), w_V=float(w["w_V"]),
                                 w_B=float(w["w_B"]), w_D=float(w["w_D"]),
                                 degenerate=bool(w["degenerate"])),
            spectrum=None if sp is None else KnowledgeSpectrum(
                values=tuple(sp["values"]), position_id=int(sp["position_id"]),
                los=bool(sp["los"])),
            model=rf.RandomForestModel.from_dict(ed["model"]),
            warm_trees=[rf.TreeNode.from_dict(t) for t in ed["warm_trees"]],
            train_X=np.array(ed["train_X"], dtype=float),
            train_y=np.array(ed["train_y"], dtype=float),
            created_at=float(ed["created_at"]),
            updated_at=float(ed["updated_at"]),
            utilization_count=int(ed["utilization_count"]))
        pool.entries[entry.entry_id] = entry
    return pool


def save_pool(path, pool: Pool):
    atomic_write_text(path, json.dumps(pool_to_dict(pool), separators=(",", ":")) + "\n")


def load_pool(path) -> Pool:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise PoolFileError(f"malformed pool file: {exc}") from exc
    return pool_from_dict(doc)
