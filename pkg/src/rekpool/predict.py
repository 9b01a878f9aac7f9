"""Pool-driven path-loss prediction, baselines, and error-CDF reports."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FEATURE_NAMES, GROUP_MEMBER_INDEX, extract_features
from .geometry import Scene, Trajectory, as_vec3, canonical_scene_json
from .pool import Context, Pool, fnv1a_64
from .propagation import OUTAGE_CAP_DB, path_loss
from .spectrum import GROUPS

#: Cumulative group-weight coverage required before masking stops.
DEFAULT_TAU = 0.9


def scene_fingerprint(scene: Scene, trajectory: Trajectory) -> int:
    return fnv1a_64(canonical_scene_json(scene, trajectory).encode())


def context_for(scene: Scene, trajectory: Trajectory, rx, position_id: int) -> Context:
    los = path_loss(scene, rx, position_id=position_id).los
    return Context(scene_fingerprint=scene_fingerprint(scene, trajectory),
                   position_id=position_id, rx=as_vec3(rx), los=los,
                   frequency_hz=scene.frequency_hz)


@dataclass(frozen=True)
class Prediction:
    position_id: int
    predicted_db: float
    truth_db: float
    method: str
    fallback: bool = False

    @property
    def abs_error_db(self) -> float:
        return abs(self.predicted_db - self.truth_db)

    @property
    def capped(self) -> bool:
        return (self.truth_db >= OUTAGE_CAP_DB) and (self.predicted_db >= OUTAGE_CAP_DB)


class NoKnowledgeError(RuntimeError):
    """Pool had no usable entry and fallback was disabled."""


def top_weight_groups(weights, tau: float) -> set:
    """Smallest group set (by descending weight) with cumulative weight >= tau."""
    order = sorted(GROUPS, key=lambda g: (-weights[g], GROUPS.index(g)))
    chosen = set()
    acc = 0.0
    for g in order:
        chosen.add(g)
        acc += weights[g]
        if acc >= tau:
            break
    return chosen


def mask_features(features, weights, tau: float) -> np.ndarray:
    """Zero members of groups outside the minimal top-weight set."""
    keep = top_weight_groups(weights, tau)
    out = np.asarray(features, dtype=float).copy()
    for g in GROUPS:
        if g not in keep:
            out[list(GROUP_MEMBER_INDEX[g])] = 0.0
    return out


def predict_rekp(pool: Pool, scene: Scene, trajectory: Trajectory, rx,
                 position_id: int, tau: float = DEFAULT_TAU,
                 fallback=None):
    """Knowledge-pool prediction at one position.

    On a pool hit the entry's forest is evaluated on the masked feature
    vector.  On a miss (or degenerate entry), `fallback` - a callable
    distance -> dB, typically a fitted log-distance model - is used and
    the prediction tagged as fallback.  Returns a Prediction.
    """
    truth = path_loss(scene, rx, position_id=position_id).path_loss_db
    ctx = context_for(scene, trajectory, rx, position_id)
    hit = pool.query(ctx)
    if hit is not None and not hit[0].weights.degenerate:
        entry, _sim = hit
        feats = mask_features(extract_features(scene, rx), entry.weights, tau)
        pred = entry.model.predict_one(feats)
        return Prediction(position_id=position_id, predicted_db=pred,
                          truth_db=truth, method="rekp")
    if fallback is None:
        raise NoKnowledgeError(f"no usable knowledge for position {position_id}")
    d = float(np.linalg.norm(as_vec3(rx) - scene.tx))
    return Prediction(position_id=position_id, predicted_db=float(fallback(d)),
                      truth_db=truth, method="rekp", fallback=True)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogDistanceModel:
    pl0_db: float      # loss at d0 = 1 m
    exponent: float

    def __call__(self, distance_m: float) -> float:
        return self.pl0_db + 10.0 * self.exponent * math.log10(distance_m)


def fit_logdistance(samples) -> LogDistanceModel:
    """Least-squares fit of PL = PL0 + 10 n log10(d), d0 = 1 m."""
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    d = np.array([s[0] for s in samples], dtype=float)
    pl = np.array([s[1] for s in samples], dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    x = 10.0 * np.log10(d)
    if np.ptp(x) == 0.0:
        raise ValueError("degenerate fit: all distances equal")
    xm, ym = x.mean(), pl.mean()
    n = float(((x - xm) * (pl - ym)).sum() / ((x - xm) ** 2).sum())
    pl0 = float(ym - n * xm)
    return LogDistanceModel(pl0_db=pl0, exponent=n)


def predict_knn(train, rx, k: int = 3) -> float:
    """Inverse-distance-weighted mean over the k nearest train positions.

    train: list of (position, path_loss_db).  An exact positional match
    returns that sample's value.  Ties in distance are broken by sample
    order.
    """
    if not train:
        raise ValueError("train set must be nonempty")
    rx = as_vec3(rx)
    dists = [(float(np.linalg.norm(as_vec3(p) - rx)), i, v) for i, (p, v) in enumerate(train)]
    dists.sort(key=lambda t: (t[0], t[1]))
    if dists[0][0] == 0.0:
        return float(dists[0][2])
    chosen = dists[:min(k, len(dists))]
    wts = np.array([1.0 / d for d, _, _ in chosen])
    vals = np.array([v for _, _, v in chosen])
    return float((wts * vals).sum() / wts.sum())


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    method: str
    errors: tuple          # sorted ascending, capped rows excluded
    n_capped: int

    @property
    def cdf(self):
        """(error, cumulative fraction) points; nondecreasing, ends at 1."""
        n = len(self.errors)
        return tuple((e, (i + 1) / n) for i, e in enumerate(self.errors))

    def percentile(self, level: float) -> float:
        """Smallest error e with CDF(e) >= level."""
        if not (0.0 < level <= 1.0):
            raise ValueError("level must be in (0, 1]")
        n = len(self.errors)
        idx = math.ceil(level * n) - 1
        return self.errors[max(idx, 0)]

    @property
    def p80(self) -> float:
        return self.percentile(0.8)

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.errors))))


def evaluate(predictions) -> dict:
    """Per-method ErrorReport from a mixed prediction list."""
    by_method = {}
    for p in predictions:
        by_method.setdefault(p.method, []).append(p)
    reports = {}
    for method in sorted(by_method):
        preds = by_method[method]
        errors = sorted(p.abs_error_db for p in preds if not p.capped)
        n_capped = sum(1 for p in preds if p.capped)
        if not errors:
            raise ValueError(f"no uncapped predictions for method {method!r}")
        reports[method] = ErrorReport(method=method, errors=tuple(errors),
                                      n_capped=n_capped)
    return reports
