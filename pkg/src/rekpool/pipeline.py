"""End-to-end pipeline: simulate -> learn -> pool -> predict.

Shared by the CLI and the evaluation harness.  The leave-one-position-
out evaluation rebuilds a pool per held-out position from the remaining
positions' realizations; per-position forest fits and importance runs
are memoized so the rebuilds stay cheap.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import forest as rf
from .features import (DATASET_HEADER, FEATURE_NAMES, RealizationConfig,
                       realize)
from .geometry import Scene, Trajectory, atomic_write_text
from .pool import Context, Outcome, Pool
from .predict import (Prediction, context_for, fit_logdistance, predict_knn,
                      predict_rekp, evaluate, DEFAULT_TAU)
from .propagation import path_loss
from .spectrum import SUBSETS, group_weights, spectrum as build_spectrum

SPECTRUM_HEADER = ("position_id", "los", "w_L", "w_V", "w_B", "w_D") + tuple(
    f"K_{s}" for s in SUBSETS)


def simulate_trajectory(scene: Scene, trajectory: Trajectory,
                        cfg: RealizationConfig) -> list:
    """Realize every trajectory position; logical timestamps 1, 2, ..."""
    rows = []
    for i, rx in enumerate(trajectory.positions, start=1):
        rows.extend(realize(scene, rx, cfg, position_id=i, timestamp=float(i)))
    return rows


def rows_by_position(rows) -> dict:
    out = {}
    for r in rows:
        out.setdefault(r.position_id, []).append(r)
    for pid in out:
        out[pid].sort(key=lambda r: r.realization_id)
    return out


def design_matrices(rows):
    X = np.array([r.features for r in rows])
    y = np.array([r.path_loss_db for r in rows])
    return X, y


@dataclass
class PositionKnowledge:
    position_id: int
    los: bool
    weights: object
    spectrum: object | None
    model: rf.RandomForestModel
    degenerate: bool


class FitCache:
    """Memoizes forest fits and permutation-importance runs by content."""

    def __init__(self, importance_repeats: int = 5):
        self._fits = {}
        self._imps = {}
        self.importance_repeats = importance_repeats

    def fit(self, X, y, params, feature_names=None):
        key = (X.tobytes(), y.tobytes(), params)
        if key not in self._fits:
            self._fits[key] = rf.fit(X, y, params, feature_names=feature_names)
        return self._fits[key]

    def importance(self, model, X, y, seed=0):
        sig = tuple((t.feature, t.threshold, t.value, t.n_rows) for t in model.trees)
        key = (sig, X.tobytes(), y.tobytes(), seed)
        if key not in self._imps:
            self._imps[key] = rf.permutation_importance(
                model, X, y, seed=seed, n_repeats=self.importance_repeats)
        return self._imps[key]


def learn_positions(scene: Scene, trajectory: Trajectory, rows,
                    params: rf.ForestParams, cache: FitCache | None = None) -> list:
    """Cold per-position fit + importances + weights + spectrum."""
    cache = cache or FitCache()
    by_pos = rows_by_position(rows)
    out = []
    for pid in sorted(by_pos):
        X, y = design_matrices(by_pos[pid])
        los = by_pos[pid][0].los  # realization 0 is unperturbed
        model = cache.fit(X, y, params, feature_names=FEATURE_NAMES)
        imp = cache.importance(model, X, y, seed=params.seed)
        w = group_weights(imp)
        sp = None if w.degenerate else build_spectrum(w, position_id=pid, los=los)
        out.append(PositionKnowledge(position_id=pid, los=los, weights=w,
                                     spectrum=sp, model=model,
                                     degenerate=w.degenerate))
    return out


def build_pool(scene: Scene, trajectory: Trajectory, rows, pool: Pool,
               cache: FitCache | None = None, skip_positions=()) -> Pool:
    """Ingest every position's realizations through the dual interaction
    flow, in position order."""
    cache = cache or FitCache()
    pool.fit_fn = cache.fit
    pool.importance_fn = cache.importance
    by_pos = rows_by_position(rows)
    for pid in sorted(by_pos):
        if pid in skip_positions:
            continue
        rx = trajectory.positions[pid - 1]
        ctx = context_for(scene, trajectory, rx, pid)
        X, y = design_matrices(by_pos[pid])
        pool.ingest(ctx, X, y, now=float(pid))
    return pool


def spectrum_csv(knowledge) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPECTRUM_HEADER)
    for k in knowledge:
        gw = k.weights
        if k.degenerate:
            vals = [""] * len(SUBSETS)
        else:
            vals = [repr(v) for v in k.spectrum.values]
        w.writerow([k.position_id, int(k.los),
                    repr(gw.w_L), repr(gw.w_V), repr(gw.w_B), repr(gw.w_D)] + vals)
    return buf.getvalue()


def make_pool(capacity=32, theta_high=0.95, theta_low=0.40,
              alpha=1.0, beta=0.5, gamma=0.25,
              forest_params: rf.ForestParams | None = None) -> Pool:
    return Pool(capacity=capacity, theta_high=theta_high, theta_low=theta_low,
                alpha=alpha, beta=beta, gamma=gamma,
                forest_params=forest_params or rf.ForestParams())


def loo_evaluate(scene: Scene, trajectory: Trajectory, rows,
                 pool_template: Pool | None = None, tau: float = DEFAULT_TAU,
                 knn_k: int = 3, cache: FitCache | None = None):
    """Leave-one-position-out comparison of REKP vs the two baselines.

    For each held-out position a fresh pool is built from the remaining
    positions' realizations; the held-out position's data never enters
    that pool.  Returns (predictions, reports-by-method).
    """
    cache = cache or FitCache()
    truths = {}
    for pid, rx in enumerate(trajectory.positions, start=1):
        truths[pid] = path_loss(scene, rx, position_id=pid).path_loss_db
    n = len(trajectory.positions)
    predictions = []
    for q in range(1, n + 1):
        rx = trajectory.positions[q - 1]
        others = [(pid, trajectory.positions[pid - 1]) for pid in range(1, n + 1)
                  if pid != q]
        ld = fit_logdistance([(float(np.linalg.norm(p - scene.tx)), truths[pid])
                              for pid, p in others])
        tmpl = pool_template or make_pool()
        pool = Pool(capacity=tmpl.capacity, theta_high=tmpl.theta_high,
                    theta_low=tmpl.theta_low, alpha=tmpl.alpha, beta=tmpl.beta,
                    gamma=tmpl.gamma, forest_params=tmpl.forest_params)
        build_pool(scene, trajectory, rows, pool, cache=cache, skip_positions={q})
        predictions.append(predict_rekp(pool, scene, trajectory, rx, q,
                                        tau=tau, fallback=ld))
        d = float(np.linalg.norm(rx - scene.tx))
        predictions.append(Prediction(position_id=q, predicted_db=ld(d),
                                      truth_db=truths[q], method="logdistance"))
        knn = predict_knn([(p, truths[pid]) for pid, p in others], rx, k=knn_k)
        predictions.append(Prediction(position_id=q, predicted_db=knn,
                                      truth_db=truths[q], method="knn"))
    return predictions, evaluate(predictions)


def cdf_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "error_db", "cum_fraction"))
    for method in sorted(reports):
        for err, frac in reports[method].cdf:
            w.writerow([method, repr(float(err)), repr(float(frac))])
    return buf.getvalue()


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "mean", "rmse", "p80", "n", "n_capped"))
    for method in sorted(reports):
        r = reports[method]
        w.writerow([method, repr(r.mean), repr(r.rmse), repr(r.p80),
                    len(r.errors), r.n_capped])
    return buf.getvalue()
