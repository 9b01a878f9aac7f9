"""Deterministic ground-truth channel generator.

Path loss at an RX is the strongest (minimum-loss) of the line-of-sight
path and all valid single-bounce reflections found with the image
method.  No diffraction, no multi-bounce, no coherent summation: the
oracle trades propagation fidelity for exactness, which is what the
feature/knowledge layers above it need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (EPS_EXACT, Scatterer, Scene, as_vec3, mirror_point,
                       segment_blocked)

SPEED_OF_LIGHT = 299_792_458.0

#: Sentinel path loss when no propagation path reaches the RX [dB].
OUTAGE_CAP_DB = 250.0


def fspl_db(distance_m: float, frequency_hz: float) -> float:
    """Free-space path loss 20*log10(4*pi*d*f/c) in dB."""
    if not (distance_m > 0):
        raise ValueError("distance_m must be positive")
    if not (frequency_hz > 0):
        raise ValueError("frequency_hz must be positive")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * frequency_hz / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class Path:
    kind: str  # "LOS" or "Reflection"
    length_m: float
    loss_db: float
    via_scatterer: int | None = None
    reflection_point: np.ndarray | None = None


@dataclass(frozen=True)
class ChannelSample:
    position_id: int
    rx: np.ndarray
    path_loss_db: float
    los: bool
    n_paths: int
    timestamp: float


def _validate_rx(scene: Scene, rx):
    rx = as_vec3(rx)
    lo, hi = scene.bounds()
    if np.any(rx < lo) or np.any(rx > hi):
        raise ValueError("rx outside scene bounds")
    for s in scene.scatterers:
        if s.contains(rx):
            raise ValueError(f"rx lies inside scatterer {s.id}")
    return rx


def _reflection_path(scene: Scene, rx, scatterer: Scatterer, axis: int,
                     value: float, sign: int):
    """Image-method single bounce off one face, or None if invalid."""
    tx = scene.tx
    # TX and RX must both be on the outward side of the face.
    if sign * (tx[axis] - value) <= EPS_EXACT or sign * (rx[axis] - value) <= EPS_EXACT:
        return None
    tx_img = mirror_point(tx, axis, value)
    d = rx - tx_img
    denom = d[axis]
    if abs(denom) < EPS_EXACT:
        return None
    t = (value - tx_img[axis]) / denom
    if t <= EPS_EXACT or t >= 1.0 - EPS_EXACT:
        return None
    p = tx_img + t * d
    # Reflection point must land on the face rectangle.
    for other_axis in range(3):
        if other_axis == axis:
            continue
        if p[other_axis] < scatterer.lo[other_axis] - EPS_EXACT:
            return None
        if p[other_axis] > scatterer.hi[other_axis] + EPS_EXACT:
            return None
    # Both legs must be clear of all geometry (the bouncing face itself
    # only touches at the reflection point, which does not occlude).
    if segment_blocked(tx, p, scene, exclude_ids=(scatterer.id,)).blocked:
        return None
    if segment_blocked(p, rx, scene, exclude_ids=(scatterer.id,)).blocked:
        return None
    length = float(np.linalg.norm(rx - tx_img))
    loss = fspl_db(length, scene.frequency_hz) + scatterer.reflection_loss_db
    return Path(kind="Reflection", length_m=length, loss_db=loss,
                via_scatterer=scatterer.id, reflection_point=p)


def trace_paths(scene: Scene, rx) -> list:
    """All valid LOS + single-bounce paths, sorted ascending by loss."""
    rx = _validate_rx(scene, rx)
    paths = []
    direct = segment_blocked(scene.tx, rx, scene)
    if not direct.blocked:
        length = float(np.linalg.norm(rx - scene.tx))
        paths.append(Path(kind="LOS", length_m=length,
                          loss_db=fspl_db(length, scene.frequency_hz)))
    for s in scene.scatterers:
        for axis, value, sign in s.faces():
            p = _reflection_path(scene, rx, s, axis, value, sign)
            if p is not None:
                paths.append(p)
    paths.sort(key=lambda p: (p.loss_db, p.kind,
                              -1 if p.via_scatterer is None else p.via_scatterer))
    return paths


def path_loss(scene: Scene, rx, position_id: int = 0,
              timestamp: float = 0.0) -> ChannelSample:
    """Strongest-path channel sample; outage capped at OUTAGE_CAP_DB."""
    rx = _validate_rx(scene, rx)
    paths = trace_paths(scene, rx)
    los = not segment_blocked(scene.tx, rx, scene).blocked
    if paths:
        loss = paths[0].loss_db
    else:
        loss = OUTAGE_CAP_DB
    return ChannelSample(position_id=position_id, rx=rx, path_loss_db=float(loss),
                         los=los, n_paths=len(paths), timestamp=timestamp)


def effective_scatterers(scene: Scene, rx) -> list:
    """Ids of scatterers that produce paths or occlude the direct segment."""
    rx = _validate_rx(scene, rx)
    ids = set()
    for p in trace_paths(scene, rx):
        if p.via_scatterer is not None:
            ids.add(p.via_scatterer)
    ids.update(segment_blocked(scene.tx, rx, scene).blocker_ids)
    return sorted(ids)
