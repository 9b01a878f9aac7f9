"""Scene data model and exact geometric primitives.

Scenes are built from axis-aligned box scatterers around a fixed
transmitter.  Everything downstream (occlusion tests, image-method
reflections) reduces to slab-method ray/box interval arithmetic, which
keeps the propagation oracle exact and testable.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

# Exact predicates (interval overlap, point-on-plane) use EPS_EXACT;
# sampled cross-checks in tests use the looser EPS_SAMPLED.
EPS_EXACT = 1e-9
EPS_SAMPLED = 1e-6

SCENE_FORMAT_VERSION = 1

# Padding added around geometry when deriving scene bounds [m].
BOUNDS_MARGIN_M = 50.0


def as_vec3(p) -> np.ndarray:
    """Coerce a point-like into a finite float64 array of shape (3,)."""
    v = np.asarray(p, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected 3 components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    return v


@dataclass(frozen=True)
class Scatterer:
    """Axis-aligned box obstacle/reflector."""

    id: int
    center: np.ndarray
    dims: np.ndarray  # (length_x, width_y, height_z), strictly positive
    reflection_loss_db: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        object.__setattr__(self, "dims", as_vec3(self.dims))
        if np.any(self.dims <= 0):
            raise ValueError(f"scatterer {self.id}: dims must be strictly positive")
        if self.reflection_loss_db < 0:
            raise ValueError(f"scatterer {self.id}: reflection_loss_db must be >= 0")

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.dims / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.dims / 2.0

    def contains(self, p, tol: float = EPS_EXACT) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def volume(self) -> float:
        return float(np.prod(self.dims))

    def faces(self):
        """Six axis-aligned face planes as (axis, value, outward_sign)."""
        out = []
        for axis in range(3):
            out.append((axis, float(self.lo[axis]), -1))
            out.append((axis, float(self.hi[axis]), +1))
        return out


@dataclass(frozen=True)
class Scene:
    """TX plus an ordered (by id) collection of box scatterers."""

    tx: np.ndarray
    frequency_hz: float
    scatterers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "tx", as_vec3(self.tx))
        object.__setattr__(self, "scatterers", tuple(sorted(self.scatterers, key=lambda s: s.id)))
        if not (np.isfinite(self.frequency_hz) and self.frequency_hz > 0):
            raise ValueError("frequency_hz must be finite and positive")
        ids = [s.id for s in self.scatterers]
        if len(ids) != len(set(ids)):
            raise ValueError("scatterer ids must be unique")
        for s in self.scatterers:
            if s.contains(self.tx):
                raise ValueError(f"TX lies inside scatterer {s.id}")

    def scatterer_by_id(self, sid: int) -> Scatterer:
        for s in self.scatterers:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def bounds(self):
        """Padded AABB (lo, hi) covering TX and all scatterers."""
        pts = [self.tx]
        for s in self.scatterers:
            pts.append(s.lo)
            pts.append(s.hi)
        pts = np.asarray(pts)
        return pts.min(axis=0) - BOUNDS_MARGIN_M, pts.max(axis=0) + BOUNDS_MARGIN_M

    def bounds_diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def point_free(self, p) -> bool:
        """True if p is outside every scatterer."""
        return not any(s.contains(p) for s in self.scatterers)


@dataclass(frozen=True)
class Trajectory:
    positions: tuple = ()
    spacing_m: float = 0.0

    def __post_init__(self):
        if len(self.positions) == 0:
            raise ValueError("trajectory must contain at least one position")
        object.__setattr__(self, "positions", tuple(as_vec3(p) for p in self.positions))

    def __len__(self):
        return len(self.positions)


def ray_box_intersect(origin, direction, box: Scatterer):
    """Slab-method ray/box intersection.

    Returns the (t_enter, t_exit) parametric interval of the supporting
    line inside the box, or None when the ray (t >= 0) misses the box.
    t_enter may be negative when the origin is inside the box.
    """
    origin = as_vec3(origin)
    direction = as_vec3(direction)
    if np.linalg.norm(direction) == 0.0:
        raise ValueError("direction must be nonzero")
    t_lo, t_hi = -np.inf, np.inf
    lo, hi = box.lo, box.hi
    for axis in range(3):
        d = direction[axis]
        o = origin[axis]
        if d == 0.0:
            if o < lo[axis] or o > hi[axis]:
                return None
            continue
        t0 = (lo[axis] - o) / d
        t1 = (hi[axis] - o) / d
        if t0 > t1:
            t0, t1 = t1, t0
        t_lo = max(t_lo, t0)
        t_hi = min(t_hi, t1)
        if t_lo > t_hi:
            return None
    if t_hi < 0.0:
        return None
    return (float(t_lo), float(t_hi))


@dataclass(frozen=True)
class Blockage:
    blocked: bool
    blocker_ids: tuple
    blocked_fraction: float


def segment_blocked(p, q, scene: Scene, exclude_ids=()) -> Blockage:
    """Occlusion test for the open segment p-q against scene scatterers.

    blocked_fraction is the measure of the union of the per-scatterer
    clipped intervals in segment parameterization.  Endpoint grazes
    within EPS_EXACT do not count as blockage, so a reflection point
    sitting exactly on a face never occludes its own bounce.
    """
    p = as_vec3(p)
    q = as_vec3(q)
    d = q - p
    if np.linalg.norm(d) == 0.0:
        raise ValueError("segment endpoints must differ")
    intervals = []
    ids = []
    for s in scene.scatterers:
        if s.id in exclude_ids:
            continue
        hit = ray_box_intersect(p, d, s)
        if hit is None:
            continue
        a = max(hit[0], 0.0)
        b = min(hit[1], 1.0)
        if b - a > EPS_EXACT:
            intervals.append((a, b))
            ids.append(s.id)
    if not intervals:
        return Blockage(False, (), 0.0)
    intervals.sort()
    total = 0.0
    cur_a, cur_b = intervals[0]
    for a, b in intervals[1:]:
        if a > cur_b:
            total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    total += cur_b - cur_a
    return Blockage(True, tuple(sorted(set(ids))), float(min(total, 1.0)))


def mirror_point(p, axis: int, value: float) -> np.ndarray:
    """Reflect p across the axis-aligned plane {x_axis = value}."""
    p = as_vec3(p)
    out = p.copy()
    out[axis] = 2.0 * value - p[axis]
    return out


# ---------------------------------------------------------------------------
# Canonical street scene
# ---------------------------------------------------------------------------

#: Number of receiver positions on the canonical trajectory.
N_POSITIONS = 15


def canonical_street_scene(spacing_m: float = 5.0,
                           frequency_hz: float = 28e9,
                           reflection_loss_db: float = 10.0,
                           blocker_east_x: float = 4.8,
                           seed: int = 0):
    """Deterministic street-canyon scene with a 4-NLOS / 10-LOS split.

    Layout (all coordinates in meters): the RX trajectory runs east
    along the street axis at y=0, z=1.5.  The TX sits north-west of the
    street at 10 m height.  A corner building near the TX shadows the
    first four positions; a long south building row and an end building
    across the street provide single-bounce reflections so shadowed
    positions are not in outage.  `seed` only tags the construction; the
    generator itself is fully deterministic.
    """
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    tx = np.array([-15.0, 35.0, 10.0])
    scatterers = (
        # corner blocker shadowing the start of the trajectory
        Scatterer(id=1, center=np.array([(blocker_east_x - 10.0 + blocker_east_x) / 2.0, 12.0, 6.0]),
                  dims=np.array([10.0, 8.0, 12.0]),
                  reflection_loss_db=reflection_loss_db),
        # south building row lining the far side of the street
        Scatterer(id=2, center=np.array([22.5, -14.0, 8.0]),
                  dims=np.array([75.0, 8.0, 16.0]),
                  reflection_loss_db=reflection_loss_db),
        # end building closing the street canyon to the east
        Scatterer(id=3, center=np.array([84.0, 6.0, 9.0]),
                  dims=np.array([8.0, 24.0, 18.0]),
                  reflection_loss_db=reflection_loss_db),
    )
    scene = Scene(tx=tx, frequency_hz=frequency_hz, scatterers=scatterers)
    positions = [np.array([spacing_m * (i + 1), 0.0, 1.5]) for i in range(N_POSITIONS)]
    for p in positions:
        if not scene.point_free(p):
            raise ValueError(f"trajectory position {p} lies inside a scatterer")
    return scene, Trajectory(positions=tuple(positions), spacing_m=spacing_m)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def scene_to_dict(scene: Scene, trajectory: Trajectory) -> dict:
    return {
        "version": SCENE_FORMAT_VERSION,
        "frequency_hz": scene.frequency_hz,
        "tx": [float(c) for c in scene.tx],
        "scatterers": [
            {
                "id": s.id,
                "center": [float(c) for c in s.center],
                "dims": [float(c) for c in s.dims],
                "reflection_loss_db": s.reflection_loss_db,
            }
            for s in scene.scatterers
        ],
        "trajectory": [[float(c) for c in p] for p in trajectory.positions],
    }


def scene_from_dict(doc: dict):
    version = doc.get("version")
    if version != SCENE_FORMAT_VERSION:
        raise ValueError(f"unsupported scene format version: {version!r}")
    scatterers = tuple(
        Scatterer(id=int(s["id"]), center=s["center"], dims=s["dims"],
                  reflection_loss_db=float(s["reflection_loss_db"]))
        for s in doc["scatterers"]
    )
    scene = Scene(tx=doc["tx"], frequency_hz=float(doc["frequency_hz"]),
                  scatterers=scatterers)
    positions = tuple(doc["trajectory"])
    spacing = 0.0
    if len(positions) >= 2:
        spacing = float(np.linalg.norm(np.asarray(positions[1]) - np.asarray(positions[0])))
    traj = Trajectory(positions=positions, spacing_m=spacing)
    return scene, traj


def canonical_scene_json(scene: Scene, trajectory: Trajectory) -> str:
    """Canonical serialized form; also the fingerprint input for pools."""
    return json.dumps(scene_to_dict(scene, trajectory), separators=(",", ":"))


def atomic_write_text(path, text: str):
    """Write via temp file + rename so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_scene(path, scene: Scene, trajectory: Trajectory):
    atomic_write_text(path, canonical_scene_json(scene, trajectory) + "\n")


def load_scene(path):
    with open(path) as f:
        doc = json.load(f)
    return scene_from_dict(doc)
