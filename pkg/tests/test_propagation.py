import math

import numpy as np
import pytest

from rekpool.geometry import Scatterer, Scene, canonical_street_scene, mirror_point
from rekpool.propagation import (OUTAGE_CAP_DB, SPEED_OF_LIGHT, effective_scatterers,
                                 fspl_db, path_loss, trace_paths)


def one_wall_scene():
    """TX and RX in front of a single wall; exactly one reflection exists."""
    wall = Scatterer(id=1, center=(0, 3, 1), dims=(10, 2, 2))
    return Scene(tx=(0, 0, 1), frequency_hz=28e9, scatterers=(wall,))


class TestFspl:
    def test_reference_value_1m_28ghz(self):
        assert fspl_db(1.0, 28e9) == pytest.approx(61.39, abs=0.005)

    def test_reference_value_100m_28ghz(self):
        assert fspl_db(100.0, 28e9) == pytest.approx(101.39, abs=0.005)

    def test_distance_doubling_adds_6db(self):
        assert fspl_db(2.0, 1e9) - fspl_db(1.0, 1e9) == pytest.approx(
            20.0 * math.log10(2.0), abs=1e-12)

    def test_closed_form_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            d = float(rng.uniform(0.1, 5000.0))
            f = float(rng.uniform(1e8, 3e11))
            expected = 20.0 * (math.log10(4.0 * math.pi) + math.log10(d)
                               + math.log10(f) - math.log10(SPEED_OF_LIGHT))
            assert fspl_db(d, f) == pytest.approx(expected, abs=1e-9)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            fspl_db(0.0, 1e9)
        with pytest.raises(ValueError):
            fspl_db(1.0, -1.0)


class TestTracePaths:
    def test_empty_scene_single_los(self):
        scene = Scene(tx=(0, 0, 10), frequency_hz=1e9)
        paths = trace_paths(scene, (30, 40, 10))
        assert len(paths) == 1
        assert paths[0].kind == "LOS"
        assert paths[0].length_m == pytest.approx(50.0, abs=1e-12)
        assert paths[0].loss_db == pytest.approx(fspl_db(50.0, 1e9), abs=1e-12)

    def test_one_wall_reflection_geometry(self):
        scene = one_wall_scene()
        rx = np.array([4.0, 0.0, 1.0])
        paths = trace_paths(scene, rx)
        assert [p.kind for p in paths] == ["LOS", "Reflection"]
        refl = paths[1]
        # analytic image: mirror TX across the y=2 face
        assert refl.length_m == pytest.approx(4.0 * math.sqrt(2.0), abs=1e-9)
        assert refl.reflection_point == pytest.approx((2.0, 2.0, 1.0), abs=1e-9)
        assert refl.loss_db == pytest.approx(
            fspl_db(4.0 * math.sqrt(2.0), scene.frequency_hz) + 10.0, abs=1e-9)

    def test_reflection_length_matches_image_identity(self):
        scene, traj = canonical_street_scene()
        seen = 0
        for rx in traj.positions:
            for p in trace_paths(scene, rx):
                if p.kind != "Reflection":
                    continue
                seen += 1
                s = scene.scatterer_by_id(p.via_scatterer)
                axis = int(np.argmax([
                    abs(p.reflection_point[a] - s.lo[a]) < 1e-9
                    or abs(p.reflection_point[a] - s.hi[a]) < 1e-9
                    for a in range(3)]))
                img = mirror_point(scene.tx, axis, p.reflection_point[axis])
                assert p.length_m == pytest.approx(
                    float(np.linalg.norm(rx - img)), abs=1e-9)
        assert seen > 0

    def test_sorted_by_loss(self):
        scene, traj = canonical_street_scene()
        for rx in traj.positions:
            losses = [p.loss_db for p in trace_paths(scene, rx)]
            assert losses == sorted(losses)

    def test_rx_inside_scatterer_rejected(self):
        scene = one_wall_scene()
        with pytest.raises(ValueError):
            trace_paths(scene, (0, 3, 1))

    def test_rx_outside_bounds_rejected(self):
        scene = Scene(tx=(0, 0, 10), frequency_hz=1e9)
        with pytest.raises(ValueError):
            trace_paths(scene, (1000, 0, 10))


class TestPathLoss:
    def test_pure_los_equals_fspl(self):
        scene = Scene(tx=(0, 0, 10), frequency_hz=3.5e9)
        sample = path_loss(scene, (30, 0, 10))
        assert sample.los
        assert sample.path_loss_db == pytest.approx(fspl_db(30.0, 3.5e9), abs=1e-9)

    def test_outage_cap(self):
        # RX fully boxed in by an occluder with no reflector available
        wall = Scatterer(id=1, center=(10, 0, 0), dims=(2, 50, 50))
        scene = Scene(tx=(0, 0, 0), frequency_hz=1e9, scatterers=(wall,))
        sample = path_loss(scene, (20, 0, 0))
        assert not sample.los
        assert sample.n_paths == 0
        assert sample.path_loss_db == OUTAGE_CAP_DB

    def test_reflection_survives_blockage(self):
        scene, traj = canonical_street_scene()
        sample = path_loss(scene, traj.positions[0])
        assert not sample.los
        assert sample.n_paths >= 1
        assert sample.path_loss_db < OUTAGE_CAP_DB

    def test_monotone_in_frequency(self):
        low = Scene(tx=(0, 0, 10), frequency_hz=1e9)
        high = Scene(tx=(0, 0, 10), frequency_hz=28e9)
        rx = (30, 0, 10)
        assert path_loss(high, rx).path_loss_db > path_loss(low, rx).path_loss_db

    def test_min_loss_selection(self):
        scene = one_wall_scene()
        rx = (4, 0, 1)
        paths = trace_paths(scene, rx)
        assert path_loss(scene, rx).path_loss_db == pytest.approx(
            min(p.loss_db for p in paths), abs=1e-12)


class TestEffectiveScatterers:
    def test_empty_scene(self):
        scene = Scene(tx=(0, 0, 10), frequency_hz=1e9)
        assert effective_scatterers(scene, (30, 0, 10)) == []

    def test_reflector_counts(self):
        scene = one_wall_scene()
        assert effective_scatterers(scene, (4, 0, 1)) == [1]

    def test_blocker_counts_even_without_path(self):
        wall = Scatterer(id=7, center=(10, 0, 0), dims=(2, 50, 50))
        scene = Scene(tx=(0, 0, 0), frequency_hz=1e9, scatterers=(wall,))
        assert effective_scatterers(scene, (20, 0, 0)) == [7]

    def test_sorted_ids(self):
        scene, traj = canonical_street_scene()
        for rx in traj.positions:
            ids = effective_scatterers(scene, rx)
            assert ids == sorted(ids)
