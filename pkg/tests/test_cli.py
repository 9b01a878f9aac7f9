import csv
import json
import os

import pytest

from rekpool.cli import main
from rekpool.pipeline import SPECTRUM_HEADER
from rekpool.pool import load_pool


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One small end-to-end pipeline run shared by the CLI tests."""
    d = tmp_path_factory.mktemp("cli")
    out = str(d)
    assert run("--seed", "3", "--out-dir", out, "--quiet", "scene-gen") == 0
    scene = os.path.join(out, "scene.json")
    assert run("--seed", "3", "--out-dir", out, "--quiet", "simulate",
               "--scene", scene, "--n-realizations", "10") == 0
    dataset = os.path.join(out, "dataset.csv")
    assert run("--seed", "3", "--out-dir", out, "--quiet", "learn",
               "--scene", scene, "--dataset", dataset,
               "--n-trees", "8", "--min-leaf", "2", "--max-depth", "6") == 0
    return d


class TestSceneGen:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("--seed", "5", "--out-dir", str(a), "--quiet", "scene-gen") == 0
        assert run("--seed", "5", "--out-dir", str(b), "--quiet", "scene-gen") == 0
        assert (a / "scene.json").read_bytes() == (b / "scene.json").read_bytes()

    def test_prints_los_table(self, tmp_path, capsys):
        assert run("--seed", "5", "--out-dir", str(tmp_path), "scene-gen") == 0
        out = capsys.readouterr().out
        assert out.count("NLOS") == 4
        assert out.count(" LOS") == 11


class TestSimulate:
    def test_row_count(self, workdir):
        with open(workdir / "dataset.csv") as f:
            n_rows = sum(1 for _ in f) - 1
        assert n_rows == 15 * 10

    def test_rerun_byte_identical(self, workdir, tmp_path):
        scene = str(workdir / "scene.json")
        assert run("--seed", "3", "--out-dir", str(tmp_path), "--quiet",
                   "simulate", "--scene", scene, "--n-realizations", "10") == 0
        assert (tmp_path / "dataset.csv").read_bytes() == \
            (workdir / "dataset.csv").read_bytes()

    def test_missing_scene_exit_1(self, tmp_path):
        assert run("--seed", "1", "--out-dir", str(tmp_path), "simulate",
                   "--scene", str(tmp_path / "nope.json")) == 1

    def test_missing_seed_exit_2(self, workdir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("--out-dir", str(tmp_path), "simulate",
                "--scene", str(workdir / "scene.json"))
        assert exc.value.code == 2


class TestLearn:
    def test_spectrum_shape(self, workdir):
        with open(workdir / "spectrum.csv") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == SPECTRUM_HEADER
        assert len(rows) == 1 + 15
        k_lvbd = rows[0].index("K_LVBD")
        for rec in rows[1:]:
            if rec[k_lvbd]:  # degenerate positions leave the columns empty
                assert float(rec[k_lvbd]) == pytest.approx(1.0)

    def test_pool_written(self, workdir):
        pool = load_pool(workdir / "pool.json")
        assert 1 <= len(pool.entries) <= pool.capacity


class TestPredict:
    def test_outputs(self, workdir, tmp_path):
        assert run("--out-dir", str(tmp_path), "--quiet", "predict",
                   "--scene", str(workdir / "scene.json"),
                   "--dataset", str(workdir / "dataset.csv"),
                   "--pool", str(workdir / "pool.json")) == 0
        with open(tmp_path / "summary.csv") as f:
            rows = list(csv.reader(f))
        methods = [r[0] for r in rows[1:]]
        assert methods == ["knn", "logdistance", "rekp"]
        with open(tmp_path / "cdf.csv") as f:
            cdf_rows = list(csv.reader(f))
        assert cdf_rows[0] == ["method", "error_db", "cum_fraction"]
        assert len(cdf_rows) == 1 + 3 * 15

    def test_missing_pool_exit_1(self, workdir, tmp_path):
        assert run("--out-dir", str(tmp_path), "predict",
                   "--scene", str(workdir / "scene.json"),
                   "--dataset", str(workdir / "dataset.csv"),
                   "--pool", str(tmp_path / "nope.json")) == 1


class TestPoolCommand:
    def test_show(self, workdir, capsys):
        assert run("pool", "show", str(workdir / "pool.json")) == 0
        out = capsys.readouterr().out
        assert "entries" in out

    def test_evict(self, workdir, tmp_path):
        src = (workdir / "pool.json").read_bytes()
        target = tmp_path / "pool.json"
        target.write_bytes(src)
        assert run("pool", "evict", str(target), "--capacity", "1") == 0
        assert len(load_pool(target).entries) == 1

    def test_merge_identical_answers_existing(self, workdir, tmp_path, capsys):
        src = (workdir / "pool.json").read_bytes()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        a.write_bytes(src)
        b.write_bytes(src)
        assert run("pool", "merge", str(a), "--into", str(b)) == 0
        out = capsys.readouterr().out
        assert "AnsweredExisting" in out
        assert "GeneratedNew" not in out

    def test_corrupt_pool_exit_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run("pool", "show", str(bad)) == 1


class TestUsage:
    def test_no_subcommand_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            run()
        assert exc.value.code == 2

    def test_config_file_fills_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5}))
        out = tmp_path / "out"
        assert run("--config", str(cfg), "--out-dir", str(out), "--quiet",
                   "scene-gen") == 0
        ref = tmp_path / "ref"
        assert run("--seed", "5", "--out-dir", str(ref), "--quiet",
                   "scene-gen") == 0
        assert (out / "scene.json").read_bytes() == (ref / "scene.json").read_bytes()
