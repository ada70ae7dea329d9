import csv
import subprocess
import sys

import numpy as np
import pytest

from bilateral_solver import cli
from bilateral_solver.raster_io import read_raster, write_raster

from conftest import piecewise_scene, scribble_scene, stereo_scene, textured_scene


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def scene(tmp_path):
    ref, depth, labels = textured_scene(5, 64)
    paths = {"ref": tmp_path / "ref.png", "depth": tmp_path / "depth.bsf", "low": tmp_path / "low.bsf",
             "conf": tmp_path / "conf.bsf"}
    write_raster(paths["ref"], ref, bits=8)
    write_raster(paths["depth"], depth)
    write_raster(paths["low"], depth[::4, ::4])
    rng = np.random.default_rng(0)
    write_raster(paths["conf"], rng.uniform(0, 1, depth.shape))
    paths["noisy"] = tmp_path / "noisy.bsf"
    write_raster(paths["noisy"], depth + rng.normal(0, 0.5, depth.shape))
    return tmp_path, paths, depth, labels


def strip_wall_ms(path):
    with open(path) as fh:
        return [{k: v for k, v in row.items() if k != "wall_ms"} for row in csv.DictReader(fh)]


def test_solve_constant_target(tmp_path, scene, capsys):
    _, paths, depth, _ = scene
    write_raster(tmp_path / "const.bsf", np.full(depth.shape, 2.5))
    assert run("solve", "--reference", paths["ref"], "--target", tmp_path / "const.bsf",
               "--output", tmp_path / "out.bsf", "--report", tmp_path / "r.csv") == 0
    np.testing.assert_allclose(read_raster(tmp_path / "out.bsf"), 2.5, atol=1e-5)
    assert "using uniform confidence" in capsys.readouterr().err
    rows = strip_wall_ms(tmp_path / "r.csv")
    assert len(rows) == 26 and rows[0]["config"] == "pyr+pyr"
    assert (tmp_path / "r.csv.json").exists()


def test_solve_flags_and_determinism(tmp_path, scene):
    _, paths, _, _ = scene
    args = ["solve", "--reference", paths["ref"], "--target", paths["noisy"], "--confidence", paths["conf"],
            "--sigma-xy", 4, "--sigma-l", 8, "--sigma-uv", 8, "--lambda", 2, "--iters", 10,
            "--precond", "jacobi", "--init", "flat", "--dt-post", "8:16"]
    assert run(*args, "--output", tmp_path / "a.bsf", "--report", tmp_path / "a.csv") == 0
    assert run(*args, "--output", tmp_path / "b.bsf", "--report", tmp_path / "b.csv") == 0
    assert (tmp_path / "a.bsf").read_bytes() == (tmp_path / "b.bsf").read_bytes()
    assert strip_wall_ms(tmp_path / "a.csv") == strip_wall_ms(tmp_path / "b.csv")
    losses = [float(r["loss"]) for r in strip_wall_ms(tmp_path / "a.csv")]
    assert len(losses) == 11 and all(b <= a + 1e-9 * abs(a) for a, b in zip(losses, losses[1:]))
    assert run(*args[:-2], "--output", tmp_path / "c.png", "--bits", "16") == 0
    assert read_raster(tmp_path / "c.png").shape == (64, 64)


def test_solve_errors(tmp_path, scene, capsys):
    _, paths, _, _ = scene
    write_raster(tmp_path / "small.bsf", np.zeros((10, 10)))
    assert run("solve", "--reference", paths["ref"], "--target", tmp_path / "small.bsf",
               "--output", tmp_path / "o.bsf") == 2
    assert "sizes differ" in capsys.readouterr().err
    assert run("solve", "--reference", tmp_path / "missing.png", "--target", paths["depth"],
               "--output", tmp_path / "o.bsf") == 2
    assert "no such file" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        run("solve", "--reference", paths["ref"], "--target", paths["depth"], "--output", "o.bsf",
            "--dt-post", "garbage")
    assert "SXY:SRGB" in capsys.readouterr().err


def test_superres_cli(tmp_path, scene):
    _, paths, depth, _ = scene
    out = tmp_path / "up.bsf"
    assert run("superres", "--depth", paths["low"], "--reference", paths["ref"], "--factor", 4,
               "--output", out, "--report", tmp_path / "sr.csv") == 0
    up = read_raster(out)
    assert up.shape == depth.shape
    import json
    params = json.loads((tmp_path / "sr.csv.json").read_text())["params"]
    assert params["lambda"] == 128.0 and params["confidence_sigma"] == 1.0
    assert run("superres", "--depth", paths["low"], "--reference", paths["ref"], "--factor", 2,
               "--output", out) == 2


def test_colorize_cli(tmp_path):
    gray, scribbles, _ = scribble_scene(4, 64, n_regions=4)
    write_raster(tmp_path / "gray.png", gray, bits=8)
    write_raster(tmp_path / "scr.png", scribbles, bits=8)
    assert run("colorize", "--gray", tmp_path / "gray.png", "--scribbles", tmp_path / "scr.png",
               "--output", tmp_path / "out.png") == 0
    out = read_raster(tmp_path / "out.png")
    assert out.shape == (64, 64, 3)
    write_raster(tmp_path / "plain.png", np.repeat(gray[..., None], 3, axis=2), bits=8)
    assert run("colorize", "--gray", tmp_path / "gray.png", "--scribbles", tmp_path / "plain.png",
               "--output", tmp_path / "x.png") == 2


def test_segsmooth_cli(tmp_path):
    rng = np.random.default_rng(0)
    ref, _, labels = piecewise_scene(rng, 40, 40, 3)
    write_raster(tmp_path / "ref.png", ref, bits=8)
    write_raster(tmp_path / "p.bsf", np.eye(3)[labels])
    assert run("segsmooth", "--probs", tmp_path / "p.bsf", "--reference", tmp_path / "ref.png",
               "--labels", tmp_path / "l.bsf", "--smoothed", tmp_path / "s.bsf") == 0
    np.testing.assert_array_equal(read_raster(tmp_path / "l.bsf"), labels)
    assert read_raster(tmp_path / "s.bsf").shape == (40, 40, 3)
    write_raster(tmp_path / "one.bsf", np.ones((40, 40)))
    assert run("segsmooth", "--probs", tmp_path / "one.bsf", "--reference", tmp_path / "ref.png",
               "--labels", tmp_path / "l.bsf") == 2


def test_stereo_cli(tmp_path):
    ref, truth, noisy = stereo_scene(2, size=96)
    write_raster(tmp_path / "ref.png", ref, bits=8)
    write_raster(tmp_path / "d.bsf", noisy)
    assert run("stereo-post", "--depth", tmp_path / "d.bsf", "--reference", tmp_path / "ref.png",
               "--output", tmp_path / "o.bsf", "--zero-left-cols", 80, "--irls", 4,
               "--report", tmp_path / "s.csv") == 0
    assert len(strip_wall_ms(tmp_path / "s.csv")) == 4
    assert read_raster(tmp_path / "o.bsf").shape == truth.shape


def test_defocus_cli(tmp_path):
    write_raster(tmp_path / "lo.bsf", np.array([[4.0, 5.0]]))
    write_raster(tmp_path / "hi.bsf", np.array([[6.0, 5.0]]))
    assert run("defocus-prep", "--lower", tmp_path / "lo.bsf", "--upper", tmp_path / "hi.bsf",
               "--target-out", tmp_path / "t.bsf", "--confidence-out", tmp_path / "c.bsf") == 0
    assert read_raster(tmp_path / "t.bsf").tolist() == [[5.0, 5.0]]
    np.testing.assert_allclose(read_raster(tmp_path / "c.bsf"), [[np.exp(-2), 1.0]], rtol=1e-7)
    assert run("defocus-prep", "--lower", tmp_path / "hi.bsf", "--upper", tmp_path / "lo.bsf",
               "--target-out", tmp_path / "t.bsf", "--confidence-out", tmp_path / "c.bsf") == 2


def test_bench_cli_thread_invariant(tmp_path, monkeypatch):
    refs = []
    for seed in range(3):
        ref, _, _ = textured_scene(seed, 48)
        refs.append(tmp_path / f"r{seed}.png")
        write_raster(refs[-1], ref, bits=8)
    outputs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("BS_THREADS", threads)
        out = tmp_path / f"bench{threads}.csv"
        assert run("bench-precond", *refs, "--output", out, "--iters", 10) == 0
        outputs.append(strip_wall_ms(out))
    assert outputs[0] == outputs[1]
    rows = outputs[0]
    assert len(rows) == 3 * 5 * 11
    assert [r["image"] for r in rows[::55]] == ["r0.png", "r1.png", "r2.png"]
    monkeypatch.setenv("BS_THREADS", "zero")
    assert run("bench-precond", *refs, "--output", tmp_path / "x.csv") == 2


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bilateral_solver.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for command in ("solve", "superres", "colorize", "segsmooth", "stereo-post", "defocus-prep", "bench-precond"):
        assert command in proc.stdout
