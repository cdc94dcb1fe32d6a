"""Exit codes, config merging, and output contracts of the CLI surface."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from stableworld.cli import main
from stableworld.synth import Drift, Motion, SceneScript, Segment, render, save_world, script_to_json


def run(capsys, *argv: str) -> tuple[int, dict | None, str]:
    """Invoke the CLI in-process; parse stdout as JSON when present."""
    code = main(list(argv))
    captured = capsys.readouterr()
    body = json.loads(captured.out) if captured.out.strip() else None
    return code, body, captured.err


def tiny_script(*, frames: int = 10, side: int = 48, seed: int = 5,
                noise: float = 0.5) -> SceneScript:
    return SceneScript(
        width=side,
        height=side,
        segments=(Segment(texture_seed=seed + 1, length=frames,
                          drift=Drift(noise_sigma_per_frame=noise)),),
        rng_seed=seed,
    )


@pytest.fixture(scope="module")
def world_dir(tmp_path_factory) -> str:
    """A small rendered world shared by the directory-consuming commands."""
    out = tmp_path_factory.mktemp("world")
    seq, manifest = render(tiny_script())
    save_world(out, seq, manifest)
    return str(out)


@pytest.fixture(scope="module")
def frame_paths(world_dir) -> list[str]:
    import pathlib

    return sorted(str(p) for p in pathlib.Path(world_dir).glob("*.pgm"))


# ---------------------------------------------------------------------------
# similarity

def test_similarity_identical_frames_pass(capsys, frame_paths):
    code, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                        "--metric", "cosine")
    assert code == 0
    assert body["score"]["value"] == 1.0
    assert body["payload_ids"][0] == body["payload_ids"][1]


def test_similarity_distant_frames_fail(capsys, frame_paths):
    code, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[-1],
                        "--metric", "cosine", "--theta", "0.999999")
    assert code == 1
    assert body["score"]["value"] < 0.999999


def test_similarity_orb_self_score(capsys, frame_paths):
    seq, manifest = render(tiny_script(frames=1, side=128, noise=0.0))
    import tempfile, pathlib

    with tempfile.TemporaryDirectory() as d:
        save_world(pathlib.Path(d), seq, manifest)
        frame = str(next(pathlib.Path(d).glob("*.pgm")))
        code, body, _ = run(capsys, "similarity", frame, frame)
    assert code == 0
    assert body["score"]["value"] == 1.0
    assert body["score"]["status"] == "OK"
    assert body["config"]["theta"] == 0.75


def test_similarity_flag_beats_config_file(capsys, tmp_path, frame_paths):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"metric": "cosine", "theta": 2.0}))
    code, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                        "--config", str(cfg))
    assert code == 1  # nothing reaches a threshold above 1
    code, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                        "--config", str(cfg), "--theta", "0.5")
    assert code == 0
    assert body["config"]["theta"] == 0.5
    assert body["config"]["metric"] == "cosine"


def test_seed_resolution_order(capsys, tmp_path, monkeypatch, frame_paths):
    monkeypatch.setenv("STABLEWORLD_SEED", "11")
    code, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                        "--metric", "cosine")
    assert (code, body["config"]["seed"]) == (0, 11)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"metric": "cosine", "seed": 22}))
    _, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                     "--config", str(cfg))
    assert body["config"]["seed"] == 22
    _, body, _ = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                     "--config", str(cfg), "--seed", "33")
    assert body["config"]["seed"] == 33


def test_unknown_config_key_is_an_error(capsys, tmp_path, frame_paths):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"orb": {"n_levles": 8}}))
    code, body, err = run(capsys, "similarity", frame_paths[0], frame_paths[0],
                          "--config", str(cfg))
    assert code == 2
    assert body is None
    assert err.startswith("error:") and "n_levles" in err


def test_missing_frame_exits_2(capsys):
    code, body, err = run(capsys, "similarity", "no_such.pgm", "no_such.pgm")
    assert code == 2
    assert err.startswith("error:")


# ---------------------------------------------------------------------------
# evict

def test_dump_config_prints_preset_and_exits(capsys):
    code, body, _ = run(capsys, "evict", "--preset", "matrix_game", "--dump-config")
    assert code == 0
    cfg = body["config"]
    assert cfg["window_size"] == 9
    assert cfg["earlier"] == 6
    assert cfg["checked_indices"] == [3, 6]
    assert cfg["metric"]["ransac"]["rng_seed"] == 0


def test_dump_config_flag_overrides_preset(capsys):
    code, body, _ = run(capsys, "evict", "--preset", "open_oasis",
                        "--theta", "0.4", "--dump-config")
    assert code == 0
    assert body["config"]["theta"] == 0.4
    assert body["config"]["window_size"] == 16


def test_adhoc_evict_requires_shape_flags(capsys):
    code, _, err = run(capsys, "evict", "--window", "4", "--dump-config")
    assert code == 2
    assert "--checked" in err


def test_evict_requires_frames_without_dump(capsys):
    code, _, err = run(capsys, "evict", "--preset", "matrix_game")
    assert code == 2
    assert "--frames" in err


def test_evict_sliding_writes_trace_and_summary(capsys, tmp_path, world_dir):
    code, body, _ = run(
        capsys, "evict", "--frames", world_dir, "--out", str(tmp_path),
        "--window", "4", "--earlier", "2", "--checked", "1,2",
        "--metric", "cosine", "--theta", "0.01",
    )
    assert code == 0
    trace = json.loads((tmp_path / "trace.json").read_text())
    assert body["trace_path"] == str(tmp_path / "trace.json")
    summary = body["summary"]
    assert summary["frames"] == 10
    assert summary["steps"] == 10
    assert len(summary["final_window"]) == 4
    assert summary["reference_payload_id"] == "frame_00000"
    # a near-zero theta makes every check pass: fills, then AllPassed every push
    assert summary["rule_histogram"] == {"AllPassed": 6, "Fill": 4}
    assert summary["flush_latency"] == []  # one segment, no transition
    assert len(trace["steps"]) == 10


def test_evict_chunk_mode_via_config_file(capsys, tmp_path, world_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "mode": "chunk_merge", "chunk_len": 3, "window_size": 6,
        "earlier": 2, "checked_indices": [1, 2], "metric": "cosine",
        "theta": 0.01,
    }))
    code, body, _ = run(capsys, "evict", "--frames", world_dir,
                        "--out", str(tmp_path), "--config", str(cfg))
    assert code == 0
    summary = body["summary"]
    assert summary["steps"] == 3  # 10 frames, trailing partial chunk dropped
    assert set(summary["rule_histogram"]) <= {"Merged", "Replaced"}
    assert body["config"]["mode"] == "chunk_merge"


# ---------------------------------------------------------------------------
# drift and spectrum

def test_drift_csv_and_means(capsys, tmp_path, world_dir):
    code, body, _ = run(capsys, "drift", "--frames", world_dir,
                        "--lags", "1,2", "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "drift.csv").read_text().splitlines()
    assert lines[0] == "t,lag,mse"
    assert set(body["means"]) == {"1", "2"}
    assert all(m > 0 for m in body["means"].values())


def test_drift_json_format(capsys, tmp_path, world_dir):
    code, body, _ = run(capsys, "drift", "--frames", world_dir, "--lags", "1",
                        "--out", str(tmp_path), "--format", "json")
    assert code == 0
    report = json.loads((tmp_path / "drift.json").read_text())
    assert report["lags"] == [1]
    assert len(report["series"][0]) == 9
    assert report["config"]["format"] == "json"


def test_spectrum_csv(capsys, tmp_path, world_dir):
    code, body, _ = run(capsys, "spectrum", "--frames", world_dir,
                        "--bands", "4", "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "frame,band_lo,band_hi,amp_diff"
    assert body["frames_analyzed"] == 10


def test_spectrum_json(capsys, tmp_path, world_dir):
    code, body, _ = run(capsys, "spectrum", "--frames", world_dir,
                        "--bands", "4", "--out", str(tmp_path),
                        "--format", "json")
    assert code == 0
    report = json.loads((tmp_path / "spectrum.json").read_text())
    assert len(report["band_edges"]) == 5
    assert len(report["matrix"]) == 10


# ---------------------------------------------------------------------------
# synth

def test_synth_script_roundtrip_is_deterministic(capsys, tmp_path):
    script_path = tmp_path / "script.json"
    script_path.write_text(script_to_json(tiny_script(frames=4, side=32)))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        code, body, _ = run(capsys, "synth", "--script", str(script_path),
                            "--out", str(out))
        assert code == 0
        assert body["frames"] == 4
    for name in ("frame_00000.pgm", "frame_00003.pgm", "manifest.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_synth_seed_flag_changes_frames(capsys, tmp_path):
    script_path = tmp_path / "script.json"
    script_path.write_text(script_to_json(tiny_script(frames=2, side=32)))
    code, body, _ = run(capsys, "synth", "--script", str(script_path),
                        "--out", str(tmp_path / "c"), "--seed", "99")
    assert code == 0
    assert body["config"]["rng_seed"] == 99
    base = (tmp_path / "c" / "frame_00001.pgm").read_bytes()
    run(capsys, "synth", "--script", str(script_path), "--out", str(tmp_path / "d"))
    assert base != (tmp_path / "d" / "frame_00001.pgm").read_bytes()


def test_synth_unknown_preset_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "synth", "--preset", "volcano",
                       "--out", str(tmp_path / "x"))
    assert code == 2
    assert err.startswith("error:")


# ---------------------------------------------------------------------------
# bench

def test_bench_single_pair_stats(capsys):
    code, body, _ = run(capsys, "bench", "--size", "48x48", "--pairs", "1",
                        "--seed", "1")
    assert code == 0
    assert body["config"]["size"] == [48, 48]
    for side in ("cold", "warm"):
        stages = body[side]
        assert set(stages) == {"extract", "match", "ransac", "total"}
        for stats in stages.values():
            # one sample: the two order statistics coincide
            assert stats["p95_ms"] == stats["median_ms"] >= 0.0


def test_bench_rejects_zero_pairs(capsys):
    code, _, err = run(capsys, "bench", "--pairs", "0")
    assert code == 2
    assert "--pairs" in err


# ---------------------------------------------------------------------------
# console entry

def test_module_entry_subprocess(tmp_path):
    seq, manifest = render(tiny_script(frames=1, side=32))
    save_world(tmp_path, seq, manifest)
    frame = str(tmp_path / "frame_00000.pgm")
    proc = subprocess.run(
        [sys.executable, "-m", "stableworld", "similarity", frame, frame,
         "--metric", "cosine"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["score"]["value"] == 1.0
