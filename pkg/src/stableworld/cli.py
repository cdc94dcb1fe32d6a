"""Command-line surface for the scorer, the eviction engine, and the
drift diagnostics.

Subcommands: ``similarity`` scores one frame pair and thresholds the
result (exit 0 pass, 1 fail), ``evict`` streams a frame directory through
the engine and writes a replayable trace, ``drift`` and ``spectrum`` emit
the diagnostic series as CSV, ``synth`` renders a scripted world to disk,
and ``bench`` times the scoring pipeline stage by stage.

Settings merge as flags > JSON config file > built-in preset, and every
command prints the fully resolved configuration it ran with, so any
output can be reproduced from the output alone.  All errors outside the
similarity threshold exit with status 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import statistics
import sys
import time
from collections import Counter
from pathlib import Path
from typing import Sequence

import numpy as np

from .drift import mse_drift, spectrum_drift
from .eviction import EvictionConfig, preset, run_sequence
from .features import OrbConfig
from .frame_io import load_frame, load_sequence
from .geometry import RansacConfig, ransac
from .matching import MatcherConfig, match, matched_points
from .similarity import (
    _MIN_MATCHES,
    DescriptorCache,
    MetricConfig,
    score_frames,
)
from .synth import (
    GroundTruthManifest,
    render,
    render_natural,
    save_world,
    script_from_json,
    script_to_json,
    scripted_preset,
    warp_bilinear,
)

# Scriptable pass/fail cutoffs per metric family.
_THETA_DEFAULTS = {"orb": 0.75, "ssim": 0.3, "cosine": 0.8}

_BENCH_STAGES = ("extract", "match", "ransac", "total")


# ---------------------------------------------------------------------------
# shared plumbing

def _tidy(obj: object, level: int = 0) -> str:
    """Readable JSON: dicts indented, scalar lists kept on one line."""
    pad = " " * level
    inner = " " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = ",\n".join(
            f"{inner}{json.dumps(str(k))}: {_tidy(v, level + 1)}"
            for k, v in obj.items()
        )
        return "{\n" + rows + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)) and any(
        isinstance(v, (dict, list, tuple)) for v in obj
    ):
        rows = ",\n".join(f"{inner}{_tidy(v, level + 1)}" for v in obj)
        return "[\n" + rows + "\n" + pad + "]"
    return json.dumps(list(obj) if isinstance(obj, tuple) else obj)


def _emit(obj: dict) -> None:
    print(_tidy(obj))


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    obj = json.loads(Path(path).read_text())
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return obj


def _dataclass_kwargs(cls: type, mapping: dict, where: str) -> dict:
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ValueError(f"config file {where} section: unknown keys {unknown}")
    return mapping


def _resolve_seed(flag: int | None, file_cfg: dict) -> int:
    """Flag beats config file beats the STABLEWORLD_SEED environment."""
    if flag is not None:
        return flag
    if "seed" in file_cfg:
        return int(file_cfg["seed"])
    env = os.environ.get("STABLEWORLD_SEED")
    return int(env) if env is not None else 0


def _metric_config(name: str, seed: int, file_cfg: dict) -> MetricConfig:
    if name not in _THETA_DEFAULTS:
        raise ValueError(f"metric must be one of {sorted(_THETA_DEFAULTS)}")
    ransac_kw = dict(_dataclass_kwargs(
        RansacConfig, file_cfg.get("ransac", {}), "ransac"))
    ransac_kw.setdefault("rng_seed", seed)
    return MetricConfig(
        metric=name,
        orb=OrbConfig(**_dataclass_kwargs(
            OrbConfig, file_cfg.get("orb", {}), "orb")),
        matcher=MatcherConfig(**_dataclass_kwargs(
            MatcherConfig, file_cfg.get("matcher", {}), "matcher")),
        ransac=RansacConfig(**ransac_kw),
        ssim_window=file_cfg.get("ssim_window", 11),
        ssim_sigma=file_cfg.get("ssim_sigma", 1.5),
    )


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {text!r}") from None


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"expected WIDTHxHEIGHT, got {text!r}")
    return int(parts[0]), int(parts[1])


# ---------------------------------------------------------------------------
# similarity

def cmd_similarity(ns: argparse.Namespace) -> int:
    file_cfg = _load_config_file(ns.config)
    seed = _resolve_seed(ns.seed, file_cfg)
    metric_name = ns.metric or file_cfg.get("metric", "orb")
    cfg = _metric_config(metric_name, seed, file_cfg)
    theta = ns.theta if ns.theta is not None else file_cfg.get(
        "theta", _THETA_DEFAULTS[metric_name])
    img_a, pid_a = load_frame(ns.frame_a)
    img_b, pid_b = load_frame(ns.frame_b)
    score = score_frames(img_a, img_b, cfg)
    _emit({
        "config": {**cfg.to_json_obj(), "theta": theta, "seed": seed},
        "frames": [str(ns.frame_a), str(ns.frame_b)],
        "payload_ids": [pid_a, pid_b],
        "score": score.to_json_obj(),
    })
    return 0 if score.value >= theta else 1


# ---------------------------------------------------------------------------
# eviction

def _eviction_config(ns: argparse.Namespace, file_cfg: dict, seed: int) -> EvictionConfig:
    preset_name = ns.preset or file_cfg.get("preset")
    fields: dict = {}
    for key in ("window_size", "earlier", "checked_indices", "theta",
                "frames_per_step", "mode", "chunk_len"):
        if key in file_cfg:
            fields[key] = file_cfg[key]
    if ns.window is not None:
        fields["window_size"] = ns.window
    if ns.earlier is not None:
        fields["earlier"] = ns.earlier
    if ns.checked is not None:
        fields["checked_indices"] = _parse_int_list(ns.checked)
    if ns.theta is not None:
        fields["theta"] = ns.theta
    if ns.frames_per_step is not None:
        fields["frames_per_step"] = ns.frames_per_step
    if "checked_indices" in fields:
        fields["checked_indices"] = tuple(fields["checked_indices"])

    metric_name = ns.metric or file_cfg.get("metric", "orb")
    fields["metric"] = _metric_config(metric_name, seed, file_cfg)
    if preset_name is not None:
        return dataclasses.replace(preset(preset_name), **fields)
    missing = [k for k in ("window_size", "earlier", "checked_indices")
               if k not in fields]
    if missing:
        raise ValueError(
            "without --preset, --window, --earlier, and --checked are all required")
    fields.setdefault("theta", _THETA_DEFAULTS[metric_name])
    return EvictionConfig(**fields)


def _window_timeline(steps: list[dict], payload_ids: Sequence[str],
                     cfg: EvictionConfig) -> list[list[str]]:
    """Replay window membership after each trace step from its decisions."""
    windows: list[list[str]] = []
    window: list[str] = []
    if cfg.mode == "chunk_merge":
        assert cfg.chunk_len is not None
        for i, entry in enumerate(steps):
            evicted = set(entry["decision"]["evicted_payload_ids"])
            chunk = list(payload_ids[i * cfg.chunk_len:(i + 1) * cfg.chunk_len])
            window = [p for p in window if p not in evicted] + chunk
            windows.append(list(window))
        return windows
    for entry in steps:
        decision = entry["decision"]
        if decision is not None:
            window.remove(decision["evicted_payload_id"])
        window.append(entry["pushed_payload_id"])
        windows.append(list(window))
    return windows


def _rule_histogram(steps: list[dict], mode: str) -> dict[str, int]:
    hist: Counter[str] = Counter()
    for entry in steps:
        decision = entry["decision"]
        if mode == "chunk_merge":
            hist["Merged" if decision["merged"] else "Replaced"] += 1
        elif decision is None:
            hist["Fill"] += 1
        else:
            rule = decision["rule"]
            k = rule.get("k")
            hist[rule["kind"] if k is None else f"{rule['kind']}({k})"] += 1
    return dict(sorted(hist.items()))


def _load_segments(frames_dir: Path, n_frames: int) -> list[int] | None:
    """Per-frame segment ids from a generator manifest, if one is present."""
    path = frames_dir / "manifest.json"
    if not path.is_file():
        return None
    manifest = GroundTruthManifest.from_json(path.read_text())
    if len(manifest.records) != n_frames:
        return None
    return [r.segment_id for r in manifest.records]


def _flush_latencies(windows: list[list[str]], payload_ids: Sequence[str],
                     segments: list[int], cfg: EvictionConfig) -> list[dict]:
    """Pushes needed to clear every pre-transition frame, per transition."""
    frames_per_push = cfg.chunk_len if cfg.mode == "chunk_merge" else 1
    out = []
    for seg in sorted(set(segments))[1:]:
        first_frame = segments.index(seg)
        first_step = first_frame // frames_per_push
        if first_step >= len(windows):
            continue
        older = {pid for pid, s in zip(payload_ids, segments) if s < seg}
        flushed = next(
            (t for t in range(first_step, len(windows))
             if not older & set(windows[t])),
            None,
        )
        out.append({
            "segment": seg,
            "first_push_step": first_step,
            "flushed_step": flushed,
            "latency_frames": None if flushed is None
            else (flushed - first_step + 1) * frames_per_push,
        })
    return out


def cmd_evict(ns: argparse.Namespace) -> int:
    file_cfg = _load_config_file(ns.config)
    seed = _resolve_seed(ns.seed, file_cfg)
    cfg = _eviction_config(ns, file_cfg, seed)
    if ns.dump_config:
        _emit({"config": {**cfg.to_json_obj(), "seed": seed}})
        return 0
    if ns.frames is None:
        raise ValueError("--frames is required unless --dump-config is given")

    seq = load_sequence(ns.frames)
    state, trace = run_sequence(seq.images, seq.payload_ids, cfg)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.json"
    trace_path.write_text(trace.to_json())

    windows = _window_timeline(trace.steps, seq.payload_ids, cfg)
    reference = seq.payload_ids[0]
    retention = next(
        (t for t, w in enumerate(windows) if reference not in w), len(windows))
    segments = _load_segments(Path(ns.frames), len(seq))
    summary = {
        "frames": len(seq),
        "steps": len(trace.steps),
        "reference_payload_id": reference,
        "reference_retention_steps": retention,
        "rule_histogram": _rule_histogram(trace.steps, cfg.mode),
        "flush_latency": None if segments is None else _flush_latencies(
            windows, seq.payload_ids, segments, cfg),
        "final_window": state.payload_ids(),
    }
    _emit({
        "config": {**trace.config, "seed": seed},
        "trace_path": str(trace_path),
        "summary": summary,
    })
    return 0


# ---------------------------------------------------------------------------
# drift diagnostics

def cmd_drift(ns: argparse.Namespace) -> int:
    seq = load_sequence(ns.frames)
    lags = _parse_int_list(ns.lags)
    report = mse_drift(seq, lags)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {"frames": str(ns.frames), "lags": list(lags), "format": ns.format}
    if ns.format == "csv":
        path = out_dir / "drift.csv"
        path.write_text(report.to_csv())
    else:
        path = out_dir / "drift.json"
        path.write_text(_tidy({
            "config": config,
            "lags": list(report.lags),
            "means": list(report.means),
            "maxes": list(report.maxes),
            "series": [list(s) for s in report.series],
        }) + "\n")
    _emit({
        "config": config,
        "output": str(path),
        "means": {str(lag): mean for lag, mean in zip(report.lags, report.means)},
    })
    return 0


def cmd_spectrum(ns: argparse.Namespace) -> int:
    seq = load_sequence(ns.frames)
    report = spectrum_drift(seq, anchor=ns.anchor, bands=ns.bands)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {"frames": str(ns.frames), "anchor": ns.anchor,
              "bands": ns.bands, "format": ns.format}
    if ns.format == "csv":
        path = out_dir / "spectrum.csv"
        path.write_text(report.to_csv())
    else:
        path = out_dir / "spectrum.json"
        path.write_text(_tidy({
            "config": config,
            "band_edges": list(report.band_edges),
            "matrix": [list(row) for row in report.matrix],
        }) + "\n")
    _emit({
        "config": config,
        "output": str(path),
        "frames_analyzed": len(seq),
    })
    return 0


# ---------------------------------------------------------------------------
# synthetic worlds

def cmd_synth(ns: argparse.Namespace) -> int:
    if ns.script is not None:
        script = script_from_json(Path(ns.script).read_text())
        if ns.seed is not None:
            script = dataclasses.replace(script, rng_seed=ns.seed)
    else:
        script = scripted_preset(ns.preset, _resolve_seed(ns.seed, {}))
    seq, manifest = render(script)
    out_dir = Path(ns.out)
    save_world(out_dir, seq, manifest)
    _emit({
        "config": json.loads(script_to_json(script)),
        "out": str(out_dir),
        "frames": len(seq),
        "manifest": str(out_dir / "manifest.json"),
    })
    return 0


# ---------------------------------------------------------------------------
# benchmarking

def _bench_pair(width: int, height: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """A natural-statistics frame and a slightly panned, noised successor.

    This is the steady-state shape of the eviction workload: consecutive
    frames of one scene, small camera motion, mild generation noise.
    """
    base = render_natural(seed, height, width)
    hom = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])
    rng = np.random.default_rng(seed)
    moved = warp_bilinear(base, hom, (height, width))
    moved = moved + rng.normal(0.0, 1.0, moved.shape)
    return base, np.clip(np.rint(moved), 0, 255).astype(np.uint8)


def _timed_pipeline(ref: np.ndarray, tgt: np.ndarray, cfg: MetricConfig,
                    cache: DescriptorCache) -> dict[str, float]:
    """Per-stage wall-clock seconds for one scoring pass through ``cache``."""
    t0 = time.perf_counter()
    ref_ds = cache.extract(ref, cfg.orb)
    tgt_ds = cache.extract(tgt, cfg.orb)
    t1 = time.perf_counter()
    corr = match(ref_ds, tgt_ds, cfg.matcher)
    pts = matched_points(ref_ds, tgt_ds, corr) if corr.g >= _MIN_MATCHES else None
    t2 = time.perf_counter()
    if pts is not None:
        ransac(pts[0], pts[1], "homography", cfg.ransac)
        if corr.g >= 8:
            ransac(pts[0], pts[1], "fundamental", cfg.ransac)
    t3 = time.perf_counter()
    return {"extract": t1 - t0, "match": t2 - t1,
            "ransac": t3 - t2, "total": t3 - t0}


def _stats_ms(samples: list[float]) -> dict[str, float]:
    ordered = sorted(samples)
    rank = max(math.ceil(0.95 * len(ordered)), 1)  # nearest-rank p95
    return {
        "median_ms": round(statistics.median(ordered) * 1e3, 3),
        "p95_ms": round(ordered[rank - 1] * 1e3, 3),
    }


def cmd_bench(ns: argparse.Namespace) -> int:
    width, height = _parse_size(ns.size)
    if ns.pairs < 1:
        raise ValueError("--pairs must be at least 1")
    seed = _resolve_seed(ns.seed, {})
    cfg = MetricConfig(ransac=RansacConfig(rng_seed=seed))

    # One small untimed pass first, so compilation and import costs never
    # land in a sample.
    warmup = _bench_pair(64, 64, seed)
    _timed_pipeline(warmup[0], warmup[1], cfg, DescriptorCache(4))

    cold: dict[str, list[float]] = {k: [] for k in _BENCH_STAGES}
    warm: dict[str, list[float]] = {k: [] for k in _BENCH_STAGES}
    for i in range(ns.pairs):
        ref, tgt = _bench_pair(width, height, seed + 1 + i)
        cold_run = _timed_pipeline(ref, tgt, cfg, DescriptorCache(4))
        cache = DescriptorCache(4)
        cache.extract(ref, cfg.orb)  # the reference is resident, as in steady state
        warm_run = _timed_pipeline(ref, tgt, cfg, cache)
        for k in _BENCH_STAGES:
            cold[k].append(cold_run[k])
            warm[k].append(warm_run[k])

    _emit({
        "config": {**cfg.to_json_obj(), "size": [width, height],
                   "pairs": ns.pairs, "seed": seed},
        "cold": {k: _stats_ms(v) for k, v in cold.items()},
        "warm": {k: _stats_ms(v) for k, v in warm.items()},
    })
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stableworld",
        description="Viewpoint-overlap similarity, frame eviction, and "
                    "drift diagnostics for streaming world models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("similarity", help="score one frame pair against a threshold")
    p.add_argument("frame_a")
    p.add_argument("frame_b")
    p.add_argument("--metric", choices=sorted(_THETA_DEFAULTS))
    p.add_argument("--theta", type=float,
                   help="pass/fail cutoff; defaults per metric "
                        "(orb 0.75, ssim 0.3, cosine 0.8)")
    p.add_argument("--config", help="JSON settings file; flags win")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("evict", help="stream a frame directory through the engine")
    p.add_argument("--frames", help="directory of PGM/PNG frames")
    p.add_argument("--preset", help="matrix_game, open_oasis, or gamecraft")
    p.add_argument("--window", type=int, help="window size for ad-hoc configs")
    p.add_argument("--earlier", type=int, help="evictable prefix length")
    p.add_argument("--checked", help="comma-separated 1-based check positions")
    p.add_argument("--theta", type=float)
    p.add_argument("--frames-per-step", type=int)
    p.add_argument("--metric", choices=sorted(_THETA_DEFAULTS))
    p.add_argument("--config", help="JSON settings file; flags win")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".", help="directory for trace.json")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved config and exit")
    p.set_defaults(func=cmd_evict)

    p = sub.add_parser("drift", help="mean-squared-error drift series")
    p.add_argument("--frames", required=True)
    p.add_argument("--lags", default="1,5,10,20")
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("spectrum", help="radial band amplitude drift vs an anchor")
    p.add_argument("--frames", required=True)
    p.add_argument("--anchor", type=int, default=0)
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("synth", help="render a scripted world to PGM frames")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--script", help="scene script JSON file")
    source.add_argument("--preset",
                        help="static_drift, pan_small, orbit_large, or "
                             "transition_at(T)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time the scoring pipeline per stage")
    p.add_argument("--size", default="1280x720", help="frame size as WIDTHxHEIGHT")
    p.add_argument("--pairs", type=int, default=5, help="number of timed pairs")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (ValueError, OSError) as exc:
        # Every library error type derives from ValueError; I/O adds OSError.
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
