"""Raw-buffer boundary around the stableworld eviction engine.

Host pipelines that generate frames step by step do not want to share
array types with the scorer; they hold pixels in whatever layout their
own stack produces. This module keeps the boundary to plain data: frames
cross as contiguous 8-bit buffers plus (height, width), decisions come
back as the same JSON-ready mappings the engine writes into its trace
files, and every failure is an exception with a stable machine-readable
``code``.

One :class:`BoundEngine` owns one frame window and must stay on one
thread; independent engines may run concurrently. The binding takes
exactly one copy of each pushed frame, so callers may reuse their
buffers the moment a call returns.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Mapping

import numpy as np

from stableworld import (
    DescriptorCache,
    EvictionConfig,
    EvictionError,
    MatcherConfig,
    MetricConfig,
    OrbConfig,
    RansacConfig,
    WindowState,
    chunk_merge,
    preset,
    push_frame,
    score_frames,
)

__all__ = [
    "BindingError",
    "BoundEngine",
    "ClosedEngineError",
    "DimensionMismatchError",
    "InvalidConfigError",
    "ScoringError",
    "UnknownPresetError",
    "close",
    "create_engine",
    "push",
    "similarity",
]

_METRICS = ("cosine", "orb", "ssim")
_ENGINE_KEYS = ("window_size", "earlier", "checked_indices", "theta",
                "frames_per_step", "mode", "chunk_len")
_METRIC_KEYS = ("orb", "matcher", "ransac", "ssim_window", "ssim_sigma", "seed")


class BindingError(ValueError):
    """Failure at the binding boundary.

    ``code`` identifies the failure class without parsing the message,
    and the message itself carries whatever the engine reported.
    """

    code = "binding_error"

    def to_json_obj(self) -> dict:
        return {"code": self.code, "message": str(self)}


class UnknownPresetError(BindingError):
    """Raised when a preset name is not in the engine's catalog."""

    code = "unknown_preset"


class InvalidConfigError(BindingError):
    """Raised when a config mapping carries unknown keys or bad values."""

    code = "invalid_config"


class DimensionMismatchError(BindingError):
    """Raised when a buffer does not describe the frame it claims to."""

    code = "dimension_mismatch"


class ClosedEngineError(BindingError):
    """Raised when a closed handle is pushed to."""

    code = "closed_handle"


class ScoringError(BindingError):
    """Raised when the scorer rejects otherwise well-formed frames, for
    example a constant frame under the cosine metric or a smoothing
    window larger than the frame."""

    code = "scoring_failed"


class BoundEngine:
    """Opaque handle pairing an eviction config with its window state.

    Build one with :func:`create_engine`, feed it with :func:`push`, and
    release it with :func:`close`; after close every push raises. The
    handle exposes no state of its own because hosts track window
    membership through the decision records they already receive.
    """

    def __init__(self, cfg: EvictionConfig) -> None:
        self._cfg = cfg
        self._state = WindowState()
        # same sizing rule the engine uses for its own batch runs: room
        # for the resident window plus one step of incoming frames
        self._cache = DescriptorCache(
            capacity=2 * cfg.window_size + cfg.frames_per_step)
        self._pending: list[tuple[np.ndarray, str]] = []
        self._shape: tuple[int, int] | None = None
        self._closed = False


def _section_kwargs(cls: type, mapping: Mapping[str, Any], where: str) -> dict:
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise InvalidConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    return dict(mapping)


def _metric_config(metric: str, config: Mapping[str, Any]) -> MetricConfig:
    if metric not in _METRICS:
        raise InvalidConfigError(
            f"metric must be one of {list(_METRICS)}, got {metric!r}")
    ransac_kw = _section_kwargs(RansacConfig, config.get("ransac", {}), "ransac")
    ransac_kw.setdefault("rng_seed", int(config.get("seed", 0)))
    try:
        return MetricConfig(
            metric=metric,
            orb=OrbConfig(**_section_kwargs(
                OrbConfig, config.get("orb", {}), "orb")),
            matcher=MatcherConfig(**_section_kwargs(
                MatcherConfig, config.get("matcher", {}), "matcher")),
            ransac=RansacConfig(**ransac_kw),
            ssim_window=config.get("ssim_window", 11),
            ssim_sigma=config.get("ssim_sigma", 1.5),
        )
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc


def _engine_config(preset_or_config: str | Mapping[str, Any]) -> EvictionConfig:
    if isinstance(preset_or_config, str):
        try:
            return preset(preset_or_config)
        except ValueError as exc:
            raise UnknownPresetError(str(exc)) from exc
    if not isinstance(preset_or_config, Mapping):
        raise InvalidConfigError(
            "expected a preset name or a config mapping, got "
            f"{type(preset_or_config).__name__}")

    config = dict(preset_or_config)
    allowed = set(_ENGINE_KEYS) | set(_METRIC_KEYS) | {"preset", "metric"}
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")

    fields: dict[str, Any] = {k: config[k] for k in _ENGINE_KEYS if k in config}
    if "checked_indices" in fields:
        fields["checked_indices"] = tuple(fields["checked_indices"])
    fields["metric"] = _metric_config(config.get("metric", "orb"), config)

    base_name = config.get("preset")
    if base_name is not None:
        try:
            base = preset(str(base_name))
        except ValueError as exc:
            raise UnknownPresetError(str(exc)) from exc
        try:
            return dataclasses.replace(base, **fields)
        except ValueError as exc:
            raise InvalidConfigError(str(exc)) from exc
    missing = [k for k in ("window_size", "earlier", "checked_indices")
               if k not in fields]
    if missing:
        raise InvalidConfigError(
            "config without a preset must set " + ", ".join(missing))
    try:
        return EvictionConfig(**fields)
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc


def create_engine(preset_or_config: str | Mapping[str, Any]) -> BoundEngine:
    """Build an engine from a preset name or a config mapping.

    A mapping takes the same keys as the stableworld CLI config file:
    the engine fields (``window_size``, ``earlier``, ``checked_indices``,
    ``theta``, ``frames_per_step``, ``mode``, ``chunk_len``), an optional
    ``preset`` to use as the base the other keys override, a ``metric``
    name with ``orb``/``matcher``/``ransac`` sections, and ``seed`` as
    the consensus seed of last resort.
    """
    return BoundEngine(_engine_config(preset_or_config))


def _ingest(frame: Any, height: int, width: int) -> np.ndarray:
    """Copy one grayscale buffer into an owned (height, width) array."""
    if height < 1 or width < 1:
        raise DimensionMismatchError(
            f"frame dimensions must be positive, got {height}x{width}")
    try:
        flat = np.frombuffer(frame, dtype=np.uint8)
    except (TypeError, ValueError, BufferError) as exc:
        raise DimensionMismatchError(
            f"frame is not a contiguous byte buffer: {exc}") from exc
    if flat.size != height * width:
        raise DimensionMismatchError(
            f"buffer carries {flat.size} bytes, expected "
            f"{height}x{width} = {height * width}")
    # the one ingest copy: the window outlives the caller's buffer
    return flat.reshape(height, width).copy()


def push(engine: BoundEngine, frame: Any, height: int, width: int,
         payload_id: str) -> dict | None:
    """Feed one frame and return the decision it triggered, if any.

    ``frame`` is any contiguous height*width 8-bit grayscale buffer
    (bytes, bytearray, a 2-d uint8 array, anything exposing the buffer
    protocol). Warm-up pushes return None; chunk-merge engines also
    return None until a whole chunk has accumulated. A returned decision
    is the same mapping the engine records in its trace files, so the
    host can feed ``evicted_payload_id`` (or ``evicted_payload_ids`` in
    chunk mode) straight into its own cache bookkeeping.
    """
    if engine._closed:
        raise ClosedEngineError("engine handle is closed")
    img = _ingest(frame, height, width)
    if engine._shape is None:
        engine._shape = (height, width)
    elif engine._shape != (height, width):
        raise DimensionMismatchError(
            f"frame is {height}x{width}, engine window holds "
            f"{engine._shape[0]}x{engine._shape[1]}")

    cfg = engine._cfg
    try:
        if cfg.mode == "chunk_merge":
            assert cfg.chunk_len is not None
            engine._pending.append((img, payload_id))
            if len(engine._pending) < cfg.chunk_len:
                return None
            frames = [item[0] for item in engine._pending]
            pids = [item[1] for item in engine._pending]
            engine._pending = []
            chunk = chunk_merge(engine._state, frames, pids, cfg,
                                cache=engine._cache)
            return chunk.to_json_obj()
        decision = push_frame(engine._state, img, payload_id, cfg,
                              cache=engine._cache)
        return None if decision is None else decision.to_json_obj()
    except EvictionError as exc:
        raise DimensionMismatchError(str(exc)) from exc
    except ValueError as exc:
        raise ScoringError(str(exc)) from exc


def similarity(frame_a: Any, frame_b: Any, height: int, width: int,
               metric: str = "orb",
               config: Mapping[str, Any] | None = None) -> dict:
    """Score two frames of one size and return the score as plain data.

    Both buffers share a single (height, width) because the scorer
    requires equal frame shapes anyway. ``config`` takes the metric
    sections of the engine mapping (``orb``, ``matcher``, ``ransac``,
    ``ssim_window``, ``ssim_sigma``, ``seed``); the metric name comes
    only from the ``metric`` parameter.
    """
    mapping = dict(config or {})
    unknown = sorted(set(mapping) - set(_METRIC_KEYS))
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = _metric_config(metric, mapping)
    img_a = _ingest(frame_a, height, width)
    img_b = _ingest(frame_b, height, width)
    try:
        return score_frames(img_a, img_b, cfg).to_json_obj()
    except ValueError as exc:
        raise ScoringError(str(exc)) from exc


def close(engine: BoundEngine) -> None:
    """Release the engine's window and pending frames. Idempotent;
    pushes after close raise :class:`ClosedEngineError`."""
    engine._closed = True
    engine._state = WindowState()
    engine._pending = []
