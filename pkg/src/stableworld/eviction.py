"""Sliding-window frame eviction driven by viewpoint-overlap scores.

A window holds up to ``window_size`` frames; slot 0 is the reference the
rest of the window is judged against.  Each incoming frame triggers one
eviction once the window is full: the checked slots are scored against
the reference in ascending order, the first slot whose score drops below
``theta`` evicts its immediate predecessor, and a fully passing window
evicts slot ``earlier`` (the highest evictable index).  Chunk-merge mode
replaces the per-frame cadence with whole-chunk comparisons for hosts
that emit frames in fixed blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .similarity import DescriptorCache, MetricConfig, SimilarityScore, score_frames

Scorer = Callable[[np.ndarray, np.ndarray], SimilarityScore]

_MODES = ("sliding", "chunk_merge")


class EvictionError(ValueError):
    """Raised when a window operation violates its preconditions."""


@dataclass(frozen=True)
class EvictionConfig:
    """Window shape, check schedule, and scoring setup for one eviction run.

    ``checked_indices`` are 1-based slot positions in sliding mode and
    1-based chunk positions in chunk-merge mode; either way they must be
    strictly ascending and stay within ``[1, earlier]``.
    """

    window_size: int
    earlier: int
    checked_indices: tuple[int, ...]
    theta: float = 0.75
    frames_per_step: int = 1
    metric: MetricConfig = field(default_factory=MetricConfig)
    mode: str = "sliding"
    chunk_len: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.earlier + 1 >= self.window_size:
            raise ValueError("earlier must leave headroom: earlier + 1 < window_size")
        if not self.checked_indices:
            raise ValueError("checked_indices must not be empty")
        if list(self.checked_indices) != sorted(set(self.checked_indices)):
            raise ValueError("checked_indices must be strictly ascending")
        if self.checked_indices[0] < 1 or self.checked_indices[-1] > self.earlier:
            raise ValueError("checked_indices must lie within [1, earlier]")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.frames_per_step < 1:
            raise ValueError("frames_per_step must be at least 1")
        if self.mode == "chunk_merge":
            if self.chunk_len is None or self.chunk_len < 1:
                raise ValueError("chunk_merge mode requires a positive chunk_len")
            if self.window_size != self.chunk_len + self.earlier + 1:
                raise ValueError(
                    "chunk_merge window_size must equal chunk_len + earlier + 1"
                )
        elif self.chunk_len is not None:
            raise ValueError("chunk_len only applies to chunk_merge mode")

    def to_json_obj(self) -> dict:
        obj: dict = {
            "window_size": self.window_size,
            "earlier": self.earlier,
            "checked_indices": list(self.checked_indices),
            "theta": self.theta,
            "frames_per_step": self.frames_per_step,
            "mode": self.mode,
        }
        if self.chunk_len is not None:
            obj["chunk_len"] = self.chunk_len
        obj["metric"] = self.metric.to_json_obj()
        return obj


_PRESETS: dict[str, EvictionConfig] = {
    "matrix_game": EvictionConfig(
        window_size=9, earlier=6, checked_indices=(3, 6), frames_per_step=3
    ),
    "open_oasis": EvictionConfig(
        window_size=16, earlier=12, checked_indices=(1, 6, 12)
    ),
    "gamecraft": EvictionConfig(
        window_size=46,
        earlier=12,
        checked_indices=(1, 6, 12),
        frames_per_step=33,
        mode="chunk_merge",
        chunk_len=33,
    ),
}


def preset(name: str) -> EvictionConfig:
    """Return the named eviction preset."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; choose from {sorted(_PRESETS)}"
        ) from None


@dataclass
class Slot:
    """One window entry: pixels plus host bookkeeping."""

    frame: np.ndarray
    payload_id: str
    birth_step: int


@dataclass(frozen=True)
class EvictionRule:
    """Why a particular slot was chosen: every check passed, or the first
    failure sat at checked position ``k``."""

    kind: str
    k: int | None = None

    def to_json_obj(self) -> dict:
        if self.kind == "AllPassed":
            return {"kind": "AllPassed"}
        return {"kind": "FirstFailureAt", "k": self.k}


@dataclass(frozen=True)
class EvictionDecision:
    """Outcome of one full-window push."""

    evicted_index: int
    evicted_payload_id: str
    rule: EvictionRule
    scores: tuple[tuple[int, SimilarityScore], ...]

    def to_json_obj(self) -> dict:
        return {
            "evicted_index": self.evicted_index,
            "evicted_payload_id": self.evicted_payload_id,
            "rule": self.rule.to_json_obj(),
            "scores": [dict(k=k, **s.to_json_obj()) for k, s in self.scores],
        }


@dataclass(frozen=True)
class ChunkDecision:
    """Outcome of merging one chunk into the window.

    ``merged`` means the retained head of the old window was prepended to
    the new chunk; otherwise the chunk replaced the window outright.
    """

    merged: bool
    scores: tuple[tuple[int, SimilarityScore], ...]
    evicted_payload_ids: tuple[str, ...]

    def to_json_obj(self) -> dict:
        return {
            "merged": self.merged,
            "scores": [dict(k=k, **s.to_json_obj()) for k, s in self.scores],
            "evicted_payload_ids": list(self.evicted_payload_ids),
        }


class WindowState:
    """Mutable frame window; single-owner, not thread safe."""

    def __init__(self) -> None:
        self.slots: list[Slot] = []
        self.step_counter: int = 0

    def payload_ids(self) -> list[str]:
        return [slot.payload_id for slot in self.slots]


def _default_scorer(cfg: EvictionConfig, cache: DescriptorCache | None) -> Scorer:
    def scorer(ref: np.ndarray, tgt: np.ndarray) -> SimilarityScore:
        return score_frames(ref, tgt, cfg.metric, cache=cache)

    return scorer


def _check_frame(state: WindowState, frame: np.ndarray) -> None:
    if frame.ndim != 2 or frame.dtype != np.uint8:
        raise EvictionError("frames must be 2-d uint8 arrays")
    if state.slots and frame.shape != state.slots[0].frame.shape:
        raise EvictionError(
            f"frame shape {frame.shape} does not match window {state.slots[0].frame.shape}"
        )


def push_frame(
    state: WindowState,
    frame: np.ndarray,
    payload_id: str,
    cfg: EvictionConfig,
    *,
    scorer: Scorer | None = None,
    cache: DescriptorCache | None = None,
) -> EvictionDecision | None:
    """Insert one frame, evicting a slot once the window is full.

    Checked slots are scored against slot 0 in ascending order and
    scoring stops at the first failure, so later checked positions carry
    no score entries in that decision.  Returns None while the window is
    still filling.
    """
    _check_frame(state, frame)
    if scorer is None:
        scorer = _default_scorer(cfg, cache)
    step = state.step_counter
    state.step_counter += 1

    if len(state.slots) < cfg.window_size:
        state.slots.append(Slot(frame, payload_id, step))
        return None

    reference = state.slots[0].frame
    scores: list[tuple[int, SimilarityScore]] = []
    rule = EvictionRule("AllPassed")
    evict_at = cfg.earlier
    for k in cfg.checked_indices:
        score = scorer(reference, state.slots[k].frame)
        scores.append((k, score))
        if score.value < cfg.theta:
            rule = EvictionRule("FirstFailureAt", k)
            evict_at = k - 1
            break

    evicted = state.slots.pop(evict_at)
    state.slots.append(Slot(frame, payload_id, step))
    return EvictionDecision(evict_at, evicted.payload_id, rule, tuple(scores))


def push_step(
    state: WindowState,
    frames: Sequence[np.ndarray],
    payload_ids: Sequence[str],
    cfg: EvictionConfig,
    *,
    scorer: Scorer | None = None,
    cache: DescriptorCache | None = None,
) -> list[EvictionDecision | None]:
    """Push one host step worth of frames, in order."""
    if len(frames) != cfg.frames_per_step:
        raise EvictionError(
            f"a step must carry {cfg.frames_per_step} frames, got {len(frames)}"
        )
    if len(payload_ids) != len(frames):
        raise EvictionError("payload_ids must parallel frames")
    return [
        push_frame(state, frame, pid, cfg, scorer=scorer, cache=cache)
        for frame, pid in zip(frames, payload_ids)
    ]


def chunk_merge(
    state: WindowState,
    frames: Sequence[np.ndarray],
    payload_ids: Sequence[str],
    cfg: EvictionConfig,
    *,
    scorer: Scorer | None = None,
    cache: DescriptorCache | None = None,
) -> ChunkDecision:
    """Merge one chunk into the window, or let it take over.

    The old window and the new chunk are compared at the checked 1-based
    positions; if every score clears theta the head of the old window
    (slots 0 through ``earlier``) is kept ahead of the chunk, otherwise
    the chunk replaces the window.  Either way the window is truncated
    from the oldest end to ``window_size``.
    """
    if cfg.mode != "chunk_merge":
        raise EvictionError("chunk_merge requires a chunk_merge mode config")
    if len(frames) != cfg.chunk_len:
        raise EvictionError(
            f"a chunk must carry {cfg.chunk_len} frames, got {len(frames)}"
        )
    if len(payload_ids) != len(frames):
        raise EvictionError("payload_ids must parallel frames")
    for frame in frames:
        _check_frame(state, frame)
    if scorer is None:
        scorer = _default_scorer(cfg, cache)
    step = state.step_counter
    state.step_counter += 1

    incoming = [
        Slot(frame, pid, step) for frame, pid in zip(frames, payload_ids)
    ]
    if not state.slots:
        state.slots = incoming
        return ChunkDecision(True, (), ())

    scores: list[tuple[int, SimilarityScore]] = []
    merged = True
    for k in cfg.checked_indices:
        score = scorer(state.slots[k - 1].frame, frames[k - 1])
        scores.append((k, score))
        if score.value < cfg.theta:
            merged = False
            break

    if merged:
        kept = state.slots[: cfg.earlier + 1]
        evicted = state.slots[cfg.earlier + 1 :]
        state.slots = kept + incoming
    else:
        evicted = state.slots
        state.slots = incoming
    overflow = len(state.slots) - cfg.window_size
    if overflow > 0:
        evicted = evicted + state.slots[:overflow]
        state.slots = state.slots[overflow:]
    return ChunkDecision(
        merged, tuple(scores), tuple(slot.payload_id for slot in evicted)
    )


@dataclass
class EvictionTrace:
    """Replayable record of one eviction run: resolved config plus one
    entry per push (per chunk in chunk-merge mode)."""

    config: dict
    steps: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "steps": self.steps}, indent=1)


def run_sequence(
    frames: Sequence[np.ndarray],
    payload_ids: Sequence[str],
    cfg: EvictionConfig,
    *,
    scorer: Scorer | None = None,
    cache: DescriptorCache | None = None,
) -> tuple[WindowState, EvictionTrace]:
    """Drive a fresh window over a frame sequence and record the trace.

    Chunk-merge mode consumes whole chunks and ignores a trailing partial
    one.  A shared descriptor cache is created when none is supplied so
    repeat scoring of resident frames stays cheap.
    """
    if len(payload_ids) != len(frames):
        raise EvictionError("payload_ids must parallel frames")
    if scorer is None and cache is None:
        cache = DescriptorCache(capacity=2 * cfg.window_size + cfg.frames_per_step)
    state = WindowState()
    trace = EvictionTrace(config=cfg.to_json_obj())

    if cfg.mode == "chunk_merge":
        assert cfg.chunk_len is not None
        for start in range(0, len(frames) - cfg.chunk_len + 1, cfg.chunk_len):
            stop = start + cfg.chunk_len
            step = state.step_counter
            decision = chunk_merge(
                state,
                frames[start:stop],
                payload_ids[start:stop],
                cfg,
                scorer=scorer,
                cache=cache,
            )
            trace.steps.append(
                {
                    "step": step,
                    "pushed_payload_id": payload_ids[start],
                    "decision": decision.to_json_obj(),
                }
            )
        return state, trace

    for frame, pid in zip(frames, payload_ids):
        step = state.step_counter
        decision = push_frame(state, frame, pid, cfg, scorer=scorer, cache=cache)
        trace.steps.append(
            {
                "step": step,
                "pushed_payload_id": pid,
                "decision": None if decision is None else decision.to_json_obj(),
            }
        )
    return state, trace
