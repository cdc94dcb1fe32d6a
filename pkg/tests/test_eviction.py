"""Window mechanics under stub scorers, plus real-metric trace determinism."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stableworld.eviction import (
    ChunkDecision,
    EvictionConfig,
    EvictionError,
    EvictionRule,
    WindowState,
    chunk_merge,
    preset,
    push_frame,
    push_step,
    run_sequence,
)
from stableworld.similarity import SimilarityScore
from stableworld.synth import Drift, SceneScript, Segment, render


def frame(tag: int) -> np.ndarray:
    """A 4x4 frame whose pixels encode its identity for stub scorers."""
    return np.full((4, 4), tag % 256, dtype=np.uint8)


def stub_score(value: float) -> SimilarityScore:
    return SimilarityScore(value, value, value, 50, "OK")


def const_scorer(value: float):
    return lambda ref, tgt: stub_score(value)


def by_target_scorer(values: dict[int, float], default: float = 1.0):
    """Score by the target frame's tag, ignoring the reference."""
    return lambda ref, tgt: stub_score(values.get(int(tgt[0, 0]), default))


def small_cfg(**overrides) -> EvictionConfig:
    base = dict(window_size=5, earlier=3, checked_indices=(1, 3))
    base.update(overrides)
    return EvictionConfig(**base)


def filled_state(cfg: EvictionConfig, n: int | None = None) -> WindowState:
    state = WindowState()
    for i in range(cfg.window_size if n is None else n):
        decision = push_frame(state, frame(i), f"f{i}", cfg, scorer=const_scorer(1.0))
        assert decision is None
    return state


# ---------------------------------------------------------------------------
# sliding-window pushes


def test_window_fills_without_decisions():
    cfg = small_cfg()
    state = filled_state(cfg)
    assert state.payload_ids() == ["f0", "f1", "f2", "f3", "f4"]
    assert state.step_counter == 5


def test_all_passed_evicts_highest_evictable():
    cfg = small_cfg()
    state = filled_state(cfg)
    decision = push_frame(state, frame(5), "f5", cfg, scorer=const_scorer(1.0))
    assert decision is not None
    assert decision.evicted_index == cfg.earlier == 3
    assert decision.evicted_payload_id == "f3"
    assert decision.rule == EvictionRule("AllPassed")
    assert [k for k, _ in decision.scores] == [1, 3]
    assert state.payload_ids() == ["f0", "f1", "f2", "f4", "f5"]


def test_first_failure_evicts_predecessor():
    cfg = small_cfg()
    state = filled_state(cfg)
    scorer = by_target_scorer({3: 0.2})  # slot 3 holds frame tag 3
    decision = push_frame(state, frame(5), "f5", cfg, scorer=scorer)
    assert decision.rule == EvictionRule("FirstFailureAt", 3)
    assert decision.evicted_index == 2
    assert decision.evicted_payload_id == "f2"
    assert state.payload_ids() == ["f0", "f1", "f3", "f4", "f5"]


def test_failure_at_first_checked_evicts_reference():
    cfg = small_cfg()
    state = filled_state(cfg)
    decision = push_frame(
        state, frame(5), "f5", cfg, scorer=by_target_scorer({1: 0.0})
    )
    assert decision.rule == EvictionRule("FirstFailureAt", 1)
    assert decision.evicted_index == 0
    assert decision.evicted_payload_id == "f0"
    assert state.payload_ids() == ["f1", "f2", "f3", "f4", "f5"]


def test_scoring_short_circuits_at_first_failure():
    cfg = small_cfg()
    state = filled_state(cfg)
    calls: list[int] = []

    def scorer(ref, tgt):
        calls.append(int(tgt[0, 0]))
        return stub_score(0.0)

    decision = push_frame(state, frame(5), "f5", cfg, scorer=scorer)
    assert calls == [1]
    assert [k for k, _ in decision.scores] == [1]


def test_threshold_is_strict_less_than():
    cfg = small_cfg(theta=0.75)
    state = filled_state(cfg)
    decision = push_frame(
        state, frame(5), "f5", cfg, scorer=const_scorer(0.75)
    )
    assert decision.rule == EvictionRule("AllPassed")


def test_boundary_score_equal_theta_passes_hypothesis_style():
    # exactly theta passes, a hair below fails at the first check
    cfg = small_cfg(theta=0.5)
    state = filled_state(cfg)
    decision = push_frame(
        state, frame(5), "f5", cfg, scorer=const_scorer(np.nextafter(0.5, 0.0))
    )
    assert decision.rule == EvictionRule("FirstFailureAt", 1)


def test_capacity_and_recency_hold_over_long_run():
    cfg = small_cfg()
    rng = np.random.default_rng(3)
    state = WindowState()
    for i in range(60):
        before = state.payload_ids()
        scorer = const_scorer(float(rng.uniform(0.0, 1.0)))
        decision = push_frame(state, frame(i), f"f{i}", cfg, scorer=scorer)
        assert len(state.slots) <= cfg.window_size
        assert state.payload_ids()[-1] == f"f{i}"
        if decision is not None:
            assert decision.evicted_index <= cfg.earlier
            # only slots at evictable positions can leave
            assert decision.evicted_payload_id in before[: cfg.earlier + 1]


def test_static_scene_keeps_reference_forever():
    cfg = small_cfg()
    state = WindowState()
    for i in range(80):
        push_frame(state, frame(i), f"f{i}", cfg, scorer=const_scorer(0.99))
    assert state.slots[0].payload_id == "f0"
    assert state.slots[0].birth_step == 0


def test_scene_cut_under_per_frame_preset_strands_old_head():
    # With per-frame checks, a hard cut keeps failing at the same checked
    # position and always evicts the slot just before it, so the slots
    # below that position never turn over.
    cfg = preset("matrix_game")
    old = {i: 1.0 for i in range(9)}
    scorer = by_target_scorer(old, default=0.1)  # new content scores low
    state = WindowState()
    for i in range(9):
        push_frame(state, frame(i), f"old{i}", cfg, scorer=scorer)
    for i in range(30):
        push_frame(state, frame(100 + i), f"new{i}", cfg, scorer=scorer)
    ids = state.payload_ids()
    assert ids[:5] == ["old0", "old1", "old2", "old3", "old4"]
    assert all(pid.startswith("new") for pid in ids[5:])


def test_push_frame_rejects_bad_frames():
    cfg = small_cfg()
    state = filled_state(cfg, n=2)
    with pytest.raises(EvictionError):
        push_frame(state, np.zeros((4, 4), np.float32), "x", cfg)
    with pytest.raises(EvictionError):
        push_frame(state, np.zeros((5, 4), np.uint8), "x", cfg)
    with pytest.raises(EvictionError):
        push_frame(state, np.zeros((4, 4, 3), np.uint8), "x", cfg)


def test_push_step_applies_in_order():
    cfg = small_cfg(frames_per_step=3)
    state = filled_state(cfg)
    decisions = push_step(
        state,
        [frame(5), frame(6), frame(7)],
        ["f5", "f6", "f7"],
        cfg,
        scorer=const_scorer(1.0),
    )
    assert [d.evicted_payload_id for d in decisions] == ["f3", "f4", "f5"]
    assert state.payload_ids() == ["f0", "f1", "f2", "f6", "f7"]


def test_push_step_rejects_wrong_group_size():
    cfg = small_cfg(frames_per_step=3)
    state = WindowState()
    with pytest.raises(EvictionError):
        push_step(state, [frame(0)], ["f0"], cfg)
    with pytest.raises(EvictionError):
        push_step(state, [frame(0), frame(1), frame(2)], ["a", "b"], cfg)


@given(
    scores=st.lists(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        min_size=2,
        max_size=2,
    ),
    thetas=st.tuples(
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=0.01, max_value=0.99),
    ),
)
def test_raising_theta_never_moves_first_failure_later(scores, thetas):
    lo, hi = min(thetas), max(thetas)
    cfg_lo = small_cfg(theta=lo)
    cfg_hi = small_cfg(theta=hi)
    table = {1: scores[0], 3: scores[1]}

    def run(cfg):
        state = filled_state(cfg)
        return push_frame(
            state, frame(9), "f9", cfg, scorer=by_target_scorer(table)
        ).rule

    rule_lo, rule_hi = run(cfg_lo), run(cfg_hi)
    if rule_hi.kind == "AllPassed":
        assert rule_lo.kind == "AllPassed"
    elif rule_lo.kind == "FirstFailureAt":
        assert rule_hi.k <= rule_lo.k


# ---------------------------------------------------------------------------
# chunk merge


def chunk_cfg() -> EvictionConfig:
    return EvictionConfig(
        window_size=8,
        earlier=2,
        checked_indices=(1, 2),
        frames_per_step=5,
        mode="chunk_merge",
        chunk_len=5,
    )


def chunk(tags: range) -> tuple[list[np.ndarray], list[str]]:
    return [frame(t) for t in tags], [f"f{t}" for t in tags]


def test_first_chunk_seeds_window():
    cfg = chunk_cfg()
    state = WindowState()
    frames, ids = chunk(range(5))
    decision = chunk_merge(state, frames, ids, cfg, scorer=const_scorer(0.0))
    assert decision == ChunkDecision(True, (), ())
    assert state.payload_ids() == ids


def test_chunk_merge_keeps_head_and_appends_chunk():
    cfg = chunk_cfg()
    state = WindowState()
    chunk_merge(state, *chunk(range(5)), cfg, scorer=const_scorer(1.0))
    decision = chunk_merge(state, *chunk(range(5, 10)), cfg, scorer=const_scorer(1.0))
    assert decision.merged
    assert [k for k, _ in decision.scores] == [1, 2]
    # head = old slots 0..earlier, the rest of the old window leaves
    assert decision.evicted_payload_ids == ("f3", "f4")
    assert state.payload_ids() == ["f0", "f1", "f2"] + [f"f{t}" for t in range(5, 10)]
    assert len(state.slots) == cfg.window_size


def test_chunk_merge_from_full_window_stays_at_capacity():
    cfg = chunk_cfg()
    state = WindowState()
    chunk_merge(state, *chunk(range(5)), cfg, scorer=const_scorer(1.0))
    chunk_merge(state, *chunk(range(5, 10)), cfg, scorer=const_scorer(1.0))
    decision = chunk_merge(state, *chunk(range(10, 15)), cfg, scorer=const_scorer(1.0))
    assert decision.merged
    assert decision.evicted_payload_ids == ("f5", "f6", "f7", "f8", "f9")
    assert state.payload_ids() == ["f0", "f1", "f2"] + [f"f{t}" for t in range(10, 15)]


def test_chunk_replacement_on_any_failed_check():
    cfg = chunk_cfg()
    state = WindowState()
    chunk_merge(state, *chunk(range(5)), cfg, scorer=const_scorer(1.0))
    # second checked position fails, first passes
    scorer = by_target_scorer({6: 0.2})
    decision = chunk_merge(state, *chunk(range(5, 10)), cfg, scorer=scorer)
    assert not decision.merged
    assert [k for k, _ in decision.scores] == [1, 2]
    assert decision.evicted_payload_ids == ("f0", "f1", "f2", "f3", "f4")
    assert state.payload_ids() == [f"f{t}" for t in range(5, 10)]


def test_chunk_comparison_short_circuits():
    cfg = chunk_cfg()
    state = WindowState()
    chunk_merge(state, *chunk(range(5)), cfg, scorer=const_scorer(1.0))
    calls: list[int] = []

    def scorer(ref, tgt):
        calls.append(int(tgt[0, 0]))
        return stub_score(0.0)

    decision = chunk_merge(state, *chunk(range(5, 10)), cfg, scorer=scorer)
    assert calls == [5]  # chunk position 1 only
    assert [k for k, _ in decision.scores] == [1]


def test_chunk_merge_compares_positionwise():
    # checked position k pairs window slot k-1 with chunk frame k-1
    cfg = chunk_cfg()
    state = WindowState()
    chunk_merge(state, *chunk(range(5)), cfg, scorer=const_scorer(1.0))
    pairs: list[tuple[int, int]] = []

    def scorer(ref, tgt):
        pairs.append((int(ref[0, 0]), int(tgt[0, 0])))
        return stub_score(1.0)

    chunk_merge(state, *chunk(range(5, 10)), cfg, scorer=scorer)
    assert pairs == [(0, 5), (1, 6)]


def test_chunk_merge_validates_inputs():
    cfg = chunk_cfg()
    state = WindowState()
    frames, ids = chunk(range(4))
    with pytest.raises(EvictionError):
        chunk_merge(state, frames, ids, cfg)
    with pytest.raises(EvictionError):
        chunk_merge(state, *chunk(range(5)), small_cfg())


# ---------------------------------------------------------------------------
# presets and config validation


def test_preset_shapes():
    mg = preset("matrix_game")
    assert (mg.window_size, mg.earlier, mg.checked_indices) == (9, 6, (3, 6))
    assert (mg.frames_per_step, mg.mode) == (3, "sliding")
    oo = preset("open_oasis")
    assert (oo.window_size, oo.earlier, oo.checked_indices) == (16, 12, (1, 6, 12))
    assert (oo.frames_per_step, oo.mode) == (1, "sliding")
    gc = preset("gamecraft")
    assert (gc.window_size, gc.earlier, gc.checked_indices) == (46, 12, (1, 6, 12))
    assert (gc.frames_per_step, gc.mode, gc.chunk_len) == (33, "chunk_merge", 33)
    assert all(c.theta == 0.75 for c in (mg, oo, gc))


def test_unknown_preset_raises():
    with pytest.raises(ValueError, match="unknown preset"):
        preset("matrixgame")


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(window_size=5, earlier=4, checked_indices=(1,)),   # no headroom
        dict(window_size=5, earlier=3, checked_indices=()),
        dict(window_size=5, earlier=3, checked_indices=(3, 1)),
        dict(window_size=5, earlier=3, checked_indices=(2, 2)),
        dict(window_size=5, earlier=3, checked_indices=(0, 3)),
        dict(window_size=5, earlier=3, checked_indices=(1, 4)),  # beyond earlier
        dict(window_size=5, earlier=3, checked_indices=(1,), theta=0.0),
        dict(window_size=5, earlier=3, checked_indices=(1,), theta=1.0),
        dict(window_size=5, earlier=3, checked_indices=(1,), frames_per_step=0),
        dict(window_size=5, earlier=3, checked_indices=(1,), mode="chunk_merge"),
        dict(
            window_size=9,
            earlier=3,
            checked_indices=(1,),
            mode="chunk_merge",
            chunk_len=4,  # 4 + 3 + 1 != 9
        ),
        dict(window_size=5, earlier=3, checked_indices=(1,), chunk_len=2),
        dict(window_size=5, earlier=3, checked_indices=(1,), mode="atomic"),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EvictionConfig(**kwargs)


# ---------------------------------------------------------------------------
# traces


def test_run_sequence_trace_schema():
    cfg = small_cfg()
    frames = [frame(i) for i in range(8)]
    ids = [f"f{i}" for i in range(8)]
    state, trace = run_sequence(frames, ids, cfg, scorer=by_target_scorer({3: 0.1}))
    assert trace.config == cfg.to_json_obj()
    assert len(trace.steps) == 8
    for i, step in enumerate(trace.steps):
        assert list(step) == ["step", "pushed_payload_id", "decision"]
        assert step["step"] == i
        assert step["pushed_payload_id"] == f"f{i}"
    assert all(s["decision"] is None for s in trace.steps[:5])
    decision = trace.steps[5]["decision"]
    assert list(decision) == ["evicted_index", "evicted_payload_id", "rule", "scores"]
    assert decision["rule"] == {"kind": "FirstFailureAt", "k": 3}
    assert decision["evicted_index"] == 2
    entry = decision["scores"][-1]
    assert list(entry) == ["k", "value", "r_h", "r_f", "g", "status"]
    all_passed = trace.steps[6]["decision"]  # tag-3 frame was evicted above
    assert all_passed["rule"] == {"kind": "AllPassed"}
    json.loads(trace.to_json())  # serializes cleanly


def test_run_sequence_chunk_mode_drops_trailing_partial():
    cfg = chunk_cfg()
    frames = [frame(i) for i in range(17)]  # 3 chunks of 5 + 2 leftover
    ids = [f"f{i}" for i in range(17)]
    state, trace = run_sequence(frames, ids, cfg, scorer=const_scorer(1.0))
    assert len(trace.steps) == 3
    assert [s["pushed_payload_id"] for s in trace.steps] == ["f0", "f5", "f10"]
    assert trace.steps[1]["decision"]["merged"] is True
    assert "f15" not in state.payload_ids() and "f16" not in state.payload_ids()


def test_run_sequence_real_metric_is_deterministic():
    script = SceneScript(
        128, 128, (Segment(5, 12, drift=Drift(noise_sigma_per_frame=0.5)),)
    )
    seq, _ = render(script)
    cfg = EvictionConfig(window_size=9, earlier=6, checked_indices=(3, 6))
    runs = [
        run_sequence(list(seq.images), list(seq.payload_ids), cfg)[1].to_json()
        for _ in range(2)
    ]
    assert runs[0] == runs[1]
    steps = json.loads(runs[0])["steps"]
    assert sum(s["decision"] is not None for s in steps) == 3
    for step in steps:
        if step["decision"]:
            for entry in step["decision"]["scores"]:
                assert set(entry) == {"k", "value", "r_h", "r_f", "g", "status"}
