"""Walk a scene transition through both eviction policies.

Renders a world that cuts to a new scene halfway, then replays it through
the per-frame sliding preset and the chunk-merge preset. The sliding
window strands the earliest old-scene frames (their checks compare
against the frozen reference and keep passing), while chunk merging
replaces the window outright once the scenes stop overlapping.
"""

from stableworld.eviction import preset, run_sequence
from stableworld.synth import render, scripted_preset

seq, manifest = render(scripted_preset("transition_at(50)", seed=3))
segments = [r.segment_id for r in manifest.records]
old = {pid for pid, s in zip(seq.payload_ids, segments) if s == 0}
print(f"{len(seq)} frames, scene cut after frame {segments.index(1) - 1}")

for name in ("matrix_game", "gamecraft"):
    cfg = preset(name)
    if cfg.mode == "chunk_merge" and len(seq) < 2 * cfg.chunk_len:
        print(f"\n--- {name}: needs {2 * cfg.chunk_len} frames, skipping")
        continue
    state, trace = run_sequence(seq.images, seq.payload_ids, cfg)
    final = state.payload_ids()
    stranded = sorted(old & set(final))
    print(f"\n--- {name} ({cfg.mode}, window {cfg.window_size}) ---")
    rules = {}
    for entry in trace.steps:
        d = entry["decision"]
        if d is None:
            key = "Fill"
        elif cfg.mode == "chunk_merge":
            key = "Merged" if d["merged"] else "Replaced"
        else:
            kind, k = d["rule"]["kind"], d["rule"].get("k")
            key = kind if k is None else f"{kind}({k})"
        rules[key] = rules.get(key, 0) + 1
    print("decision histogram:", dict(sorted(rules.items())))
    print(f"old-scene frames left in the final window: {len(stranded)}"
          + (f" {stranded[:4]}..." if stranded else ""))
