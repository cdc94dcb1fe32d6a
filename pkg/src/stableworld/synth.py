"""Deterministic synthetic worlds with ground-truth camera motion.

A scene script is a list of segments; each segment owns a texture seed, a
per-frame rigid motion (pan, rotate, zoom), and a drift recipe (additive
noise whose sigma accumulates per frame, plus optional periodic box blur).
Frames are rendered by warping the segment texture with the cumulative
motion homography, so every frame carries an exact ground-truth mapping
back to the segment's first frame.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from stableworld.frame_io import FrameSequence, write_pgm


@dataclass(frozen=True)
class Motion:
    pan_x: float = 0.0   # pixels per frame
    pan_y: float = 0.0
    rotate: float = 0.0  # radians per frame, about the image center
    zoom: float = 1.0    # scale ratio per frame, about the image center


@dataclass(frozen=True)
class Drift:
    noise_sigma_per_frame: float = 0.0  # intensity units; sigma at frame u is u * this
    blur_every: int | None = None       # one extra 3x3 box blur per elapsed period


@dataclass(frozen=True)
class Segment:
    texture_seed: int
    length: int
    motion: Motion = field(default_factory=Motion)
    drift: Drift = field(default_factory=Drift)


@dataclass(frozen=True)
class SceneScript:
    width: int
    height: int
    segments: tuple[Segment, ...]
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 16 or self.height < 16:
            raise ValueError("scene frames must be at least 16x16")
        if not self.segments or any(s.length < 1 for s in self.segments):
            raise ValueError("every segment needs length >= 1")


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    segment_id: int
    homography_from_segment_start: np.ndarray  # (3,3), start coords -> this frame
    cumulative_noise_sigma: float


@dataclass(frozen=True)
class GroundTruthManifest:
    width: int
    height: int
    rng_seed: int
    records: tuple[FrameRecord, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "width": self.width,
                "height": self.height,
                "rng_seed": self.rng_seed,
                "frames": [
                    {
                        "frame_index": r.frame_index,
                        "segment_id": r.segment_id,
                        "homography_from_segment_start": r.homography_from_segment_start.tolist(),
                        "cumulative_noise_sigma": r.cumulative_noise_sigma,
                    }
                    for r in self.records
                ],
            },
            indent=1,
        )

    @staticmethod
    def from_json(text: str) -> "GroundTruthManifest":
        obj = json.loads(text)
        return GroundTruthManifest(
            obj["width"],
            obj["height"],
            obj["rng_seed"],
            tuple(
                FrameRecord(
                    f["frame_index"],
                    f["segment_id"],
                    np.asarray(f["homography_from_segment_start"], dtype=np.float64),
                    f["cumulative_noise_sigma"],
                )
                for f in obj["frames"]
            ),
        )


# ---------------------------------------------------------------------------
# texture synthesis

def _value_noise(rng: np.random.Generator, h: int, w: int, cell: int) -> np.ndarray:
    """Smooth noise in [-1, 1]: a coarse random grid, bilinearly upsampled."""
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.uniform(-1.0, 1.0, (gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(np.int64)
    x0 = xs.astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    tl = grid[y0][:, x0]
    tr = grid[y0][:, x0 + 1]
    bl = grid[y0 + 1][:, x0]
    br = grid[y0 + 1][:, x0 + 1]
    return tl * (1 - fy) * (1 - fx) + tr * (1 - fy) * fx + bl * fy * (1 - fx) + br * fy * fx


def _block_grid(rng: np.random.Generator, h: int, w: int, cell: int) -> np.ndarray:
    """Random per-cell polarity in {-1, +1}, constant within each cell."""
    cells = rng.integers(0, 2, (h // cell + 1, w // cell + 1)) * 2 - 1
    return cells[np.arange(h) // cell][:, np.arange(w) // cell].astype(np.float64)


def render_texture(seed: int, height: int, width: int) -> np.ndarray:
    """Corner-rich aperiodic texture: value noise plus random-polarity grids.

    Pure noise gives unstable descriptors and bare grids give ambiguous
    (self-similar) ones; blending both yields strong, locally distinctive
    corners at the cell junctions.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x7E37, seed]))
    noise = (
        0.55 * _value_noise(rng, height, width, 31)
        + 0.30 * _value_noise(rng, height, width, 13)
        + 0.15 * _value_noise(rng, height, width, 5)
    )
    grid = _block_grid(rng, height, width, 16) * _block_grid(rng, height, width, 41)
    tex = 128.0 + 86.0 * grid * (0.55 + 0.45 * noise) + 34.0 * noise
    return np.clip(np.rint(tex), 0, 255).astype(np.uint8)


def render_natural(seed: int, height: int, width: int) -> np.ndarray:
    """Photo-like frame: red-spectrum octave noise plus sparse hard features.

    render_texture packs corners at every scale, which is a worst case for
    segment-test density, not a typical video frame. This variant decays
    in amplitude with frequency the way camera footage does, so benchmarks
    on it reflect ordinary rather than pathological load.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x7E38, seed]))
    acc = np.zeros((height, width))
    for cell, amp in ((181, 1.0), (89, 0.62), (43, 0.38), (21, 0.22), (9, 0.12)):
        acc += amp * _value_noise(rng, height, width, cell)
    img = 128.0 + 99.0 * acc / np.abs(acc).max()
    n_features = (height * width) // 1800
    for _ in range(n_features):
        cy = int(rng.integers(6, height - 6))
        cx = int(rng.integers(6, width - 6))
        s = int(rng.integers(2, 7))
        img[cy - s:cy + s, cx - s:cx + s] += rng.uniform(-70.0, 70.0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# warping and rendering

def _step_matrix(m: Motion, cx: float, cy: float) -> np.ndarray:
    c, s = math.cos(m.rotate), math.sin(m.rotate)
    a = m.zoom * np.array([[c, -s], [s, c]])
    t = np.array([cx, cy]) - a @ np.array([cx, cy]) + np.array([m.pan_x, m.pan_y])
    out = np.eye(3)
    out[:2, :2] = a
    out[:2, 2] = t
    return out


def warp_bilinear(img: np.ndarray, hom: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Sample img at hom^-1 applied to each output pixel, borders replicated.

    ``hom`` maps source coordinates to output coordinates, so the rendered
    frame shows the source moved by ``hom``.
    """
    oh, ow = out_shape
    inv = np.linalg.inv(hom)
    xs, ys = np.meshgrid(np.arange(ow, dtype=np.float64), np.arange(oh, dtype=np.float64))
    denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom
    h, w = img.shape
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    f = img.astype(np.float64)
    return (
        f[y0, x0] * (1 - fy) * (1 - fx)
        + f[y0, x1] * (1 - fy) * fx
        + f[y1, x0] * fy * (1 - fx)
        + f[y1, x1] * fy * fx
    )


def render(script: SceneScript) -> tuple[FrameSequence, GroundTruthManifest]:
    """Render every frame of the script plus its ground-truth manifest.

    Per frame: warp the segment texture by the cumulative motion, apply
    floor(u / blur_every) box blurs, then add the accumulated drift noise.
    Noise compounds as a random walk — each frame adds one increment drawn
    from its own (rng_seed, frame_index) stream — with increment variance
    chosen so the total at index u within the segment has sigma exactly
    u * noise_sigma_per_frame. Compounding, rather than redrawing noise
    per frame, is what makes frames further apart strictly less alike.
    """
    h, w = script.height, script.width
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    images: list[np.ndarray] = []
    ids: list[str] = []
    records: list[FrameRecord] = []
    frame_index = 0
    for seg_id, seg in enumerate(script.segments):
        texture = render_texture(seg.texture_seed, h, w)
        step = _step_matrix(seg.motion, cx, cy)
        hom = np.eye(3)
        rate = seg.drift.noise_sigma_per_frame
        walk: np.ndarray | None = None
        for u in range(seg.length):
            warped = texture.astype(np.float64) if u == 0 else warp_bilinear(texture, hom, (h, w))
            if seg.drift.blur_every:
                for _ in range(u // seg.drift.blur_every):
                    warped = ndimage.uniform_filter(warped, size=3, mode="nearest")
            sigma = u * rate
            if sigma > 0.0:
                noise_rng = np.random.default_rng(
                    np.random.SeedSequence([script.rng_seed, frame_index])
                )
                # var(u*rate) - var((u-1)*rate) keeps the running total on
                # the recorded cumulative_noise_sigma schedule
                step_sigma = rate * math.sqrt(2 * u - 1)
                increment = noise_rng.normal(0.0, step_sigma, (h, w))
                walk = increment if walk is None else walk + increment
                warped = warped + walk
            images.append(np.clip(np.rint(warped), 0, 255).astype(np.uint8))
            ids.append(f"frame_{frame_index:05d}")
            records.append(FrameRecord(frame_index, seg_id, hom.copy(), sigma))
            frame_index += 1
            hom = step @ hom
    seq = FrameSequence(tuple(images), tuple(ids))
    manifest = GroundTruthManifest(w, h, script.rng_seed, tuple(records))
    return seq, manifest


def save_world(directory: str | Path, seq: FrameSequence, manifest: GroundTruthManifest) -> None:
    """Write frames as canonical PGM plus manifest.json alongside."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for _, img, pid in seq:
        write_pgm(directory / f"{pid}.pgm", img)
    (directory / "manifest.json").write_text(manifest.to_json())


# ---------------------------------------------------------------------------
# scripted presets

_TRANSITION_RE = re.compile(r"^transition_at\((\d+)\)$")


def scripted_preset(name: str, seed: int = 0) -> SceneScript:
    """Named scene scripts used by the diagnostics and the test suite.

    ``transition_at(T)`` takes the transition frame as a literal parameter,
    e.g. ``transition_at(100)`` for two 100-frame segments with unrelated
    textures.
    """
    if name == "static_drift":
        return SceneScript(
            256, 256,
            (Segment(seed + 11, 200, Motion(), Drift(noise_sigma_per_frame=0.4)),),
            rng_seed=seed,
        )
    if name == "pan_small":
        return SceneScript(
            256, 256,
            (
                Segment(
                    seed + 23, 150,
                    Motion(pan_x=0.8, pan_y=0.3),
                    Drift(noise_sigma_per_frame=0.9),
                ),
            ),
            rng_seed=seed,
        )
    if name == "orbit_large":
        return SceneScript(
            256, 256,
            (
                Segment(
                    seed + 37, 150,
                    Motion(pan_x=0.6, pan_y=0.2, rotate=0.02, zoom=1.002),
                    Drift(noise_sigma_per_frame=0.3),
                ),
            ),
            rng_seed=seed,
        )
    m = _TRANSITION_RE.match(name)
    if m:
        t = int(m.group(1))
        if t < 1:
            raise ValueError("transition point must be >= 1")
        mk = lambda s: Segment(s, t, Motion(), Drift(noise_sigma_per_frame=0.05))
        return SceneScript(256, 256, (mk(seed + 51), mk(seed + 52)), rng_seed=seed)
    raise ValueError(
        f"unknown scene preset {name!r}; have static_drift, pan_small, "
        f"orbit_large, transition_at(T)"
    )


# ---------------------------------------------------------------------------
# script (de)serialization for the command line

def script_to_json(script: SceneScript) -> str:
    return json.dumps(
        {
            "width": script.width,
            "height": script.height,
            "rng_seed": script.rng_seed,
            "segments": [
                {
                    "texture_seed": s.texture_seed,
                    "length": s.length,
                    "motion": {
                        "pan_x": s.motion.pan_x,
                        "pan_y": s.motion.pan_y,
                        "rotate": s.motion.rotate,
                        "zoom": s.motion.zoom,
                    },
                    "drift": {
                        "noise_sigma_per_frame": s.drift.noise_sigma_per_frame,
                        "blur_every": s.drift.blur_every,
                    },
                }
                for s in script.segments
            ],
        },
        indent=1,
    )


def script_from_json(text: str) -> SceneScript:
    obj = json.loads(text)
    segments = tuple(
        Segment(
            int(s["texture_seed"]),
            int(s["length"]),
            Motion(**s.get("motion", {})),
            Drift(**s.get("drift", {})),
        )
        for s in obj["segments"]
    )
    return SceneScript(int(obj["width"]), int(obj["height"]), segments, int(obj.get("rng_seed", 0)))
