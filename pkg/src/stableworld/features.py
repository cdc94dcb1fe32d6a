"""Multi-scale keypoint detection and binary description.

The pipeline: image pyramid, segment-test corners, Harris ranking with an
area-proportional per-level budget, intensity-centroid orientation, then
steered pairwise intensity tests over a box-smoothed patch. Everything is
deterministic: equal-score ties always resolve by (y, x) scan order.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from stableworld._kernels import (
    box_integral,
    centroid_angles,
    circle_offsets,
    describe_bits,
    fast_detect,
    harris_at,
    resize_bilinear,
)

_HARRIS_K = 0.04
_HARRIS_BLOCK = 7
_ORIENTATION_BINS = 30


@dataclass(frozen=True)
class OrbConfig:
    """Extraction knobs; the defaults are the tuned operating point."""

    n_levels: int = 8
    scale_factor: float = 1.2
    fast_threshold: int = 7
    max_keypoints: int = 3000
    edge_margin: int = 19
    patch_radius: int = 15

    def __post_init__(self) -> None:
        if self.n_levels < 1 or self.scale_factor <= 1.0:
            raise ValueError("need n_levels >= 1 and scale_factor > 1")
        if self.fast_threshold < 1 or self.max_keypoints < 1:
            raise ValueError("fast_threshold and max_keypoints must be positive")
        reach = _pattern_reach()
        if self.edge_margin < max(self.patch_radius, reach):
            raise ValueError(
                f"edge_margin {self.edge_margin} cannot cover patch_radius "
                f"{self.patch_radius} and the rotated test pattern (reach {reach})"
            )


class Keypoint(NamedTuple):
    x: float            # level-0 pixel coordinates
    y: float
    level: int
    response: float     # Harris corner response
    orientation: float  # radians, (-pi, pi]


@dataclass(frozen=True)
class DescriptorSet:
    """Parallel arrays of keypoints and their 256-bit descriptors."""

    xs: np.ndarray           # (n,) float64, level-0 coords
    ys: np.ndarray           # (n,) float64
    levels: np.ndarray       # (n,) int32
    responses: np.ndarray    # (n,) float64
    orientations: np.ndarray  # (n,) float64
    descriptors: np.ndarray  # (n, 32) uint8

    def __len__(self) -> int:
        return len(self.xs)

    def keypoint(self, i: int) -> Keypoint:
        return Keypoint(
            float(self.xs[i]),
            float(self.ys[i]),
            int(self.levels[i]),
            float(self.responses[i]),
            float(self.orientations[i]),
        )


def _empty_set() -> DescriptorSet:
    return DescriptorSet(
        np.empty(0), np.empty(0), np.empty(0, np.int32), np.empty(0), np.empty(0),
        np.empty((0, 32), np.uint8),
    )


# ---------------------------------------------------------------------------
# sampling pattern

@functools.lru_cache(maxsize=1)
def _base_pattern() -> np.ndarray:
    path = resources.files("stableworld").joinpath("data/orb_pairs.txt")
    with resources.as_file(path) as p:
        table = np.loadtxt(p, dtype=np.int64)
    if table.shape != (256, 4):
        raise RuntimeError(f"corrupt sampling-pair table: shape {table.shape}")
    return table


@functools.lru_cache(maxsize=1)
def _steered_patterns() -> np.ndarray:
    """Pattern offsets pre-rotated for each orientation bin: (bins, 256, 4)."""
    base = _base_pattern()
    x1, y1, x2, y2 = (base[:, k].astype(np.float64) for k in range(4))
    out = np.empty((_ORIENTATION_BINS, 256, 4), dtype=np.int64)
    for b in range(_ORIENTATION_BINS):
        t = 2.0 * math.pi * b / _ORIENTATION_BINS
        c, s = math.cos(t), math.sin(t)
        out[b, :, 0] = np.rint(x1 * c - y1 * s)
        out[b, :, 1] = np.rint(x1 * s + y1 * c)
        out[b, :, 2] = np.rint(x2 * c - y2 * s)
        out[b, :, 3] = np.rint(x2 * s + y2 * c)
    return out


@functools.lru_cache(maxsize=1)
def _pattern_reach() -> int:
    return int(np.abs(_steered_patterns()).max())


# ---------------------------------------------------------------------------
# pyramid

def build_pyramid(img: np.ndarray, cfg: OrbConfig = OrbConfig()) -> list[np.ndarray]:
    """Downscale chain: level L has dims floor(dim / scale^L).

    Each level is bilinearly resampled from the previous one with
    half-pixel-center mapping. Levels too small to host a full descriptor
    patch (min dim below 2 * edge_margin) are dropped, so the result may
    be empty.
    """
    h0, w0 = img.shape
    floor_dim = 2 * cfg.edge_margin
    levels: list[np.ndarray] = []
    prev = img
    for lv in range(cfg.n_levels):
        s = cfg.scale_factor ** lv
        th, tw = int(h0 / s), int(w0 / s)
        if min(th, tw) < floor_dim:
            break
        prev = prev if lv == 0 else resize_bilinear(prev, th, tw)
        levels.append(prev)
    return levels


# ---------------------------------------------------------------------------
# detection

def _detect_window(
    img: np.ndarray, threshold: int, y0: int, y1: int, x0: int, x1: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """detect_fast restricted to a scan window (same results inside it)."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape
    ylo, yhi = max(y0, 3), min(y1, h - 3)
    xlo, xhi = max(x0, 3), min(x1, w - 3)
    empty = np.empty(0, np.int64)
    if yhi <= ylo or xhi <= xlo:
        return empty, empty.copy(), empty.copy()
    dx, dy = circle_offsets()
    ys, xs, scores = fast_detect(img, int(threshold), dx, dy, ylo, yhi, xlo, xhi)
    return xs, ys, scores


def detect_fast(img: np.ndarray, threshold: int = 7) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Segment-test corners after non-max suppression.

    Returns (xs, ys, scores) in row-major scan order. A corner needs at
    least 9 contiguous ring pixels all above center + threshold or all
    below center - threshold; its score is the SAD of that arc.
    """
    if img.ndim != 2:
        raise ValueError("detect_fast needs a 2-d grayscale image")
    h, w = img.shape
    return _detect_window(img, threshold, 0, h, 0, w)


def harris_response_at(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Harris corner response at the given pixels (7x7 block, Sobel gradients)."""
    r = _HARRIS_BLOCK // 2
    if len(ys) and (
        ys.min() < r or xs.min() < r
        or ys.max() >= img.shape[0] - r or xs.max() >= img.shape[1] - r
    ):
        raise ValueError("candidates must keep the Harris block inside the image")
    if len(ys) == 0:
        return np.empty(0, np.float64)
    img = np.ascontiguousarray(img, dtype=np.uint8)
    return harris_at(img, ys.astype(np.int64), xs.astype(np.int64), _HARRIS_K)


def harris_retain(
    img: np.ndarray, ys: np.ndarray, xs: np.ndarray, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keep the top-n candidates by Harris response, ties by (y, x) ascending.

    Returns (xs, ys, responses) of the retained candidates in rank order.
    """
    if n <= 0 or len(ys) == 0:
        z = np.empty(0, np.int64)
        return z, z.copy(), np.empty(0, np.float64)
    resp = harris_response_at(img, ys, xs)
    order = np.lexsort((xs, ys, -resp))[:n]
    return xs[order], ys[order], resp[order]


# ---------------------------------------------------------------------------
# orientation and description

@functools.lru_cache(maxsize=4)
def _disc_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    span = np.arange(-radius, radius + 1, dtype=np.int64)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    inside = dy * dy + dx * dx <= radius * radius
    return dx[inside], dy[inside]


def assign_orientation(
    img: np.ndarray, ys: np.ndarray, xs: np.ndarray, radius: int = 15
) -> np.ndarray:
    """Intensity-centroid angle atan2(m01, m10) over a circular patch.

    A patch with no intensity asymmetry (both moments zero) gets angle 0.
    """
    if len(ys) == 0:
        return np.empty(0, np.float64)
    if (
        ys.min() < radius or xs.min() < radius
        or ys.max() >= img.shape[0] - radius or xs.max() >= img.shape[1] - radius
    ):
        raise ValueError("keypoints must keep the orientation patch inside the image")
    dx, dy = _disc_offsets(radius)
    img = np.ascontiguousarray(img, dtype=np.uint8)
    return centroid_angles(img, ys.astype(np.int64), xs.astype(np.int64), dx, dy)


def _box5_integral(img: np.ndarray) -> np.ndarray:
    """Zero-topped integral of the 2-px edge-padded image.

    The 5x5 window sum around pixel (y, x) of the original image is then
    ii[y+5, x+5] - ii[y, x+5] - ii[y+5, x] + ii[y, x]. uint32 holds any
    image up to ~16 MP; larger ones fall back to int64.
    """
    h, w = img.shape
    dt = np.uint32 if (h + 4) * (w + 4) <= (2**32 - 1) // 255 else np.int64
    ii = np.zeros((h + 5, w + 5), dtype=dt)
    box_integral(img, ii)
    return ii


def orientation_bin(theta: float | np.ndarray) -> np.ndarray:
    """Quantize an angle to one of the steering bins (12 degrees wide)."""
    step = 2.0 * math.pi / _ORIENTATION_BINS
    return (np.floor(np.asarray(theta) / step + 0.5).astype(np.int64)) % _ORIENTATION_BINS


def describe(
    img: np.ndarray, ys: np.ndarray, xs: np.ndarray, orientations: np.ndarray
) -> np.ndarray:
    """256-bit descriptors: steered pairwise tests on 5x5 box-smoothed values.

    Bit i is set when the smoothed intensity at the pattern's first point is
    less than at the second. The pattern rotates with the keypoint's
    orientation bin, so angles within one bin produce identical sampling.
    """
    if len(ys) == 0:
        return np.empty((0, 32), np.uint8)
    img = np.ascontiguousarray(img, dtype=np.uint8)
    ii = _box5_integral(img)
    bins = orientation_bin(orientations)
    pat = _steered_patterns()
    # Pattern points as flat indices into the integral: point (px, py) of a
    # pair maps to the box whose top-left integral corner is py*stride+px.
    stride = ii.shape[1]
    patoff = np.stack(
        (pat[:, :, 1] * stride + pat[:, :, 0], pat[:, :, 3] * stride + pat[:, :, 2]),
        axis=2,
    )
    return describe_bits(ii, ys.astype(np.int64), xs.astype(np.int64), bins, patoff)


# ---------------------------------------------------------------------------
# full extraction

def _level_quotas(shapes: list[tuple[int, int]], total: int) -> list[int]:
    """Area-proportional budget per level via largest remainder."""
    areas = np.array([h * w for h, w in shapes], dtype=np.float64)
    exact = total * areas / areas.sum()
    base = np.floor(exact).astype(np.int64)
    rem = total - int(base.sum())
    if rem > 0:
        order = np.lexsort((np.arange(len(shapes)), -(exact - base)))
        base[order[:rem]] += 1
    return [int(b) for b in base]


def extract(img: np.ndarray, cfg: OrbConfig = OrbConfig()) -> DescriptorSet:
    """Detect, rank, orient, and describe keypoints over the whole pyramid.

    Output order is normalized (level ascending, then response descending,
    then y, then x) and capped at cfg.max_keypoints by the per-level area
    budget. Images smaller than one pyramid level yield an empty set.
    """
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("extract needs a 2-d uint8 image")
    levels = build_pyramid(img, cfg)
    if not levels:
        return _empty_set()
    quotas = _level_quotas([lv.shape for lv in levels], cfg.max_keypoints)
    margin = cfg.edge_margin

    parts: list[DescriptorSet] = []
    for li, level in enumerate(levels):
        h, w = level.shape
        # Scan one pixel beyond the margin so suppression decisions at the
        # margin boundary match a full-image scan.
        xs, ys, _ = _detect_window(
            level, cfg.fast_threshold,
            margin - 1, h - margin + 1, margin - 1, w - margin + 1,
        )
        inside = (
            (xs >= margin) & (xs <= w - 1 - margin)
            & (ys >= margin) & (ys <= h - 1 - margin)
        )
        xs, ys = xs[inside], ys[inside]
        if len(xs) == 0 or quotas[li] == 0:
            continue
        xs, ys, resp = harris_retain(level, ys, xs, quotas[li])
        thetas = assign_orientation(level, ys, xs, cfg.patch_radius)
        desc = describe(level, ys, xs, thetas)
        s = cfg.scale_factor ** li
        parts.append(
            DescriptorSet(
                xs * s, ys * s,
                np.full(len(xs), li, np.int32),
                resp, thetas, desc,
            )
        )
    if not parts:
        return _empty_set()
    return DescriptorSet(
        np.concatenate([p.xs for p in parts]),
        np.concatenate([p.ys for p in parts]),
        np.concatenate([p.levels for p in parts]),
        np.concatenate([p.responses for p in parts]),
        np.concatenate([p.orientations for p in parts]),
        np.concatenate([p.descriptors for p in parts]),
    )


def dump_descriptors(ds: DescriptorSet) -> str:
    """One keypoint per line: x y level response orientation hex(descriptor)."""
    lines = []
    for i in range(len(ds)):
        lines.append(
            f"{ds.xs[i]:.6f} {ds.ys[i]:.6f} {int(ds.levels[i])} "
            f"{ds.responses[i]:.6f} {ds.orientations[i]:.6f} "
            f"{bytes(ds.descriptors[i]).hex()}"
        )
    return "\n".join(lines) + ("\n" if lines else "")
