"""Frame-pair similarity scores: geometric inlier ratios, SSIM, cosine.

The geometric score is directional (the reference frame supplies the query
descriptors), and repeated comparisons against one reference are the hot
path, so extraction results are cached per frame content hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from stableworld.features import DescriptorSet, OrbConfig, extract
from stableworld.geometry import GeometryError, RansacConfig, ransac
from stableworld.matching import MatcherConfig, match, matched_points

_MIN_MATCHES = 5      # below this the pair scores 0 outright
_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2


class SimilarityError(ValueError):
    """Unusable input pair: mismatched dimensions or degenerate content."""


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    r_h: float
    r_f: float
    g: int
    status: str  # "OK" | "TooFewMatches" | "ModelFailure"

    def to_json_obj(self) -> dict:
        return {
            "value": self.value,
            "r_h": self.r_h,
            "r_f": self.r_f,
            "g": self.g,
            "status": self.status,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


@dataclass(frozen=True)
class MetricConfig:
    metric: str = "orb"  # "orb" | "ssim" | "cosine"
    orb: OrbConfig = field(default_factory=OrbConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    ssim_window: int = 11
    ssim_sigma: float = 1.5

    def __post_init__(self) -> None:
        if self.metric not in ("orb", "ssim", "cosine"):
            raise ValueError("metric must be one of orb, ssim, cosine")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")
        if self.ssim_sigma <= 0:
            raise ValueError("ssim_sigma must be positive")

    def to_json_obj(self) -> dict:
        return {
            "metric": self.metric,
            "orb": dataclasses.asdict(self.orb),
            "matcher": dataclasses.asdict(self.matcher),
            "ransac": dataclasses.asdict(self.ransac),
            "ssim_window": self.ssim_window,
            "ssim_sigma": self.ssim_sigma,
        }


class DescriptorCache:
    """Content-addressed extraction cache, LRU-bounded.

    All operations hold one lock, so concurrent readers are safe and
    inserts have a single writer. Dropping an entry only ever forces a
    recomputation, never a different result.
    """

    def __init__(self, capacity: int = 64) -> None:
        if capacity < 1:
            raise ValueError("cache capacity must be positive")
        self._capacity = capacity
        self._lock = threading.Lock()
        self._entries: OrderedDict[tuple[str, OrbConfig], DescriptorSet] = OrderedDict()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _key(img: np.ndarray, cfg: OrbConfig) -> tuple[str, OrbConfig]:
        digest = hashlib.blake2b(
            np.ascontiguousarray(img).tobytes(), digest_size=16,
            person=b"sw-frame",
        )
        digest.update(str(img.shape).encode())
        return digest.hexdigest(), cfg

    def extract(self, img: np.ndarray, cfg: OrbConfig) -> DescriptorSet:
        key = self._key(img, cfg)
        with self._lock:
            cached = self._entries.get(key)
            if cached is not None:
                self._entries.move_to_end(key)
                self.hits += 1
                return cached
        ds = extract(img, cfg)
        with self._lock:
            self.misses += 1
            self._entries[key] = ds
            self._entries.move_to_end(key)
            while len(self._entries) > self._capacity:
                self._entries.popitem(last=False)
        return ds

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()


_shared_cache = DescriptorCache()


def _check_pair(ref: np.ndarray, tgt: np.ndarray) -> None:
    for img in (ref, tgt):
        if img.ndim != 2 or img.dtype != np.uint8:
            raise SimilarityError("frames must be 2-d uint8 arrays")
    if ref.shape != tgt.shape:
        raise SimilarityError(f"frame dimensions differ: {ref.shape} vs {tgt.shape}")


def _ratio(kind: str, a: np.ndarray, b: np.ndarray, g: int, cfg: RansacConfig) -> float | None:
    """Inlier ratio for one model family, or None when no model exists."""
    try:
        return len(ransac(a, b, kind, cfg).inliers) / g
    except GeometryError:
        return None


def orb_similarity(
    ref: np.ndarray,
    tgt: np.ndarray,
    cfg: MetricConfig = MetricConfig(),
    cache: DescriptorCache | None = None,
) -> SimilarityScore:
    """Viewpoint-overlap score max(r_H, r_F) from verified correspondences.

    Fewer than five ratio-test matches score 0 with status TooFewMatches.
    Each model family needs its own minimal sample (4 for the homography,
    8 for the fundamental matrix); a family without one contributes ratio
    0, and if neither family yields a model the status is ModelFailure.
    """
    _check_pair(ref, tgt)
    cache = cache if cache is not None else _shared_cache
    ref_ds = cache.extract(ref, cfg.orb)
    tgt_ds = cache.extract(tgt, cfg.orb)
    corr = match(ref_ds, tgt_ds, cfg.matcher)
    g = corr.g
    if g < _MIN_MATCHES:
        return SimilarityScore(0.0, 0.0, 0.0, g, "TooFewMatches")
    a, b = matched_points(ref_ds, tgt_ds, corr)
    r_h = _ratio("homography", a, b, g, cfg.ransac)
    r_f = _ratio("fundamental", a, b, g, cfg.ransac) if g >= 8 else None
    if r_h is None and r_f is None:
        return SimilarityScore(0.0, 0.0, 0.0, g, "ModelFailure")
    rh = r_h if r_h is not None else 0.0
    rf = r_f if r_f is not None else 0.0
    return SimilarityScore(max(rh, rf), rh, rf, g, "OK")


# ---------------------------------------------------------------------------
# ablation metrics

def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(ref: np.ndarray, tgt: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """Mean local structural similarity over a Gaussian window.

    Identical inputs produce exactly 1.0: every local statistic is the
    same floating-point expression on both sides, so each window's
    numerator and denominator are bit-equal.
    """
    _check_pair(ref, tgt)
    if min(ref.shape) < cfg.ssim_window:
        raise SimilarityError("frames smaller than the SSIM window")
    kernel = _gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma)
    x = ref.astype(np.float64)
    y = tgt.astype(np.float64)

    def blur(a: np.ndarray) -> np.ndarray:
        return ndimage.correlate(a, kernel, mode="reflect")

    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cov = blur(x * y) - mx * my
    num = (2.0 * mx * my + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return float(np.mean(num / den))


def cosine(ref: np.ndarray, tgt: np.ndarray) -> float:
    """Cosine of the angle between mean-centered intensity vectors."""
    _check_pair(ref, tgt)
    a = ref.astype(np.float64).ravel()
    b = tgt.astype(np.float64).ravel()
    a -= a.mean()
    b -= b.mean()
    daa = float(a @ a)
    dbb = float(b @ b)
    if daa == 0.0 or dbb == 0.0:
        raise SimilarityError("cosine similarity is undefined for a constant frame")
    return float(a @ b) / math.sqrt(daa * dbb)


def score_frames(
    ref: np.ndarray,
    tgt: np.ndarray,
    cfg: MetricConfig = MetricConfig(),
    cache: DescriptorCache | None = None,
) -> SimilarityScore:
    """Dispatch on the configured metric, wrapped as a SimilarityScore.

    The scalar metrics carry no match diagnostics; their raw value lands
    in ``value`` (which may be negative for them) with zeroed ratios.
    """
    if cfg.metric == "orb":
        return orb_similarity(ref, tgt, cfg, cache)
    if cfg.metric == "ssim":
        return SimilarityScore(ssim(ref, tgt, cfg), 0.0, 0.0, 0, "OK")
    return SimilarityScore(cosine(ref, tgt), 0.0, 0.0, 0, "OK")
