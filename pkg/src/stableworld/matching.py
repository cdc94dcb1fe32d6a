"""Brute-force Hamming matching of binary descriptors with a ratio test.

Descriptor counts stay in the low thousands, so exhaustive search is both
fast enough and exactly reproducible; there is deliberately no approximate
index here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stableworld._kernels import hamming_knn2
from stableworld.features import DescriptorSet


@dataclass(frozen=True)
class MatcherConfig:
    ratio_tau: float = 0.8
    cross_check: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio_tau <= 1.0:
            raise ValueError("ratio_tau must be in (0, 1]")


@dataclass(frozen=True)
class CorrespondenceSet:
    """Surviving matches as parallel arrays, ordered by reference index."""

    ref_indices: np.ndarray  # (g,) int64, each at most once
    tgt_indices: np.ndarray  # (g,) int64
    distances: np.ndarray    # (g,) int64, Hamming bits in [0, 256]

    def __post_init__(self) -> None:
        if not len(self.ref_indices) == len(self.tgt_indices) == len(self.distances):
            raise ValueError("correspondence arrays must be parallel")

    @property
    def g(self) -> int:
        return len(self.ref_indices)

    def pairs(self) -> list[tuple[int, int, int]]:
        """(ref_index, tgt_index, hamming) triples."""
        return list(
            zip(self.ref_indices.tolist(), self.tgt_indices.tolist(), self.distances.tolist())
        )


def _empty_matches() -> CorrespondenceSet:
    z = np.empty(0, np.int64)
    return CorrespondenceSet(z, z.copy(), z.copy())


def _words(descriptors: np.ndarray) -> np.ndarray:
    """View (n, 32) uint8 descriptor rows as (n, 4) uint64 words."""
    return np.ascontiguousarray(descriptors).view(np.uint64)


def match(
    ref: DescriptorSet, tgt: DescriptorSet, cfg: MatcherConfig = MatcherConfig()
) -> CorrespondenceSet:
    """Nearest-neighbor matches from ref into tgt that pass the ratio test.

    Each reference descriptor keeps its nearest target iff d1 < ratio_tau * d2
    against the second-nearest (strict, so a tie at the boundary is rejected).
    A target set of size one has no second neighbor and every nearest match
    is kept. Equal distances resolve to the lower target index.
    """
    if len(ref) == 0 or len(tgt) == 0:
        return _empty_matches()
    j1, d1, d2 = hamming_knn2(_words(ref.descriptors), _words(tgt.descriptors))
    if len(tgt) == 1:
        keep = np.ones(len(ref), dtype=bool)
    else:
        keep = d1.astype(np.float64) < cfg.ratio_tau * d2.astype(np.float64)
    if cfg.cross_check:
        back, _, _ = hamming_knn2(_words(tgt.descriptors), _words(ref.descriptors))
        keep &= back[j1] == np.arange(len(ref), dtype=np.int64)
    ref_idx = np.flatnonzero(keep).astype(np.int64)
    return CorrespondenceSet(ref_idx, j1[keep], d1[keep])


def matched_points(
    ref: DescriptorSet, tgt: DescriptorSet, corr: CorrespondenceSet
) -> tuple[np.ndarray, np.ndarray]:
    """Matched keypoint coordinates as two (g, 2) float64 arrays of (x, y)."""
    a = np.stack([ref.xs[corr.ref_indices], ref.ys[corr.ref_indices]], axis=1)
    b = np.stack([tgt.xs[corr.tgt_indices], tgt.ys[corr.tgt_indices]], axis=1)
    return a, b
