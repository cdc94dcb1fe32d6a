"""Temporal drift diagnostics over rendered or loaded frame sequences.

Two views of the same degradation: mean squared error between frames a
fixed lag apart (how fast content walks away from its past), and banded
amplitude-spectrum differences against an anchor frame (where in the
frequency range the change concentrates, e.g. blur eating high bands).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .frame_io import FrameSequence


class DriftError(ValueError):
    """Raised for lags or anchors a sequence cannot support."""


@dataclass(frozen=True)
class DriftReport:
    """Per-lag MSE series with their scalar summaries.

    ``series[i][j]`` is the MSE between frame ``lags[i] + j`` and the
    frame ``lags[i]`` earlier, on intensities scaled to [0, 1]; each
    series has length ``frames - lag``.
    """

    lags: tuple[int, ...]
    series: tuple[np.ndarray, ...]
    means: tuple[float, ...]
    maxes: tuple[float, ...]

    def to_csv(self) -> str:
        lines = ["t,lag,mse"]
        for lag, values in zip(self.lags, self.series):
            lines.extend(
                f"{lag + j},{lag},{v:.17g}" for j, v in enumerate(values)
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SpectrumReport:
    """Banded amplitude differences of every frame against one anchor.

    ``matrix[t, i]`` is |band_i(frame t) - band_i(anchor)| where band_i
    is the mean FFT amplitude over the ring of normalized radial
    frequency [edges[i], edges[i+1]); the anchor row is identically zero.
    """

    anchor_index: int
    band_edges: np.ndarray
    matrix: np.ndarray

    @property
    def bands(self) -> int:
        return len(self.band_edges) - 1

    def to_csv(self) -> str:
        lines = ["frame,band_lo,band_hi,amp_diff"]
        for t in range(self.matrix.shape[0]):
            lines.extend(
                f"{t},{self.band_edges[i]:.17g},{self.band_edges[i + 1]:.17g},"
                f"{self.matrix[t, i]:.17g}"
                for i in range(self.matrix.shape[1])
            )
        return "\n".join(lines) + "\n"


def mse_drift(seq: FrameSequence, lags: Sequence[int]) -> DriftReport:
    """Mean squared frame difference at each requested lag.

    Intensities are scaled to [0, 1], so two frames differing by the full
    8-bit range everywhere sit at MSE 1.0.
    """
    if not lags:
        raise DriftError("need at least one lag")
    n = len(seq)
    for lag in lags:
        if lag < 1:
            raise DriftError(f"lags must be positive, got {lag}")
        if lag >= n:
            raise DriftError(f"lag {lag} needs more than {n} frames")
    stack = np.stack([img.astype(np.float64) / 255.0 for img in seq.images])
    series = []
    for lag in lags:
        diff = stack[lag:] - stack[:-lag]
        series.append(np.mean(diff * diff, axis=(1, 2)))
    return DriftReport(
        lags=tuple(int(lag) for lag in lags),
        series=tuple(series),
        means=tuple(float(s.mean()) for s in series),
        maxes=tuple(float(s.max()) for s in series),
    )


def band_amplitudes(img: np.ndarray, bands: int) -> np.ndarray:
    """Mean FFT amplitude per equal-width radial frequency ring.

    The frame is mean-subtracted before the transform so the DC term
    cannot dominate band 0. Rings partition normalized radial frequency
    rho in [0, 0.5]; the spectrum corners beyond 0.5 are excluded, and a
    ring the frame is too small to populate reports 0. Amplitudes are
    per-pixel (|FFT| / pixel count) on intensities in [0, 1].
    """
    if bands < 1:
        raise DriftError("bands must be >= 1")
    h, w = img.shape
    x = img.astype(np.float64) / 255.0
    x = x - x.mean()
    amp = np.abs(np.fft.fft2(x)) / (h * w)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    rho = np.sqrt(fy * fy + fx * fx)
    keep = rho <= 0.5
    idx = np.minimum((rho[keep] * (2 * bands)).astype(np.int64), bands - 1)
    sums = np.bincount(idx, weights=amp[keep], minlength=bands)
    counts = np.bincount(idx, minlength=bands)
    return np.divide(sums, counts, out=np.zeros(bands), where=counts > 0)


def spectrum_drift(
    seq: FrameSequence, anchor: int = 0, bands: int = 16
) -> SpectrumReport:
    """Banded spectrum difference of every frame against the anchor."""
    n = len(seq)
    if not 0 <= anchor < n:
        raise DriftError(f"anchor {anchor} out of range for {n} frames")
    rows = np.stack([band_amplitudes(img, bands) for img in seq.images])
    matrix = np.abs(rows - rows[anchor])
    edges = np.linspace(0.0, 0.5, bands + 1)
    return SpectrumReport(anchor_index=anchor, band_edges=edges, matrix=matrix)
