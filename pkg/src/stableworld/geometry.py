"""Homography and fundamental-matrix estimation with seeded RANSAC.

Both estimators run Hartley-normalized least squares, so conditioning is
independent of the pixel coordinate scale. Every randomized step draws
from one seeded generator, which makes verification results bit-stable
across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Literal

import numpy as np

ModelKind = Literal["homography", "fundamental"]

_MIN_SAMPLE = {"homography": 4, "fundamental": 8}
_RESAMPLE_BUDGET = 100   # degenerate-sample retries per iteration
_RANK_TOL = 1e-9         # relative singular-value floor for a usable system
_W_SENTINEL = 1e-12      # homogeneous scale below this maps to infinity


class GeometryError(ValueError):
    """Estimation failed: degenerate input or no consensus model."""


@dataclass(frozen=True)
class RansacConfig:
    epsilon: float = 3.0        # inlier radius, pixels; residuals compare to epsilon**2
    confidence: float = 0.99
    max_iterations: int = 2000
    rng_seed: int = 0
    h_residual: str = "transfer"  # "sampson" switches to the first-order residual

    def __post_init__(self) -> None:
        if self.epsilon <= 0 or not 0.0 < self.confidence < 1.0:
            raise ValueError("need epsilon > 0 and confidence in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.h_residual not in ("transfer", "sampson"):
            raise ValueError("h_residual must be 'transfer' or 'sampson'")


@dataclass(frozen=True)
class ModelEstimate:
    kind: ModelKind
    matrix: np.ndarray       # (3, 3), unit Frobenius norm, largest entry positive
    inliers: np.ndarray      # (k,) int64 indices into the correspondence arrays
    inlier_ratio: float


def _as_points(pts: np.ndarray) -> np.ndarray:
    out = np.asarray(pts, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2 or out.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    return out


def _hartley_transform(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity T moving the points to centroid 0, mean radius sqrt(2)."""
    centroid = pts.mean(axis=0)
    spread = np.linalg.norm(pts - centroid, axis=1).mean()
    if spread < 1e-12:
        raise GeometryError("all points coincide; normalization is undefined")
    s = math.sqrt(2.0) / spread
    t = np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])
    return t, (pts - centroid) * s


def _unit_frobenius(m: np.ndarray) -> np.ndarray:
    out = m / np.linalg.norm(m)
    flat = np.abs(out).argmax()
    if out.flat[flat] < 0:
        out = -out
    return out


def _null_vector(a: np.ndarray) -> np.ndarray:
    """Least-squares unit solution of a @ x = 0, or raise if non-unique."""
    # Underdetermined systems need the full decomposition to expose the
    # null direction; taller ones get the economy form, whose V spans all
    # nine columns, so a large refit never materializes a square U.
    _, s, vt = np.linalg.svd(a, full_matrices=a.shape[0] < a.shape[1])
    if s[7] <= _RANK_TOL * s[0]:
        raise GeometryError("degenerate configuration: rank-deficient system")
    return vt[-1]


def dlt_homography(ref_pts: np.ndarray, tgt_pts: np.ndarray) -> np.ndarray:
    """Direct linear transform mapping ref_pts onto tgt_pts.

    Needs at least 4 correspondences with no 3 collinear; the result has
    unit Frobenius norm and its largest-magnitude entry positive.
    """
    a, b = _as_points(ref_pts), _as_points(tgt_pts)
    if len(a) != len(b) or len(a) < 4:
        raise GeometryError("homography needs >= 4 correspondences")
    ta, na = _hartley_transform(a)
    tb, nb = _hartley_transform(b)
    u, v = na[:, 0], na[:, 1]
    up, vp = nb[:, 0], nb[:, 1]
    one = np.ones(len(a))
    zero = np.zeros(len(a))
    rows = np.empty((2 * len(a), 9))
    rows[0::2] = np.stack(
        [zero, zero, zero, -u, -v, -one, vp * u, vp * v, vp], axis=1
    )
    rows[1::2] = np.stack(
        [u, v, one, zero, zero, zero, -up * u, -up * v, -up], axis=1
    )
    hn = _null_vector(rows).reshape(3, 3)
    h = np.linalg.inv(tb) @ hn @ ta
    if abs(np.linalg.det(h)) < 1e-15:
        raise GeometryError("degenerate configuration: singular homography")
    return _unit_frobenius(h)


def eightpoint_fundamental(ref_pts: np.ndarray, tgt_pts: np.ndarray) -> np.ndarray:
    """Normalized 8-point fundamental matrix with rank 2 enforced.

    Satisfies tgt^T F ref = 0; unit Frobenius norm, largest entry positive.
    """
    a, b = _as_points(ref_pts), _as_points(tgt_pts)
    if len(a) != len(b) or len(a) < 8:
        raise GeometryError("fundamental matrix needs >= 8 correspondences")
    ta, na = _hartley_transform(a)
    tb, nb = _hartley_transform(b)
    u, v = na[:, 0], na[:, 1]
    up, vp = nb[:, 0], nb[:, 1]
    rows = np.stack(
        [up * u, up * v, up, vp * u, vp * v, vp, u, v, np.ones(len(a))], axis=1
    )
    fn = _null_vector(rows).reshape(3, 3)
    fu, fs, fvt = np.linalg.svd(fn)
    fn = (fu * np.array([fs[0], fs[1], 0.0])) @ fvt
    return _unit_frobenius(tb.T @ fn @ ta)


# ---------------------------------------------------------------------------
# residuals (squared pixels; +inf sentinel for degenerate denominators)

def _perspective(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply m to inhomogeneous points; rows with tiny w become +inf."""
    h = np.column_stack([pts, np.ones(len(pts))]) @ m.T
    w = h[:, 2]
    out = np.full((len(pts), 2), np.inf)
    ok = np.abs(w) >= _W_SENTINEL
    out[ok] = h[ok, :2] / w[ok, None]
    return out


def reproj_error_h(h: np.ndarray, ref_pts: np.ndarray, tgt_pts: np.ndarray) -> np.ndarray:
    """Symmetric transfer error |x' - Hx|^2 + |x - H^-1 x'|^2 per pair."""
    a, b = _as_points(ref_pts), _as_points(tgt_pts)
    try:
        hinv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        raise GeometryError("homography is not invertible") from None
    fwd = ((_perspective(h, a) - b) ** 2).sum(axis=1)
    bwd = ((_perspective(hinv, b) - a) ** 2).sum(axis=1)
    return fwd + bwd


def sampson_error_f(f: np.ndarray, ref_pts: np.ndarray, tgt_pts: np.ndarray) -> np.ndarray:
    """First-order epipolar residual (x'^T F x)^2 over the gradient norm."""
    a, b = _as_points(ref_pts), _as_points(tgt_pts)
    xa = np.column_stack([a, np.ones(len(a))])
    xb = np.column_stack([b, np.ones(len(b))])
    fx = xa @ f.T          # F x
    ftx = xb @ f           # F^T x'
    top = (xb * fx).sum(axis=1) ** 2
    denom = fx[:, 0] ** 2 + fx[:, 1] ** 2 + ftx[:, 0] ** 2 + ftx[:, 1] ** 2
    out = np.full(len(a), np.inf)
    ok = denom >= _W_SENTINEL
    out[ok] = top[ok] / denom[ok]
    return out


def sampson_error_h(h: np.ndarray, ref_pts: np.ndarray, tgt_pts: np.ndarray) -> np.ndarray:
    """First-order homography residual from the cross-product constraint."""
    a, b = _as_points(ref_pts), _as_points(tgt_pts)
    xa = np.column_stack([a, np.ones(len(a))])
    p, q, r = (xa @ h.T).T
    xp, yp = b[:, 0], b[:, 1]
    e1 = yp * r - q
    e2 = p - xp * r
    # Jacobian rows of (e1, e2) in (x, y, x', y').
    j11, j12 = yp * h[2, 0] - h[1, 0], yp * h[2, 1] - h[1, 1]
    j21, j22 = h[0, 0] - xp * h[2, 0], h[0, 1] - xp * h[2, 1]
    g11 = j11 ** 2 + j12 ** 2 + r ** 2
    g22 = j21 ** 2 + j22 ** 2 + r ** 2
    g12 = j11 * j21 + j12 * j22
    det = g11 * g22 - g12 ** 2
    out = np.full(len(a), np.inf)
    ok = det >= _W_SENTINEL
    num = g22 * e1 ** 2 - 2.0 * g12 * e1 * e2 + g11 * e2 ** 2
    out[ok] = num[ok] / det[ok]
    return out


# ---------------------------------------------------------------------------
# RANSAC

def _residuals(kind: ModelKind, cfg: RansacConfig, m: np.ndarray,
               a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kind == "fundamental":
        return sampson_error_f(m, a, b)
    if cfg.h_residual == "sampson":
        return sampson_error_h(m, a, b)
    return reproj_error_h(m, a, b)


def _max_pair_dist2(pts: np.ndarray) -> float:
    d = pts[:, None, :] - pts[None, :, :]
    return float((d ** 2).sum(axis=2).max())


def _degenerate_sample(sa: np.ndarray, sb: np.ndarray, kind: ModelKind) -> bool:
    for pts in (sa, sb):
        scale2 = _max_pair_dist2(pts)
        if scale2 <= 0.0:
            return True
        d = pts[:, None, :] - pts[None, :, :]
        d2 = (d ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        if d2.min() <= 1e-16 * scale2:
            return True  # coincident pair
        if kind == "homography":
            for i, j, k in combinations(range(len(pts)), 3):
                u, v = pts[j] - pts[i], pts[k] - pts[i]
                # Relative area test keeps the decision scale-invariant.
                if abs(u[0] * v[1] - u[1] * v[0]) <= 1e-9 * scale2:
                    return True  # collinear triple
    return False


def _needed_iterations(confidence: float, inlier_frac: float, sample: int, cap: int) -> int:
    ws = inlier_frac ** sample
    if ws <= 0.0:
        return cap
    if ws >= 1.0:
        return 0
    # log1p keeps the denominator nonzero when ws underflows below epsilon
    estimate = math.log(1.0 - confidence) / math.log1p(-ws)
    return cap if estimate > cap else min(cap, math.ceil(estimate))


def _fit(kind: ModelKind, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kind == "homography":
        return dlt_homography(a, b)
    return eightpoint_fundamental(a, b)


def ransac(
    ref_pts: np.ndarray,
    tgt_pts: np.ndarray,
    kind: ModelKind,
    cfg: RansacConfig = RansacConfig(),
) -> ModelEstimate:
    """Seeded consensus search, then a least-squares refit on the winners.

    A correspondence is an inlier when its squared residual is at most
    epsilon**2. The iteration count adapts downward as the best inlier
    fraction w grows, via ceil(log(1-confidence) / log(1-w^s)), and never
    exceeds max_iterations. The final inlier set is recomputed under the
    refit model.
    """
    a, b = _as_points(ref_pts), _as_points(tgt_pts)
    if len(a) != len(b):
        raise GeometryError("ref and tgt correspondence counts differ")
    g = len(a)
    s = _MIN_SAMPLE[kind]
    if g < s:
        raise GeometryError(f"{kind} needs >= {s} correspondences, got {g}")

    rng = np.random.default_rng(cfg.rng_seed)
    eps2 = cfg.epsilon ** 2
    best_count = 0
    best_model: np.ndarray | None = None
    best_inliers = np.empty(0, np.int64)
    needed = cfg.max_iterations
    it = 0
    while it < needed:
        model = None
        for _ in range(_RESAMPLE_BUDGET):
            idx = rng.choice(g, size=s, replace=False)
            if _degenerate_sample(a[idx], b[idx], kind):
                continue
            try:
                model = _fit(kind, a[idx], b[idx])
            except GeometryError:
                continue
            break
        if model is None:
            break  # budget exhausted; nothing non-degenerate to draw
        try:
            resid = _residuals(kind, cfg, model, a, b)
        except GeometryError:
            it += 1
            continue
        inl = np.flatnonzero(resid <= eps2)
        if len(inl) > best_count:
            best_count = len(inl)
            best_model = model
            best_inliers = inl
            needed = _needed_iterations(cfg.confidence, best_count / g, s, cfg.max_iterations)
        it += 1

    if best_model is None or best_count < s:
        raise GeometryError(f"no {kind} model reached a minimal consensus")

    try:
        refit = _fit(kind, a[best_inliers], b[best_inliers])
        inliers = np.flatnonzero(_residuals(kind, cfg, refit, a, b) <= eps2)
        if len(inliers) >= s:
            return ModelEstimate(kind, refit, inliers, len(inliers) / g)
    except GeometryError:
        pass  # the consensus set can be degenerate even when samples were not
    return ModelEstimate(kind, best_model, best_inliers, best_count / g)


def format_matrix(m: np.ndarray) -> str:
    """Nine whitespace-separated reals, row-major."""
    return " ".join(f"{v:.17g}" for v in np.asarray(m, dtype=np.float64).ravel())
