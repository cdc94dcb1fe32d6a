"""JIT-compiled hot loops for detection, description, and matching.

Pure integer arithmetic wherever a result feeds a comparison, so kernel
outputs are identical to the straightforward formulations the tests pin
them against. Flat indexing keeps the per-pixel scans cache-friendly.
"""

from __future__ import annotations

import os

import numpy as np

# Pinned before numba's first import probes a backend: the workqueue layer
# is always available, while a stale TBB install emits a warning and falls
# back anyway. setdefault keeps any explicit user choice in charge.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from llvmlite import ir
from numba import njit, prange, types
from numba.extending import intrinsic

# Bresenham circle of radius 3: 16 perimeter offsets, clockwise from 12 o'clock.
_CIRCLE_DX = np.array([0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1], dtype=np.int64)
_CIRCLE_DY = np.array([-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3], dtype=np.int64)


@njit(cache=True)
def fast_detect(
    img: np.ndarray,
    threshold: int,
    dx: np.ndarray,
    dy: np.ndarray,
    y0: int,
    y1: int,
    x0: int,
    x1: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Segment-test corners with 3x3 non-max suppression, fused in one pass.

    A pixel is a corner when >= 9 contiguous ring pixels are all brighter
    than center + threshold or all darker than center - threshold; its
    score is the SAD of the longest such arc against the center. Only the
    window rows [y0, y1) x [x0, x1) are scanned, and the caller must keep
    the ring inside the image for every window pixel. The scan rejects
    through nested necessary conditions (compass pixels first) so the
    full ring is read only at plausible corners while its rows are still
    cached. Suppression treats pixels outside the window as score 0, and
    equal scores keep the first pixel in scan order. Returns
    (ys, xs, scores) of the surviving corners, row-major.
    """
    h, w = img.shape
    flat = img.ravel()
    off = np.empty(16, np.int64)
    for k in range(16):
        off[k] = dy[k] * w + dx[k]
    o0, o4, o8, o12 = off[0], off[4], off[8], off[12]
    cap = (y1 - y0) * (x1 - x0)
    cy = np.empty(cap, dtype=np.int32)
    cx = np.empty(cap, dtype=np.int32)
    cs = np.empty(cap, dtype=np.int64)
    ncand = 0
    ring = np.empty(16, dtype=np.int64)
    state = np.empty(16, dtype=np.int64)
    for y in range(y0, y1):
        row = y * w
        for x in range(x0, x1):
            p = row + x
            c = np.int64(flat[p])
            hi = c + threshold
            lo = c - threshold
            # Any 9-long arc covers two adjacent compass pixels, so it
            # always includes the top or bottom one: cheapest test first.
            va = np.int64(flat[p + o0])
            vc = np.int64(flat[p + o8])
            if not (va > hi or vc > hi or va < lo or vc < lo):
                continue
            vb = np.int64(flat[p + o4])
            vd = np.int64(flat[p + o12])
            nb = (va > hi) + (vb > hi) + (vc > hi) + (vd > hi)
            if nb < 2:
                nd = (va < lo) + (vb < lo) + (vc < lo) + (vd < lo)
                if nd < 2:
                    continue
            nb = 0
            nd = 0
            for k in range(16):
                v = np.int64(flat[p + off[k]])
                if v > hi:
                    nb += 1
                elif v < lo:
                    nd += 1
            if nb < 9 and nd < 9:
                continue
            for k in range(16):
                v = np.int64(flat[p + off[k]])
                ring[k] = v
                if v > hi:
                    state[k] = 1
                elif v < lo:
                    state[k] = -1
                else:
                    state[k] = 0
            # Longest circular run per polarity via a doubled scan. Only
            # one polarity can reach 9 (two disjoint 9-runs need 18).
            for pol in (1, -1):
                if (pol == 1 and nb < 9) or (pol == -1 and nd < 9):
                    continue
                best_len = 0
                best_start = 0
                cur_len = 0
                cur_start = 0
                for j in range(32):
                    if state[j & 15] == pol:
                        if cur_len == 0:
                            cur_start = j
                        cur_len += 1
                        if cur_len > best_len:
                            best_len = cur_len
                            best_start = cur_start
                    else:
                        cur_len = 0
                if best_len >= 9:
                    if best_len > 16:
                        best_len = 16
                    s = np.int64(0)
                    for j in range(best_start, best_start + best_len):
                        d = ring[j & 15] - c
                        s += d if d >= 0 else -d
                    cy[ncand] = np.int32(y)
                    cx[ncand] = np.int32(x)
                    cs[ncand] = s
                    ncand += 1
                    break
    # Suppression over collected corners only: every other pixel scores 0,
    # which never beats a corner's SAD. Corners stay row-major, so a CSR
    # row index plus a binary search finds the 3x3 neighbours without a
    # dense score grid.
    rs = np.zeros(h + 1, dtype=np.int64)
    for i in range(ncand):
        rs[cy[i] + 1] += 1
    for r in range(1, h + 1):
        rs[r] += rs[r - 1]
    oy = np.empty(ncand, dtype=np.int64)
    ox = np.empty(ncand, dtype=np.int64)
    osc = np.empty(ncand, dtype=np.int64)
    nout = 0
    for i in range(ncand):
        y = np.int64(cy[i])
        x = np.int64(cx[i])
        s = cs[i]
        keep = True
        for ny in range(y - 1, y + 2):
            lo = rs[ny]
            hi2 = rs[ny + 1]
            while lo < hi2:
                mid = (lo + hi2) // 2
                if cx[mid] < x - 1:
                    lo = mid + 1
                else:
                    hi2 = mid
            j = lo
            while j < rs[ny + 1] and cx[j] <= x + 1:
                if j != i:
                    n = cs[j]
                    if n > s or (n == s and (ny < y or (ny == y and cx[j] < x))):
                        keep = False
                        break
                j += 1
            if not keep:
                break
        if keep:
            oy[nout] = y
            ox[nout] = x
            osc[nout] = s
            nout += 1
    return oy[:nout].copy(), ox[:nout].copy(), osc[:nout].copy()


@njit(cache=True)
def harris_at(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, k: float) -> np.ndarray:
    """Harris response per candidate: Sobel structure tensor over a 7x7 block.

    Gradients replicate edge pixels, so candidates may sit as close as the
    block itself allows (3 px) to the border. Integer accumulation keeps the
    response exact up to the final float rounding.
    """
    h, w = img.shape
    n = ys.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        cy = ys[i]
        cx = xs[i]
        sxx = np.int64(0)
        syy = np.int64(0)
        sxy = np.int64(0)
        for by in range(cy - 3, cy + 4):
            ym = by - 1
            if ym < 0:
                ym = 0
            yp = by + 1
            if yp > h - 1:
                yp = h - 1
            for bx in range(cx - 3, cx + 4):
                xm = bx - 1
                if xm < 0:
                    xm = 0
                xp = bx + 1
                if xp > w - 1:
                    xp = w - 1
                a = np.int64(img[ym, xm])
                b = np.int64(img[ym, bx])
                e = np.int64(img[ym, xp])
                d = np.int64(img[by, xm])
                f = np.int64(img[by, xp])
                g = np.int64(img[yp, xm])
                hh = np.int64(img[yp, bx])
                ii = np.int64(img[yp, xp])
                gx = (e + 2 * f + ii) - (a + 2 * d + g)
                gy = (g + 2 * hh + ii) - (a + 2 * b + e)
                sxx += gx * gx
                syy += gy * gy
                sxy += gx * gy
        det = sxx * syy - sxy * sxy
        tr = np.float64(sxx + syy)
        out[i] = np.float64(det) - k * (tr * tr)
    return out


@njit(cache=True)
def centroid_angles(
    img: np.ndarray, ys: np.ndarray, xs: np.ndarray, ddx: np.ndarray, ddy: np.ndarray
) -> np.ndarray:
    """Intensity-centroid angle atan2(m01, m10) over the given disc offsets."""
    n = ys.shape[0]
    m = ddx.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        cy = ys[i]
        cx = xs[i]
        m10 = np.int64(0)
        m01 = np.int64(0)
        for j in range(m):
            v = np.int64(img[cy + ddy[j], cx + ddx[j]])
            m10 += ddx[j] * v
            m01 += ddy[j] * v
        out[i] = np.arctan2(np.float64(m01), np.float64(m10))
    return out


@njit(cache=True)
def box_integral(img: np.ndarray, ii: np.ndarray) -> None:
    """Fill ``ii`` with the zero-topped integral of ``img`` edge-padded by 2.

    ii[a, b] = sum of the padded image over rows < a, cols < b, so a 5x5
    box sum around original pixel (y, x) is the four-corner read at
    (y, x) .. (y+5, x+5). ``ii`` must be (h+5, w+5) and zeroed on entry.
    """
    h, w = img.shape
    for u in range(h + 4):
        sy = u - 2
        if sy < 0:
            sy = 0
        if sy > h - 1:
            sy = h - 1
        run = np.int64(0)
        for v in range(w + 4):
            sx = v - 2
            if sx < 0:
                sx = 0
            if sx > w - 1:
                sx = w - 1
            run += np.int64(img[sy, sx])
            ii[u + 1, v + 1] = ii[u, v + 1] + run


@njit(cache=True)
def describe_bits(
    ii: np.ndarray,
    ys: np.ndarray,
    xs: np.ndarray,
    bins: np.ndarray,
    patoff: np.ndarray,
) -> np.ndarray:
    """Pack 256 smoothed-intensity pair tests per keypoint into 32 bytes.

    ``ii`` is the zero-topped integral of the 2-px edge-padded image, so
    the 5x5 box sum whose top-left corner sits at flat index a is the
    four-corner read over a, a+5, a+5*stride and their sum corner.
    ``patoff`` holds the two points of every steered pair as flattened
    offsets into ``ii``. Bit j of a descriptor is MSB-first within byte
    j // 8.
    """
    stride = ii.shape[1]
    iif = ii.ravel()
    s5 = 5 * stride
    n = ys.shape[0]
    out = np.zeros((n, 32), dtype=np.uint8)
    for i in range(n):
        pb = ys[i] * stride + xs[i]
        b = bins[i]
        for j in range(256):
            a1 = pb + patoff[b, j, 0]
            va = (
                np.int64(iif[a1 + s5 + 5]) - np.int64(iif[a1 + 5])
                - np.int64(iif[a1 + s5]) + np.int64(iif[a1])
            )
            a2 = pb + patoff[b, j, 1]
            vb = (
                np.int64(iif[a2 + s5 + 5]) - np.int64(iif[a2 + 5])
                - np.int64(iif[a2 + s5]) + np.int64(iif[a2])
            )
            if va < vb:
                out[i, j >> 3] |= np.uint8(1 << (7 - (j & 7)))
    return out


@njit(cache=True)
def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center mapping, rounded to uint8."""
    h, w = img.shape
    sy = h / out_h
    sx = w / out_w
    x0 = np.empty(out_w, dtype=np.int64)
    x1 = np.empty(out_w, dtype=np.int64)
    fx = np.empty(out_w, dtype=np.float64)
    gx = np.empty(out_w, dtype=np.float64)
    for j in range(out_w):
        xc = (j + 0.5) * sx - 0.5
        c0 = np.floor(xc)
        if c0 < 0.0:
            c0 = 0.0
        if c0 > w - 1:
            c0 = np.float64(w - 1)
        f = xc - c0
        if f < 0.0:
            f = 0.0
        if f > 1.0:
            f = 1.0
        i0 = np.int64(c0)
        x0[j] = i0
        x1[j] = min(i0 + 1, w - 1)
        fx[j] = f
        gx[j] = 1.0 - f
    out = np.empty((out_h, out_w), dtype=np.uint8)
    for i in range(out_h):
        yc = (i + 0.5) * sy - 0.5
        c0 = np.floor(yc)
        if c0 < 0.0:
            c0 = 0.0
        if c0 > h - 1:
            c0 = np.float64(h - 1)
        fy = yc - c0
        if fy < 0.0:
            fy = 0.0
        if fy > 1.0:
            fy = 1.0
        r0 = np.int64(c0)
        r1 = min(r0 + 1, h - 1)
        gy = 1.0 - fy
        for j in range(out_w):
            v00 = np.float64(img[r0, x0[j]])
            v10 = np.float64(img[r1, x0[j]])
            v01 = np.float64(img[r0, x1[j]])
            v11 = np.float64(img[r1, x1[j]])
            ra = v00 * gy + v10 * fy
            rb = v01 * gy + v11 * fy
            out[i, j] = np.uint8(np.rint(ra * gx[j] + rb * fx[j]))
    return out


@intrinsic
def _ctpop64(typingctx, v):
    """Hardware population count; numba exposes no public wrapper for it."""
    if v != types.uint64:
        return None
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        fn = builder.module.declare_intrinsic("llvm.ctpop", [ir.IntType(64)])
        return builder.call(fn, args)

    return sig, codegen


@njit(cache=True, parallel=True)
def hamming_knn2(ref: np.ndarray, tgt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two nearest Hamming neighbors in ``tgt`` for every row of ``ref``.

    Rows are 256-bit descriptors as 4 uint64 words. Equal distances keep
    the lower target index, so the result is order-deterministic.
    Returns (best_index, best_distance, second_distance).
    """
    n = ref.shape[0]
    m = tgt.shape[0]
    j1 = np.empty(n, dtype=np.int64)
    d1 = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.int64)
    for i in prange(n):
        b1 = np.int64(1 << 60)
        b2 = np.int64(1 << 60)
        bj = np.int64(-1)
        r0, r1, r2, r3 = ref[i, 0], ref[i, 1], ref[i, 2], ref[i, 3]
        for j in range(m):
            d = np.int64(
                _ctpop64(r0 ^ tgt[j, 0]) + _ctpop64(r1 ^ tgt[j, 1])
                + _ctpop64(r2 ^ tgt[j, 2]) + _ctpop64(r3 ^ tgt[j, 3])
            )
            if d < b1:
                b2 = b1
                b1 = d
                bj = j
            elif d < b2:
                b2 = d
        j1[i] = bj
        d1[i] = b1
        d2[i] = b2
    return j1, d1, d2


def circle_offsets() -> tuple[np.ndarray, np.ndarray]:
    """The 16 ring offsets (dx, dy) used by the segment test."""
    return _CIRCLE_DX.copy(), _CIRCLE_DY.copy()
