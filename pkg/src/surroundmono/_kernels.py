"""Fused photometric kernels with a hand-written backward pass.

These compute exactly the same per-pair masked photometric means as the
jax graph in :mod:`surroundmono.losses` (bilinear sampling, masked 3x3
SSIM, L1), and return the gradient of a weighted sum of those means with
respect to the sampling coordinates ``u, v``. The chain into depth and
pose is left to the caller. The jax graph stays the reference; tests
compare the two.
"""

from __future__ import annotations

import numba
import numpy as np

from surroundmono.losses import SSIM_C1, SSIM_C2


@numba.njit(cache=True)
def _box3(src, dst):
    """3x3 zero-padded window sum over the first two axes of ``(H, W, K)``."""
    H, W, K = src.shape
    row = np.zeros((H, W, K))
    for y in range(H):
        for x in range(W):
            for k in range(K):
                s = src[y, x, k]
                if x > 0:
                    s += src[y, x - 1, k]
                if x < W - 1:
                    s += src[y, x + 1, k]
                row[y, x, k] = s
    for y in range(H):
        for x in range(W):
            for k in range(K):
                s = row[y, x, k]
                if y > 0:
                    s += row[y - 1, x, k]
                if y < H - 1:
                    s += row[y + 1, x, k]
                dst[y, x, k] = s


@numba.njit(cache=True)
def photometric_fwd_bwd(tgt, src, u, v, mask, alpha, pair_w, want_grad):
    """Per-pair masked photometric means and ``d(sum_p w_p mean_p)/d(u, v)``.

    Args:
        tgt, src: ``(P, H, W, C)`` target images and source images.
        u, v: ``(P, H, W)`` source coordinates of every target pixel.
        mask: ``(P, H, W)`` bool, pixels that count (already includes validity).
        alpha: SSIM weight.
        pair_w: ``(P,)`` weight of each pair mean in the scalar being differentiated.

    Returns:
        ``means (P,)``, ``counts (P,)``, ``du (P, H, W)``, ``dv (P, H, W)``.
    """
    P, H, W, C = tgt.shape
    Hs, Ws = src.shape[1], src.shape[2]
    means = np.zeros(P)
    counts = np.zeros(P)
    du = np.zeros((P, H, W))
    dv = np.zeros((P, H, W))
    b = np.zeros((H, W, C))
    dbu = np.zeros((H, W, C))
    dbv = np.zeros((H, W, C))
    stats = np.zeros((H, W, 5 * C + 1))
    sums = np.zeros((H, W, 5 * C + 1))
    gst = np.zeros((H, W, 3 * C))
    gsum = np.zeros((H, W, 3 * C))
    for p in range(P):
        n_p = 0
        for y in range(H):
            for x in range(W):
                if mask[p, y, x]:
                    n_p += 1
        counts[p] = n_p
        if n_p == 0:
            continue
        # bilinear sample and its coordinate derivatives
        for y in range(H):
            for x in range(W):
                if not mask[p, y, x]:
                    for c in range(C):
                        b[y, x, c] = 0.0
                        dbu[y, x, c] = 0.0
                        dbv[y, x, c] = 0.0
                    continue
                uu = u[p, y, x]
                vv = v[p, y, x]
                x0 = min(max(np.ceil(uu) - 1.0, 0.0), Ws - 2.0)
                y0 = min(max(np.ceil(vv) - 1.0, 0.0), Hs - 2.0)
                ax = uu - x0
                ay = vv - y0
                xi = int(x0)
                yi = int(y0)
                for c in range(C):
                    i00 = src[p, yi, xi, c]
                    i01 = src[p, yi, xi + 1, c]
                    i10 = src[p, yi + 1, xi, c]
                    i11 = src[p, yi + 1, xi + 1, c]
                    b[y, x, c] = (1 - ax) * (1 - ay) * i00 + ax * (1 - ay) * i01 + (1 - ax) * ay * i10 + ax * ay * i11
                    dbu[y, x, c] = (1 - ay) * (i01 - i00) + ay * (i11 - i10)
                    dbv[y, x, c] = (1 - ax) * (i10 - i00) + ax * (i11 - i01)
        # masked window statistics
        for y in range(H):
            for x in range(W):
                m = 1.0 if mask[p, y, x] else 0.0
                for c in range(C):
                    a_ = tgt[p, y, x, c]
                    b_ = b[y, x, c]
                    stats[y, x, c] = m * a_
                    stats[y, x, C + c] = m * b_
                    stats[y, x, 2 * C + c] = m * a_ * a_
                    stats[y, x, 3 * C + c] = m * b_ * b_
                    stats[y, x, 4 * C + c] = m * a_ * b_
                stats[y, x, 5 * C] = m
        _box3(stats, sums)
        inv_n = 1.0 / n_p
        total = 0.0
        w = pair_w[p]
        for y in range(H):
            for x in range(W):
                for k in range(3 * C):
                    gst[y, x, k] = 0.0
                if not mask[p, y, x]:
                    continue
                nw = sums[y, x, 5 * C]
                inv = 1.0 / nw
                acc = 0.0
                for c in range(C):
                    a_ = tgt[p, y, x, c]
                    b_ = b[y, x, c]
                    mu_a = sums[y, x, c] * inv
                    mu_b = sums[y, x, C + c] * inv
                    var_a = sums[y, x, 2 * C + c] * inv - mu_a * mu_a
                    var_b = sums[y, x, 3 * C + c] * inv - mu_b * mu_b
                    cov = sums[y, x, 4 * C + c] * inv - mu_a * mu_b
                    n1 = 2 * mu_a * mu_b + SSIM_C1
                    n2 = 2 * cov + SSIM_C2
                    d1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1
                    d2 = var_a + var_b + SSIM_C2
                    s = n1 * n2 / (d1 * d2)
                    diff = a_ - b_
                    acc += alpha * (1.0 - s) / 2.0 + (1.0 - alpha) * abs(diff)
                    if want_grad:
                        g = w * inv_n / C
                        gs = -alpha / 2.0 * g
                        ds_dmu_b = 2 * mu_a * n2 / (d1 * d2) - s * 2 * mu_b / d1
                        ds_dcov = 2 * n1 / (d1 * d2)
                        ds_dvar = -s / d2
                        g_mu_b = ds_dmu_b - ds_dcov * mu_a - ds_dvar * 2 * mu_b
                        gst[y, x, c] = gs * g_mu_b * inv
                        gst[y, x, C + c] = gs * ds_dvar * inv
                        gst[y, x, 2 * C + c] = gs * ds_dcov * inv
                        # L1 term, d|x|/dx = sign(x) with sign(0) = 0
                        sg = 0.0
                        if diff > 0:
                            sg = 1.0
                        elif diff < 0:
                            sg = -1.0
                        stats[y, x, c] = -(1.0 - alpha) * g * sg
                total += acc / C
        means[p] = total * inv_n
        if not want_grad:
            continue
        _box3(gst, gsum)
        for y in range(H):
            for x in range(W):
                if not mask[p, y, x]:
                    continue
                gu = 0.0
                gv = 0.0
                for c in range(C):
                    a_ = tgt[p, y, x, c]
                    b_ = b[y, x, c]
                    gb = stats[y, x, c] + gsum[y, x, c] + 2 * b_ * gsum[y, x, C + c] + a_ * gsum[y, x, 2 * C + c]
                    gu += gb * dbu[y, x, c]
                    gv += gb * dbv[y, x, c]
                du[p, y, x] = gu
                dv[p, y, x] = gv
    return means, counts, du, dv
