"""Numba kernels for splat compositing.

Both the tiled path and the brute-force oracle share one set of compositing
rules so their outputs are comparable at tight tolerances:

  * a splat contributes nothing beyond 3 sigma (mahalanobis^2 > 9);
  * alpha = opacity * exp(-0.5 * m^2), clamped to <= 0.99,
    skipped when < 1/255;
  * transmittance T starts at 1, multiplies by (1 - alpha) per contribution,
    and compositing stops once T < 1e-4;
  * color gets (1 - sum of weights) * background; features get none.
"""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numba
import numpy as np
from numba import njit, prange

ALPHA_CLAMP = 0.99
SKIP_ALPHA = 1.0 / 255.0
EARLY_TERM_T = 1e-4
CUTOFF_MSQ = 9.0


def _apply_thread_cap():
    cap = os.environ.get("DGD_THREADS")
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            return
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


_apply_thread_cap()


@njit(cache=True)
def bin_splats(means, radii, width, height, tile, tiles_x, tiles_y):
    """CSR tile lists; splats stay in their (depth-sorted) input order."""
    m = means.shape[0]
    n_tiles = tiles_x * tiles_y
    counts = np.zeros(n_tiles + 1, dtype=np.int64)
    tx0 = np.empty(m, dtype=np.int64)
    tx1 = np.empty(m, dtype=np.int64)
    ty0 = np.empty(m, dtype=np.int64)
    ty1 = np.empty(m, dtype=np.int64)
    for s in range(m):
        r = radii[s]
        x0 = int(np.floor((means[s, 0] - r) / tile))
        x1 = int(np.floor((means[s, 0] + r) / tile))
        y0 = int(np.floor((means[s, 1] - r) / tile))
        y1 = int(np.floor((means[s, 1] + r) / tile))
        tx0[s] = max(0, min(x0, tiles_x - 1))
        tx1[s] = max(0, min(x1, tiles_x - 1))
        ty0[s] = max(0, min(y0, tiles_y - 1))
        ty1[s] = max(0, min(y1, tiles_y - 1))
        for ty in range(ty0[s], ty1[s] + 1):
            for tx in range(tx0[s], tx1[s] + 1):
                counts[ty * tiles_x + tx + 1] += 1
    starts = np.cumsum(counts)
    fill = starts[:-1].copy()
    order = np.empty(starts[-1], dtype=np.int32)
    for s in range(m):
        for ty in range(ty0[s], ty1[s] + 1):
            for tx in range(tx0[s], tx1[s] + 1):
                t = ty * tiles_x + tx
                order[fill[t]] = s
                fill[t] += 1
    return starts, order


@njit(cache=True, parallel=True)
def forward_tiles(means, conics, opac, colors, feats, starts, order,
                  width, height, tile, tiles_x, tiles_y, background,
                  out_color, out_feat, out_alpha):
    cdim = feats.shape[1]
    for t in prange(tiles_x * tiles_y):
        ty = t // tiles_x
        tx = t % tiles_x
        lo = starts[t]
        hi = starts[t + 1]
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                trans = 1.0
                a_sum = 0.0
                c0 = 0.0
                c1 = 0.0
                c2 = 0.0
                for k in range(cdim):
                    out_feat[py, px, k] = 0.0
                for n in range(lo, hi):
                    s = order[n]
                    dx = px - means[s, 0]
                    dy = py - means[s, 1]
                    msq = (conics[s, 0] * dx * dx + 2.0 * conics[s, 1] * dx * dy
                           + conics[s, 2] * dy * dy)
                    if msq > CUTOFF_MSQ:
                        continue
                    alpha = opac[s] * np.exp(-0.5 * msq)
                    if alpha > ALPHA_CLAMP:
                        alpha = ALPHA_CLAMP
                    if alpha < SKIP_ALPHA:
                        continue
                    w = trans * alpha
                    c0 += w * colors[s, 0]
                    c1 += w * colors[s, 1]
                    c2 += w * colors[s, 2]
                    for k in range(cdim):
                        out_feat[py, px, k] += w * feats[s, k]
                    a_sum += w
                    trans *= 1.0 - alpha
                    if trans < EARLY_TERM_T:
                        break
                rest = 1.0 - a_sum
                out_color[py, px, 0] = c0 + rest * background[0]
                out_color[py, px, 1] = c1 + rest * background[1]
                out_color[py, px, 2] = c2 + rest * background[2]
                out_alpha[py, px] = a_sum


@njit(cache=True)
def forward_brute(means, conics, opac, colors, feats, width, height,
                  background, out_color, out_feat, out_alpha):
    """Reference compositor: per pixel, every splat, in depth order."""
    m = means.shape[0]
    cdim = feats.shape[1]
    for py in range(height):
        for px in range(width):
            trans = 1.0
            a_sum = 0.0
            c0 = 0.0
            c1 = 0.0
            c2 = 0.0
            for k in range(cdim):
                out_feat[py, px, k] = 0.0
            for s in range(m):
                dx = px - means[s, 0]
                dy = py - means[s, 1]
                msq = (conics[s, 0] * dx * dx + 2.0 * conics[s, 1] * dx * dy
                       + conics[s, 2] * dy * dy)
                if msq > CUTOFF_MSQ:
                    continue
                alpha = opac[s] * np.exp(-0.5 * msq)
                if alpha > ALPHA_CLAMP:
                    alpha = ALPHA_CLAMP
                if alpha < SKIP_ALPHA:
                    continue
                w = trans * alpha
                c0 += w * colors[s, 0]
                c1 += w * colors[s, 1]
                c2 += w * colors[s, 2]
                for k in range(cdim):
                    out_feat[py, px, k] += w * feats[s, k]
                a_sum += w
                trans *= 1.0 - alpha
                if trans < EARLY_TERM_T:
                    break
            rest = 1.0 - a_sum
            out_color[py, px, 0] = c0 + rest * background[0]
            out_color[py, px, 1] = c1 + rest * background[1]
            out_color[py, px, 2] = c2 + rest * background[2]
            out_alpha[py, px] = a_sum


@njit(cache=True)
def backward_tiles(means, conics, opac, colors, feats, starts, order,
                   width, height, tile, tiles_x, tiles_y, background,
                   grad_color, grad_feat, grad_alpha,
                   d_mean, d_conic, d_opac, d_color, d_feat):
    """Gradients of an arbitrary per-pixel loss w.r.t. splat attributes.

    Sequential over tiles so per-splat accumulation order is fixed; within a
    pixel the contributor list is rebuilt and traversed back to front.
    """
    cdim = feats.shape[1]
    max_len = 0
    for t in range(tiles_x * tiles_y):
        ln = starts[t + 1] - starts[t]
        if ln > max_len:
            max_len = ln
    buf_idx = np.empty(max_len, dtype=np.int64)
    buf_alpha = np.empty(max_len, dtype=np.float64)
    buf_g = np.empty(max_len, dtype=np.float64)
    buf_t = np.empty(max_len, dtype=np.float64)

    for t in range(tiles_x * tiles_y):
        ty = t // tiles_x
        tx = t % tiles_x
        lo = starts[t]
        hi = starts[t + 1]
        if hi == lo:
            continue
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                trans = 1.0
                n_contrib = 0
                for n in range(lo, hi):
                    s = order[n]
                    dx = px - means[s, 0]
                    dy = py - means[s, 1]
                    msq = (conics[s, 0] * dx * dx + 2.0 * conics[s, 1] * dx * dy
                           + conics[s, 2] * dy * dy)
                    if msq > CUTOFF_MSQ:
                        continue
                    g = np.exp(-0.5 * msq)
                    alpha = opac[s] * g
                    if alpha > ALPHA_CLAMP:
                        alpha = ALPHA_CLAMP
                    if alpha < SKIP_ALPHA:
                        continue
                    buf_idx[n_contrib] = s
                    buf_alpha[n_contrib] = alpha
                    buf_g[n_contrib] = g
                    buf_t[n_contrib] = trans
                    n_contrib += 1
                    trans *= 1.0 - alpha
                    if trans < EARLY_TERM_T:
                        break
                if n_contrib == 0:
                    continue

                gc0 = grad_color[py, px, 0]
                gc1 = grad_color[py, px, 1]
                gc2 = grad_color[py, px, 2]
                ga = grad_alpha[py, px]
                # Background rides on (1 - sum w): fold it into the
                # per-contribution scalar u = dL/dw.
                bg_dot = gc0 * background[0] + gc1 * background[1] + gc2 * background[2]
                acc = 0.0  # sum of w_k * u_k over later contributions
                for j in range(n_contrib - 1, -1, -1):
                    s = buf_idx[j]
                    alpha = buf_alpha[j]
                    g = buf_g[j]
                    t_i = buf_t[j]
                    w = t_i * alpha
                    u = (gc0 * colors[s, 0] + gc1 * colors[s, 1] + gc2 * colors[s, 2]
                         - bg_dot + ga)
                    for k in range(cdim):
                        u += grad_feat[py, px, k] * feats[s, k]
                        d_feat[s, k] += w * grad_feat[py, px, k]
                    d_color[s, 0] += w * gc0
                    d_color[s, 1] += w * gc1
                    d_color[s, 2] += w * gc2
                    d_alpha = t_i * u - acc / (1.0 - alpha)
                    acc += w * u
                    if opac[s] * g > ALPHA_CLAMP:
                        continue  # clamped: alpha locally constant
                    d_opac[s] += d_alpha * g
                    d_g = d_alpha * opac[s]
                    d_msq = -0.5 * g * d_g
                    dx = px - means[s, 0]
                    dy = py - means[s, 1]
                    d_mean[s, 0] += -d_msq * 2.0 * (conics[s, 0] * dx + conics[s, 1] * dy)
                    d_mean[s, 1] += -d_msq * 2.0 * (conics[s, 1] * dx + conics[s, 2] * dy)
                    d_conic[s, 0] += d_msq * dx * dx
                    d_conic[s, 1] += d_msq * 2.0 * dx * dy
                    d_conic[s, 2] += d_msq * dy * dy
