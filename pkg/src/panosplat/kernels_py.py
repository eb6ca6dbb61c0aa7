"""Pure-numpy tile blending kernels (fallback backend).

Semantics are identical to the compiled kernels in `_kernels`:

- per pixel, tile entries blend front to back;
- a pixel/Gaussian pair contributes nothing when the ray is behind the
  tangent plane (denominator <= eps_front) or outside the footprint
  (quadratic form > qf_cut);
- alpha is clamped to alpha_clamp; the clamp is a gradient gate;
- an entry that would push transmittance below t_term is dropped and
  blending stops for that pixel;
- background is composited with the final transmittance.

The backward kernel writes one 18-slot gradient row per tile entry, so
the caller can reduce per-Gaussian gradients in a fixed order regardless
of thread count. Slot layout:

  0      dL/d opacity (sigmoid output)
  1:4    dL/d color
  4:7    dL/d conic as (dA, dB, dC) with qf = A xu^2 + 2 B xu xv + C xv^2
  7:9    sum of (dL/dxu, dL/dxv), the tangent-plane positional gradient
  9:12   dL/d basis_u
  12:15  dL/d basis_v
  15:18  minus dL/d mu_prime from the intersection formula
"""

import numpy as np


def _tile_bounds(tile, tile_px, tiles_x, height_px, width_px):
    ty, tx = divmod(tile, tiles_x)
    r0 = ty * tile_px
    c0 = tx * tile_px
    return r0, min(r0 + tile_px, height_px), c0, min(c0 + tile_px, width_px)


def _rect_mask(rows, cols, width_px, row0, row1, col0, ncols):
    """Pixels inside a splat's conservative rectangle (columns wrap)."""
    return ((rows >= row0) & (rows < row1)
            & ((cols - col0) % width_px < ncols))


def forward_blend(dirs, offsets, entry_splat, mu_prime, basis_u, basis_v,
                  conic, opacity, color, row0, row1, col0, ncols, bg,
                  tile_px, tiles_x, tiles_y,
                  qf_cut, eps_front, t_term, alpha_clamp, num_threads=0):
    height_px, width_px = dirs.shape[:2]
    out_color = np.empty((height_px, width_px, 3))
    out_t = np.empty((height_px, width_px))
    out_nlast = np.zeros((height_px, width_px), dtype=np.int32)
    bg = np.asarray(bg, dtype=np.float64)

    for tile in range(tiles_x * tiles_y):
        s, e = int(offsets[tile]), int(offsets[tile + 1])
        r0, r1, c0, c1 = _tile_bounds(tile, tile_px, tiles_x,
                                      height_px, width_px)
        d = dirs[r0:r1, c0:c1].reshape(-1, 3)
        rr, cc2 = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1),
                              indexing="ij")
        rows, cols = rr.reshape(-1), cc2.reshape(-1)
        n_pix = len(d)
        trans = np.ones(n_pix)
        accum = np.zeros((n_pix, 3))
        nlast = np.zeros(n_pix, dtype=np.int32)
        done = np.zeros(n_pix, dtype=bool)
        for k in range(s, e):
            g = int(entry_splat[k])
            denom = d @ mu_prime[g]
            live = ~done & (denom > eps_front) & _rect_mask(
                rows, cols, width_px, row0[g], row1[g], col0[g], ncols[g])
            if not np.any(live):
                if np.all(done):
                    break
                continue
            inv = np.where(denom > eps_front, 1.0 / np.where(
                denom > eps_front, denom, 1.0), 0.0)
            xu = (d @ basis_u[g]) * inv
            xv = (d @ basis_v[g]) * inv
            ca, cb, cc = conic[g]
            qf = ca * xu * xu + 2.0 * cb * xu * xv + cc * xv * xv
            live &= qf <= qf_cut
            w = np.exp(-0.5 * np.minimum(qf, qf_cut))
            alpha = np.minimum(opacity[g] * w, alpha_clamp)
            test_t = trans * (1.0 - alpha)
            trip = live & (test_t < t_term)
            appl = live & ~trip
            weight = alpha[appl] * trans[appl]
            accum[appl] += color[g][None, :] * weight[:, None]
            trans[appl] = test_t[appl]
            nlast[appl] = k - s + 1
            done |= trip
            if np.all(done):
                break
        block = accum + bg[None, :] * trans[:, None]
        out_color[r0:r1, c0:c1] = block.reshape(r1 - r0, c1 - c0, 3)
        out_t[r0:r1, c0:c1] = trans.reshape(r1 - r0, c1 - c0)
        out_nlast[r0:r1, c0:c1] = nlast.reshape(r1 - r0, c1 - c0)
    return out_color, out_t, out_nlast


def backward_blend(dirs, offsets, entry_splat, mu_prime, basis_u, basis_v,
                   conic, opacity, color, row0, row1, col0, ncols, bg,
                   tile_px, tiles_x, tiles_y,
                   qf_cut, eps_front, t_term, alpha_clamp,
                   grad_color, out_t, out_nlast, num_threads=0):
    height_px, width_px = dirs.shape[:2]
    n_entries = len(entry_splat)
    entry_grads = np.zeros((n_entries, 18))
    bg = np.asarray(bg, dtype=np.float64)

    for tile in range(tiles_x * tiles_y):
        s, e = int(offsets[tile]), int(offsets[tile + 1])
        if s == e:
            continue
        r0, r1, c0, c1 = _tile_bounds(tile, tile_px, tiles_x,
                                      height_px, width_px)
        d = dirs[r0:r1, c0:c1].reshape(-1, 3)
        rr, cc2 = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1),
                              indexing="ij")
        rows, cols = rr.reshape(-1), cc2.reshape(-1)
        gout = grad_color[r0:r1, c0:c1].reshape(-1, 3)
        nlast = out_nlast[r0:r1, c0:c1].reshape(-1).astype(np.int64)
        t_run = out_t[r0:r1, c0:c1].reshape(-1).copy()
        behind = np.tile(bg, (len(d), 1))
        kmax = int(nlast.max()) if len(nlast) else 0
        for j in range(kmax - 1, -1, -1):
            k = s + j
            g = int(entry_splat[k])
            live = j < nlast
            denom = d @ mu_prime[g]
            live &= (denom > eps_front) & _rect_mask(
                rows, cols, width_px, row0[g], row1[g], col0[g], ncols[g])
            if not np.any(live):
                continue
            inv = np.where(denom > eps_front, 1.0 / np.where(
                denom > eps_front, denom, 1.0), 0.0)
            xu = (d @ basis_u[g]) * inv
            xv = (d @ basis_v[g]) * inv
            ca, cb, cc = conic[g]
            qf = ca * xu * xu + 2.0 * cb * xu * xv + cc * xv * xv
            live &= qf <= qf_cut
            if not np.any(live):
                continue
            w = np.exp(-0.5 * np.minimum(qf, qf_cut))
            aw = opacity[g] * w
            gate = aw < alpha_clamp
            alpha = np.where(gate, aw, alpha_clamp)
            om = 1.0 - alpha
            t_run[live] /= om[live]
            dca = ((gout * (color[g][None, :] - behind)).sum(axis=1)) * t_run
            at = alpha * t_run
            eg = entry_grads[k]
            eg[1:4] += (gout[live] * at[live, None]).sum(axis=0)
            open_live = live & gate
            if np.any(open_live):
                dca_o = dca[open_live]
                w_o = w[open_live]
                aw_o = aw[open_live]
                eg[0] += (dca_o * w_o).sum()
                dqf = -0.5 * dca_o * aw_o
                xu_o, xv_o = xu[open_live], xv[open_live]
                gu = ca * xu_o + cb * xv_o
                gv = cb * xu_o + cc * xv_o
                gamu = 2.0 * dqf * gu
                gamv = 2.0 * dqf * gv
                eg[4] += (dqf * xu_o * xu_o).sum()
                eg[5] += (dqf * 2.0 * xu_o * xv_o).sum()
                eg[6] += (dqf * xv_o * xv_o).sum()
                eg[7] += gamu.sum()
                eg[8] += gamv.sum()
                inv_o = inv[open_live]
                d_o = d[open_live]
                eg[9:12] += (gamu * inv_o) @ d_o
                eg[12:15] += (gamv * inv_o) @ d_o
                w3 = (gamu * xu_o + gamv * xv_o) * inv_o
                eg[15:18] += w3 @ d_o
            behind[live] = (color[g][None, :] * alpha[live, None]
                            + om[live, None] * behind[live])
    return entry_grads
