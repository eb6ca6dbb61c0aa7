# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tile blending kernels.

Same semantics as kernels_py (see its docstring for the gate rules and
the 18-slot backward layout). Parallel over tiles; all writes are
tile-exclusive, so results are bit-identical at any thread count.

Loops run entry-outer, pixel-inner: each entry touches only the pixels
inside the intersection of its integer rectangle (rows [row0, row1),
columns [col0, col0+ncols) mod width, split into at most two unwrapped
segments) with the tile. Per-pixel blending state lives in small
per-thread workspaces, and entries are still applied to every pixel in
front-to-back entry order, so the per-pixel arithmetic sequence is the
same as a pixel-outer walk. The rectangle is conservative for the qf
gate, so the pretest never changes the output. A tile stops scanning
entries once every pixel has hit the transmittance floor.
"""

import numpy as np

cimport cython
cimport openmp
from cython.parallel cimport prange
from libc.math cimport exp


cdef void _forward_tile(Py_ssize_t tile,
                        const double[:, :, ::1] dirs,
                        const long long[::1] offsets,
                        const int[::1] entry_splat,
                        const double[:, ::1] mu_prime,
                        const double[:, ::1] basis_u,
                        const double[:, ::1] basis_v,
                        const double[:, ::1] conic,
                        const double[::1] opacity,
                        const double[:, ::1] color,
                        const int[::1] row0,
                        const int[::1] row1,
                        const int[::1] col0,
                        const int[::1] ncols,
                        const double[::1] bg,
                        int tile_px, int tiles_x,
                        double qf_cut, double eps_front,
                        double t_term, double alpha_clamp,
                        double[:, ::1] ws_trans,
                        double[:, ::1] ws_acc,
                        int[:, ::1] ws_nl,
                        unsigned char[:, ::1] ws_done,
                        double[:, :, ::1] out_color,
                        double[:, ::1] out_t,
                        int[:, ::1] out_nlast) noexcept nogil:
    cdef Py_ssize_t height_px = dirs.shape[0]
    cdef Py_ssize_t width_px = dirs.shape[1]
    cdef Py_ssize_t ty = tile // tiles_x
    cdef Py_ssize_t tx = tile - ty * tiles_x
    cdef Py_ssize_t r0 = ty * tile_px
    cdef Py_ssize_t c0 = tx * tile_px
    cdef Py_ssize_t r1 = r0 + tile_px
    cdef Py_ssize_t c1 = c0 + tile_px
    if r1 > height_px:
        r1 = height_px
    if c1 > width_px:
        c1 = width_px
    cdef Py_ssize_t n_cols = c1 - c0
    cdef Py_ssize_t npx = (r1 - r0) * n_cols
    cdef Py_ssize_t s = offsets[tile]
    cdef Py_ssize_t e = offsets[tile + 1]
    cdef int tid = openmp.omp_get_thread_num()
    cdef Py_ssize_t r, c, k, px, ra, rb, ca, cb, wrap_end, si, remaining
    cdef int g
    cdef double m0, m1, m2, u0, u1, u2, v0, v1, v2, ca_, cb_, cc_
    cdef double op, cr, cg, cbl
    cdef double dx, dy, dz, denom, inv, xu, xv, qf, w, aw, alpha
    cdef double test_t, wgt
    for px in range(npx):
        ws_trans[tid, px] = 1.0
        ws_acc[tid, 3 * px] = 0.0
        ws_acc[tid, 3 * px + 1] = 0.0
        ws_acc[tid, 3 * px + 2] = 0.0
        ws_nl[tid, px] = 0
        ws_done[tid, px] = 0
    remaining = npx
    for k in range(s, e):
        if remaining == 0:
            break
        g = entry_splat[k]
        ra = row0[g]
        if ra < r0:
            ra = r0
        rb = row1[g]
        if rb > r1:
            rb = r1
        if ra >= rb:
            continue
        m0 = mu_prime[g, 0]
        m1 = mu_prime[g, 1]
        m2 = mu_prime[g, 2]
        u0 = basis_u[g, 0]
        u1 = basis_u[g, 1]
        u2 = basis_u[g, 2]
        v0 = basis_v[g, 0]
        v1 = basis_v[g, 1]
        v2 = basis_v[g, 2]
        ca_ = conic[g, 0]
        cb_ = conic[g, 1]
        cc_ = conic[g, 2]
        op = opacity[g]
        cr = color[g, 0]
        cg = color[g, 1]
        cbl = color[g, 2]
        wrap_end = col0[g] + ncols[g] - width_px
        for si in range(2):
            if si == 0:
                ca = col0[g]
                cb = col0[g] + ncols[g]
                if cb > width_px:
                    cb = width_px
            else:
                if wrap_end <= 0:
                    break
                ca = 0
                cb = wrap_end
            if ca < c0:
                ca = c0
            if cb > c1:
                cb = c1
            if ca >= cb:
                continue
            for r in range(ra, rb):
                px = (r - r0) * n_cols - c0
                for c in range(ca, cb):
                    if ws_done[tid, px + c]:
                        continue
                    dx = dirs[r, c, 0]
                    dy = dirs[r, c, 1]
                    dz = dirs[r, c, 2]
                    denom = m0 * dx + m1 * dy + m2 * dz
                    if denom <= eps_front:
                        continue
                    inv = 1.0 / denom
                    xu = (u0 * dx + u1 * dy + u2 * dz) * inv
                    xv = (v0 * dx + v1 * dy + v2 * dz) * inv
                    qf = ca_ * xu * xu + 2.0 * cb_ * xu * xv + cc_ * xv * xv
                    if qf > qf_cut:
                        continue
                    w = exp(-0.5 * qf)
                    aw = op * w
                    alpha = aw if aw < alpha_clamp else alpha_clamp
                    test_t = ws_trans[tid, px + c] * (1.0 - alpha)
                    if test_t < t_term:
                        ws_done[tid, px + c] = 1
                        remaining = remaining - 1
                        continue
                    wgt = alpha * ws_trans[tid, px + c]
                    ws_acc[tid, 3 * (px + c)] += cr * wgt
                    ws_acc[tid, 3 * (px + c) + 1] += cg * wgt
                    ws_acc[tid, 3 * (px + c) + 2] += cbl * wgt
                    ws_trans[tid, px + c] = test_t
                    ws_nl[tid, px + c] = <int> (k - s + 1)
    for r in range(r0, r1):
        px = (r - r0) * n_cols - c0
        for c in range(c0, c1):
            test_t = ws_trans[tid, px + c]
            out_color[r, c, 0] = ws_acc[tid, 3 * (px + c)] + bg[0] * test_t
            out_color[r, c, 1] = ws_acc[tid, 3 * (px + c) + 1] + bg[1] * test_t
            out_color[r, c, 2] = ws_acc[tid, 3 * (px + c) + 2] + bg[2] * test_t
            out_t[r, c] = test_t
            out_nlast[r, c] = ws_nl[tid, px + c]


cdef void _backward_tile(Py_ssize_t tile,
                         const double[:, :, ::1] dirs,
                         const long long[::1] offsets,
                         const int[::1] entry_splat,
                         const double[:, ::1] mu_prime,
                         const double[:, ::1] basis_u,
                         const double[:, ::1] basis_v,
                         const double[:, ::1] conic,
                         const double[::1] opacity,
                         const double[:, ::1] color,
                         const int[::1] row0,
                         const int[::1] row1,
                         const int[::1] col0,
                         const int[::1] ncols,
                         const double[::1] bg,
                         int tile_px, int tiles_x,
                         double qf_cut, double eps_front,
                         double t_term, double alpha_clamp,
                         const double[:, :, ::1] grad_color,
                         const double[:, ::1] out_t,
                         const int[:, ::1] out_nlast,
                         double[:, ::1] ws_t,
                         double[:, ::1] ws_behind,
                         double[:, ::1] entry_grads) noexcept nogil:
    cdef Py_ssize_t height_px = dirs.shape[0]
    cdef Py_ssize_t width_px = dirs.shape[1]
    cdef Py_ssize_t ty = tile // tiles_x
    cdef Py_ssize_t tx = tile - ty * tiles_x
    cdef Py_ssize_t r0 = ty * tile_px
    cdef Py_ssize_t c0 = tx * tile_px
    cdef Py_ssize_t r1 = r0 + tile_px
    cdef Py_ssize_t c1 = c0 + tile_px
    if r1 > height_px:
        r1 = height_px
    if c1 > width_px:
        c1 = width_px
    cdef Py_ssize_t n_cols = c1 - c0
    cdef Py_ssize_t s = offsets[tile]
    cdef Py_ssize_t e = offsets[tile + 1]
    if s == e:
        return
    cdef int tid = openmp.omp_get_thread_num()
    cdef Py_ssize_t r, c, k, j, px, ra, rb, ca, cb, wrap_end, si, kmax
    cdef int g
    cdef double m0, m1, m2, u0, u1, u2, v0, v1, v2, ca_, cb_, cc_
    cdef double op, cr, cg, cbl
    cdef double dx, dy, dz, denom, inv, xu, xv, qf, w, aw, alpha, om
    cdef double g0, g1, g2, t_run, dca, at, dqf, gu, gv
    cdef double gamu, gamv, giu, giv, w3
    cdef double eg0, eg1, eg2, eg3, eg4, eg5, eg6, eg7, eg8
    cdef double eg9, eg10, eg11, eg12, eg13, eg14, eg15, eg16, eg17
    kmax = 0
    for r in range(r0, r1):
        px = (r - r0) * n_cols - c0
        for c in range(c0, c1):
            j = out_nlast[r, c]
            if j > kmax:
                kmax = j
            ws_t[tid, px + c] = out_t[r, c]
            ws_behind[tid, 3 * (px + c)] = bg[0]
            ws_behind[tid, 3 * (px + c) + 1] = bg[1]
            ws_behind[tid, 3 * (px + c) + 2] = bg[2]
    for j in range(kmax - 1, -1, -1):
        k = s + j
        g = entry_splat[k]
        ra = row0[g]
        if ra < r0:
            ra = r0
        rb = row1[g]
        if rb > r1:
            rb = r1
        if ra >= rb:
            continue
        m0 = mu_prime[g, 0]
        m1 = mu_prime[g, 1]
        m2 = mu_prime[g, 2]
        u0 = basis_u[g, 0]
        u1 = basis_u[g, 1]
        u2 = basis_u[g, 2]
        v0 = basis_v[g, 0]
        v1 = basis_v[g, 1]
        v2 = basis_v[g, 2]
        ca_ = conic[g, 0]
        cb_ = conic[g, 1]
        cc_ = conic[g, 2]
        op = opacity[g]
        cr = color[g, 0]
        cg = color[g, 1]
        cbl = color[g, 2]
        eg0 = 0.0
        eg1 = 0.0
        eg2 = 0.0
        eg3 = 0.0
        eg4 = 0.0
        eg5 = 0.0
        eg6 = 0.0
        eg7 = 0.0
        eg8 = 0.0
        eg9 = 0.0
        eg10 = 0.0
        eg11 = 0.0
        eg12 = 0.0
        eg13 = 0.0
        eg14 = 0.0
        eg15 = 0.0
        eg16 = 0.0
        eg17 = 0.0
        wrap_end = col0[g] + ncols[g] - width_px
        for si in range(2):
            if si == 0:
                ca = col0[g]
                cb = col0[g] + ncols[g]
                if cb > width_px:
                    cb = width_px
            else:
                if wrap_end <= 0:
                    break
                ca = 0
                cb = wrap_end
            if ca < c0:
                ca = c0
            if cb > c1:
                cb = c1
            if ca >= cb:
                continue
            for r in range(ra, rb):
                px = (r - r0) * n_cols - c0
                for c in range(ca, cb):
                    if j >= out_nlast[r, c]:
                        continue
                    dx = dirs[r, c, 0]
                    dy = dirs[r, c, 1]
                    dz = dirs[r, c, 2]
                    denom = m0 * dx + m1 * dy + m2 * dz
                    if denom <= eps_front:
                        continue
                    inv = 1.0 / denom
                    xu = (u0 * dx + u1 * dy + u2 * dz) * inv
                    xv = (v0 * dx + v1 * dy + v2 * dz) * inv
                    qf = ca_ * xu * xu + 2.0 * cb_ * xu * xv + cc_ * xv * xv
                    if qf > qf_cut:
                        continue
                    w = exp(-0.5 * qf)
                    aw = op * w
                    alpha = aw if aw < alpha_clamp else alpha_clamp
                    om = 1.0 - alpha
                    t_run = ws_t[tid, px + c] / om
                    ws_t[tid, px + c] = t_run
                    g0 = grad_color[r, c, 0]
                    g1 = grad_color[r, c, 1]
                    g2 = grad_color[r, c, 2]
                    dca = (g0 * (cr - ws_behind[tid, 3 * (px + c)])
                           + g1 * (cg - ws_behind[tid, 3 * (px + c) + 1])
                           + g2 * (cbl - ws_behind[tid, 3 * (px + c) + 2])) * t_run
                    at = alpha * t_run
                    eg1 += g0 * at
                    eg2 += g1 * at
                    eg3 += g2 * at
                    if aw < alpha_clamp:
                        eg0 += dca * w
                        dqf = -0.5 * dca * aw
                        gu = ca_ * xu + cb_ * xv
                        gv = cb_ * xu + cc_ * xv
                        gamu = 2.0 * dqf * gu
                        gamv = 2.0 * dqf * gv
                        eg4 += dqf * xu * xu
                        eg5 += dqf * 2.0 * xu * xv
                        eg6 += dqf * xv * xv
                        eg7 += gamu
                        eg8 += gamv
                        giu = gamu * inv
                        eg9 += giu * dx
                        eg10 += giu * dy
                        eg11 += giu * dz
                        giv = gamv * inv
                        eg12 += giv * dx
                        eg13 += giv * dy
                        eg14 += giv * dz
                        w3 = (gamu * xu + gamv * xv) * inv
                        eg15 += w3 * dx
                        eg16 += w3 * dy
                        eg17 += w3 * dz
                    ws_behind[tid, 3 * (px + c)] = cr * alpha + om * ws_behind[tid, 3 * (px + c)]
                    ws_behind[tid, 3 * (px + c) + 1] = cg * alpha + om * ws_behind[tid, 3 * (px + c) + 1]
                    ws_behind[tid, 3 * (px + c) + 2] = cbl * alpha + om * ws_behind[tid, 3 * (px + c) + 2]
        entry_grads[k, 0] = eg0
        entry_grads[k, 1] = eg1
        entry_grads[k, 2] = eg2
        entry_grads[k, 3] = eg3
        entry_grads[k, 4] = eg4
        entry_grads[k, 5] = eg5
        entry_grads[k, 6] = eg6
        entry_grads[k, 7] = eg7
        entry_grads[k, 8] = eg8
        entry_grads[k, 9] = eg9
        entry_grads[k, 10] = eg10
        entry_grads[k, 11] = eg11
        entry_grads[k, 12] = eg12
        entry_grads[k, 13] = eg13
        entry_grads[k, 14] = eg14
        entry_grads[k, 15] = eg15
        entry_grads[k, 16] = eg16
        entry_grads[k, 17] = eg17


def forward_blend(double[:, :, ::1] dirs, long long[::1] offsets,
                  int[::1] entry_splat, double[:, ::1] mu_prime,
                  double[:, ::1] basis_u, double[:, ::1] basis_v,
                  double[:, ::1] conic, double[::1] opacity,
                  double[:, ::1] color, int[::1] row0, int[::1] row1,
                  int[::1] col0, int[::1] ncols, double[::1] bg,
                  int tile_px, int tiles_x, int tiles_y,
                  double qf_cut, double eps_front, double t_term,
                  double alpha_clamp, int num_threads=0):
    cdef Py_ssize_t height_px = dirs.shape[0]
    cdef Py_ssize_t width_px = dirs.shape[1]
    out_color_arr = np.empty((height_px, width_px, 3), dtype=np.float64)
    out_t_arr = np.empty((height_px, width_px), dtype=np.float64)
    out_nlast_arr = np.zeros((height_px, width_px), dtype=np.int32)
    cdef double[:, :, ::1] out_color = out_color_arr
    cdef double[:, ::1] out_t = out_t_arr
    cdef int[:, ::1] out_nlast = out_nlast_arr
    cdef Py_ssize_t n_tiles = tiles_x * tiles_y
    cdef Py_ssize_t tile
    cdef int nt = num_threads if num_threads > 0 else openmp.omp_get_max_threads()
    cdef Py_ssize_t cap = tile_px * tile_px
    ws_trans_arr = np.empty((nt, cap), dtype=np.float64)
    ws_acc_arr = np.empty((nt, 3 * cap), dtype=np.float64)
    ws_nl_arr = np.empty((nt, cap), dtype=np.int32)
    ws_done_arr = np.empty((nt, cap), dtype=np.uint8)
    cdef double[:, ::1] ws_trans = ws_trans_arr
    cdef double[:, ::1] ws_acc = ws_acc_arr
    cdef int[:, ::1] ws_nl = ws_nl_arr
    cdef unsigned char[:, ::1] ws_done = ws_done_arr
    for tile in prange(n_tiles, nogil=True, schedule="dynamic",
                       num_threads=nt):
        _forward_tile(tile, dirs, offsets, entry_splat, mu_prime, basis_u,
                      basis_v, conic, opacity, color, row0, row1, col0,
                      ncols, bg, tile_px, tiles_x,
                      qf_cut, eps_front, t_term, alpha_clamp,
                      ws_trans, ws_acc, ws_nl, ws_done,
                      out_color, out_t, out_nlast)
    return out_color_arr, out_t_arr, out_nlast_arr


def backward_blend(double[:, :, ::1] dirs, long long[::1] offsets,
                   int[::1] entry_splat, double[:, ::1] mu_prime,
                   double[:, ::1] basis_u, double[:, ::1] basis_v,
                   double[:, ::1] conic, double[::1] opacity,
                   double[:, ::1] color, int[::1] row0, int[::1] row1,
                   int[::1] col0, int[::1] ncols, double[::1] bg,
                   int tile_px, int tiles_x, int tiles_y,
                   double qf_cut, double eps_front, double t_term,
                   double alpha_clamp, double[:, :, ::1] grad_color,
                   double[:, ::1] out_t, int[:, ::1] out_nlast,
                   int num_threads=0):
    entry_grads_arr = np.zeros((len(entry_splat), 18), dtype=np.float64)
    cdef double[:, ::1] entry_grads = entry_grads_arr
    cdef Py_ssize_t n_tiles = tiles_x * tiles_y
    cdef Py_ssize_t tile
    cdef int nt = num_threads if num_threads > 0 else openmp.omp_get_max_threads()
    cdef Py_ssize_t cap = tile_px * tile_px
    ws_t_arr = np.empty((nt, cap), dtype=np.float64)
    ws_behind_arr = np.empty((nt, 3 * cap), dtype=np.float64)
    cdef double[:, ::1] ws_t = ws_t_arr
    cdef double[:, ::1] ws_behind = ws_behind_arr
    for tile in prange(n_tiles, nogil=True, schedule="dynamic",
                       num_threads=nt):
        _backward_tile(tile, dirs, offsets, entry_splat, mu_prime, basis_u,
                       basis_v, conic, opacity, color, row0, row1, col0,
                       ncols, bg, tile_px, tiles_x,
                       qf_cut, eps_front, t_term, alpha_clamp,
                       grad_color, out_t, out_nlast, ws_t, ws_behind,
                       entry_grads)
    return entry_grads_arr
