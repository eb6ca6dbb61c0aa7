"""Per-view projection of scene Gaussians and tile binning.

`splat_all` turns the scene into compact per-view splat records (tangent
frame, 2x2 covariance, conic, color, pixel bbox). `sort_and_bin` expands
the bboxes into depth-sorted per-tile lists in CSR form, which is what the
blending kernels consume.

Pixel bboxes are computed by mapping sampled points of the footprint
ellipse boundary through the spherical and pixel mappings. Longitude is
unwrapped along the boundary loop so seam-crossing footprints produce
column-wrapping rects, and the loop's winding number detects footprints
that enclose a pole.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry

TWO_PI = 2.0 * np.pi


@dataclass
class SplatData:
    """SoA splat records for one view (culled Gaussians omitted)."""

    gaussian_index: np.ndarray  # (M,) int64 into the scene
    t_cam: np.ndarray           # (M, 3) camera-space centers
    depth: np.ndarray           # (M,)
    mu_prime: np.ndarray        # (M, 3)
    basis_u: np.ndarray         # (M, 3)
    basis_v: np.ndarray         # (M, 3)
    cov2d: np.ndarray           # (M, 3) upper-tri (a, b, c)
    conic: np.ndarray           # (M, 3) inverse covariance (A, B, C)
    opacity: np.ndarray         # (M,)
    color: np.ndarray           # (M, 3) view-dependent
    color_mask: np.ndarray      # (M, 3) bool, SH clamp gate
    view_dir: np.ndarray        # (M, 3) world unit dirs camera->center
    view_dist: np.ndarray       # (M,)
    row0: np.ndarray            # (M,) int32, inclusive
    row1: np.ndarray            # (M,) int32, exclusive
    col0: np.ndarray            # (M,) int32 in [0, W)
    ncols: np.ndarray           # (M,) int32, wraps mod W

    def __len__(self):
        return len(self.gaussian_index)


@dataclass
class TileGrid:
    """CSR tile lists: entries for tile t are entry_splat[offsets[t]:offsets[t+1]].

    Entries are sorted by depth ascending within each tile, ties broken by
    gaussian index ascending. entry_splat indexes into the SplatData rows.
    """

    tile_px: int
    tiles_x: int
    tiles_y: int
    offsets: np.ndarray      # (tiles_x * tiles_y + 1,) int64
    entry_splat: np.ndarray  # (E,) int32

    @property
    def n_entries(self):
        return len(self.entry_splat)


def _ellipse_axes(cov2d):
    """Eigen-decomposition of symmetric 2x2 rows (a, b, c).

    Returns (lam1, lam2, e1) with lam1 >= lam2 and e1 the unit principal
    axis of lam1.
    """
    a, b, c = cov2d[:, 0], cov2d[:, 1], cov2d[:, 2]
    half_tr = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    lam1 = half_tr + disc
    lam2 = np.maximum(half_tr - disc, 0.0)
    e1 = np.stack([b, lam1 - a], axis=1)
    norm = np.linalg.norm(e1, axis=1)
    degenerate = norm < 1e-30
    safe = np.where(degenerate, 1.0, norm)
    e1 = e1 / safe[:, None]
    e1[degenerate] = (1.0, 0.0)
    return lam1, lam2, e1


def _footprint_bboxes(mu_prime, cov2d, footprint_sigma, height_px, width_px):
    """Conservative pixel bboxes of the mapped footprint ellipses.

    The blend kernels only apply a splat where qf <= footprint_sigma**2,
    i.e. where the ray's gnomonic tangent coords land inside the footprint
    ellipse. A tangent point at distance t from mu_prime subtends the
    angle atan(t), so that region lies inside the spherical cap around
    mu_prime of angular radius rho = atan(footprint_sigma * sqrt(lam1)).
    The cap's latitude span [lat - rho, lat + rho] bounds the rows, and
    its bounding lune (sin lune = sin rho / cos lat, for caps that avoid
    the poles) bounds the columns, so the rect provably contains every
    blending pixel.

    Returns (row0, row1, col0, ncols) int32 arrays; rows clipped to
    [0, H], col0 in [0, W), ncols <= W.
    """
    lam1, _, _ = _ellipse_axes(cov2d)
    rho = np.arctan(footprint_sigma * np.sqrt(lam1))
    lat = np.arcsin(np.clip(-mu_prime[:, 1], -1.0, 1.0))
    lon = np.arctan2(mu_prime[:, 0], mu_prime[:, 2])

    # 2 px of dilation absorbs the half-pixel center offset and rounding
    dil = 2
    rr_top = -(lat + rho) * (height_px / np.pi) + height_px / 2.0
    rr_bot = -(lat - rho) * (height_px / np.pi) + height_px / 2.0
    row0 = np.floor(rr_top).astype(np.int64) - dil
    row1 = np.ceil(rr_bot).astype(np.int64) + dil + 1

    sin_lune = np.sin(rho) / np.maximum(np.cos(lat), 1e-12)
    # caps that reach a pole span every column
    full = (np.abs(lat) + rho >= np.pi / 2.0 - 1e-9) | (sin_lune >= 1.0)
    lune = np.arcsin(np.clip(sin_lune, 0.0, 1.0))
    cc_lo = (lon - lune) * (width_px / TWO_PI) + width_px / 2.0
    cc_hi = (lon + lune) * (width_px / TWO_PI) + width_px / 2.0
    col_lo = np.floor(cc_lo).astype(np.int64) - dil
    col_hi = np.ceil(cc_hi).astype(np.int64) + dil
    ncols = col_hi - col_lo + 1

    full |= ncols >= width_px
    col0 = np.where(full, 0, col_lo % width_px).astype(np.int32)
    ncols = np.where(full, width_px, ncols).astype(np.int32)
    row0 = np.clip(row0, 0, height_px).astype(np.int32)
    row1 = np.clip(row1, 0, height_px).astype(np.int32)
    return row0, row1, col0, ncols


def splat_all(scene, cam, footprint_sigma=3.0, floor=0.0):
    """Project every Gaussian into the view; cull those at the camera.

    `floor` is the low-pass diagonal term added to cov2d, in squared
    tangent-plane units.
    """
    n = len(scene)
    t_all = cam.world_to_camera(scene.positions)
    depth_all = np.linalg.norm(t_all, axis=1)
    keep = depth_all > geometry.EPS_NEAR
    index = np.nonzero(keep)[0]

    t = t_all[index]
    depth = depth_all[index]
    mu_prime = t / depth[:, None]
    basis_u, basis_v = geometry.tangent_frames_batch(mu_prime)

    # cov2d = F F^T + floor I with F = B^T J W R S; at the Gaussian center
    # J = (I - mu' mu'^T) / depth
    W = cam.rotation
    R = geometry.quat_to_rotmat_batch(scene.rotations[index])
    S = np.exp(scene.log_scales[index])
    RS = R * S[:, None, :]
    B = np.stack([basis_u, basis_v], axis=2)            # (M, 3, 2)
    J = (np.eye(3)[None] - mu_prime[:, :, None] * mu_prime[:, None, :]) \
        / depth[:, None, None]
    JW = J @ W[None]
    F = np.einsum("mia,mij,mjk->mak", B, JW, RS)        # (M, 2, 3)
    cov = F @ F.swapaxes(1, 2)
    a = cov[:, 0, 0] + floor
    b = 0.5 * (cov[:, 0, 1] + cov[:, 1, 0])
    c = cov[:, 1, 1] + floor
    det = a * c - b * b
    ok = det > 1e-300
    if not np.all(ok):
        sub = np.nonzero(ok)[0]
        index, t, depth = index[sub], t[sub], depth[sub]
        mu_prime, basis_u, basis_v = mu_prime[sub], basis_u[sub], basis_v[sub]
        a, b, c, det = a[sub], b[sub], c[sub], det[sub]
    cov2d = np.stack([a, b, c], axis=1)
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    cam_center = cam.center_world
    sub_scene = scene.select(index)
    color, color_mask, view_dir, view_dist = sub_scene.colors_toward(cam_center)
    opacity = sub_scene.opacities()

    row0, row1, col0, ncols = _footprint_bboxes(
        mu_prime, cov2d, footprint_sigma, cam.height_px, cam.width_px)

    return SplatData(
        gaussian_index=index.astype(np.int64),
        t_cam=np.ascontiguousarray(t),
        depth=np.ascontiguousarray(depth),
        mu_prime=np.ascontiguousarray(mu_prime),
        basis_u=np.ascontiguousarray(basis_u),
        basis_v=np.ascontiguousarray(basis_v),
        cov2d=np.ascontiguousarray(cov2d),
        conic=np.ascontiguousarray(conic),
        opacity=np.ascontiguousarray(opacity),
        color=np.ascontiguousarray(color),
        color_mask=color_mask,
        view_dir=np.ascontiguousarray(view_dir),
        view_dist=np.ascontiguousarray(view_dist),
        row0=row0, row1=row1, col0=col0, ncols=ncols,
    )


def sort_and_bin(splats, height_px, width_px, tile_px=16):
    """Expand splat bboxes into depth-sorted per-tile CSR lists.

    Every splat whose bbox intersects a tile appears in that tile's list
    exactly once, sorted by (depth, gaussian index) ascending.
    """
    tiles_x = -(-width_px // tile_px)
    tiles_y = -(-height_px // tile_px)
    n_tiles = tiles_x * tiles_y
    m = len(splats)
    if m == 0:
        return TileGrid(tile_px, tiles_x, tiles_y,
                        np.zeros(n_tiles + 1, dtype=np.int64),
                        np.zeros(0, dtype=np.int32))

    row0 = splats.row0.astype(np.int64)
    row1 = splats.row1.astype(np.int64)
    col0 = splats.col0.astype(np.int64)
    ncols = splats.ncols.astype(np.int64)
    alive = (row1 > row0) & (ncols > 0)

    tr0 = row0 // tile_px
    tr1 = np.maximum(row1 - 1, row0) // tile_px  # inclusive

    # tile-column segments; wrapping bboxes may need two
    a_end = np.minimum(col0 + ncols, width_px)
    b_len = col0 + ncols - width_px  # wrapped part, >0 when wrapping
    wrapped = b_len > 0
    ta0 = col0 // tile_px
    ta1 = (a_end - 1) // tile_px
    tb1 = np.where(wrapped, (np.maximum(b_len, 1) - 1) // tile_px, -1)
    # if the wrapped part reaches segment A's tiles, coverage is all columns
    merge = wrapped & (tb1 + 1 >= ta0)
    seg1_lo = np.where(merge, 0, ta0)
    seg1_hi = np.where(merge, tiles_x - 1, ta1)
    seg2_ok = wrapped & ~merge & alive
    seg2_hi = tb1

    splat_ids = np.arange(m, dtype=np.int64)
    lo_list = [seg1_lo[alive], np.zeros(int(seg2_ok.sum()), dtype=np.int64)]
    hi_list = [seg1_hi[alive], seg2_hi[seg2_ok]]
    sid_list = [splat_ids[alive], splat_ids[seg2_ok]]
    tr0_list = [tr0[alive], tr0[seg2_ok]]
    tr1_list = [tr1[alive], tr1[seg2_ok]]

    rect_lo = np.concatenate(lo_list)
    rect_hi = np.concatenate(hi_list)
    rect_sid = np.concatenate(sid_list)
    rect_tr0 = np.concatenate(tr0_list)
    rect_tr1 = np.concatenate(tr1_list)

    n_tc = rect_hi - rect_lo + 1
    n_tr = rect_tr1 - rect_tr0 + 1
    counts = n_tc * n_tr
    total = int(counts.sum())
    if total == 0:
        return TileGrid(tile_px, tiles_x, tiles_y,
                        np.zeros(n_tiles + 1, dtype=np.int64),
                        np.zeros(0, dtype=np.int32))

    rect_of = np.repeat(np.arange(len(counts)), counts)
    starts = np.cumsum(counts) - counts
    local = np.arange(total, dtype=np.int64) - starts[rect_of]
    lr = local // n_tc[rect_of]
    lc = local - lr * n_tc[rect_of]
    tile_id = (rect_tr0[rect_of] + lr) * tiles_x + rect_lo[rect_of] + lc
    entry_sid = rect_sid[rect_of]

    order = np.lexsort((splats.gaussian_index[entry_sid],
                        splats.depth[entry_sid], tile_id))
    tile_id = tile_id[order]
    entry_splat = entry_sid[order].astype(np.int32)
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(tile_id, minlength=n_tiles), out=offsets[1:])
    return TileGrid(tile_px, tiles_x, tiles_y, offsets, entry_splat)
