"""Tiled forward rendering and the full parameter backward pass.

The forward pass projects the scene (`splatting.splat_all`), bins splats
into depth-sorted tile lists, and runs a blending kernel (compiled when
available, pure numpy otherwise). The backward pass reruns the blend in
reverse per pixel, accumulating per-tile-entry gradient rows that are
then reduced per Gaussian in a fixed order and chained through the
projection math down to the raw scene parameters.
"""

import importlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry, kernels_py
from . import sh as shmod
from .splatting import sort_and_bin, splat_all

_compiled = None
_compiled_checked = False


def compiled_kernels():
    """The compiled kernel module, or None when unavailable."""
    global _compiled, _compiled_checked
    if not _compiled_checked:
        _compiled_checked = True
        try:
            _compiled = importlib.import_module("panosplat._kernels")
        except ImportError:
            _compiled = None
    return _compiled


def get_backend(name="auto"):
    if name == "python":
        return kernels_py
    mod = compiled_kernels()
    if mod is None:
        if name == "cython":
            raise RuntimeError("compiled kernels are not available")
        return kernels_py
    return mod


def backend_name(name="auto"):
    return "cython" if get_backend(name) is not kernels_py else "python"


@dataclass
class RenderConfig:
    tile_px: int = 16
    footprint_sigma: float = 3.0
    lowpass_px: float = 0.3          # low-pass floor in squared pixels
    background: tuple = (0.0, 0.0, 0.0)
    transmittance_min: float = 1e-4
    alpha_max: float = 0.99
    backend: str = "auto"
    num_threads: int = 0             # 0 = all cores

    def floor_for(self, height_px):
        """Low-pass diagonal term in squared tangent-plane units."""
        return self.lowpass_px * (np.pi / height_px) ** 2


@dataclass
class RenderOutput:
    color: np.ndarray                # (H, W, 3) in [0, 1]
    alpha: np.ndarray                # (H, W) accumulated opacity
    aux: Optional[np.ndarray] = None
    state: object = None


@dataclass
class ForwardState:
    """Everything the backward pass needs from a forward render."""

    cam: object
    config: RenderConfig
    splats: object
    grid: object
    dirs: np.ndarray
    raw_color: np.ndarray
    out_t: np.ndarray
    out_nlast: np.ndarray


_dirs_cache = {}


def _pixel_dirs(height_px, width_px):
    key = (height_px, width_px)
    if key not in _dirs_cache:
        if len(_dirs_cache) > 8:
            _dirs_cache.clear()
        _dirs_cache[key] = np.ascontiguousarray(
            geometry.pixel_grid_directions(height_px, width_px))
    return _dirs_cache[key]


def render(scene, cam, config=None, save_state=False):
    """Render the scene into an equirectangular panorama."""
    cfg = config if config is not None else RenderConfig()
    kern = get_backend(cfg.backend)
    floor = cfg.floor_for(cam.height_px)
    splats = splat_all(scene, cam, cfg.footprint_sigma, floor)
    grid = sort_and_bin(splats, cam.height_px, cam.width_px, cfg.tile_px)
    dirs = _pixel_dirs(cam.height_px, cam.width_px)
    bg = np.asarray(cfg.background, dtype=np.float64)
    raw, out_t, out_nlast = kern.forward_blend(
        dirs, grid.offsets, grid.entry_splat, splats.mu_prime,
        splats.basis_u, splats.basis_v, splats.conic, splats.opacity,
        splats.color, splats.row0, splats.row1, splats.col0, splats.ncols,
        bg, cfg.tile_px, grid.tiles_x, grid.tiles_y,
        cfg.footprint_sigma ** 2, geometry.EPS_FRONT,
        cfg.transmittance_min, cfg.alpha_max, cfg.num_threads)
    out = RenderOutput(color=np.clip(raw, 0.0, 1.0), alpha=1.0 - out_t)
    if save_state:
        out.state = ForwardState(cam, cfg, splats, grid, dirs, raw,
                                 out_t, out_nlast)
    return out


def zero_gradients(scene):
    return {name: np.zeros_like(arr) for name, arr in scene.params().items()}


def render_backward(scene, cam, grad_output, state=None, config=None):
    """Gradients of sum(grad_output * rendered color) w.r.t. scene params.

    Returns a dict with one array per raw parameter plus `tangent_grad_norm`
    (per-Gaussian norm of the accumulated tangent-plane positional
    gradient, the densification statistic) and a `visible` mask. Blend
    termination, footprint and clamp cutoffs act as zero-gradient gates.
    """
    cfg = config if config is not None else (
        state.config if state is not None else RenderConfig())
    if state is None:
        state = render(scene, cam, cfg, save_state=True).state
    splats, grid = state.splats, state.grid
    kern = get_backend(cfg.backend)
    grad_output = np.ascontiguousarray(grad_output, dtype=np.float64)

    # the [0,1] output clamp gates gradients where the raw blend exceeded 1
    gated = np.where(state.raw_color <= 1.0, grad_output, 0.0)
    gated = np.ascontiguousarray(gated)
    bg = np.asarray(cfg.background, dtype=np.float64)
    entry_grads = kern.backward_blend(
        state.dirs, grid.offsets, grid.entry_splat, splats.mu_prime,
        splats.basis_u, splats.basis_v, splats.conic, splats.opacity,
        splats.color, splats.row0, splats.row1, splats.col0, splats.ncols,
        bg, cfg.tile_px, grid.tiles_x, grid.tiles_y,
        cfg.footprint_sigma ** 2, geometry.EPS_FRONT,
        cfg.transmittance_min, cfg.alpha_max, gated,
        state.out_t, state.out_nlast, cfg.num_threads)

    # fixed-order reduction over tile entries keeps gradients bit-identical
    # across thread counts
    m = len(splats)
    per_splat = np.zeros((m, 18))
    for col in range(18):
        per_splat[:, col] = np.bincount(
            grid.entry_splat, weights=entry_grads[:, col], minlength=m)
    return _assemble_gradients(scene, cam, splats, per_splat)


def _assemble_gradients(scene, cam, splats, acc):
    """Chain per-splat blend gradients through the projection math."""
    idx = splats.gaussian_index
    mu = splats.mu_prime
    rho = splats.depth
    bu, bv = splats.basis_u, splats.basis_v
    w_cam = cam.rotation
    m = len(idx)

    rot_raw = scene.rotations[idx]
    rot_norm = np.linalg.norm(rot_raw, axis=1)
    q_hat = rot_raw / rot_norm[:, None]
    rot = geometry.quat_to_rotmat_batch(rot_raw)
    scales = np.exp(scene.log_scales[idx])
    rs = rot * scales[:, None, :]

    b_mat = np.stack([bu, bv], axis=2)                      # (M, 3, 2)
    jac = (np.eye(3)[None] - mu[:, :, None] * mu[:, None, :]) \
        / rho[:, None, None]
    jw = jac @ w_cam[None]
    k_mat = b_mat.swapaxes(1, 2) @ jw                       # (M, 2, 3)
    f_mat = k_mat @ rs                                      # (M, 2, 3)

    conic_mat = np.empty((m, 2, 2))
    conic_mat[:, 0, 0] = splats.conic[:, 0]
    conic_mat[:, 0, 1] = conic_mat[:, 1, 0] = splats.conic[:, 1]
    conic_mat[:, 1, 1] = splats.conic[:, 2]
    g_conic = np.empty((m, 2, 2))
    g_conic[:, 0, 0] = acc[:, 4]
    g_conic[:, 0, 1] = g_conic[:, 1, 0] = 0.5 * acc[:, 5]
    g_conic[:, 1, 1] = acc[:, 6]

    g_cov = -conic_mat @ g_conic @ conic_mat                # (M, 2, 2)
    g_f = 2.0 * g_cov @ f_mat                               # (M, 2, 3)

    kr = k_mat @ rot
    g_log_scales = np.einsum("mai,mai->mi", g_f, kr) * scales

    g_rot = (k_mat.swapaxes(1, 2) @ g_f) * scales[:, None, :]  # (M, 3, 3)
    qw, qx, qy, qz = q_hat.T
    g00, g01, g02 = g_rot[:, 0, 0], g_rot[:, 0, 1], g_rot[:, 0, 2]
    g10, g11, g12 = g_rot[:, 1, 0], g_rot[:, 1, 1], g_rot[:, 1, 2]
    g20, g21, g22 = g_rot[:, 2, 0], g_rot[:, 2, 1], g_rot[:, 2, 2]
    dq_hat = np.stack([
        2.0 * (qz * (g10 - g01) + qy * (g02 - g20) + qx * (g21 - g12)),
        2.0 * (qy * (g01 + g10) + qz * (g02 + g20)
               - 2.0 * qx * (g11 + g22) + qw * (g21 - g12)),
        2.0 * (qx * (g01 + g10) + qz * (g12 + g21)
               - 2.0 * qy * (g00 + g22) + qw * (g02 - g20)),
        2.0 * (qx * (g02 + g20) + qy * (g12 + g21)
               - 2.0 * qz * (g00 + g11) + qw * (g10 - g01)),
    ], axis=1)
    g_rotations = (dq_hat - q_hat * np.sum(q_hat * dq_hat, axis=1,
                                           keepdims=True)) / rot_norm[:, None]

    g_k = g_f @ rs.swapaxes(1, 2)                           # (M, 2, 3)
    g_b = jw @ g_k.swapaxes(1, 2)                           # (M, 3, 2)
    g_j = b_mat @ g_k @ w_cam.T[None]                       # (M, 3, 3)

    du_total = acc[:, 9:12] + g_b[:, :, 0]
    dv_total = acc[:, 12:15] + g_b[:, :, 1]
    d_u, d_v = geometry.tangent_frame_jacobians_batch(mu)
    g_j_sym_mu = np.einsum("mij,mj->mi", g_j + g_j.swapaxes(1, 2), mu)
    dmu = (np.einsum("mij,mi->mj", d_u, du_total)
           + np.einsum("mij,mi->mj", d_v, dv_total)
           - acc[:, 15:18]
           - g_j_sym_mu / rho[:, None])
    trace_gj = g_j[:, 0, 0] + g_j[:, 1, 1] + g_j[:, 2, 2]
    mu_gj_mu = np.einsum("mi,mij,mj->m", mu, g_j, mu)
    drho = -(trace_gj - mu_gj_mu) / (rho * rho)
    dt = (dmu - mu * np.sum(mu * dmu, axis=1, keepdims=True)) \
        / rho[:, None] + mu * drho[:, None]
    g_pos = dt @ w_cam

    # SH color chain: color gradient back to coefficients and, through the
    # view direction, to position
    g_sh_rows, g_dir = shmod.eval_colors_backward(
        scene.sh[idx], splats.view_dir, splats.color_mask, acc[:, 1:4])
    vd = splats.view_dir
    g_pos = g_pos + (g_dir - vd * np.sum(vd * g_dir, axis=1, keepdims=True)) \
        / splats.view_dist[:, None]

    op = splats.opacity
    g_logit = acc[:, 0] * op * (1.0 - op)

    grads = zero_gradients(scene)
    grads["positions"][idx] = g_pos
    grads["log_scales"][idx] = g_log_scales
    grads["rotations"][idx] = g_rotations
    grads["logit_opacities"][idx] = g_logit
    grads["sh"][idx] = g_sh_rows

    n = len(scene)
    tnorm = np.zeros(n)
    tnorm[idx] = np.hypot(acc[:, 7], acc[:, 8])
    visible = np.zeros(n, dtype=bool)
    visible[idx] = acc.any(axis=1)
    grads["tangent_grad_norm"] = tnorm
    grads["visible"] = visible
    return grads
