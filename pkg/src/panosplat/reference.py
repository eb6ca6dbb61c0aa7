"""Naive all-pixels-by-all-Gaussians renderer.

Shares the projection math with the tiled path but evaluates every
Gaussian at every pixel with no bounding boxes, no tiles and a single
global depth sort. Quadratic cost; exists to cross-check the tiled
renderer and for debugging.
"""

import numpy as np

from . import geometry
from .renderer import RenderConfig, RenderOutput
from .splatting import splat_all


def render_naive(scene, cam, config=None):
    cfg = config if config is not None else RenderConfig()
    floor = cfg.floor_for(cam.height_px)
    splats = splat_all(scene, cam, cfg.footprint_sigma, floor)
    order = np.lexsort((splats.gaussian_index, splats.depth))

    height_px, width_px = cam.height_px, cam.width_px
    dirs = geometry.pixel_grid_directions(height_px, width_px).reshape(-1, 3)
    n_pix = len(dirs)
    trans = np.ones(n_pix)
    accum = np.zeros((n_pix, 3))
    done = np.zeros(n_pix, dtype=bool)
    qf_cut = cfg.footprint_sigma ** 2

    for k in order:
        denom = dirs @ splats.mu_prime[k]
        live = ~done & (denom > geometry.EPS_FRONT)
        if not np.any(live):
            if np.all(done):
                break
            continue
        safe = np.where(denom > geometry.EPS_FRONT, denom, 1.0)
        inv = np.where(denom > geometry.EPS_FRONT, 1.0 / safe, 0.0)
        xu = (dirs @ splats.basis_u[k]) * inv
        xv = (dirs @ splats.basis_v[k]) * inv
        ca, cb, cc = splats.conic[k]
        qf = ca * xu * xu + 2.0 * cb * xu * xv + cc * xv * xv
        live &= qf <= qf_cut
        w = np.exp(-0.5 * np.minimum(qf, qf_cut))
        alpha = np.minimum(splats.opacity[k] * w, cfg.alpha_max)
        test_t = trans * (1.0 - alpha)
        trip = live & (test_t < cfg.transmittance_min)
        appl = live & ~trip
        weight = alpha[appl] * trans[appl]
        accum[appl] += splats.color[k][None, :] * weight[:, None]
        trans[appl] = test_t[appl]
        done |= trip

    bg = np.asarray(cfg.background, dtype=np.float64)
    raw = accum + bg[None, :] * trans[:, None]
    color = np.clip(raw, 0.0, 1.0).reshape(height_px, width_px, 3)
    alpha = (1.0 - trans).reshape(height_px, width_px)
    return RenderOutput(color=color, alpha=alpha)
