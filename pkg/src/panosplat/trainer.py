"""Optimization loop: photometric + layout losses, Adam, density control.

Training alternates gradient steps with periodic density control: Gaussians
whose average tangent-plane positional gradient exceeds a threshold are
cloned (if small) or split (if large), and near-transparent ones are pruned.
Anchors tying Gaussians to layout planes follow clones and splits.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .layout import SOURCE_LAYOUT
from .losses import psnr, total_loss, total_loss_backward
from .optim import Adam
from .renderer import RenderConfig, render, render_backward
from .scene import GaussianScene


@dataclass
class Anchors:
    """Per-anchored-Gaussian plane constraints.

    index : (A,) int64   row into the scene arrays
    u0    : (A, 3)       anchor point on the plane
    normal: (A, 3)       unit plane normal
    """

    index: np.ndarray
    u0: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.index = np.ascontiguousarray(self.index, dtype=np.int64)
        self.u0 = np.ascontiguousarray(self.u0, dtype=np.float64)
        self.normal = np.ascontiguousarray(self.normal, dtype=np.float64)

    def __len__(self):
        return len(self.index)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 3)),
                   np.zeros((0, 3)))


def anchors_from_cloud(cloud):
    """Anchors for the layout-sourced points of an initialization cloud.

    Assumes the scene was built with one Gaussian per cloud point, in order.
    """
    idx = np.nonzero(cloud.source == SOURCE_LAYOUT)[0]
    return Anchors(idx.astype(np.int64), cloud.points[idx].copy(),
                   cloud.normals[idx].copy())


@dataclass
class TrainConfig:
    iterations: int = 2000
    lambda1: float = 0.8
    lambda2: float = 0.2
    lambda3: float = 0.1
    lr_position: float = 1.6e-4
    lr_position_final: float = 0.01   # position lr decays to this fraction
    lr_sh: float = 2.5e-3
    sh_rest_divisor: float = 20.0
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    densify_from: int = 500
    densify_interval: int = 100
    densify_until: float = 0.75       # fraction of total iterations
    densify_grad_threshold: float = 2e-4
    prune_opacity: float = 0.005
    clone_scale_fraction: float = 0.01  # of scene extent
    split_scale_divisor: float = 1.6
    opacity_reset_interval: int = 0     # 0 disables
    psnr_every: int = 250
    seed: int = 0

    def validate(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lambda1 + self.lambda2 <= 0:
            raise ConfigError("need a positive photometric weight")
        if not 0 < self.split_scale_divisor:
            raise ConfigError("split_scale_divisor must be > 0")
        if self.densify_interval <= 0:
            raise ConfigError("densify_interval must be > 0")


def scene_extent(scene, views):
    """Radius of the bounding sphere of the camera centers and points."""
    pts = [scene.positions] if len(scene) else []
    pts.append(np.array([cam.center_world for cam, _ in views]))
    pts = np.concatenate(pts)
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    return float(np.max(np.linalg.norm(pts - center, axis=1))) or 1.0


def _sh_learning_rates(scene, cfg):
    lr = np.full((1, scene.sh.shape[1], 1), cfg.lr_sh / cfg.sh_rest_divisor)
    lr[0, 0, 0] = cfg.lr_sh
    return lr


def make_optimizer(scene, cfg):
    lrs = {
        "positions": cfg.lr_position,
        "log_scales": cfg.lr_scale,
        "rotations": cfg.lr_rotation,
        "logit_opacities": cfg.lr_opacity,
        "sh": _sh_learning_rates(scene, cfg),
    }
    return Adam(scene.params(), lrs)


def position_lr_scale(cfg, iteration):
    """Exponential decay from 1 to lr_position_final over the run."""
    if cfg.iterations <= 1:
        return 1.0
    frac = iteration / (cfg.iterations - 1)
    return float(cfg.lr_position_final ** frac)


def densify_and_prune(scene, anchors, optimizer, avg_grad, extent, cfg, rng):
    """One density-control step; returns (scene, anchors, stats).

    High-gradient small Gaussians are cloned in place; high-gradient large
    ones are split into two children with scale reduced by the split
    divisor and positions sampled from the parent. Gaussians below the
    opacity floor (and split parents) are removed. Anchors follow: a
    clone or split child of an anchored parent is re-anchored at its own
    position projected onto the parent plane.
    """
    n = len(scene)
    scales = scene.scales()
    max_scale = scales.max(axis=1) if n else np.zeros(0)
    high = avg_grad > cfg.densify_grad_threshold
    clone_mask = high & (max_scale <= cfg.clone_scale_fraction * extent)
    split_mask = high & (max_scale > cfg.clone_scale_fraction * extent)
    clone_idx = np.nonzero(clone_mask)[0]
    split_idx = np.nonzero(split_mask)[0]

    clones = scene.select(clone_idx)

    # children: two samples from the parent Gaussian, scale reduced
    parents = scene.select(np.repeat(split_idx, 2))
    offsets = rng.standard_normal((len(parents), 3))
    if len(parents):
        rot = parents.rotmats()
        local = offsets * parents.scales()
        parents.positions = parents.positions + np.einsum(
            "nij,nj->ni", rot, local)
        parents.log_scales = parents.log_scales - np.log(
            cfg.split_scale_divisor)

    merged = scene.concat(clones).concat(parents)
    optimizer.append_zeros(len(clones) + len(parents))

    # prune on the merged scene: low opacity everywhere, plus split parents
    drop = merged.opacities() < cfg.prune_opacity
    drop[split_idx] = True
    keep = ~drop
    new_of_merged = np.full(len(merged), -1, dtype=np.int64)
    new_of_merged[keep] = np.arange(int(keep.sum()))

    new_scene = merged.select(keep)
    optimizer.select(keep)

    # anchors: originals remap; clones and children inherit from anchored
    # parents with u0 moved to the projection of their own position
    anchor_of = np.full(n, -1, dtype=np.int64)
    anchor_of[anchors.index] = np.arange(len(anchors))
    rows_idx = []
    rows_u0 = []
    rows_n = []

    def inherit(parent_rows, merged_rows):
        a = anchor_of[parent_rows]
        has = a >= 0
        if not has.any():
            return
        a = a[has]
        m_rows = merged_rows[has]
        normal = anchors.normal[a]
        pos = merged.positions[m_rows]
        off = np.einsum("ij,ij->i", normal, pos - anchors.u0[a])
        rows_idx.append(m_rows)
        rows_u0.append(pos - off[:, None] * normal)
        rows_n.append(normal)

    rows_idx.append(anchors.index)
    rows_u0.append(anchors.u0)
    rows_n.append(anchors.normal)
    inherit(clone_idx, n + np.arange(len(clone_idx)))
    inherit(np.repeat(split_idx, 2),
            n + len(clone_idx) + np.arange(len(parents)))

    all_idx = np.concatenate(rows_idx)
    all_u0 = np.concatenate(rows_u0)
    all_n = np.concatenate(rows_n)
    remapped = new_of_merged[all_idx]
    alive = remapped >= 0
    new_anchors = Anchors(remapped[alive], all_u0[alive], all_n[alive])

    stats = {"cloned": int(len(clone_idx)), "split": int(len(split_idx)),
             "pruned": int(drop.sum()) - int(len(split_idx))}
    return new_scene, new_anchors, stats


@dataclass
class TrainResult:
    scene: GaussianScene
    anchors: Anchors
    metrics: list = field(default_factory=list)


def train(scene, views, anchors=None, config=None, render_config=None,
          callback=None):
    """Optimize a scene against (camera, target image) view pairs.

    Returns a TrainResult with the trained scene, final anchors and one
    metrics dict per iteration. Deterministic for a fixed seed. Raises
    TrainingDivergedError if the loss goes non-finite.
    """
    cfg = config or TrainConfig()
    cfg.validate()
    rcfg = render_config or RenderConfig()
    if not views:
        raise ConfigError("need at least one training view")
    for cam, img in views:
        if img.shape != (cam.height_px, cam.width_px, 3):
            raise ConfigError("target image does not match camera resolution")
    scene = scene.copy()
    anchors = anchors if anchors is not None else Anchors.empty()
    optimizer = make_optimizer(scene, cfg)
    rng = np.random.default_rng(cfg.seed)
    extent = scene_extent(scene, views)
    densify_until = int(cfg.densify_until * cfg.iterations)

    grad_accum = np.zeros(len(scene))
    seen_count = np.zeros(len(scene))
    metrics = []

    for it in range(cfg.iterations):
        view_id = int(rng.integers(len(views)))
        cam, target = views[view_id]
        out = render(scene, cam, rcfg, save_state=True)
        total, parts = total_loss(
            out.color, target, scene.positions, anchors,
            cfg.lambda1, cfg.lambda2, cfg.lambda3)
        if not np.isfinite(total):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {it}: l1={parts['l1']} "
                f"dssim={parts['dssim']} layout={parts['layout']} "
                f"view={view_id} gaussians={len(scene)}")
        grad_img, grad_pos = total_loss_backward(
            out.color, target, scene.positions, anchors,
            cfg.lambda1, cfg.lambda2, cfg.lambda3)
        grads = render_backward(scene, cam, grad_img, state=out.state,
                                config=rcfg)
        grads["positions"] = grads["positions"] + grad_pos

        skipped = optimizer.step(
            scene.params(), grads,
            {"positions": position_lr_scale(cfg, it)})
        norms = np.linalg.norm(scene.rotations, axis=1, keepdims=True)
        scene.rotations /= np.maximum(norms, 1e-12)

        grad_accum += grads["tangent_grad_norm"]
        seen_count += grads["visible"]

        row = {"iteration": it, "view": view_id, "total": float(total),
               "l1": float(parts["l1"]), "dssim": float(parts["dssim"]),
               "layout": float(parts["layout"]),
               "gaussians": len(scene), "skipped_grads": skipped}
        if cfg.psnr_every > 0 and (it % cfg.psnr_every == 0
                                   or it == cfg.iterations - 1):
            row["psnr"] = psnr(out.color, target)
        metrics.append(row)

        if (cfg.densify_from <= it <= densify_until
                and (it - cfg.densify_from) % cfg.densify_interval == 0
                and it > 0):
            avg = grad_accum / np.maximum(seen_count, 1.0)
            scene, anchors, stats = densify_and_prune(
                scene, anchors, optimizer, avg, extent, cfg, rng)
            grad_accum = np.zeros(len(scene))
            seen_count = np.zeros(len(scene))
            row.update(stats)

        if (cfg.opacity_reset_interval > 0 and it > 0
                and it % cfg.opacity_reset_interval == 0):
            cap = np.log(0.01 / 0.99)
            np.minimum(scene.logit_opacities, cap,
                       out=scene.logit_opacities)
            optimizer.reset_group("logit_opacities")

        if callback is not None:
            callback(it, scene, row)

    return TrainResult(scene, anchors, metrics)
