"""Scene checkpoints: Gaussian parameters as PLY plus a JSON sidecar.

The PLY holds one vertex per Gaussian with float64 properties (bit-exact
round trips); the sidecar holds everything that is not per-Gaussian:
format version, SH degree, iteration counter, layout anchors and the
training configuration. Initialization point clouds use a compact float32
PLY with colors and a source tag.
"""

import dataclasses
import json
import os

import numpy as np

from .errors import CheckpointError
from .layout import InitPointCloud
from .scene import GaussianScene

CHECKPOINT_VERSION = 1


def _sidecar_path(ply_path):
    stem, _ = os.path.splitext(str(ply_path))
    return stem + ".json"


def save_cloud(path, cloud):
    """Write an initialization cloud as float32 PLY with uchar colors."""
    from .ply import write_ply

    cols = {
        "x": cloud.points[:, 0].astype(np.float32),
        "y": cloud.points[:, 1].astype(np.float32),
        "z": cloud.points[:, 2].astype(np.float32),
        "nx": cloud.normals[:, 0].astype(np.float32),
        "ny": cloud.normals[:, 1].astype(np.float32),
        "nz": cloud.normals[:, 2].astype(np.float32),
        "red": np.round(np.clip(cloud.colors[:, 0], 0, 1) * 255).astype(np.uint8),
        "green": np.round(np.clip(cloud.colors[:, 1], 0, 1) * 255).astype(np.uint8),
        "blue": np.round(np.clip(cloud.colors[:, 2], 0, 1) * 255).astype(np.uint8),
        "source": cloud.source.astype(np.uint8),
    }
    write_ply(path, cols, comments=("panosplat initialization cloud",))


def load_cloud(path):
    """Read a cloud written by save_cloud."""
    from .ply import read_ply

    cols = read_ply(path)
    try:
        points = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
        normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
        colors = np.stack([cols["red"], cols["green"], cols["blue"]],
                          axis=1).astype(np.float64) / 255.0
    except KeyError as exc:
        raise CheckpointError(f"cloud PLY missing property {exc}") from exc
    source = cols.get("source", np.ones(len(points), dtype=np.uint8))
    return InitPointCloud(points.astype(np.float64),
                          normals.astype(np.float64), colors, source)


def _scene_columns(scene):
    cols = {
        "x": scene.positions[:, 0], "y": scene.positions[:, 1],
        "z": scene.positions[:, 2],
        "scale_0": scene.log_scales[:, 0], "scale_1": scene.log_scales[:, 1],
        "scale_2": scene.log_scales[:, 2],
        "rot_0": scene.rotations[:, 0], "rot_1": scene.rotations[:, 1],
        "rot_2": scene.rotations[:, 2], "rot_3": scene.rotations[:, 3],
        "opacity": scene.logit_opacities,
    }
    for ch in range(3):
        cols[f"f_dc_{ch}"] = scene.sh[:, 0, ch]
    k = scene.sh.shape[1]
    i = 0
    for ch in range(3):          # channel-major rest coefficients
        for j in range(1, k):
            cols[f"f_rest_{i}"] = scene.sh[:, j, ch]
            i += 1
    return cols


def save_checkpoint(path, scene, anchors=None, iteration=0,
                    train_config=None):
    """Write scene PLY and JSON sidecar; returns the sidecar path."""
    from .ply import write_ply

    write_ply(path, _scene_columns(scene),
              comments=("panosplat gaussian scene",))
    meta = {
        "version": CHECKPOINT_VERSION,
        "sh_degree": scene.sh_degree,
        "gaussian_count": len(scene),
        "iteration": int(iteration),
    }
    if anchors is not None and len(anchors):
        meta["anchors"] = {
            "index": anchors.index.tolist(),
            "u0": anchors.u0.tolist(),
            "normal": anchors.normal.tolist(),
        }
    if train_config is not None:
        meta["train_config"] = dataclasses.asdict(train_config)
    sidecar = _sidecar_path(path)
    with open(sidecar, "w") as f:
        json.dump(meta, f, indent=1)
    return sidecar


def load_checkpoint(path):
    """Read a checkpoint; returns (scene, anchors, meta dict).

    anchors is None when the sidecar has none. Raises CheckpointError on
    version mismatch, truncation or missing properties.
    """
    from .ply import read_ply
    from .trainer import Anchors

    cols = read_ply(path)
    sidecar = _sidecar_path(path)
    try:
        with open(sidecar) as f:
            meta = json.load(f)
    except FileNotFoundError:
        meta = None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt sidecar {sidecar}: {exc}") from exc

    if meta is not None:
        version = meta.get("version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {version} needs migration; "
                f"this build reads version {CHECKPOINT_VERSION}")

    try:
        n = len(cols["x"])
        rest = sorted((k for k in cols if k.startswith("f_rest_")),
                      key=lambda s: int(s.split("_")[-1]))
        k_coeffs = 1 + len(rest) // 3
        sh = np.empty((n, k_coeffs, 3))
        for ch in range(3):
            sh[:, 0, ch] = cols[f"f_dc_{ch}"]
        i = 0
        for ch in range(3):
            for j in range(1, k_coeffs):
                sh[:, j, ch] = cols[rest[i]]
                i += 1
        scene = GaussianScene(
            np.stack([cols["x"], cols["y"], cols["z"]], axis=1),
            np.stack([cols[f"scale_{a}"] for a in range(3)], axis=1),
            np.stack([cols[f"rot_{a}"] for a in range(4)], axis=1),
            cols["opacity"], sh)
    except KeyError as exc:
        raise CheckpointError(f"scene PLY missing property {exc}") from exc

    if meta is not None and meta.get("gaussian_count", n) != n:
        raise CheckpointError(
            f"sidecar expects {meta['gaussian_count']} gaussians, "
            f"PLY holds {n}")

    anchors = None
    if meta is not None and "anchors" in meta:
        a = meta["anchors"]
        anchors = Anchors(np.asarray(a["index"], dtype=np.int64),
                          np.asarray(a["u0"], dtype=np.float64),
                          np.asarray(a["normal"], dtype=np.float64))
        if len(anchors) and anchors.index.max() >= n:
            raise CheckpointError("anchor index out of range")
    return scene, anchors, meta or {}
