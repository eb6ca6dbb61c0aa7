"""Scene manifest: JSON index of panoramas, poses and prior files.

Schema (paths are relative to the manifest file)::

    {
      "camera_height_m": 1.6,
      "views": [
        {
          "id": "view0",
          "image": "images/view0.png",
          "pose": {"qw": 1, "qx": 0, "qy": 0, "qz": 0,
                   "tx": 0, "ty": 0, "tz": 0},
          "layout": "layouts/view0.json",      // optional boundary file
          "depth": "depths/view0.pfm"          // optional depth panorama
        }
      ],
      "train": ["view0"],
      "test": []
    }

Poses are world-to-camera in the right-handed y-down frame. A boundary
file holds {"floor_lat": [...], "ceil_lat": [...]} per image column in
radians.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ManifestError
from .geometry import PanoramaCamera
from .layout import LayoutBoundary

_POSE_KEYS = ("qw", "qx", "qy", "qz", "tx", "ty", "tz")


@dataclass
class ViewRecord:
    view_id: str
    image_path: str
    quaternion: np.ndarray      # (4,) unit (w, x, y, z)
    translation: np.ndarray     # (3,)
    layout_path: str = None
    depth_path: str = None

    def camera(self, height_px, width_px):
        return PanoramaCamera.from_quaternion(
            self.quaternion, self.translation, height_px, width_px)


@dataclass
class SceneManifest:
    camera_height_m: float
    views: list
    train_ids: list
    test_ids: list
    root: str = "."

    def view(self, view_id):
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise ManifestError(f"unknown view id {view_id!r}")

    def split(self, name):
        if name == "train":
            ids = self.train_ids
        elif name == "test":
            ids = self.test_ids
        else:
            raise ManifestError(f"unknown split {name!r} (train or test)")
        return [self.view(i) for i in ids]


def _require(cond, msg):
    if not cond:
        raise ManifestError(msg)


def load_manifest(path):
    """Parse and fully validate a manifest; all file references must exist."""
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ManifestError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid JSON in {path}: {exc}") from exc

    root = os.path.dirname(os.path.abspath(path))
    _require(isinstance(data, dict), f"{path}: top level must be an object")
    _require("camera_height_m" in data,
             f"{path}: missing camera_height_m")
    height = data["camera_height_m"]
    _require(isinstance(height, (int, float)) and height > 0,
             f"{path}: camera_height_m must be a positive number")
    raw_views = data.get("views")
    _require(isinstance(raw_views, list) and raw_views,
             f"{path}: views must be a non-empty list")

    views = []
    seen = set()
    for i, rv in enumerate(raw_views):
        where = f"{path}: views[{i}]"
        _require(isinstance(rv, dict), f"{where} must be an object")
        vid = rv.get("id")
        _require(isinstance(vid, str) and vid, f"{where}: missing id")
        _require(vid not in seen, f"{where}: duplicate view id {vid!r}")
        seen.add(vid)
        _require(isinstance(rv.get("image"), str),
                 f"{where}: missing image path")
        pose = rv.get("pose")
        _require(isinstance(pose, dict), f"{where}: missing pose")
        missing = [k for k in _POSE_KEYS if not isinstance(
            pose.get(k), (int, float))]
        _require(not missing, f"{where}: pose missing {missing}")
        q = np.array([pose[k] for k in _POSE_KEYS[:4]], dtype=np.float64)
        t = np.array([pose[k] for k in _POSE_KEYS[4:]], dtype=np.float64)
        norm = float(np.linalg.norm(q))
        _require(abs(norm - 1.0) < 1e-3,
                 f"{where}: pose quaternion norm {norm:.6f}, expected 1")

        paths = {"image": os.path.join(root, rv["image"])}
        for key in ("layout", "depth"):
            if rv.get(key) is not None:
                _require(isinstance(rv[key], str),
                         f"{where}: {key} must be a path string")
                paths[key] = os.path.join(root, rv[key])
        for key, p in paths.items():
            _require(os.path.isfile(p), f"{where}: {key} file not found: {p}")
        views.append(ViewRecord(vid, paths["image"], q / norm, t,
                                paths.get("layout"), paths.get("depth")))

    def id_list(key):
        ids = data.get(key, [])
        _require(isinstance(ids, list), f"{path}: {key} must be a list")
        for vid in ids:
            _require(vid in seen, f"{path}: {key} references unknown id {vid!r}")
        return list(ids)

    train_ids = id_list("train")
    test_ids = id_list("test")
    overlap = set(train_ids) & set(test_ids)
    _require(not overlap, f"{path}: train/test overlap: {sorted(overlap)}")
    if not train_ids:
        train_ids = [v.view_id for v in views if v.view_id not in test_ids]
    return SceneManifest(float(height), views, train_ids, test_ids, root)


def load_boundary(path, camera_height):
    """Read a per-column boundary JSON written by save_boundary."""
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid boundary JSON in {path}: {exc}") from exc
    for key in ("floor_lat", "ceil_lat"):
        if not isinstance(data.get(key), list):
            raise ManifestError(f"{path}: missing {key} array")
    return LayoutBoundary(np.asarray(data["floor_lat"], dtype=np.float64),
                          np.asarray(data["ceil_lat"], dtype=np.float64),
                          float(camera_height))


def save_boundary(path, boundary):
    with open(path, "w") as f:
        json.dump({"floor_lat": boundary.floor_lat.tolist(),
                   "ceil_lat": boundary.ceil_lat.tolist()}, f)
