"""Analytic textured box room: exact panoramas, depths and boundaries.

Used as an independent ground truth for end-to-end tests and the bundled
demo dataset. The room is an axis-aligned box in the y-down world frame:
floor at y = 0, ceiling at y = -height, walls at x = +-half_x and
z = +-half_z. Face textures are smooth low-frequency sinusoids so the
panoramas are representable by a moderate number of Gaussians.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .geometry import pixel_grid_directions
from .layout import LayoutBoundary

# face order: x-, x+, y- (ceiling), y+ (floor), z-, z+
_FACE_AXES = np.array([0, 0, 1, 1, 2, 2])
_FACE_SIGNS = np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])


@dataclass
class BoxRoom:
    half_x: float = 2.5
    half_z: float = 2.0
    height: float = 2.8
    texture_seed: int = 0
    _tex: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.texture_seed)
        # per face and channel: 3 sinusoidal components (amp, fu, fv, phase)
        self._tex = np.empty((6, 3, 3, 4))
        self._tex[..., 0] = rng.uniform(0.04, 0.11, (6, 3, 3))
        self._tex[..., 1] = rng.uniform(0.4, 1.6, (6, 3, 3))
        self._tex[..., 2] = rng.uniform(0.4, 1.6, (6, 3, 3))
        self._tex[..., 3] = rng.uniform(0.0, 2.0 * np.pi, (6, 3, 3))
        self._base = rng.uniform(0.35, 0.65, (6, 3))

    @property
    def floor_y(self):
        return 0.0

    @property
    def ceil_y(self):
        return -self.height

    def face_color(self, face, u, v):
        """Texture color of a face at its 2D surface coordinates (meters)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        out = np.empty(u.shape + (3,))
        for ch in range(3):
            val = np.full(u.shape, self._base[face, ch])
            for comp in range(3):
                amp, fu, fv, phase = self._tex[face, ch, comp]
                val = val + amp * np.sin(fu * u + fv * v + phase)
            out[..., ch] = val
        return np.clip(out, 0.1, 0.9)

    def _hits(self, origin, dirs):
        """First box intersection for unit rays from an inside origin.

        Returns (t, face) arrays; dirs is (..., 3).
        """
        bounds = np.array([
            [-self.half_x, self.half_x],
            [self.ceil_y, self.floor_y],
            [-self.half_z, self.half_z],
        ])
        # nearest-plane lookup is only correct from strictly inside the box
        if np.any(origin <= bounds[:, 0]) or np.any(origin >= bounds[:, 1]):
            raise InvalidParameterError("camera center outside the box room")
        shape = dirs.shape[:-1]
        t_best = np.full(shape, np.inf)
        face_best = np.zeros(shape, dtype=np.int64)
        for face in range(6):
            axis = _FACE_AXES[face]
            sign = _FACE_SIGNS[face]
            plane = bounds[axis, 0] if sign < 0 else bounds[axis, 1]
            d = dirs[..., axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (plane - origin[axis]) / d
            hit = (d * sign > 1e-12) & (t > 0) & (t < t_best)
            t_best = np.where(hit, t, t_best)
            face_best = np.where(hit, face, face_best)
        if not np.all(np.isfinite(t_best)):
            raise InvalidParameterError("camera center outside the box room")
        return t_best, face_best

    def _face_uv(self, face, points):
        axis = _FACE_AXES[face]
        others = [a for a in range(3) if a != axis]
        return points[..., others[0]], points[..., others[1]]

    def render(self, cam):
        """Exact equirectangular panorama from the camera pose."""
        dirs_cam = pixel_grid_directions(cam.height_px, cam.width_px)
        dirs = dirs_cam.reshape(-1, 3) @ cam.rotation
        origin = cam.center_world
        t, face = self._hits(origin, dirs)
        pts = origin[None, :] + t[:, None] * dirs
        img = np.empty((len(dirs), 3))
        for f in range(6):
            sel = face == f
            if not np.any(sel):
                continue
            u, v = self._face_uv(f, pts[sel])
            img[sel] = self.face_color(f, u, v)
        return img.reshape(cam.height_px, cam.width_px, 3)

    def depth(self, cam):
        """Exact per-pixel distance panorama (meters)."""
        dirs_cam = pixel_grid_directions(cam.height_px, cam.width_px)
        dirs = dirs_cam.reshape(-1, 3) @ cam.rotation
        t, _ = self._hits(cam.center_world, dirs)
        return t.reshape(cam.height_px, cam.width_px)

    def boundary(self, cam):
        """Exact floor/ceiling boundary latitudes per image column.

        Valid for gravity-aligned (yaw-only) cameras.
        """
        if abs(cam.rotation[1, 1] - 1.0) > 1e-9 \
                or np.abs(cam.rotation[1, [0, 2]]).max() > 1e-9:
            raise InvalidParameterError(
                "analytic boundaries need a gravity-aligned camera")
        width_px = cam.width_px
        phi = (np.arange(width_px) + 0.5 - width_px / 2.0) \
            * 2.0 * np.pi / width_px
        d_cam = np.stack([np.sin(phi), np.zeros(width_px), np.cos(phi)],
                         axis=1)
        d_world = d_cam @ cam.rotation
        origin = cam.center_world
        tx = np.where(np.abs(d_world[:, 0]) > 1e-12,
                      (np.sign(d_world[:, 0]) * self.half_x - origin[0])
                      / np.where(np.abs(d_world[:, 0]) > 1e-12,
                                 d_world[:, 0], 1.0), np.inf)
        tz = np.where(np.abs(d_world[:, 2]) > 1e-12,
                      (np.sign(d_world[:, 2]) * self.half_z - origin[2])
                      / np.where(np.abs(d_world[:, 2]) > 1e-12,
                                 d_world[:, 2], 1.0), np.inf)
        rho = np.minimum(tx, tz)
        cam_height = self.floor_y - origin[1]
        if cam_height <= 0 or origin[1] <= self.ceil_y:
            raise InvalidParameterError("camera must be inside the room")
        floor_lat = -np.arctan2(cam_height, rho)
        ceil_lat = np.arctan2(origin[1] - self.ceil_y, rho)
        return LayoutBoundary(floor_lat, ceil_lat, float(cam_height))
