"""Structure-of-arrays container for the Gaussian scene parameters.

All parameters are stored unconstrained: scale in log-space, opacity in
logit-space, rotation as an unnormalized quaternion normalized on read.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit, logit

from . import sh as shmod
from .errors import InvalidParameterError
from .geometry import quat_to_rotmat_batch

PARAM_NAMES = ("positions", "log_scales", "rotations", "logit_opacities", "sh")


@dataclass
class GaussianScene:
    positions: np.ndarray        # (N, 3) world
    log_scales: np.ndarray       # (N, 3)
    rotations: np.ndarray        # (N, 4) raw (w, x, y, z)
    logit_opacities: np.ndarray  # (N,)
    sh: np.ndarray               # (N, K, 3)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float64)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64)
        self.logit_opacities = np.ascontiguousarray(
            self.logit_opacities, dtype=np.float64)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64)
        n = len(self.positions)
        if (self.positions.shape != (n, 3) or self.log_scales.shape != (n, 3)
                or self.rotations.shape != (n, 4)
                or self.logit_opacities.shape != (n,)
                or self.sh.ndim != 3 or self.sh.shape[0] != n
                or self.sh.shape[2] != 3):
            raise InvalidParameterError("inconsistent scene array shapes")
        shmod.degree_from_coeffs(self.sh.shape[1])

    def __len__(self):
        return len(self.positions)

    @property
    def sh_degree(self):
        return shmod.degree_from_coeffs(self.sh.shape[1])

    def scales(self):
        return np.exp(self.log_scales)

    def opacities(self):
        return expit(self.logit_opacities)

    def unit_rotations(self):
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        return self.rotations / norms

    def rotmats(self):
        return quat_to_rotmat_batch(self.rotations)

    def view_directions(self, cam_center):
        """Unit directions camera center -> Gaussian centers, with distances."""
        delta = self.positions - np.asarray(cam_center, dtype=np.float64)
        dist = np.linalg.norm(delta, axis=1)
        safe = np.maximum(dist, 1e-12)
        return delta / safe[:, None], dist

    def colors_toward(self, cam_center):
        """View-dependent colors plus the data needed for the backward pass."""
        dirs, dist = self.view_directions(cam_center)
        colors, mask = shmod.eval_colors(self.sh, dirs)
        return colors, mask, dirs, dist

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return GaussianScene(*(getattr(self, name).copy() for name in PARAM_NAMES))

    def select(self, index):
        """Sub-scene of the rows selected by a boolean mask or index array."""
        return GaussianScene(*(getattr(self, name)[index] for name in PARAM_NAMES))

    def concat(self, other):
        if other.sh.shape[1] != self.sh.shape[1]:
            raise InvalidParameterError("SH degree mismatch in concat")
        return GaussianScene(*(
            np.concatenate([getattr(self, name), getattr(other, name)])
            for name in PARAM_NAMES))

    @classmethod
    def empty(cls, sh_degree=0):
        k = shmod.DEGREE_SIZES[sh_degree]
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)),
                   np.zeros((0,)), np.zeros((0, k, 3)))

    @classmethod
    def from_points(cls, points, colors, sh_degree=0, init_opacity=0.1):
        """Initialize one Gaussian per point.

        Scale is isotropic from the mean squared distance to the 3 nearest
        neighbors; color seeds the SH DC term; rotation starts at identity.
        """
        points = np.asarray(points, dtype=np.float64)
        colors = np.asarray(colors, dtype=np.float64)
        n = len(points)
        if n == 0:
            return cls.empty(sh_degree)
        if n > 3:
            tree = cKDTree(points)
            dist, _ = tree.query(points, k=4)
            mean_sq = np.mean(dist[:, 1:] ** 2, axis=1)
        else:
            mean_sq = np.full(n, 0.01)
        mean_sq = np.maximum(mean_sq, 1e-14)
        log_scales = np.repeat(
            np.log(np.sqrt(mean_sq))[:, None], 3, axis=1)
        rotations = np.zeros((n, 4))
        rotations[:, 0] = 1.0
        logit_opacities = np.full(n, logit(init_opacity))
        k = shmod.DEGREE_SIZES[sh_degree]
        sh = np.zeros((n, k, 3))
        sh[:, 0, :] = (colors - 0.5) / shmod.C0
        return cls(points.copy(), log_scales, rotations, logit_opacities, sh)
