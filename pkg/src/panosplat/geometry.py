"""Closed-form geometry for panoramic Gaussian splatting.

Conventions used everywhere in this package:

- The camera frame is right-handed with y pointing down, so positive
  latitude (upward) maps to smaller row indices.
- Latitude/longitude of a camera-space direction t:
      theta = atan2(-t1, sqrt(t0^2 + t2^2))   in [-pi/2, pi/2]
      phi   = atan2(t0, t2)                   in (-pi, pi]
- Continuous pixel coordinates:
      r = -theta * H / pi + H / 2
      c = phi * W / (2 pi) + W / 2
  Integer pixel (i, j) has its center at continuous (i + 0.5, j + 0.5).
- A Gaussian with camera-space center t is splatted on the plane tangent
  to the unit sphere at mu' = t / ||t||, using the projection
      proj(x) = x / (mu'^T x)
  which is exact for unit mu' and keeps the footprint Gaussian under the
  local affine approximation.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindTangentPlaneError,
    GaussianAtCameraError,
    InvalidParameterError,
)

# Culling thresholds. Gaussians closer than EPS_NEAR to the camera center
# are skipped for that view; ray/plane denominators below EPS_FRONT are
# treated as behind the tangent plane and contribute nothing.
EPS_NEAR = 1e-8
EPS_FRONT = 1e-6

# y-down camera frame: "up" is the -y direction.
UP = np.array([0.0, -1.0, 0.0])


def quat_to_rotmat(q):
    """Rotation matrix from a (w, x, y, z) quaternion, normalized on read."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise InvalidParameterError(f"degenerate quaternion {q!r}")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_rotmat_batch(q):
    """Vectorized quat_to_rotmat for an (N, 4) array of (w, x, y, z) rows."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=1, keepdims=True)
    if not np.all(np.isfinite(n)) or np.any(n < 1e-12):
        raise InvalidParameterError("degenerate quaternion in batch")
    w, x, y, z = (q / n).T
    out = np.empty((len(q), 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def yaw_matrix(angle):
    """Rotation about the vertical axis that adds `angle` to longitude."""
    ca, sa = np.cos(angle), np.sin(angle)
    return np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])


def skew(a):
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    return np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])


@dataclass
class PanoramaCamera:
    """World-to-camera rigid transform plus equirectangular resolution.

    A world point x maps to camera space as t = rotation @ x + translation.
    """

    rotation: np.ndarray
    translation: np.ndarray
    height_px: int
    width_px: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise InvalidParameterError("camera transform has wrong shape")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9 or abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise InvalidParameterError("camera rotation is not a proper rotation")
        if self.width_px != 2 * self.height_px:
            raise InvalidParameterError(
                f"equirectangular aspect requires W = 2H, got {self.height_px}x{self.width_px}"
            )

    @classmethod
    def from_quaternion(cls, q, t, height_px, width_px):
        return cls(quat_to_rotmat(q), np.asarray(t, dtype=np.float64),
                   height_px, width_px)

    def world_to_camera(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def camera_to_world(self, points):
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    @property
    def center_world(self):
        """Camera center in world coordinates (-R^T d)."""
        return -self.rotation.T @ self.translation

    def with_resolution(self, height_px, width_px):
        return PanoramaCamera(self.rotation.copy(), self.translation.copy(),
                              height_px, width_px)


@dataclass
class TangentFrame:
    """Orthonormal frame of the tangent plane at mu' on the unit sphere."""

    mu_prime: np.ndarray
    basis_u: np.ndarray
    basis_v: np.ndarray


@dataclass
class Gaussian3D:
    """One scene primitive with raw (unconstrained) parameters.

    `scale` is stored in log-space, `opacity` pre-sigmoid, `rotation` as an
    unnormalized quaternion normalized on read. `color` holds spherical
    harmonics coefficients with shape (K, 3), K in {1, 4, 9, 16}.
    """

    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    logit_opacity: float
    color: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))


def build_covariance(scale, rotation):
    """3x3 covariance R S S^T R^T from linear scale and quaternion."""
    scale = np.asarray(scale, dtype=np.float64)
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
        raise InvalidParameterError(f"scale must be finite positive, got {scale!r}")
    R = quat_to_rotmat(rotation)
    RS = R * scale[None, :]
    return RS @ RS.T


def project_to_sphere(t):
    """Normalize a camera-space point onto the unit sphere."""
    t = np.asarray(t, dtype=np.float64)
    n = np.linalg.norm(t)
    if n <= EPS_NEAR:
        raise GaussianAtCameraError(f"point at distance {n} from camera center")
    return t / n


def tangent_project(t, mu_prime):
    """Project t onto the plane tangent to the unit sphere at mu'.

    Returns t * (mu'^T mu') / (mu'^T t), the intersection of the ray
    through t with the tangent plane.
    """
    t = np.asarray(t, dtype=np.float64)
    mu_prime = np.asarray(mu_prime, dtype=np.float64)
    denom = float(mu_prime @ t)
    if denom <= EPS_FRONT:
        raise BehindTangentPlaneError(f"mu'.t = {denom} <= {EPS_FRONT}")
    return t * (float(mu_prime @ mu_prime) / denom)


def tangent_jacobian(t, mu_prime):
    """Jacobian of tangent_project at t for unit mu'.

    J = [(mu'^T t) I - t mu'^T] / (mu'^T t)^2. Satisfies J @ t = 0 since
    the projection is invariant along the ray through t.
    """
    t = np.asarray(t, dtype=np.float64)
    mu_prime = np.asarray(mu_prime, dtype=np.float64)
    denom = float(mu_prime @ t)
    if denom <= EPS_FRONT:
        raise BehindTangentPlaneError(f"mu'.t = {denom} <= {EPS_FRONT}")
    return (denom * np.eye(3) - np.outer(t, mu_prime)) / (denom * denom)


def tangent_frame(mu_prime):
    """Deterministic orthonormal basis of the tangent plane at mu'.

    basis_u = normalize(UP x mu'), falling back to (1, 0, 0) when mu' is
    within 1e-6 of +/-UP; basis_v = mu' x basis_u.
    """
    mu_prime = np.asarray(mu_prime, dtype=np.float64)
    u_raw = np.cross(UP, mu_prime)
    n = np.linalg.norm(u_raw)
    if n < 1e-6:
        basis_u = np.array([1.0, 0.0, 0.0])
    else:
        basis_u = u_raw / n
    basis_v = np.cross(mu_prime, basis_u)
    return TangentFrame(mu_prime, basis_u, basis_v)


def tangent_frames_batch(mu_prime):
    """Vectorized tangent_frame: (N,3) -> basis_u (N,3), basis_v (N,3)."""
    mu_prime = np.asarray(mu_prime, dtype=np.float64)
    u_raw = np.cross(np.broadcast_to(UP, mu_prime.shape), mu_prime)
    n = np.linalg.norm(u_raw, axis=1)
    polar = n < 1e-6
    safe = np.where(polar, 1.0, n)
    basis_u = u_raw / safe[:, None]
    basis_u[polar] = (1.0, 0.0, 0.0)
    basis_v = np.cross(mu_prime, basis_u)
    return basis_u, basis_v


def tangent_frame_jacobians(mu_prime):
    """Derivatives (du/dmu', dv/dmu') of the tangent basis, 3x3 each.

    In the polar fallback region basis_u is constant, so du/dmu' = 0.
    """
    mu_prime = np.asarray(mu_prime, dtype=np.float64)
    u_raw = np.cross(UP, mu_prime)
    n = np.linalg.norm(u_raw)
    if n < 1e-6:
        basis_u = np.array([1.0, 0.0, 0.0])
        du = np.zeros((3, 3))
    else:
        basis_u = u_raw / n
        du = (np.eye(3) - np.outer(basis_u, basis_u)) @ skew(UP) / n
    dv = -skew(basis_u) + skew(mu_prime) @ du
    return du, dv


def skew_batch(a):
    """Cross-product matrices for (N, 3) rows, shape (N, 3, 3)."""
    a = np.asarray(a, dtype=np.float64)
    out = np.zeros((len(a), 3, 3))
    out[:, 0, 1] = -a[:, 2]
    out[:, 0, 2] = a[:, 1]
    out[:, 1, 0] = a[:, 2]
    out[:, 1, 2] = -a[:, 0]
    out[:, 2, 0] = -a[:, 1]
    out[:, 2, 1] = a[:, 0]
    return out


def tangent_frame_jacobians_batch(mu_prime):
    """Vectorized tangent_frame_jacobians: (N,3) -> (N,3,3), (N,3,3)."""
    mu_prime = np.asarray(mu_prime, dtype=np.float64)
    u_raw = np.cross(np.broadcast_to(UP, mu_prime.shape), mu_prime)
    n = np.linalg.norm(u_raw, axis=1)
    polar = n < 1e-6
    safe = np.where(polar, 1.0, n)
    u = u_raw / safe[:, None]
    u[polar] = (1.0, 0.0, 0.0)
    s_up = skew(UP)
    du = (np.eye(3)[None] - u[:, :, None] * u[:, None, :]) @ s_up[None] \
        / safe[:, None, None]
    du[polar] = 0.0
    dv = -skew_batch(u) + skew_batch(mu_prime) @ du
    return du, dv


def splat_covariance(sigma, camera_rot, jac, frame, floor=0.0):
    """2x2 tangent-plane covariance of a projected Gaussian.

    cov2d = B^T (J W Sigma W^T J^T) B + floor * I, with B = [basis_u basis_v].
    `floor` is the low-pass diagonal term in squared tangent-plane units.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    B = np.stack([frame.basis_u, frame.basis_v], axis=1)
    JW = jac @ camera_rot
    M = B.T @ JW
    cov = M @ sigma @ M.T
    cov = 0.5 * (cov + cov.T)
    cov[0, 0] += floor
    cov[1, 1] += floor
    return cov


def spherical_map(t_prime):
    """(theta, phi) latitude/longitude of a camera-space direction."""
    t = np.asarray(t_prime, dtype=np.float64)
    theta = np.arctan2(-t[1], np.hypot(t[0], t[2]))
    phi = np.arctan2(t[0], t[2])
    return float(theta), float(phi)


def spherical_map_batch(t):
    """Vectorized spherical_map for an (N, 3) array."""
    t = np.asarray(t, dtype=np.float64)
    theta = np.arctan2(-t[:, 1], np.hypot(t[:, 0], t[:, 2]))
    phi = np.arctan2(t[:, 0], t[:, 2])
    return theta, phi


def angles_to_pixel(theta, phi, height_px, width_px):
    """Continuous (row, col) pixel coordinates of (theta, phi)."""
    r = -theta * height_px / np.pi + height_px / 2.0
    c = phi * width_px / (2.0 * np.pi) + width_px / 2.0
    return r, c


def pixel_to_direction(r, c, height_px, width_px):
    """Unit direction of a continuous pixel coordinate (inverse mapping)."""
    theta = (height_px / 2.0 - np.asarray(r, dtype=np.float64)) * np.pi / height_px
    phi = (np.asarray(c, dtype=np.float64) - width_px / 2.0) * 2.0 * np.pi / width_px
    ct = np.cos(theta)
    return np.stack([ct * np.sin(phi), -np.sin(theta), ct * np.cos(phi)], axis=-1)


def pixel_grid_directions(height_px, width_px):
    """Unit directions of all pixel centers, shape (H, W, 3)."""
    rows = np.arange(height_px) + 0.5
    cols = np.arange(width_px) + 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return pixel_to_direction(rr, cc, height_px, width_px)
