"""Shared builders for test scenes, cameras, and finite differences."""
import numpy as np

from panosplat.geometry import PanoramaCamera, yaw_matrix
from panosplat.scene import GaussianScene


def cam_at(center, yaw=0.0, height_px=64, width_px=None):
    """Camera whose world center is `center`, rotated by `yaw` about up."""
    if width_px is None:
        width_px = 2 * height_px
    rot = yaw_matrix(float(yaw))
    center = np.asarray(center, dtype=np.float64)
    return PanoramaCamera(rotation=rot, translation=-rot @ center,
                          height_px=height_px, width_px=width_px)


def random_camera(rng, height_px=64):
    q = rng.normal(0.0, 1.0, 4)
    q /= np.linalg.norm(q)
    return PanoramaCamera.from_quaternion(q, rng.normal(0.0, 0.3, 3),
                                          height_px, 2 * height_px)


def random_scene(rng, n, spread=2.0, scale_range=(0.02, 0.5),
                 sh_degree=0):
    """Scene with randomized positions, scales, rotations, opacities."""
    pts = rng.normal(0.0, spread, (n, 3))
    scene = GaussianScene.from_points(pts, rng.uniform(0.0, 1.0, (n, 3)),
                                      sh_degree=sh_degree)
    scene.log_scales[:] = np.log(rng.uniform(*scale_range, (n, 3)))
    scene.logit_opacities[:] = rng.normal(0.5, 1.5, n)
    scene.rotations[:] = rng.normal(0.0, 1.0, (n, 4))
    scene.rotations /= np.linalg.norm(scene.rotations, axis=1, keepdims=True)
    if sh_degree > 0:
        scene.sh[:, 1:, :] = rng.normal(0.0, 0.1,
                                        scene.sh[:, 1:, :].shape)
    return scene


def central_diff(f, x, h):
    """Central finite-difference gradient of scalar f at flat array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        old = xf[i]
        xf[i] = old + h
        fp = f(x)
        xf[i] = old - h
        fm = f(x)
        xf[i] = old
        flat[i] = (fp - fm) / (2.0 * h)
    return grad


def box_layout(room):
    """RoomLayout3D of a BoxRoom's rectangle."""
    from panosplat.layout import RoomLayout3D
    poly = np.array([[-room.half_x, -room.half_z],
                     [room.half_x, -room.half_z],
                     [room.half_x, room.half_z],
                     [-room.half_x, room.half_z]])
    return RoomLayout3D(poly, room.floor_y, room.ceil_y)
