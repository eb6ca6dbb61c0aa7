"""Room-layout priors: boundary lifting, 2D union, sampling, depth fusion.

World frame is right-handed y-down (matching the camera convention), so
the floor plane has the largest y and the ceiling the smallest. Floor
polygons live in the horizontal (x, z) plane.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.draw import polygon as draw_polygon
from skimage.measure import approximate_polygon, find_contours

from .errors import InvalidBoundaryError, InvalidParameterError
from .geometry import pixel_grid_directions

SOURCE_LAYOUT = 0
SOURCE_DEPTH = 1


@dataclass
class LayoutBoundary:
    """Per-column floor/ceiling boundary latitudes of one panorama."""

    floor_lat: np.ndarray  # (W,) radians, negative (below horizon)
    ceil_lat: np.ndarray   # (W,) radians, positive
    camera_height: float   # meters above the floor

    def __post_init__(self):
        self.floor_lat = np.asarray(self.floor_lat, dtype=np.float64)
        self.ceil_lat = np.asarray(self.ceil_lat, dtype=np.float64)
        if self.floor_lat.shape != self.ceil_lat.shape \
                or self.floor_lat.ndim != 1:
            raise InvalidBoundaryError("boundary arrays must be 1D same length")
        if self.camera_height <= 0:
            raise InvalidBoundaryError("camera height must be positive")
        if np.any(self.ceil_lat <= 0):
            raise InvalidBoundaryError("ceiling boundary must be above horizon")


@dataclass
class RoomLayout3D:
    """Atlanta-world layout: vertical-wall polygon, horizontal floor/ceiling."""

    floor_polygon: np.ndarray  # (P, 2) world (x, z), counter-clockwise
    floor_y: float
    ceil_y: float

    def __post_init__(self):
        self.floor_polygon = np.asarray(self.floor_polygon, dtype=np.float64)
        if self.floor_polygon.ndim != 2 or self.floor_polygon.shape[1] != 2 \
                or len(self.floor_polygon) < 3:
            raise InvalidParameterError("floor polygon needs >= 3 (x, z) points")
        if self.ceil_y >= self.floor_y:
            raise InvalidParameterError("ceiling must be above floor (y-down)")
        if polygon_area(self.floor_polygon) < 0:
            self.floor_polygon = self.floor_polygon[::-1].copy()

    @property
    def height(self):
        return self.floor_y - self.ceil_y


@dataclass
class InitPointCloud:
    points: np.ndarray   # (N, 3)
    normals: np.ndarray  # (N, 3) unit
    colors: np.ndarray   # (N, 3) in [0, 1]
    source: np.ndarray   # (N,) uint8, SOURCE_LAYOUT or SOURCE_DEPTH

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.source = np.asarray(self.source, dtype=np.uint8).reshape(-1)
        n = len(self.points)
        if not (len(self.normals) == len(self.colors) == len(self.source) == n):
            raise InvalidParameterError("point cloud arrays differ in length")

    def __len__(self):
        return len(self.points)

    def concat(self, other):
        return InitPointCloud(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.normals, other.normals]),
            np.concatenate([self.colors, other.colors]),
            np.concatenate([self.source, other.source]))

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)),
                   np.zeros(0, dtype=np.uint8))


def polygon_area(poly):
    """Signed shoelace area in the (x, z) plane."""
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def points_in_polygon(points, poly):
    """Even-odd ray casting test, vectorized over (P, 2) points."""
    x, z = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    x0, z0 = poly[:, 0], poly[:, 1]
    x1, z1 = np.roll(x0, -1), np.roll(z0, -1)
    for i in range(len(poly)):
        crosses = (z0[i] > z) != (z1[i] > z)
        if not np.any(crosses):
            continue
        t = (z[crosses] - z0[i]) / (z1[i] - z0[i])
        xi = x0[i] + t * (x1[i] - x0[i])
        inside[np.nonzero(crosses)[0][xi > x[crosses]]] ^= True
    return inside


def _column_longitudes(width_px):
    return (np.arange(width_px) + 0.5 - width_px / 2.0) * 2.0 * np.pi / width_px


def lift_boundary(boundary, cam):
    """Lift per-column image boundaries to a 3D room layout (world frame).

    Floor points are ray/floor-plane intersections scaled by the known
    camera height; the ceiling height is the average of per-column
    ceiling-ray intersections above each column's floor point.
    """
    if np.any(boundary.floor_lat >= 0):
        raise InvalidBoundaryError(
            "floor boundary must be strictly below the horizon")
    width_px = len(boundary.floor_lat)
    if width_px != cam.width_px:
        raise InvalidBoundaryError(
            f"boundary width {width_px} != camera width {cam.width_px}")

    phi = _column_longitudes(width_px)
    center = cam.center_world
    floor_y = center[1] + boundary.camera_height

    def world_dirs(lat):
        ct = np.cos(lat)
        d_cam = np.stack([ct * np.sin(phi), -np.sin(lat), ct * np.cos(phi)],
                         axis=1)
        return d_cam @ cam.rotation  # R^T d per row

    d_floor = world_dirs(boundary.floor_lat)
    if np.any(d_floor[:, 1] <= 0):
        raise InvalidBoundaryError(
            "floor rays must point below the horizontal (is the camera tilted?)")
    s = boundary.camera_height / d_floor[:, 1]
    floor_pts = center[None, :] + s[:, None] * d_floor
    poly = floor_pts[:, [0, 2]]

    # ceiling height per column above the camera, from the wall through the
    # column's floor point, then averaged (Atlanta-world single ceiling)
    rho = np.hypot(floor_pts[:, 0] - center[0], floor_pts[:, 2] - center[2])
    h_ceil = rho * np.tan(boundary.ceil_lat)
    ceil_y = center[1] - float(np.mean(h_ceil))
    return RoomLayout3D(poly, float(floor_y), float(ceil_y))


def union_layouts(layouts, cell=0.02):
    """Union the floor polygons on an occupancy grid and re-trace.

    Disjoint inputs keep only the largest connected component (with a
    warning). floor_y/ceil_y are polygon-area-weighted averages.
    """
    if len(layouts) == 0:
        raise InvalidParameterError("union of zero layouts")
    polys = [lay.floor_polygon for lay in layouts]
    lo = np.min([p.min(axis=0) for p in polys], axis=0) - 2 * cell
    hi = np.max([p.max(axis=0) for p in polys], axis=0) + 2 * cell
    nx, nz = np.ceil((hi - lo) / cell).astype(int) + 1

    grid = np.zeros((nx, nz), dtype=bool)
    for p in polys:
        gx = (p[:, 0] - lo[0]) / cell
        gz = (p[:, 1] - lo[1]) / cell
        rr, cc = draw_polygon(gx, gz, shape=grid.shape)
        grid[rr, cc] = True

    # 8-connectivity: polygon rasterization can leave corner pixels that
    # touch the body only diagonally
    labels, n_comp = ndimage.label(grid, structure=np.ones((3, 3), dtype=bool))
    if n_comp > 1:
        warnings.warn("disjoint layout polygons; keeping the largest component")
        sizes = ndimage.sum_labels(grid, labels, index=np.arange(1, n_comp + 1))
        grid = labels == (1 + int(np.argmax(sizes)))

    contours = find_contours(grid.astype(np.float64), 0.5)
    contour = max(contours, key=len)
    contour = approximate_polygon(contour, tolerance=0.5)
    if np.allclose(contour[0], contour[-1]):
        contour = contour[:-1]
    poly = contour * cell + lo[None, :]

    areas = np.array([abs(polygon_area(p)) for p in polys])
    weights = areas / areas.sum()
    floor_y = float(np.sum(weights * [lay.floor_y for lay in layouts]))
    ceil_y = float(np.sum(weights * [lay.ceil_y for lay in layouts]))
    return RoomLayout3D(poly, floor_y, ceil_y)


def sample_layout(layout, density=400.0):
    """Stratified samples on floor, ceiling and walls, with inward normals.

    One point per grid cell of side 1/sqrt(density); colors mid-gray.
    """
    if density <= 0:
        raise InvalidParameterError("density must be positive")
    cell = 1.0 / np.sqrt(density)
    poly = layout.floor_polygon
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)

    pts, nrm = [], []

    # floor and ceiling: grid cell centers inside the polygon
    xs = lo[0] + cell * (np.arange(max(1, int(round((hi[0] - lo[0]) / cell)))) + 0.5)
    zs = lo[1] + cell * (np.arange(max(1, int(round((hi[1] - lo[1]) / cell)))) + 0.5)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    flat = np.stack([gx.ravel(), gz.ravel()], axis=1)
    inside = points_in_polygon(flat, poly)
    plane = flat[inside]
    for y, ny in ((layout.floor_y, -1.0), (layout.ceil_y, 1.0)):
        p = np.empty((len(plane), 3))
        p[:, 0] = plane[:, 0]
        p[:, 1] = y
        p[:, 2] = plane[:, 1]
        pts.append(p)
        n = np.zeros_like(p)
        n[:, 1] = ny
        nrm.append(n)

    # walls: one rectangle per polygon edge
    height = layout.height
    n_v = max(1, int(round(height / cell)))
    v_off = layout.ceil_y + height * (np.arange(n_v) + 0.5) / n_v
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        edge = b - a
        length = float(np.hypot(*edge))
        if length < 1e-12:
            continue
        tang = edge / length
        normal2 = np.array([-tang[1], tang[0]])
        mid = 0.5 * (a + b)
        if not points_in_polygon((mid + 1e-4 * normal2)[None, :], poly)[0]:
            normal2 = -normal2
        n_u = max(1, int(round(length / cell)))
        u_off = length * (np.arange(n_u) + 0.5) / n_u
        uu, vv = np.meshgrid(u_off, v_off, indexing="ij")
        p = np.empty((uu.size, 3))
        p[:, 0] = a[0] + uu.ravel() * tang[0]
        p[:, 1] = vv.ravel()
        p[:, 2] = a[1] + uu.ravel() * tang[1]
        pts.append(p)
        n = np.zeros_like(p)
        n[:, 0] = normal2[0]
        n[:, 2] = normal2[1]
        nrm.append(n)

    points = np.concatenate(pts)
    normals = np.concatenate(nrm)
    colors = np.full((len(points), 3), 0.5)
    source = np.full(len(points), SOURCE_LAYOUT, dtype=np.uint8)
    return InitPointCloud(points, normals, colors, source)


def depth_to_cloud(depth, image, cam):
    """Unproject a depth panorama to a world-frame point cloud.

    Zero/NaN depths are invalid and skipped. Normals come from the cross
    product of the local depth-gradient tangents, oriented toward the
    camera.
    """
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    if (h, w) != (cam.height_px, cam.width_px):
        raise InvalidParameterError("depth size does not match the camera")
    valid = np.isfinite(depth) & (depth > 0)
    if not np.any(valid):
        return InitPointCloud.empty()

    dirs_cam = pixel_grid_directions(h, w)
    dirs_world = dirs_cam.reshape(-1, 3) @ cam.rotation
    dirs_world = dirs_world.reshape(h, w, 3)
    center = cam.center_world
    pts_grid = center[None, None, :] + depth[:, :, None] * dirs_world
    pts_grid[~valid] = np.nan

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d_row = np.gradient(pts_grid, axis=0)
        d_col = np.gradient(pts_grid, axis=1)
        normals = np.cross(d_col.reshape(-1, 3), d_row.reshape(-1, 3))
        norm = np.linalg.norm(normals, axis=1)
    ok = np.isfinite(norm) & (norm > 1e-12)
    normals[ok] /= norm[ok, None]
    # fallback: face the camera
    normals[~ok] = -dirs_world.reshape(-1, 3)[~ok]
    # orient toward the camera
    to_cam = center[None, :] - pts_grid.reshape(-1, 3)
    flip = np.einsum("ij,ij->i", normals, to_cam) < 0
    normals[flip] *= -1.0

    sel = valid.ravel()
    colors = np.asarray(image, dtype=np.float64).reshape(-1, 3)[sel]
    return InitPointCloud(
        pts_grid.reshape(-1, 3)[sel], normals[sel], colors,
        np.full(int(sel.sum()), SOURCE_DEPTH, dtype=np.uint8))


def align_depth_scale(depth_cloud, layout, boundary, cam, min_points=100):
    """Global scale aligning a depth cloud's floor points to the layout floor.

    For every cloud point whose viewing latitude lies below the column's
    floor boundary, the ratio (layout floor distance along the ray) /
    (point distance) is collected; the scale is the median ratio.
    """
    center = cam.center_world
    delta = depth_cloud.points - center[None, :]
    dist = np.linalg.norm(delta, axis=1)
    ok = dist > 1e-12
    d_world = delta[ok] / dist[ok, None]
    d_cam = d_world @ cam.rotation.T
    theta = np.arctan2(-d_cam[:, 1], np.hypot(d_cam[:, 0], d_cam[:, 2]))
    phi = np.arctan2(d_cam[:, 0], d_cam[:, 2])
    col = np.clip((phi * cam.width_px / (2 * np.pi) + cam.width_px / 2.0
                   ).astype(int), 0, cam.width_px - 1)
    floor_region = theta < boundary.floor_lat[col]
    downward = d_world[:, 1] > 1e-9
    sel = floor_region & downward
    if int(sel.sum()) < min_points:
        warnings.warn(
            f"only {int(sel.sum())} floor-region points; using unit scale")
        return 1.0
    t_floor = (layout.floor_y - center[1]) / d_world[sel, 1]
    return float(np.median(t_floor / dist[ok][sel]))


def voxel_downsample(cloud, voxel):
    """Centroid-per-voxel downsampling; voxel <= 0 is a no-op."""
    if voxel <= 0 or len(cloud) == 0:
        return cloud
    keys = np.floor((cloud.points - cloud.points.min(axis=0)) / voxel)
    keys = keys.astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                   return_counts=True)
    n_vox = len(counts)

    def centroid(arr):
        out = np.zeros((n_vox, arr.shape[1]))
        np.add.at(out, inverse, arr)
        return out / counts[:, None]

    points = centroid(cloud.points)
    colors = centroid(cloud.colors)
    normals = centroid(cloud.normals)
    norm = np.linalg.norm(normals, axis=1)
    bad = norm < 1e-12
    normals[~bad] /= norm[~bad, None]
    normals[bad] = (0.0, -1.0, 0.0)
    # majority source per voxel (clouds are single-source in practice)
    source = np.zeros(n_vox, dtype=np.uint8)
    np.maximum.at(source, inverse, cloud.source)
    return InitPointCloud(points, normals, colors, source)


def fuse_init(layout_cloud, depth_clouds, voxel=0.05):
    """Merge pre-scaled depth clouds (voxel-downsampled) with the layout cloud."""
    merged = InitPointCloud.empty()
    for cloud in depth_clouds:
        merged = merged.concat(cloud)
    merged = voxel_downsample(merged, voxel)
    return layout_cloud.concat(merged)
