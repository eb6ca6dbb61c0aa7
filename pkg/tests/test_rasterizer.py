"""Splat projection, tile binning, and blend kernels for both backends."""
import numpy as np
import pytest
from dataclasses import replace

from panosplat import geometry as geo
from panosplat.geometry import PanoramaCamera
from panosplat.reference import render_naive
from panosplat.renderer import (
    RenderConfig,
    backend_name,
    render,
    render_backward,
)
from panosplat.scene import GaussianScene
from panosplat.splatting import sort_and_bin, splat_all

from helpers import cam_at, random_camera, random_scene


def identity_cam(h=64):
    return PanoramaCamera(np.eye(3), np.zeros(3), h, 2 * h)


class TestSplatAll:
    def test_culls_gaussian_at_camera_center(self):
        scene = GaussianScene.from_points(
            [[0, 0, 0], [0, 0, 2.0]], [[1, 0, 0], [0, 1, 0]])
        splats = splat_all(scene, identity_cam())
        assert list(splats.gaussian_index) == [1]

    def test_mu_prime_is_unit(self):
        rng = np.random.default_rng(0)
        scene = random_scene(rng, 50)
        splats = splat_all(scene, random_camera(rng))
        assert np.allclose(np.linalg.norm(splats.mu_prime, axis=1), 1.0,
                           atol=1e-12)

    def test_cov2d_floor_raises_small_eigenvalues(self):
        scene = GaussianScene.from_points([[0, 0, 3.0]], [[1, 1, 1]])
        scene.log_scales[:] = np.log(1e-6)  # much smaller than a pixel
        cam = identity_cam(64)
        floor = 0.3 * (np.pi / 64) ** 2
        splats = splat_all(scene, cam, floor=floor)
        a, _, c = splats.cov2d[0]
        assert a >= floor and c >= floor

    def test_conic_inverts_cov2d(self):
        rng = np.random.default_rng(1)
        scene = random_scene(rng, 30)
        splats = splat_all(scene, random_camera(rng), floor=1e-6)
        for i in range(len(splats.cov2d)):
            a, b, c = splats.cov2d[i]
            ca, cb, cc = splats.conic[i]
            prod = np.array([[a, b], [b, c]]) @ np.array([[ca, cb], [cb, cc]])
            assert np.allclose(prod, np.eye(2), atol=1e-9)


class TestFootprintBoxes:
    def test_rect_contains_every_blending_pixel(self):
        # brute-force qf over the full image; wherever the kernel would
        # apply the splat, the pixel must fall inside its rect
        rng = np.random.default_rng(2)
        h, w = 48, 96
        dirs = geo.pixel_grid_directions(h, w).reshape(-1, 3)
        rows, cols = np.divmod(np.arange(h * w), w)
        for trial in range(40):
            scene = random_scene(rng, 8, spread=1.0,
                                 scale_range=(0.01, 1.2))
            if trial % 4 == 0:
                scene.positions[:, (0, 2)] *= 0.05  # near-pole stressors
            if trial % 4 == 1:
                scene.positions[:, 2] = -np.abs(scene.positions[:, 2])
                scene.positions[:, 0] *= 0.1  # seam (phi = +-pi) stressors
            cam = random_camera(rng, h)
            splats = splat_all(scene, cam, floor=1e-8)
            for i in range(len(splats.mu_prime)):
                denom = dirs @ splats.mu_prime[i]
                front = denom > geo.EPS_FRONT
                safe = np.where(front, denom, 1.0)
                xu = (dirs @ splats.basis_u[i]) / safe
                xv = (dirs @ splats.basis_v[i]) / safe
                ca, cb, cc = splats.conic[i]
                qf = ca * xu * xu + 2 * cb * xu * xv + cc * xv * xv
                inside = front & (qf <= 9.0)
                if not inside.any():
                    continue
                r_in, c_in = rows[inside], cols[inside]
                assert r_in.min() >= splats.row0[i]
                assert r_in.max() < splats.row1[i]
                rel = (c_in - splats.col0[i]) % w
                assert rel.max() < splats.ncols[i]

    def test_rect_bounds_are_valid(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng, 200, scale_range=(0.005, 2.0))
        cam = random_camera(rng, 32)
        s = splat_all(scene, cam)
        assert (s.row0 >= 0).all() and (s.row1 <= 32).all()
        assert (s.col0 >= 0).all() and (s.col0 < 64).all()
        assert (s.ncols >= 0).all() and (s.ncols <= 64).all()


class TestSortAndBin:
    def test_csr_covers_exactly_intersecting_tiles(self):
        rng = np.random.default_rng(4)
        h, w, tile = 64, 128, 16
        scene = random_scene(rng, 60)
        splats = splat_all(scene, random_camera(rng, h))
        grid = sort_and_bin(splats, h, w, tile)
        tiles_x = grid.tiles_x
        seen = [[] for _ in range(tiles_x * grid.tiles_y)]
        for t in range(len(seen)):
            seen[t] = list(grid.entry_splat[grid.offsets[t]:grid.offsets[t + 1]])
        for i in range(len(splats)):
            covered = set()
            for r in range(splats.row0[i], splats.row1[i]):
                for dc in range(splats.ncols[i]):
                    c = (splats.col0[i] + dc) % w
                    covered.add((r // tile) * tiles_x + c // tile)
            for t in range(len(seen)):
                expect = 1 if t in covered else 0
                assert seen[t].count(i) == expect

    def test_entries_sorted_by_depth_then_index(self):
        rng = np.random.default_rng(5)
        scene = random_scene(rng, 80)
        splats = splat_all(scene, random_camera(rng, 32))
        grid = sort_and_bin(splats, 32, 64, 16)
        for t in range(grid.tiles_x * grid.tiles_y):
            ent = grid.entry_splat[grid.offsets[t]:grid.offsets[t + 1]]
            keys = [(splats.depth[g], splats.gaussian_index[g]) for g in ent]
            assert keys == sorted(keys)

    def test_empty_scene(self):
        grid = sort_and_bin(splat_all(GaussianScene.empty(), identity_cam()),
                            64, 128, 16)
        assert grid.n_entries == 0
        assert grid.offsets[-1] == 0


class TestRenderEquivalence:
    def test_tiled_matches_naive(self):
        rng = np.random.default_rng(6)
        for trial in range(10):
            scene = random_scene(rng, int(rng.integers(1, 60)))
            cam = random_camera(rng, 64)
            cfg = RenderConfig(background=tuple(rng.uniform(0, 1, 3)))
            a = render(scene, cam, cfg).color
            b = render_naive(scene, cam, cfg).color
            assert np.abs(a - b).max() < 1e-9

    def test_backends_agree(self):
        if backend_name() != "cython":
            pytest.skip("compiled backend unavailable")
        rng = np.random.default_rng(7)
        for _ in range(6):
            scene = random_scene(rng, 40)
            cam = random_camera(rng, 64)
            cfg = RenderConfig(backend="cython")
            a = render(scene, cam, cfg).color
            b = render(scene, cam, replace(cfg, backend="python")).color
            assert np.abs(a - b).max() < 1e-12

    def test_thread_count_does_not_change_output(self):
        if backend_name() != "cython":
            pytest.skip("compiled backend unavailable")
        rng = np.random.default_rng(8)
        scene = random_scene(rng, 50)
        cam = random_camera(rng, 64)
        imgs = []
        grads = []
        for nt in (1, 2, 4):
            cfg = RenderConfig(backend="cython", num_threads=nt)
            out = render(scene, cam, cfg, save_state=True)
            imgs.append(out.color)
            g = render_backward(scene, cam, np.ones_like(out.color),
                                state=out.state)
            grads.append(g)
        for i in (1, 2):
            assert np.array_equal(imgs[0], imgs[i])
            for key in grads[0]:
                assert np.array_equal(np.asarray(grads[0][key]),
                                      np.asarray(grads[i][key]))

    def test_yaw_equals_column_roll(self):
        # yawing the camera by k columns moves world content k columns east
        rng = np.random.default_rng(9)
        h, w = 64, 128
        scene = random_scene(rng, 30)
        base = cam_at([0.1, -0.2, 0.05], yaw=0.0, height_px=h)
        img0 = render(scene, base).color
        for k in (1, 17, 64, 100):
            cam = cam_at([0.1, -0.2, 0.05], yaw=k * 2 * np.pi / w,
                         height_px=h)
            img = render(scene, cam).color
            assert np.abs(np.roll(img0, k, axis=1) - img).max() < 1e-9


class TestBlendBehavior:
    def test_empty_scene_renders_background(self):
        cfg = RenderConfig(background=(0.2, 0.5, 0.9))
        out = render(GaussianScene.empty(), identity_cam(), cfg)
        assert np.allclose(out.color, [0.2, 0.5, 0.9])
        assert np.allclose(out.alpha, 0.0)

    def test_opaque_wall_hides_background(self):
        # a giant opaque Gaussian in front dominates alpha on its pixels
        scene = GaussianScene.from_points([[0, 0, 2.0]], [[1.0, 0.0, 0.0]])
        scene.log_scales[:] = np.log(1.0)
        scene.logit_opacities[:] = 12.0
        out = render(scene, identity_cam(), RenderConfig(background=(0, 1, 0)))
        center = out.color[32, 64]
        assert out.alpha[32, 64] > 0.98
        assert center[0] > 0.5 and center[1] < 0.05

    def test_alpha_clamped_per_splat(self):
        # one fully opaque splat cannot push alpha past the 0.99 clamp
        scene = GaussianScene.from_points([[0, 0, 2.0]], [[1, 1, 1]])
        scene.log_scales[:] = np.log(0.5)
        scene.logit_opacities[:] = 40.0  # sigmoid == 1 exactly in float64
        out = render(scene, identity_cam(), RenderConfig())
        assert out.alpha.max() == pytest.approx(0.99, abs=1e-12)

    def test_output_clamped_to_unit_range(self):
        rng = np.random.default_rng(11)
        scene = random_scene(rng, 20)
        scene.sh[:, :, 0] = 4.0  # SH DC far above displayable white
        out = render(scene, identity_cam())
        assert out.color.max() <= 1.0 and out.color.min() >= 0.0

    def test_front_to_back_order(self):
        # a nearer opaque red splat occludes a farther green one
        scene = GaussianScene.from_points(
            [[0, 0, 1.0], [0, 0, 3.0]], [[1, 0, 0], [0, 1, 0]])
        scene.log_scales[:] = np.log(0.3)
        scene.logit_opacities[:] = 10.0
        out = render(scene, identity_cam())
        center = out.color[32, 64]
        assert center[0] > 0.9 and center[1] < 0.05
