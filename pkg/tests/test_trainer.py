"""Tests for the optimizer, schedules, density control, and training loop."""
import numpy as np
import pytest

from panosplat.errors import ConfigError, TrainingDivergedError
from panosplat.layout import SOURCE_DEPTH, SOURCE_LAYOUT, InitPointCloud
from panosplat.optim import Adam
from panosplat.renderer import RenderConfig, render
from panosplat.scene import GaussianScene
from panosplat.trainer import (
    Anchors,
    TrainConfig,
    anchors_from_cloud,
    densify_and_prune,
    make_optimizer,
    position_lr_scale,
    scene_extent,
    train,
)

from helpers import cam_at, random_scene


def adam_oracle(x0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-15):
    """Reference Adam trajectory computed step by step."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
    return x


class TestAdam:
    def test_matches_hand_computed_trajectory(self):
        rng = np.random.default_rng(0)
        x0 = rng.normal(size=5)
        gs = [rng.normal(size=5) for _ in range(4)]
        params = {"w": x0.copy()}
        opt = Adam(params, {"w": 0.1})
        for g in gs:
            opt.step(params, {"w": g})
        assert np.allclose(params["w"], adam_oracle(x0, gs, 0.1),
                           rtol=0, atol=1e-15)

    def test_nonfinite_gradients_skip_those_elements(self):
        params = {"w": np.arange(4.0)}
        before = params["w"].copy()
        opt = Adam(params, {"w": 0.1})
        g = np.array([1.0, np.nan, np.inf, -1.0])
        assert opt.step(params, {"w": g}) == 2
        assert params["w"][1] == before[1]
        assert params["w"][2] == before[2]
        assert params["w"][0] != before[0]
        assert params["w"][3] != before[3]
        assert opt.skipped == 2

    def test_lr_scale_multiplies_named_group_only(self):
        def run(scale):
            params = {"a": np.zeros(2), "b": np.zeros(2)}
            opt = Adam(params, {"a": 0.1, "b": 0.1})
            opt.step(params, {"a": np.ones(2), "b": np.ones(2)},
                     lr_scale=scale)
            return params

        plain = run(None)
        scaled = run({"a": 0.5})
        assert np.allclose(scaled["a"], 0.5 * plain["a"])
        assert np.array_equal(scaled["b"], plain["b"])

    def test_array_learning_rate_broadcasts(self):
        # per-band rates, as used for the color coefficients
        params = {"sh": np.zeros((2, 4, 1))}
        lr = np.full((1, 4, 1), 0.001)
        lr[0, 0, 0] = 0.02
        opt = Adam(params, {"sh": lr})
        opt.step(params, {"sh": np.ones((2, 4, 1))})
        # first step moves by -lr * g/(|g| + eps) = -lr
        assert np.allclose(params["sh"], -np.broadcast_to(lr, (2, 4, 1)))

    def test_append_zeros_then_select(self):
        params = {"w": np.ones((3, 2))}
        opt = Adam(params, {"w": 0.1})
        opt.step(params, {"w": np.full((3, 2), 2.0)})
        m_before = opt.m["w"].copy()
        opt.append_zeros(2)
        assert opt.m["w"].shape == (5, 2)
        assert np.all(opt.m["w"][3:] == 0)
        opt.select(np.array([True, False, True, True, False]))
        assert opt.v["w"].shape == (3, 2)
        assert np.array_equal(opt.m["w"][0], m_before[0])
        assert np.array_equal(opt.m["w"][1], m_before[2])

    def test_reset_group_zeroes_one_group(self):
        params = {"a": np.zeros(2), "b": np.zeros(2)}
        opt = Adam(params, {"a": 0.1, "b": 0.1})
        opt.step(params, {"a": np.ones(2), "b": np.ones(2)})
        opt.reset_group("a")
        assert np.all(opt.m["a"] == 0) and np.all(opt.v["a"] == 0)
        assert np.all(opt.m["b"] != 0) and np.all(opt.v["b"] != 0)


class TestSchedules:
    def test_position_lr_decay_endpoints(self):
        cfg = TrainConfig(iterations=101, lr_position_final=0.01)
        assert position_lr_scale(cfg, 0) == 1.0
        assert position_lr_scale(cfg, 100) == pytest.approx(0.01)
        assert position_lr_scale(cfg, 50) == pytest.approx(0.1)

    def test_single_iteration_keeps_full_rate(self):
        assert position_lr_scale(TrainConfig(iterations=1), 0) == 1.0

    def test_sh_rates_split_dc_from_rest(self):
        scene = random_scene(np.random.default_rng(0), 4, sh_degree=1)
        opt = make_optimizer(scene, TrainConfig())
        lr = opt.lrs["sh"]
        assert lr.shape == (1, 4, 1)
        assert lr[0, 0, 0] == pytest.approx(2.5e-3)
        assert np.allclose(lr[0, 1:, 0], 2.5e-3 / 20.0)


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"iterations": -1},
        {"lambda2": -0.1},
        {"lambda1": 0.0, "lambda2": 0.0},
        {"densify_interval": 0},
        {"split_scale_divisor": 0.0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs).validate()


class TestSceneExtent:
    def test_bounding_sphere_radius(self):
        scene = GaussianScene.from_points(
            np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            np.full((3, 3), 0.5))
        views = [(cam_at((0.0, 3.0, 0.0), height_px=8), None)]
        # bbox center (0, 1.5, 0); farthest are the x = +-1 points
        assert scene_extent(scene, views) \
            == pytest.approx(np.hypot(1.0, 1.5))

    def test_degenerate_extent_falls_back_to_one(self):
        scene = GaussianScene.from_points(np.zeros((1, 3)),
                                          np.full((1, 3), 0.5))
        views = [(cam_at((0.0, 0.0, 0.0), height_px=8), None)]
        assert scene_extent(scene, views) == 1.0


class TestAnchors:
    def test_anchors_from_cloud_take_layout_rows(self):
        pts = np.arange(15.0).reshape(5, 3)
        nrm = np.tile([0.0, -1.0, 0.0], (5, 1))
        src = np.array([SOURCE_LAYOUT, SOURCE_DEPTH, SOURCE_LAYOUT,
                        SOURCE_DEPTH, SOURCE_LAYOUT], dtype=np.uint8)
        cloud = InitPointCloud(pts, nrm, np.full((5, 3), 0.5), src)
        anchors = anchors_from_cloud(cloud)
        assert anchors.index.tolist() == [0, 2, 4]
        assert np.array_equal(anchors.u0, pts[[0, 2, 4]])
        cloud.points[0, 0] = 99.0
        assert anchors.u0[0, 0] == 0.0

    def test_empty(self):
        assert len(Anchors.empty()) == 0


class TestDensifyAndPrune:
    def build(self):
        pts = np.stack([np.arange(6.0), np.zeros(6), np.zeros(6)], axis=1)
        scene = GaussianScene.from_points(pts, np.full((6, 3), 0.5))
        scene.log_scales[:] = np.log(0.005)
        scene.log_scales[1] = np.log(0.5)   # large: split candidate
        scene.logit_opacities[:] = 0.0
        scene.logit_opacities[2] = -7.0     # ~0.0009: pruned
        cfg = TrainConfig()
        opt = make_optimizer(scene, cfg)
        opt.m["positions"][:] = np.arange(18.0).reshape(6, 3)
        anchors = Anchors(
            np.array([0, 1, 2]),
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]),
            np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]))
        avg = np.zeros(6)
        avg[0] = 1.0   # small + high grad: cloned
        avg[1] = 1.0   # large + high grad: split
        rng = np.random.default_rng(7)
        return scene, anchors, opt, avg, cfg, rng

    def test_counts_and_stats(self):
        scene, anchors, opt, avg, cfg, rng = self.build()
        new_scene, new_anchors, stats = densify_and_prune(
            scene, anchors, opt, avg, 1.0, cfg, rng)
        # 6 + 1 clone + 2 children - split parent - low-opacity row
        assert len(new_scene) == 7
        assert stats == {"cloned": 1, "split": 1, "pruned": 1}

    def test_clone_duplicates_and_children_shrink(self):
        scene, anchors, opt, avg, cfg, rng = self.build()
        new_scene, _, _ = densify_and_prune(
            scene, anchors, opt, avg, 1.0, cfg, rng)
        # rows: survivors 0, 3, 4, 5 then clone of 0 then two children of 1
        assert np.array_equal(new_scene.positions[4], scene.positions[0])
        assert np.array_equal(new_scene.log_scales[4], scene.log_scales[0])
        expect = scene.log_scales[1] - np.log(cfg.split_scale_divisor)
        assert np.allclose(new_scene.log_scales[5], expect)
        assert np.allclose(new_scene.log_scales[6], expect)
        spread = np.linalg.norm(new_scene.positions[5:7]
                                - scene.positions[1], axis=1)
        assert np.all(spread > 0) and np.all(spread < 5 * 0.5)

    def test_optimizer_rows_follow_survivors(self):
        scene, anchors, opt, avg, cfg, rng = self.build()
        densify_and_prune(scene, anchors, opt, avg, 1.0, cfg, rng)
        assert opt.m["positions"].shape == (7, 3)
        assert np.array_equal(opt.m["positions"][0], [0.0, 1.0, 2.0])
        assert np.array_equal(opt.m["positions"][1], [9.0, 10.0, 11.0])
        assert np.all(opt.m["positions"][4:] == 0)

    def test_anchors_remap_and_inherit(self):
        scene, anchors, opt, avg, cfg, rng = self.build()
        _, new_anchors, _ = densify_and_prune(
            scene, anchors, opt, avg, 1.0, cfg, rng)
        assert new_anchors.index.tolist() == [0, 4, 5, 6]
        assert np.array_equal(new_anchors.normal[0], [0.0, 1.0, 0.0])
        assert np.array_equal(new_anchors.normal[1], [0.0, 1.0, 0.0])
        assert np.array_equal(new_anchors.normal[2], [0.0, 0.0, 1.0])
        # the clone sits at the parent position, already on its plane
        assert np.array_equal(new_anchors.u0[1], [0.0, 0.0, 0.0])
        # children re-anchor on the parent plane (z = 0) below themselves
        assert np.allclose(new_anchors.u0[2:, 2], 0.0)

    def test_no_candidates_is_identity(self):
        scene, anchors, opt, avg, cfg, rng = self.build()
        scene.logit_opacities[2] = 0.0
        new_scene, new_anchors, stats = densify_and_prune(
            scene, anchors, opt, np.zeros(6), 1.0, cfg, rng)
        assert len(new_scene) == 6
        assert stats == {"cloned": 0, "split": 0, "pruned": 0}
        assert np.array_equal(new_scene.positions, scene.positions)
        assert new_anchors.index.tolist() == [0, 1, 2]


def tiny_problem(seed=3, n=25, height_px=16):
    rng = np.random.default_rng(seed)
    target_scene = random_scene(rng, n, spread=1.5,
                                scale_range=(0.2, 0.6))
    cams = [cam_at((0.0, 0.0, 0.0), yaw=0.0, height_px=height_px),
            cam_at((0.3, 0.1, -0.2), yaw=1.1, height_px=height_px)]
    views = [(cam, render(c_scene, cam).color)
             for cam, c_scene in ((c, target_scene) for c in cams)]
    start = target_scene.copy()
    start.positions += rng.normal(0.0, 0.05, start.positions.shape)
    start.sh[:, 0, :] += rng.normal(0.0, 0.3, (n, 3))
    return start, views


class TestTrain:
    def test_fixed_seed_reruns_bit_identical(self):
        start, views = tiny_problem()
        cfg = TrainConfig(iterations=12, densify_from=10**9, psnr_every=5,
                          seed=4)
        a = train(start, views, config=cfg)
        b = train(start, views, config=cfg)
        assert a.metrics == b.metrics
        for name in start.params():
            assert np.array_equal(getattr(a.scene, name),
                                  getattr(b.scene, name))

    def test_loss_decreases(self):
        start, views = tiny_problem()
        cfg = TrainConfig(iterations=60, densify_from=10**9, psnr_every=0,
                          seed=1)
        result = train(start, views, config=cfg)
        first = result.metrics[0]["total"]
        last = np.mean([m["total"] for m in result.metrics[-5:]])
        assert last < 0.7 * first

    def test_densification_reports_stats_and_keeps_anchors_valid(self):
        start, views = tiny_problem()
        anchors = Anchors(np.arange(len(start)), start.positions.copy(),
                          np.tile([0.0, 1.0, 0.0], (len(start), 1)))
        cfg = TrainConfig(iterations=14, densify_from=4, densify_interval=4,
                          densify_until=1.0, densify_grad_threshold=0.0,
                          prune_opacity=0.005, psnr_every=0, seed=2)
        result = train(start, views, anchors=anchors, config=cfg)
        dens_rows = [m for m in result.metrics if "cloned" in m]
        assert dens_rows
        assert sum(m["cloned"] + m["split"] for m in dens_rows) > 0
        assert len(result.anchors) > 0
        assert result.anchors.index.max() < len(result.scene)
        # inherited anchors still sit on their planes
        off = np.einsum("ij,ij->i", result.anchors.normal,
                        result.scene.positions[result.anchors.index]
                        - result.anchors.u0)
        assert np.all(np.isfinite(off))

    def test_opacity_reset_caps_logits(self):
        start, views = tiny_problem()
        seen = {}

        def watch(it, scene, row):
            if it == 6:
                seen["max_logit"] = scene.logit_opacities.max()

        cfg = TrainConfig(iterations=8, densify_from=10**9, psnr_every=0,
                          opacity_reset_interval=6, seed=0)
        train(start, views, config=cfg, callback=watch)
        assert seen["max_logit"] <= np.log(0.01 / 0.99) + 1e-12

    def test_psnr_logged_on_schedule(self):
        start, views = tiny_problem()
        cfg = TrainConfig(iterations=11, densify_from=10**9, psnr_every=5,
                          seed=0)
        result = train(start, views, config=cfg)
        with_psnr = [m["iteration"] for m in result.metrics if "psnr" in m]
        assert with_psnr == [0, 5, 10]

    def test_nan_target_diverges(self):
        start, views = tiny_problem()
        cam, img = views[0]
        bad = [(cam, np.full_like(img, np.nan))]
        with pytest.raises(TrainingDivergedError, match="iteration 0"):
            train(start, bad, config=TrainConfig(iterations=3, psnr_every=0))

    def test_rejects_empty_views_and_bad_shapes(self):
        start, views = tiny_problem()
        with pytest.raises(ConfigError):
            train(start, [], config=TrainConfig(iterations=1))
        cam, img = views[0]
        with pytest.raises(ConfigError):
            train(start, [(cam, img[:-1])],
                  config=TrainConfig(iterations=1))

    def test_input_scene_not_mutated(self):
        start, views = tiny_problem()
        before = {k: v.copy() for k, v in start.params().items()}
        train(start, views,
              config=TrainConfig(iterations=3, densify_from=10**9,
                                 psnr_every=0))
        for name, val in before.items():
            assert np.array_equal(getattr(start, name), val)
