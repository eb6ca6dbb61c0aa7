"""Tests for image/depth files, PLY, checkpoints, and scene manifests."""
import dataclasses
import json

import numpy as np
import pytest
from PIL import Image

from panosplat.checkpoint import (
    load_checkpoint,
    load_cloud,
    save_checkpoint,
    save_cloud,
)
from panosplat.errors import CheckpointError, ImageFormatError, ManifestError
from panosplat.images import (
    encode_jpeg,
    encode_png,
    load_depth,
    load_depth_pfm,
    load_depth_png,
    load_image,
    load_panorama,
    save_depth_pfm,
    save_depth_png,
    save_image,
)
from panosplat.layout import SOURCE_DEPTH, SOURCE_LAYOUT, InitPointCloud
from panosplat.manifest import (
    load_boundary,
    load_manifest,
    save_boundary,
)
from panosplat.layout import LayoutBoundary
from panosplat.ply import read_ply, write_ply
from panosplat.trainer import Anchors, TrainConfig

from helpers import random_scene


class TestColorImages:
    def test_8bit_png_roundtrip_is_exact_on_grid_values(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (6, 12, 3)) / 255.0
        path = tmp_path / "img.png"
        save_image(path, img)
        assert np.array_equal(load_image(path), img)

    def test_16bit_png_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        gray = rng.integers(0, 65536, (4, 8)) / 65535.0
        path = tmp_path / "img16.png"
        save_image(path, gray, bit_depth=16)
        out = load_image(path)
        assert out.shape == (4, 8, 3)
        assert np.array_equal(out[:, :, 0], gray)
        assert np.array_equal(out[:, :, 1], gray)

    def test_save_rejects_bad_bit_depth_combinations(self, tmp_path):
        img = np.zeros((4, 8, 3))
        with pytest.raises(ImageFormatError):
            save_image(tmp_path / "x.jpg", np.zeros((4, 8)), bit_depth=16)
        with pytest.raises(ImageFormatError):
            save_image(tmp_path / "x.png", img, bit_depth=16)
        with pytest.raises(ImageFormatError):
            save_image(tmp_path / "x.png", img, bit_depth=12)

    def test_values_clipped_before_saving(self, tmp_path):
        img = np.array([[[2.0, -1.0, 0.5]]])
        path = tmp_path / "clip.png"
        save_image(path, img)
        assert np.array_equal(load_image(path)[0, 0],
                              [1.0, 0.0, 128 / 255.0])

    def test_panorama_aspect_enforced(self, tmp_path):
        good = tmp_path / "pano.png"
        save_image(good, np.zeros((4, 8, 3)))
        assert load_panorama(good).shape == (4, 8, 3)
        bad = tmp_path / "square.png"
        save_image(bad, np.zeros((8, 8, 3)))
        with pytest.raises(ImageFormatError, match="width"):
            load_panorama(bad)

    def test_unreadable_file_raises(self, tmp_path):
        path = tmp_path / "not_an_image.png"
        path.write_bytes(b"hello world")
        with pytest.raises(ImageFormatError):
            load_image(path)

    def test_encode_png_matches_file_pixels(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, (5, 10, 3)) / 255.0
        data = encode_png(img)
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        path = tmp_path / "roundtrip.png"
        path.write_bytes(data)
        assert np.array_equal(load_image(path), img)

    def test_encode_jpeg_produces_decodable_stream(self, tmp_path):
        img = np.full((8, 16, 3), 0.25)
        data = encode_jpeg(img, quality=85)
        assert data[:2] == b"\xff\xd8"
        path = tmp_path / "img.jpg"
        path.write_bytes(data)
        out = load_image(path)
        assert out.shape == (8, 16, 3)
        assert np.abs(out - 0.25).max() < 0.05


class TestDepthFiles:
    def test_pfm_roundtrip_exact_at_float32(self, tmp_path):
        rng = np.random.default_rng(3)
        depth = rng.uniform(0.01, 50.0, (6, 9)).astype(np.float32)
        path = tmp_path / "d.pfm"
        save_depth_pfm(path, depth)
        out = load_depth_pfm(path)
        assert out.dtype == np.float64
        assert np.array_equal(out, depth.astype(np.float64))

    def test_pfm_big_endian_and_scale(self, tmp_path):
        depth = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=">f4")
        path = tmp_path / "be.pfm"
        path.write_bytes(b"Pf\n2 2\n2.0\n" + depth[::-1].tobytes())
        assert np.array_equal(load_depth_pfm(path),
                              2.0 * depth.astype(np.float64))

    def test_pfm_error_taxonomy(self, tmp_path):
        bad = tmp_path / "bad.pfm"
        bad.write_bytes(b"not a pfm at all")
        with pytest.raises(ImageFormatError, match="not a PFM"):
            load_depth_pfm(bad)
        color = tmp_path / "color.pfm"
        color.write_bytes(b"PF\n1 1\n-1.0\n" + b"\x00" * 12)
        with pytest.raises(ImageFormatError, match="grayscale"):
            load_depth_pfm(color)
        trunc = tmp_path / "trunc.pfm"
        trunc.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(ImageFormatError, match="truncated"):
            load_depth_pfm(trunc)

    def test_depth_png_roundtrip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(4)
        depth = rng.uniform(0.1, 8.0, (5, 7))
        path = tmp_path / "d.png"
        save_depth_png(path, depth)
        out = load_depth_png(path)
        step = depth.max() / 65535.0
        assert np.abs(out - depth).max() <= 0.5 * step + 1e-12

    def test_depth_png_maps_nonfinite_to_zero(self, tmp_path):
        depth = np.array([[1.0, np.nan], [np.inf, 4.0]])
        path = tmp_path / "d.png"
        save_depth_png(path, depth)
        out = load_depth_png(path)
        assert out[0, 1] == 0.0 and out[1, 0] == 0.0
        assert out[1, 1] == pytest.approx(4.0, abs=1e-3)

    def test_depth_png_requires_scale_chunk(self, tmp_path):
        path = tmp_path / "plain16.png"
        save_image(path, np.full((4, 4), 0.5), bit_depth=16)
        with pytest.raises(ImageFormatError, match="depth_scale"):
            load_depth_png(path)

    def test_depth_png_rejects_8bit(self, tmp_path):
        path = tmp_path / "rgb.png"
        save_image(path, np.zeros((4, 4, 3)))
        with pytest.raises(ImageFormatError, match="16-bit"):
            load_depth_png(path)

    def test_load_depth_dispatches_on_extension(self, tmp_path):
        depth = np.full((3, 3), 2.5)
        save_depth_pfm(tmp_path / "d.pfm", depth)
        save_depth_png(tmp_path / "d.png", depth)
        assert np.allclose(load_depth(tmp_path / "d.pfm"), depth)
        assert np.allclose(load_depth(tmp_path / "d.png"), depth, atol=1e-4)
        with pytest.raises(ImageFormatError, match="unsupported"):
            load_depth(tmp_path / "d.txt")


class TestPly:
    def test_mixed_dtype_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        cols = {
            "x": rng.normal(size=7),
            "s": rng.normal(size=7).astype(np.float32),
            "red": rng.integers(0, 255, 7).astype(np.uint8),
            "label": rng.integers(-5, 5, 7).astype(np.int32),
        }
        path = tmp_path / "pts.ply"
        write_ply(path, cols, comments=("roundtrip test",))
        out = read_ply(path)
        assert set(out) == set(cols)
        for name, arr in cols.items():
            assert out[name].dtype == arr.dtype
            assert np.array_equal(out[name], arr)

    def test_write_rejects_bad_columns(self, tmp_path):
        with pytest.raises(CheckpointError):
            write_ply(tmp_path / "e.ply", {})
        with pytest.raises(CheckpointError, match="equal-length"):
            write_ply(tmp_path / "r.ply",
                      {"a": np.zeros(3), "b": np.zeros(4)})
        with pytest.raises(CheckpointError, match="dtype"):
            write_ply(tmp_path / "c.ply", {"a": np.zeros(3, complex)})

    def test_read_rejects_non_ply(self, tmp_path):
        path = tmp_path / "junk.ply"
        path.write_bytes(b"OFF\n3 0 0\n")
        with pytest.raises(CheckpointError, match="not a PLY"):
            read_ply(path)

    def test_read_rejects_truncated_body(self, tmp_path):
        path = tmp_path / "t.ply"
        write_ply(path, {"x": np.arange(10.0)})
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            read_ply(path)

    def test_read_rejects_unsupported_headers(self, tmp_path):
        cases = {
            "ascii.ply": b"ply\nformat ascii 1.0\nelement vertex 0\n"
                         b"property float x\nend_header\n",
            "list.ply": b"ply\nformat binary_little_endian 1.0\n"
                        b"element vertex 0\nproperty list uchar int idx\n"
                        b"end_header\n",
            "face.ply": b"ply\nformat binary_little_endian 1.0\n"
                        b"element vertex 0\nproperty float x\n"
                        b"element face 2\nproperty float y\nend_header\n",
            "type.ply": b"ply\nformat binary_little_endian 1.0\n"
                        b"element vertex 0\nproperty quad x\nend_header\n",
        }
        for name, blob in cases.items():
            path = tmp_path / name
            path.write_bytes(blob)
            with pytest.raises(CheckpointError):
                read_ply(path)


class TestCheckpoint:
    def make_scene(self):
        return random_scene(np.random.default_rng(6), 12, sh_degree=1)

    def test_scene_roundtrip_bit_exact(self, tmp_path):
        scene = self.make_scene()
        anchors = Anchors(np.array([1, 5]), scene.positions[[1, 5]].copy(),
                          np.tile([0.0, 1.0, 0.0], (2, 1)))
        cfg = TrainConfig(iterations=77, seed=3)
        path = tmp_path / "ck.ply"
        sidecar = save_checkpoint(path, scene, anchors, iteration=42,
                                  train_config=cfg)
        out_scene, out_anchors, meta = load_checkpoint(path)
        for name, val in scene.params().items():
            assert np.array_equal(getattr(out_scene, name), val), name
        assert out_scene.sh_degree == 1
        assert out_anchors.index.tolist() == [1, 5]
        assert np.array_equal(out_anchors.u0, anchors.u0)
        assert np.array_equal(out_anchors.normal, anchors.normal)
        assert meta["iteration"] == 42
        assert meta["train_config"] == dataclasses.asdict(cfg)
        assert json.load(open(sidecar))["version"] == 1

    def test_missing_sidecar_tolerated(self, tmp_path):
        path = tmp_path / "ck.ply"
        save_checkpoint(path, self.make_scene())
        (tmp_path / "ck.json").unlink()
        scene, anchors, meta = load_checkpoint(path)
        assert len(scene) == 12 and anchors is None and meta == {}

    def test_version_mismatch_raises(self, tmp_path):
        path = tmp_path / "ck.ply"
        sidecar = save_checkpoint(path, self.make_scene())
        meta = json.load(open(sidecar))
        meta["version"] = 99
        json.dump(meta, open(sidecar, "w"))
        with pytest.raises(CheckpointError, match="migration"):
            load_checkpoint(path)

    def test_corrupt_sidecar_raises(self, tmp_path):
        path = tmp_path / "ck.ply"
        sidecar = save_checkpoint(path, self.make_scene())
        with open(sidecar, "w") as f:
            f.write("{not json")
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(path)

    def test_count_mismatch_raises(self, tmp_path):
        path = tmp_path / "ck.ply"
        sidecar = save_checkpoint(path, self.make_scene())
        meta = json.load(open(sidecar))
        meta["gaussian_count"] = 5
        json.dump(meta, open(sidecar, "w"))
        with pytest.raises(CheckpointError, match="5 gaussians"):
            load_checkpoint(path)

    def test_missing_property_raises(self, tmp_path):
        path = tmp_path / "ck.ply"
        save_checkpoint(path, self.make_scene())
        cols = read_ply(path)
        del cols["opacity"]
        write_ply(path, cols)
        with pytest.raises(CheckpointError, match="opacity"):
            load_checkpoint(path)

    def test_anchor_out_of_range_raises(self, tmp_path):
        scene = self.make_scene()
        path = tmp_path / "ck.ply"
        anchors = Anchors(np.array([50]), np.zeros((1, 3)),
                          np.tile([0.0, 1.0, 0.0], (1, 1)))
        save_checkpoint(path, scene, anchors)
        with pytest.raises(CheckpointError, match="anchor index"):
            load_checkpoint(path)

    def test_cloud_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        n = 9
        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        cloud = InitPointCloud(
            rng.normal(size=(n, 3)), normals,
            rng.integers(0, 256, (n, 3)) / 255.0,
            np.array([SOURCE_LAYOUT, SOURCE_DEPTH] * 4 + [SOURCE_LAYOUT],
                     dtype=np.uint8))
        path = tmp_path / "cloud.ply"
        save_cloud(path, cloud)
        out = load_cloud(path)
        assert np.array_equal(out.points,
                              cloud.points.astype(np.float32))
        assert np.array_equal(out.colors, cloud.colors)
        assert np.array_equal(out.source, cloud.source)

    def test_cloud_missing_property_raises(self, tmp_path):
        path = tmp_path / "cloud.ply"
        save_cloud(path, InitPointCloud.empty())
        cols = read_ply(path)
        del cols["nz"]
        write_ply(path, cols)
        with pytest.raises(CheckpointError, match="nz"):
            load_cloud(path)


def write_manifest(tmp_path, mutate=None, n_views=2):
    views = []
    for i in range(n_views):
        name = f"v{i}.png"
        save_image(tmp_path / name, np.zeros((4, 8, 3)))
        views.append({
            "id": f"v{i}",
            "image": name,
            "pose": {"qw": 1.0, "qx": 0.0, "qy": 0.0, "qz": 0.0,
                     "tx": 0.1 * i, "ty": 0.0, "tz": 0.0},
        })
    data = {"camera_height_m": 1.6, "views": views,
            "train": ["v0"], "test": ["v1"] if n_views > 1 else []}
    if mutate is not None:
        mutate(data)
    path = tmp_path / "scene.json"
    with open(path, "w") as f:
        json.dump(data, f)
    return path


class TestManifest:
    def test_loads_views_and_splits(self, tmp_path):
        man = load_manifest(write_manifest(tmp_path))
        assert man.camera_height_m == 1.6
        assert [v.view_id for v in man.views] == ["v0", "v1"]
        assert [v.view_id for v in man.split("train")] == ["v0"]
        assert [v.view_id for v in man.split("test")] == ["v1"]
        cam = man.view("v0").camera(4, 8)
        assert cam.height_px == 4
        with pytest.raises(ManifestError, match="unknown view"):
            man.view("nope")
        with pytest.raises(ManifestError, match="unknown split"):
            man.split("validation")

    def test_default_train_split_is_everything_but_test(self, tmp_path):
        def drop_train(data):
            del data["train"]

        man = load_manifest(write_manifest(tmp_path, drop_train, n_views=3))
        assert man.train_ids == ["v0", "v2"]

    def test_quaternion_normalized_on_load(self, tmp_path):
        def nudge(data):
            data["views"][0]["pose"]["qw"] = 1.0005

        man = load_manifest(write_manifest(tmp_path, nudge))
        assert np.linalg.norm(man.views[0].quaternion) \
            == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("mutate,msg", [
        (lambda d: d.pop("camera_height_m"), "camera_height_m"),
        (lambda d: d.update(camera_height_m=-1), "positive"),
        (lambda d: d.update(views=[]), "non-empty"),
        (lambda d: d["views"][0].pop("id"), "missing id"),
        (lambda d: d["views"][1].update(id="v0"), "duplicate"),
        (lambda d: d["views"][0].pop("image"), "image"),
        (lambda d: d["views"][0]["pose"].pop("qw"), "pose missing"),
        (lambda d: d["views"][0]["pose"].update(qw=0.9), "norm"),
        (lambda d: d["views"][0].update(image="missing.png"), "not found"),
        (lambda d: d.update(train=["ghost"]), "unknown id"),
        (lambda d: d.update(train=["v0", "v1"]), "overlap"),
    ])
    def test_validation_errors(self, tmp_path, mutate, msg):
        path = write_manifest(tmp_path, mutate)
        with pytest.raises(ManifestError, match=msg):
            load_manifest(path)

    def test_missing_and_invalid_manifest_files(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "ghost.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        with pytest.raises(ManifestError, match="invalid JSON"):
            load_manifest(bad)

    def test_boundary_roundtrip(self, tmp_path):
        boundary = LayoutBoundary(np.linspace(-0.8, -0.2, 16),
                                  np.linspace(0.1, 0.9, 16), 1.4)
        path = tmp_path / "b.json"
        save_boundary(path, boundary)
        out = load_boundary(path, 1.4)
        assert np.array_equal(out.floor_lat, boundary.floor_lat)
        assert np.array_equal(out.ceil_lat, boundary.ceil_lat)
        assert out.camera_height == 1.4

    def test_boundary_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2")
        with pytest.raises(ManifestError, match="invalid boundary"):
            load_boundary(bad, 1.0)
        partial = tmp_path / "partial.json"
        partial.write_text(json.dumps({"floor_lat": [-0.1]}))
        with pytest.raises(ManifestError, match="ceil_lat"):
            load_boundary(partial, 1.0)
