"""Command-line interface.

Subcommands: synth (generate a synthetic box-room dataset), init (fuse
layout priors into an initialization cloud), train, render, eval, serve,
bench. Every command exits 0 on success and nonzero with a one-line
diagnostic on invalid input.
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time

import numpy as np

from .checkpoint import load_checkpoint, load_cloud, save_checkpoint, save_cloud
from .errors import ConfigError, PanoSplatError
from .geometry import PanoramaCamera, yaw_matrix
from .images import (load_depth, load_panorama, save_depth_pfm, save_image)
from .layout import (depth_to_cloud, align_depth_scale, fuse_init,
                     lift_boundary, sample_layout, union_layouts)
from .losses import psnr, ssim
from .manifest import load_boundary, load_manifest, save_boundary
from .renderer import RenderConfig, get_backend, render
from .scene import GaussianScene
from .synthetic import BoxRoom
from .trainer import TrainConfig, anchors_from_cloud, train

log = logging.getLogger("panosplat.cli")


def _parse_pose(text):
    parts = text.replace(",", " ").split()
    if len(parts) != 7:
        raise ConfigError("pose needs 7 numbers: qw qx qy qz tx ty tz")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"pose is not numeric: {text!r}")
    return np.array(vals[:4]), np.array(vals[4:])


def _check_resolution(height, width):
    if height < 2 or width != 2 * height:
        raise ConfigError(
            f"resolution {width}x{height} must satisfy width = 2 * height")


def _train_config(args):
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                values = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in ("iterations", "seed", "lambda1", "lambda2", "lambda3"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def _render_config(args):
    cfg = RenderConfig()
    if getattr(args, "backend", None):
        cfg.backend = args.backend
    if getattr(args, "threads", None) is not None:
        cfg.num_threads = args.threads
    return cfg


def _load_views(man, split):
    views = []
    for record in man.split(split):
        image = load_panorama(record.image_path)
        cam = record.camera(image.shape[0], image.shape[1])
        views.append((record, cam, image))
    return views


def cmd_synth(args):
    _check_resolution(args.height, 2 * args.height)
    room = BoxRoom(half_x=args.half_x, half_z=args.half_z,
                   height=args.room_height, texture_seed=args.seed)
    rng = np.random.default_rng(args.seed)
    n = args.views + args.test_views
    if n < 1:
        raise ConfigError("need at least one view")
    os.makedirs(args.out, exist_ok=True)
    for sub in ("images", "depths", "layouts"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)

    margin = 0.5
    centers = np.stack([
        rng.uniform(-room.half_x + margin, room.half_x - margin, n),
        np.full(n, -args.camera_height),
        rng.uniform(-room.half_z + margin, room.half_z - margin, n),
    ], axis=1)
    yaws = rng.uniform(0.0, 2 * np.pi, n)

    views = []
    for i in range(n):
        rot = yaw_matrix(float(yaws[i]))
        cam = PanoramaCamera(rotation=rot, translation=-rot @ centers[i],
                             height_px=args.height, width_px=2 * args.height)
        vid = f"view{i:02d}"
        save_image(os.path.join(args.out, "images", vid + ".png"),
                   room.render(cam))
        save_depth_pfm(os.path.join(args.out, "depths", vid + ".pfm"),
                       room.depth(cam))
        save_boundary(os.path.join(args.out, "layouts", vid + ".json"),
                      room.boundary(cam))
        q = np.array([np.cos(yaws[i] / 2), 0.0, np.sin(yaws[i] / 2), 0.0])
        t = cam.translation
        views.append({
            "id": vid, "image": f"images/{vid}.png",
            "depth": f"depths/{vid}.pfm", "layout": f"layouts/{vid}.json",
            "pose": {"qw": q[0], "qx": q[1], "qy": q[2], "qz": q[3],
                     "tx": t[0], "ty": t[1], "tz": t[2]},
        })
    ids = [v["id"] for v in views]
    manifest = {
        "camera_height_m": args.camera_height,
        "views": views,
        "train": ids[:args.views],
        "test": ids[args.views:],
    }
    path = os.path.join(args.out, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1)
    print(f"wrote {n} views to {path}")
    return 0


def cmd_init(args):
    man = load_manifest(args.manifest)
    views = _load_views(man, "train")
    layouts = []
    bounds = {}
    for record, cam, _ in views:
        if record.layout_path is None:
            continue
        boundary = load_boundary(record.layout_path, man.camera_height_m)
        bounds[record.view_id] = boundary
        layouts.append(lift_boundary(boundary, cam))
    if not layouts:
        raise ConfigError("no training view provides a layout boundary")
    layout = union_layouts(layouts) if len(layouts) > 1 else layouts[0]
    layout_cloud = sample_layout(layout, density=args.density)

    depth_clouds = []
    for record, cam, image in views:
        if record.depth_path is None:
            continue
        depth = load_depth(record.depth_path)
        cloud = depth_to_cloud(depth, image, cam)
        boundary = bounds.get(record.view_id)
        if boundary is not None:
            scale = align_depth_scale(cloud, layout, boundary, cam)
            if scale != 1.0:
                cloud = depth_to_cloud(depth * scale, image, cam)
        depth_clouds.append(cloud)

    fused = fuse_init(layout_cloud, depth_clouds, voxel=args.voxel)
    save_cloud(args.out, fused)
    n_layout = int(np.sum(fused.source == 0))
    print(f"wrote {len(fused)} points ({n_layout} layout, "
          f"{len(fused) - n_layout} depth) to {args.out}")
    return 0


def cmd_train(args):
    man = load_manifest(args.manifest)
    cfg = _train_config(args)
    rcfg = _render_config(args)
    views = [(cam, image) for _, cam, image in _load_views(man, "train")]

    start_iter = 0
    if args.resume:
        scene, anchors, meta = load_checkpoint(args.resume)
        start_iter = int(meta.get("iteration", 0))
    else:
        if not args.init:
            raise ConfigError("need --init cloud or --resume checkpoint")
        cloud = load_cloud(args.init)
        scene = GaussianScene.from_points(cloud.points, cloud.colors,
                                          sh_degree=args.sh_degree)
        anchors = anchors_from_cloud(cloud)

    result = train(scene, views, anchors, cfg, rcfg)
    save_checkpoint(args.out, result.scene, result.anchors,
                    iteration=start_iter + cfg.iterations, train_config=cfg)
    if args.metrics:
        keys = ["iteration", "view", "total", "l1", "dssim", "layout",
                "psnr", "gaussians", "skipped_grads", "cloned", "split",
                "pruned"]
        with open(args.metrics, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=keys, extrasaction="ignore")
            writer.writeheader()
            for row in result.metrics:
                writer.writerow(row)
    last = result.metrics[-1] if result.metrics else {}
    print(f"trained {cfg.iterations} iterations "
          f"({len(result.scene)} gaussians, final loss "
          f"{last.get('total', float('nan')):.4f}); wrote {args.out}")
    return 0


def cmd_render(args):
    _check_resolution(args.height, args.width)
    scene, _, _ = load_checkpoint(args.checkpoint)
    q, t = _parse_pose(args.pose)
    cam = PanoramaCamera.from_quaternion(q, t, args.height, args.width)
    out = render(scene, cam, _render_config(args))
    save_image(args.out, out.color)
    print(f"wrote {args.width}x{args.height} panorama to {args.out}")
    return 0


def cmd_eval(args):
    scene, _, _ = load_checkpoint(args.checkpoint)
    man = load_manifest(args.manifest)
    views = _load_views(man, args.split)
    if not views:
        raise ConfigError(f"split {args.split!r} is empty")
    rcfg = _render_config(args)
    rows = []
    for record, cam, image in views:
        out = render(scene, cam, rcfg)
        rows.append({"view_id": record.view_id,
                     "psnr": psnr(out.color, image),
                     "ssim": ssim(out.color, image)})
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["view_id", "psnr", "ssim"])
            writer.writeheader()
            writer.writerows(rows)
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    for r in rows:
        print(f"{r['view_id']}: psnr={r['psnr']:.2f} ssim={r['ssim']:.4f}")
    print(f"mean over {len(rows)} views: psnr={mean_psnr:.2f} "
          f"ssim={mean_ssim:.4f}")
    return 0


def cmd_serve(args):
    from .service import make_server

    scene, _, meta = load_checkpoint(args.checkpoint)
    frontend = args.frontend
    if frontend is not None and not os.path.isdir(frontend):
        raise ConfigError(f"frontend dir not found: {frontend}")
    server = make_server(scene, host=args.host, port=args.port,
                         config=_render_config(args), frontend_dir=frontend)
    host, port = server.server_address[:2]
    print(f"serving {len(scene)} gaussians on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _bench_scene(args):
    """Checkpoint scene, or a trained-scene-like synthetic stand-in.

    The synthetic scene spreads Gaussians over the box-room surfaces with
    mostly-opaque opacities, matching the occlusion statistics of a
    converged indoor reconstruction rather than a transparent point fog.
    """
    if args.checkpoint:
        scene, _, _ = load_checkpoint(args.checkpoint)
        return scene
    from .layout import RoomLayout3D, sample_layout
    from scipy.special import logit

    rng = np.random.default_rng(args.seed)
    n = args.gaussians
    if n < 1:
        raise ConfigError("gaussians must be positive")
    room = BoxRoom()
    poly = np.array([[-room.half_x, -room.half_z],
                     [room.half_x, -room.half_z],
                     [room.half_x, room.half_z],
                     [-room.half_x, room.half_z]])
    layout = RoomLayout3D(poly, room.floor_y, room.ceil_y)
    area = 2 * abs(poly[:, 0].max() - poly[:, 0].min()) \
        * abs(poly[:, 1].max() - poly[:, 1].min()) \
        + 2 * room.height * (2 * room.half_x + 2 * room.half_z)
    # oversample, then take exactly n: stratified sampling rounds per face
    cloud = sample_layout(layout, density=max(1.1 * n / area, 1.0))
    if len(cloud.points) < n:
        raise ConfigError("could not sample enough surface points")
    pick = rng.permutation(len(cloud.points))[:n]
    pts = cloud.points[pick] + rng.normal(0, 0.005, (len(pick), 3))
    scene = GaussianScene.from_points(pts, rng.uniform(0, 1, (len(pick), 3)))
    scene.logit_opacities[:] = logit(rng.uniform(0.3, 0.95, len(pick)))
    return scene


def cmd_bench(args):
    if args.frames <= 0:
        raise ConfigError("frames must be positive")
    _check_resolution(args.height, args.width)
    scene = _bench_scene(args)
    backends = ["cython", "python"] if args.backend == "both" \
        else [args.backend]
    rng = np.random.default_rng(args.seed)
    yaws = rng.uniform(0, 2 * np.pi, args.frames)
    offsets = rng.uniform(-0.3, 0.3, (args.frames, 3))
    center = scene.positions.mean(axis=0) if len(scene) else np.zeros(3)
    report = {}
    for backend in backends:
        cfg = RenderConfig(backend=backend)
        get_backend(backend)  # fail fast if unavailable
        cams = [PanoramaCamera(
            rotation=yaw_matrix(float(yaws[i])),
            translation=-yaw_matrix(float(yaws[i])) @ (center + offsets[i]),
            height_px=args.height, width_px=args.width)
            for i in range(args.frames)]
        render(scene, cams[0], cfg)  # warm caches outside the timing loop
        times = []
        for cam in cams:
            t0 = time.perf_counter()
            render(scene, cam, cfg)
            times.append(time.perf_counter() - t0)
        times = np.array(times)
        report[backend] = {
            "frames": args.frames,
            "mean_ms": float(1e3 * times.mean()),
            "median_ms": float(1e3 * np.median(times)),
            "p99_ms": float(1e3 * np.percentile(times, 99)),
            "fps": float(1.0 / times.mean()),
        }
        print(f"{backend}: {len(scene)} gaussians at "
              f"{args.width}x{args.height}: "
              f"mean {report[backend]['mean_ms']:.1f} ms, "
              f"median {report[backend]['median_ms']:.1f} ms, "
              f"p99 {report[backend]['p99_ms']:.1f} ms, "
              f"{report[backend]['fps']:.2f} fps")
    if len(backends) == 2:
        speedup = report["python"]["mean_ms"] / report["cython"]["mean_ms"]
        print(f"compiled kernels are {speedup:.1f}x faster")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=1)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="panosplat",
        description="Panoramic Gaussian-splatting reconstruction and roaming")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic box-room dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--test-views", type=int, default=2)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--camera-height", type=float, default=1.6)
    p.add_argument("--half-x", type=float, default=2.5)
    p.add_argument("--half-z", type=float, default=2.0)
    p.add_argument("--room-height", type=float, default=2.8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init", help="fuse layout priors into an init cloud")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--density", type=float, default=400.0,
                   help="layout samples per square meter")
    p.add_argument("--voxel", type=float, default=0.05,
                   help="depth-cloud voxel size in meters")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("train", help="optimize a scene from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--init", help="initialization cloud PLY")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--sh-degree", type=int, default=1)
    p.add_argument("--metrics", help="per-iteration metrics CSV path")
    p.add_argument("--backend", choices=["auto", "cython", "python"])
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render one panorama from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pose", required=True,
                   help="qw qx qy qz tx ty tz (comma or space separated)")
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=["auto", "cython", "python"])
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="PSNR/SSIM table over a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--backend", choices=["auto", "cython", "python"])
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="HTTP render service for roaming")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", help="static viewer directory")
    p.add_argument("--backend", choices=["auto", "cython", "python"])
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="render throughput report")
    p.add_argument("--checkpoint")
    p.add_argument("--gaussians", type=int, default=100000,
                   help="synthetic scene size when no checkpoint is given")
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default="auto",
                   choices=["auto", "cython", "python", "both"])
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except PanoSplatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
