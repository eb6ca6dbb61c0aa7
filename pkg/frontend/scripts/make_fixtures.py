"""Regenerate the shared projection test vectors.

Run from the repository root with the Python package installed:

    python3 frontend/scripts/make_fixtures.py

The viewer must reproduce the engine's direction<->pixel mapping exactly,
so the fixture values are produced by the engine itself and checked into
the repo; the TypeScript tests replay them within 1e-6.
"""

import json
import os

import numpy as np

from panosplat import geometry

SIZES = [(64, 128), (512, 1024)]


def main():
    rng = np.random.default_rng(42)
    d2p = []
    for h, w in SIZES:
        dirs = rng.normal(size=(30, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        # axis-aligned and seam/pole directions exercise the atan2 branches
        dirs = np.vstack([dirs, np.array([
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0],
            [0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0],
        ])])
        for d in dirs:
            theta, phi = geometry.spherical_map(d)
            r, c = geometry.angles_to_pixel(theta, phi, h, w)
            d2p.append({"h": h, "w": w, "d": list(d),
                        "theta": theta, "phi": phi,
                        "row": float(r), "col": float(c)})

    p2d = []
    for h, w in SIZES:
        rows = np.concatenate([rng.uniform(0.0, h, 30),
                               [0.5, h / 2.0, h - 0.5]])
        cols = np.concatenate([rng.uniform(0.0, w, 30),
                               [0.5, w / 2.0, w - 0.5]])
        for r, c in zip(rows, cols):
            d = geometry.pixel_to_direction(float(r), float(c), h, w)
            p2d.append({"h": h, "w": w, "row": float(r), "col": float(c),
                        "d": list(d)})

    out = os.path.join(os.path.dirname(__file__), "..", "test", "fixtures",
                       "reproject_vectors.json")
    with open(out, "w") as f:
        json.dump({"direction_to_pixel": d2p, "pixel_to_direction": p2d},
                  f, indent=1)
    print(f"wrote {len(d2p)} + {len(p2d)} vectors to {os.path.normpath(out)}")


if __name__ == "__main__":
    main()
