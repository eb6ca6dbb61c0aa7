"""Image and depth-map file I/O.

Color panoramas are 8- or 16-bit PNG/JPEG, exchanged as float arrays in
[0, 1]. Depth maps are PFM (float32, meters) or 16-bit PNG with a
``depth_scale`` text chunk giving meters per unit.
"""

import re

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import ImageFormatError

DEPTH_PNG_KEY = "depth_scale"


def load_image(path):
    """Load a color image as float64 (H, W, 3) in [0, 1]."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot read image {path}: {exc}") from exc
    mode = img.mode
    if mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    else:
        if mode not in ("RGB", "RGBA", "L", "LA", "P"):
            raise ImageFormatError(f"unsupported image mode {mode!r} in {path}")
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"expected a color image in {path}")
    return arr


def load_panorama(path):
    """Load a color panorama, checking the 2:1 equirectangular aspect."""
    arr = load_image(path)
    h, w = arr.shape[:2]
    if w != 2 * h:
        raise ImageFormatError(
            f"panorama {path} is {w}x{h}, expected width = 2 * height")
    return arr


def save_image(path, image, bit_depth=8):
    """Save a float image in [0, 1] as PNG (8/16-bit) or JPEG (8-bit)."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    path = str(path)
    if bit_depth == 16:
        if not path.lower().endswith(".png"):
            raise ImageFormatError("16-bit output requires PNG")
        if image.ndim == 3:
            raise ImageFormatError("16-bit PNG output is single-channel only")
        data = np.round(image * 65535.0).astype(np.uint16)
        Image.fromarray(data).save(path)
        return
    if bit_depth != 8:
        raise ImageFormatError(f"unsupported bit depth {bit_depth}")
    data = np.round(image * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def encode_png(image):
    """Encode a float RGB image in [0, 1] to 8-bit PNG bytes."""
    import io

    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data).save(buf, format="PNG")
    return buf.getvalue()


def encode_jpeg(image, quality=90):
    """Encode a float RGB image in [0, 1] to JPEG bytes."""
    import io

    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data).save(buf, format="JPEG", quality=int(quality))
    return buf.getvalue()


def save_depth_pfm(path, depth):
    """Write a single-channel float32 PFM (little-endian, bottom-up rows)."""
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise ImageFormatError("PFM depth must be 2D")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(depth[::-1]).tobytes())


def load_depth_pfm(path):
    """Read a single-channel PFM as float64 meters."""
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+([-0-9.eE+]+)\s", data)
    if m is None:
        raise ImageFormatError(f"not a PFM file: {path}")
    if m.group(1) != b"Pf":
        raise ImageFormatError(f"only grayscale PFM supported: {path}")
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    avail = (len(data) - m.end()) // 4
    pixels = np.frombuffer(data, dtype=dtype, count=min(h * w, avail),
                           offset=m.end())
    if pixels.size != h * w:
        raise ImageFormatError(f"truncated PFM data in {path}")
    depth = pixels.reshape(h, w)[::-1].astype(np.float64)
    if abs(scale) != 1.0:
        depth = depth * abs(scale)
    return depth


def save_depth_png(path, depth):
    """Write depth as 16-bit PNG with a depth_scale text chunk (m/unit)."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ImageFormatError("depth must be 2D")
    finite = depth[np.isfinite(depth)]
    peak = float(finite.max()) if finite.size else 1.0
    scale = max(peak, 1e-9) / 65535.0
    data = np.zeros_like(depth)
    np.divide(depth, scale, out=data, where=np.isfinite(depth))
    data = np.round(np.clip(data, 0, 65535)).astype(np.uint16)
    info = PngImagePlugin.PngInfo()
    info.add_text(DEPTH_PNG_KEY, repr(scale))
    Image.fromarray(data).save(path, pnginfo=info)


def load_depth_png(path):
    """Read a 16-bit depth PNG written by save_depth_png (meters)."""
    img = Image.open(path)
    img.load()
    if img.mode not in ("I;16", "I;16B", "I"):
        raise ImageFormatError(f"depth PNG must be 16-bit grayscale: {path}")
    text = getattr(img, "text", {})
    if DEPTH_PNG_KEY not in text:
        raise ImageFormatError(f"missing {DEPTH_PNG_KEY} chunk in {path}")
    scale = float(text[DEPTH_PNG_KEY])
    return np.asarray(img, dtype=np.float64) * scale


def load_depth(path):
    """Dispatch on extension: .pfm or 16-bit .png."""
    lower = str(path).lower()
    if lower.endswith(".pfm"):
        return load_depth_pfm(path)
    if lower.endswith(".png"):
        return load_depth_png(path)
    raise ImageFormatError(f"unsupported depth format: {path}")
