"""Photometric and layout losses with analytic gradients.

The SSIM term uses an 11x11 Gaussian window (sigma 1.5), stabilization
constants k1=0.01, k2=0.03 at dynamic range 1, and averages the SSIM map
over the region where the window fits entirely inside the image (the
border of (window-1)/2 pixels is cropped).
"""

import numpy as np

from .errors import InvalidParameterError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
_PAD = (SSIM_WINDOW - 1) // 2


def _check_pair(a, b):
    if a.shape != b.shape:
        raise InvalidParameterError(
            f"image shape mismatch: {a.shape} vs {b.shape}")


def l1_loss(rendered, target):
    """Mean absolute difference over all pixels and channels."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(rendered, target)
    return float(np.mean(np.abs(rendered - target)))


def l1_loss_backward(rendered, target):
    """d l1_loss / d rendered."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(rendered, target)
    return np.sign(rendered - target) / rendered.size


def _gaussian_kernel():
    i = np.arange(SSIM_WINDOW) - _PAD
    k = np.exp(-(i * i) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    return k / k.sum()


_KERNEL = _gaussian_kernel()


def _filter_valid(img):
    """Separable Gaussian filter, valid region only: (H,W) -> (H-10, W-10)."""
    h, w = img.shape
    tmp = np.zeros((h - 2 * _PAD, w))
    for i in range(SSIM_WINDOW):
        tmp += _KERNEL[i] * img[i:i + h - 2 * _PAD]
    out = np.zeros((h - 2 * _PAD, w - 2 * _PAD))
    for i in range(SSIM_WINDOW):
        out += _KERNEL[i] * tmp[:, i:i + w - 2 * _PAD]
    return out


def _filter_adjoint(gmap, shape):
    """Adjoint of _filter_valid: scatter a valid-region map back to (H, W)."""
    h, w = shape
    tmp = np.zeros((gmap.shape[0], w))
    for i in range(SSIM_WINDOW):
        tmp[:, i:i + w - 2 * _PAD] += _KERNEL[i] * gmap
    out = np.zeros((h, w))
    for i in range(SSIM_WINDOW):
        out[i:i + h - 2 * _PAD] += _KERNEL[i] * tmp
    return out


def _ssim_channel(x, y):
    """Per-channel SSIM map plus the intermediates for the backward pass."""
    mu1 = _filter_valid(x)
    mu2 = _filter_valid(y)
    sxx = _filter_valid(x * x) - mu1 * mu1
    syy = _filter_valid(y * y) - mu2 * mu2
    sxy = _filter_valid(x * y) - mu1 * mu2
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    a1 = 2.0 * mu1 * mu2 + c1
    a2 = 2.0 * sxy + c2
    b1 = mu1 * mu1 + mu2 * mu2 + c1
    b2 = sxx + syy + c2
    return (a1 * a2) / (b1 * b2), (mu1, mu2, sxy, a1, a2, b1, b2)


def ssim(rendered, target):
    """Mean SSIM over channels and the valid (border-cropped) region."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(rendered, target)
    if rendered.ndim == 2:
        rendered = rendered[:, :, None]
        target = target[:, :, None]
    if min(rendered.shape[0], rendered.shape[1]) < SSIM_WINDOW:
        raise InvalidParameterError("image smaller than the SSIM window")
    total = 0.0
    for ch in range(rendered.shape[2]):
        s_map, _ = _ssim_channel(rendered[:, :, ch], target[:, :, ch])
        total += s_map.mean()
    return total / rendered.shape[2]


def dssim_loss(rendered, target):
    """Structural dissimilarity 1 - SSIM."""
    return 1.0 - ssim(rendered, target)


def dssim_loss_backward(rendered, target):
    """d dssim_loss / d rendered, analytic."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(rendered, target)
    squeeze = rendered.ndim == 2
    if squeeze:
        rendered = rendered[:, :, None]
        target = target[:, :, None]
    h, w, n_ch = rendered.shape
    n_valid = (h - 2 * _PAD) * (w - 2 * _PAD)
    grad = np.zeros_like(rendered)
    for ch in range(n_ch):
        x = rendered[:, :, ch]
        y = target[:, :, ch]
        _, (mu1, mu2, sxy, a1, a2, b1, b2) = _ssim_channel(x, y)
        # dssim = 1 - mean(S); dL/dS = -1 / (n_valid * n_ch)
        g_s = np.full(mu1.shape, -1.0 / (n_valid * n_ch))
        db = b1 * b2
        d_a1 = g_s * a2 / db
        d_a2 = g_s * a1 / db
        d_b1 = -g_s * a1 * a2 / (db * b1)
        d_b2 = -g_s * a1 * a2 / (db * b2)
        # through a1=2 mu1 mu2 + c1, b1=mu1^2+mu2^2+c1, a2=2 sxy + c2,
        # b2 = sxx + syy + c2, with sxx = F(x^2)-mu1^2, sxy = F(xy)-mu1 mu2
        d_mu1 = 2.0 * mu2 * d_a1 + 2.0 * mu1 * d_b1
        d_sxx = d_b2
        d_sxy = 2.0 * d_a2
        d_mu1 = d_mu1 - 2.0 * mu1 * d_sxx - mu2 * d_sxy
        g = _filter_adjoint(d_mu1, (h, w))
        g += 2.0 * x * _filter_adjoint(d_sxx, (h, w))
        g += y * _filter_adjoint(d_sxy, (h, w))
        grad[:, :, ch] = g
    return grad[:, :, 0] if squeeze else grad


def layout_loss(positions, anchors):
    """Mean absolute cosine between anchored movement and the plane normal.

    anchors: (index, u0, n) arrays; contributions with movement below
    1e-8 are zero. Penalizes out-of-plane motion, leaves in-plane sliding
    free.
    """
    if len(anchors.index) == 0:
        return 0.0
    diff = positions[anchors.index] - anchors.u0
    dist = np.linalg.norm(diff, axis=1)
    moved = dist >= 1e-8
    safe = np.where(moved, dist, 1.0)
    cos = np.einsum("ij,ij->i", anchors.normal, diff) / safe
    return float(np.sum(np.abs(cos[moved])) / len(anchors.index))


def layout_loss_backward(positions, anchors):
    """d layout_loss / d positions (zero rows for unanchored Gaussians)."""
    grad = np.zeros_like(positions)
    n_anchor = len(anchors.index)
    if n_anchor == 0:
        return grad
    diff = positions[anchors.index] - anchors.u0
    dist = np.linalg.norm(diff, axis=1)
    moved = dist >= 1e-8
    safe = np.where(moved, dist, 1.0)
    unit = diff / safe[:, None]
    cos = np.einsum("ij,ij->i", anchors.normal, unit)
    contrib = np.sign(cos)[:, None] * (anchors.normal - cos[:, None] * unit) \
        / safe[:, None] / n_anchor
    contrib[~moved] = 0.0
    np.add.at(grad, anchors.index, contrib)
    return grad


def total_loss(rendered, target, positions, anchors, lambda1, lambda2,
               lambda3):
    """lambda1 * L1 + lambda2 * DSSIM + lambda3 * layout, with components."""
    parts = {
        "l1": l1_loss(rendered, target),
        "dssim": dssim_loss(rendered, target),
        "layout": layout_loss(positions, anchors) if lambda3 != 0.0 else 0.0,
    }
    total = (lambda1 * parts["l1"] + lambda2 * parts["dssim"]
             + lambda3 * parts["layout"])
    return total, parts


def total_loss_backward(rendered, target, positions, anchors, lambda1,
                        lambda2, lambda3):
    """Returns (d total / d rendered, d total / d positions)."""
    grad_img = lambda1 * l1_loss_backward(rendered, target) \
        + lambda2 * dssim_loss_backward(rendered, target)
    if lambda3 != 0.0:
        grad_pos = lambda3 * layout_loss_backward(positions, anchors)
    else:
        grad_pos = np.zeros_like(positions)
    return grad_img, grad_pos


def psnr(rendered, target, cap=99.0):
    """Peak signal-to-noise ratio in dB, capped for identical images."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(rendered, target)
    mse = float(np.mean((rendered - target) ** 2))
    if mse <= 10 ** (-cap / 10.0):
        return cap
    return float(min(10.0 * np.log10(1.0 / mse), cap))
