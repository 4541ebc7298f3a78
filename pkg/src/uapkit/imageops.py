"""Shared low-level image operations.

Bilinear resize is expressed as a pair of cached interpolation matrices so
the crafting loop gets an exact transpose for backpropagation. The rest
(blur, color, JPEG, homographies) backs the non-differentiable robustness
probe.
"""

import io
from functools import lru_cache

import numpy as np
from PIL import Image


# ---------------------------------------------------------------------------
# bilinear resize as a linear operator


@lru_cache(maxsize=64)
def _interp_matrix(out_size, in_size):
    """Rows map output samples to source pixels (half-pixel centers, edges clamped)."""
    mat = np.zeros((out_size, in_size), dtype=np.float64)
    scale = in_size / out_size
    for o in range(out_size):
        src = (o + 0.5) * scale - 0.5
        x0 = int(np.floor(src))
        f = src - x0
        lo = min(max(x0, 0), in_size - 1)
        hi = min(max(x0 + 1, 0), in_size - 1)
        mat[o, lo] += 1.0 - f
        mat[o, hi] += f
    mat = mat.astype(np.float32)
    mat.setflags(write=False)
    return mat


def resize_bilinear(img, out_hw):
    """Resize [B,C,H,W] (or [C,H,W]) to ``out_hw``; linear in the pixels."""
    single = img.ndim == 3
    if single:
        img = img[None]
    b, c, h, w = img.shape
    oh, ow = out_hw
    if (oh, ow) == (h, w):
        out = img.astype(np.float32, copy=True)
        return out[0] if single else out
    rh = _interp_matrix(oh, h)
    rw = _interp_matrix(ow, w)
    flat = img.reshape(b * c, h, w).astype(np.float32)
    out = np.matmul(np.matmul(rh, flat), rw.T).reshape(b, c, oh, ow)
    return out[0] if single else out


def resize_bilinear_vjp(grad_out, in_hw):
    """Transpose of :func:`resize_bilinear` for a [B,C,H',W'] upstream gradient."""
    b, c, oh, ow = grad_out.shape
    h, w = in_hw
    if (oh, ow) == (h, w):
        return grad_out.astype(np.float32, copy=True)
    rh = _interp_matrix(oh, h)
    rw = _interp_matrix(ow, w)
    flat = grad_out.reshape(b * c, oh, ow).astype(np.float32)
    return np.matmul(np.matmul(rh.T, flat), rw).reshape(b, c, h, w)


# ---------------------------------------------------------------------------
# homography builders (x = column, y = row, pixel centers at integers)


def affine_inverse_matrix(h, w, angle_deg=0.0, scale=1.0, tx=0.0, ty=0.0,
                          shear_x_deg=0.0, shear_y_deg=0.0):
    """Inverse (output -> source) matrix of rotate/shear/scale about the image
    center followed by translation by (tx, ty) pixels.

    Built analytically so a zero-parameter draw yields the exact identity.
    """
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    shx = np.tan(np.deg2rad(shear_x_deg))
    shy = np.tan(np.deg2rad(shear_y_deg))
    rot_inv = np.array([[np.cos(-theta), -np.sin(-theta), 0.0],
                        [np.sin(-theta), np.cos(-theta), 0.0],
                        [0.0, 0.0, 1.0]])
    det = 1.0 - shx * shy
    shear_inv = np.array([[1.0 / det, -shx / det, 0.0],
                          [-shy / det, 1.0 / det, 0.0],
                          [0.0, 0.0, 1.0]])
    scale_inv = np.diag([1.0 / scale, 1.0 / scale, 1.0])
    shift_out = np.array([[1.0, 0.0, -(cx + tx)], [0.0, 1.0, -(cy + ty)], [0.0, 0.0, 1.0]])
    shift_back = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
    return shift_back @ scale_inv @ shear_inv @ rot_inv @ shift_out


def homography_from_points(src_pts, dst_pts):
    """3x3 matrix mapping the four ``src_pts`` onto ``dst_pts`` (both [(x, y)]*4)."""
    a = []
    rhs = []
    for (x, y), (u, v) in zip(src_pts, dst_pts):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rhs.append(u)
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.append(v)
    sol = np.linalg.solve(np.asarray(a, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    return np.append(sol, 1.0).reshape(3, 3)


# ---------------------------------------------------------------------------
# probe-side ops on a single [C,H,W] image in [0, 1]


def gaussian_blur(img, kernel_size, sigma):
    """Separable Gaussian blur with reflect padding."""
    half = kernel_size // 2
    xs = np.arange(kernel_size, dtype=np.float64) - half
    kern = np.exp(-0.5 * (xs / sigma) ** 2)
    kern /= kern.sum()
    kern = kern.astype(np.float32)

    def conv_last(arr):
        padded = np.pad(arr, [(0, 0)] * (arr.ndim - 1) + [(half, half)], mode="reflect")
        windows = np.lib.stride_tricks.sliding_window_view(padded, kernel_size, axis=-1)
        return windows @ kern

    out = conv_last(img)
    out = conv_last(out.swapaxes(-1, -2)).swapaxes(-1, -2)
    return out.astype(np.float32)


def rgb_to_hsv(img):
    r, g, b = img[0], img[1], img[2]
    maxc = img.max(axis=0)
    minc = img.min(axis=0)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.maximum(maxc, 1e-12), 0.0)
    safe = np.where(delta == 0, 1.0, delta)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta == 0, 0.0, (h / 6.0) % 1.0)
    return np.stack([h, s, v]).astype(np.float32)


def hsv_to_rgb(hsv):
    h, s, v = hsv[0], hsv[1], hsv[2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [v, q, p, p, t, v])
    g = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [t, v, v, q, p, p])
    b = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [p, p, t, v, v, q])
    return np.stack([r, g, b]).astype(np.float32)


def adjust_hue(img, shift):
    hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
    hsv[0] = (hsv[0] + shift) % 1.0
    return hsv_to_rgb(hsv)


def grayscale(img):
    return 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]


def jpeg_roundtrip(img, quality):
    """Encode/decode through the platform JPEG codec; quantizes to uint8."""
    arr = np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    pil = Image.fromarray(arr.transpose(1, 2, 0))
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    decoded = np.asarray(Image.open(buf).convert("RGB"), dtype=np.float32) / 255.0
    return decoded.transpose(2, 0, 1)
