"""Hot image-warp kernels: numba-jitted by default, pure numpy on demand.

Set UAPKIT_NO_NUMBA=1 to force the numpy fallback (the kernels stay
importable either way so benchmarks can time both paths side by side).

Both kernels treat the warp as a linear operator on pixels: for fixed
per-sample inverse homographies the bilinear gather has a exact transpose
(the scatter in the vjp), which is what the crafting loop backpropagates
through.

Coordinate convention: x = column index, y = row index, pixel centers at
integer coordinates. ``inv_mats[b]`` maps output homogeneous coordinates
(x, y, 1) to source coordinates; samples falling outside the source extent
contribute zero.
"""

import os

import numpy as np

_flag = os.environ.get("UAPKIT_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes", "on"}

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    HAVE_NUMBA = False


def numba_active():
    """True when the jitted kernels are the default dispatch target."""
    return HAVE_NUMBA and not NUMBA_DISABLED


def _out_grid(h, w):
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel(), np.ones(h * w)], axis=0)  # [3, H*W]


def warp_bilinear_numpy(img, inv_mats):
    """Vectorized bilinear warp, zero fill outside the source extent."""
    b, c, h, w = img.shape
    src = inv_mats.astype(np.float64) @ _out_grid(h, w)  # [B,3,H*W]
    x_s = src[:, 0, :] / src[:, 2, :]
    y_s = src[:, 1, :] / src[:, 2, :]
    x0 = np.floor(x_s).astype(np.int64)
    y0 = np.floor(y_s).astype(np.int64)
    fx = x_s - x0
    fy = y_s - y0

    flat = img.reshape(b, c, h * w).astype(np.float64)
    out = np.zeros((b, c, h * w), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            wgt = np.where(valid, (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy), 0.0)
            idx = np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
            out += wgt[:, None, :] * np.take_along_axis(flat, idx[:, None, :], axis=2)
    return out.reshape(b, c, h, w).astype(img.dtype)


def warp_bilinear_vjp_numpy(grad_out, inv_mats):
    """Transpose of :func:`warp_bilinear_numpy` (scatter instead of gather)."""
    b, c, h, w = grad_out.shape
    src = inv_mats.astype(np.float64) @ _out_grid(h, w)
    x_s = src[:, 0, :] / src[:, 2, :]
    y_s = src[:, 1, :] / src[:, 2, :]
    x0 = np.floor(x_s).astype(np.int64)
    y0 = np.floor(y_s).astype(np.int64)
    fx = x_s - x0
    fy = y_s - y0

    gflat = grad_out.reshape(b, c, h * w).astype(np.float64)
    grad_in = np.zeros((b, c, h * w), dtype=np.float64)
    bi = np.arange(b)[:, None, None]
    ci = np.arange(c)[None, :, None]
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            wgt = np.where(valid, (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy), 0.0)
            idx = np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
            np.add.at(grad_in, (bi, ci, idx[:, None, :]), wgt[:, None, :] * gflat)
    return grad_in.reshape(b, c, h, w).astype(grad_out.dtype)


if HAVE_NUMBA:

    @njit(parallel=True)
    def _warp_fwd_jit(img, inv_mats, out):  # pragma: no cover - exercised via wrapper
        b, c, h, w = img.shape
        for ib in prange(b):
            m = inv_mats[ib]
            for i in range(h):
                for j in range(w):
                    ww = m[2, 0] * j + m[2, 1] * i + m[2, 2]
                    xs = (m[0, 0] * j + m[0, 1] * i + m[0, 2]) / ww
                    ys = (m[1, 0] * j + m[1, 1] * i + m[1, 2]) / ww
                    x0 = int(np.floor(xs))
                    y0 = int(np.floor(ys))
                    fx = xs - x0
                    fy = ys - y0
                    for ic in range(c):
                        acc = 0.0
                        if 0 <= y0 < h:
                            if 0 <= x0 < w:
                                acc += (1.0 - fx) * (1.0 - fy) * img[ib, ic, y0, x0]
                            if 0 <= x0 + 1 < w:
                                acc += fx * (1.0 - fy) * img[ib, ic, y0, x0 + 1]
                        if 0 <= y0 + 1 < h:
                            if 0 <= x0 < w:
                                acc += (1.0 - fx) * fy * img[ib, ic, y0 + 1, x0]
                            if 0 <= x0 + 1 < w:
                                acc += fx * fy * img[ib, ic, y0 + 1, x0 + 1]
                        out[ib, ic, i, j] = acc

    @njit(parallel=True)
    def _warp_vjp_jit(grad_out, inv_mats, grad_in):  # pragma: no cover
        b, c, h, w = grad_out.shape
        for ib in prange(b):  # each sample scatters into its own slice: race-free
            m = inv_mats[ib]
            for i in range(h):
                for j in range(w):
                    ww = m[2, 0] * j + m[2, 1] * i + m[2, 2]
                    xs = (m[0, 0] * j + m[0, 1] * i + m[0, 2]) / ww
                    ys = (m[1, 0] * j + m[1, 1] * i + m[1, 2]) / ww
                    x0 = int(np.floor(xs))
                    y0 = int(np.floor(ys))
                    fx = xs - x0
                    fy = ys - y0
                    for ic in range(c):
                        g = grad_out[ib, ic, i, j]
                        if g == 0.0:
                            continue
                        if 0 <= y0 < h:
                            if 0 <= x0 < w:
                                grad_in[ib, ic, y0, x0] += (1.0 - fx) * (1.0 - fy) * g
                            if 0 <= x0 + 1 < w:
                                grad_in[ib, ic, y0, x0 + 1] += fx * (1.0 - fy) * g
                        if 0 <= y0 + 1 < h:
                            if 0 <= x0 < w:
                                grad_in[ib, ic, y0 + 1, x0] += (1.0 - fx) * fy * g
                            if 0 <= x0 + 1 < w:
                                grad_in[ib, ic, y0 + 1, x0 + 1] += fx * fy * g

    def warp_bilinear_numba(img, inv_mats):
        img = np.ascontiguousarray(img, dtype=np.float32)
        inv_mats = np.ascontiguousarray(inv_mats, dtype=np.float64)
        out = np.empty_like(img)
        _warp_fwd_jit(img, inv_mats, out)
        return out

    def warp_bilinear_vjp_numba(grad_out, inv_mats):
        grad_out = np.ascontiguousarray(grad_out, dtype=np.float32)
        inv_mats = np.ascontiguousarray(inv_mats, dtype=np.float64)
        grad_in = np.zeros_like(grad_out)
        _warp_vjp_jit(grad_out, inv_mats, grad_in)
        return grad_in

else:  # pragma: no cover
    warp_bilinear_numba = None
    warp_bilinear_vjp_numba = None


def warp_bilinear(img, inv_mats):
    """Warp a [B,C,H,W] batch by per-sample inverse homographies [B,3,3].

    float64 batches stay on the full-precision numpy path; everything else
    takes the jitted float32 kernel when enabled.
    """
    if numba_active() and img.dtype != np.float64:
        return warp_bilinear_numba(img, inv_mats)
    return warp_bilinear_numpy(img, inv_mats)


def warp_bilinear_vjp(grad_out, inv_mats):
    """Gradient of :func:`warp_bilinear` with respect to its input batch."""
    if numba_active() and grad_out.dtype != np.float64:
        return warp_bilinear_vjp_numba(grad_out, inv_mats)
    return warp_bilinear_vjp_numpy(grad_out, inv_mats)
