"""Encoder backend contract.

A backend bundles an image tower and a text tower over a shared embedding
space. The image tower must support gradient flow to its input pixels,
exposed as a VJP so callers do not depend on any particular autodiff
machinery.
"""

import numpy as np

from ..errors import EncoderBackendError, ResolutionError


class EncoderBackend:
    """Base class; subclasses set name, embed_dim and image_resolution."""

    name = "abstract"
    embed_dim = 0
    image_resolution = 0

    def encode_text(self, texts):
        """Embed a list of strings -> [K, embed_dim]."""
        raise NotImplementedError

    def encode_image(self, images):
        """Embed a [B,C,H,W] batch in [0,1] -> [B, embed_dim]."""
        emb, _ = self.encode_image_and_vjp(images)
        return emb

    def encode_image_and_vjp(self, images):
        """Embeddings plus a closure mapping an upstream [B, embed_dim]
        gradient back to a [B,C,H,W] pixel gradient."""
        raise NotImplementedError

    def check_image_batch(self, images):
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4:
            raise EncoderBackendError(f"expected [B,C,H,W], got shape {images.shape}")
        if images.shape[2] != self.image_resolution or images.shape[3] != self.image_resolution:
            raise ResolutionError(
                f"backend {self.name} expects {self.image_resolution}x{self.image_resolution} "
                f"inputs, got {images.shape[2]}x{images.shape[3]} (resize beforehand)")
        if images.size and (images.min() < -1e-6 or images.max() > 1.0 + 1e-6):
            raise EncoderBackendError("image batch must lie in [0, 1]")
        return images


def gradient_probe(backend, rng, rel_tol=1e-2, step=1e-2):
    """Finite-difference check that encode_image admits gradient flow to a
    probe pixel. Returns (analytic, numeric); raises on disagreement."""
    r = backend.image_resolution
    img = rng.uniform(0.2, 0.8, size=(1, 3, r, r)).astype(np.float32)
    weights = rng.normal(size=(1, backend.embed_dim)).astype(np.float32)

    emb, vjp = backend.encode_image_and_vjp(img)
    grad = vjp(weights)
    c, i, j = [int(v) for v in (rng.integers(0, 3), rng.integers(0, r), rng.integers(0, r))]
    analytic = float(grad[0, c, i, j])

    def scalar(x):
        return float((backend.encode_image(x) * weights).sum())

    plus = img.copy()
    plus[0, c, i, j] += step
    minus = img.copy()
    minus[0, c, i, j] -= step
    numeric = (scalar(plus) - scalar(minus)) / (2 * step)
    denom = max(abs(analytic), abs(numeric), 1e-6)
    if abs(analytic - numeric) / denom > rel_tol:
        raise EncoderBackendError(
            f"gradient probe failed for {backend.name}: analytic {analytic} vs numeric {numeric}")
    return analytic, numeric
