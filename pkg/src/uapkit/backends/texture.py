"""Oriented-frequency energy-bank encoder.

A fixed bank of full-image sine/cosine pairs over a grid of orientations
and spatial frequencies; the embedding holds the (phase-invariant) energy
of the luma channel in each band plus the per-channel means. This is the
texture-domain counterpart of a general pretrained encoder: moving an
embedding toward a texture concept requires physically writing that
concept's frequency content into the image, so perturbations crafted
against it carry over to texture-trained classifiers.

The text tower reuses the hashing featurizer (deterministic, unaligned);
use image concepts for meaningful crafting.
"""

import numpy as np

from .base import EncoderBackend
from .toy import ToyConvEncoder


class TextureBankEncoder(EncoderBackend):
    def __init__(self, image_resolution=32, orientations=20, freq_lo=2.0, freq_hi=12.0,
                 freq_step=0.5):
        self.image_resolution = image_resolution
        self.name = f"texture-r{image_resolution}"
        coords = np.arange(image_resolution, dtype=np.float64)
        gx, gy = np.meshgrid(coords, coords)
        sins, coss = [], []
        for theta_deg in np.linspace(0.0, 180.0, orientations, endpoint=False):
            theta = np.deg2rad(theta_deg)
            u = (gx * np.cos(theta) + gy * np.sin(theta)) / image_resolution
            for freq in np.arange(freq_lo, freq_hi, freq_step):
                s = np.sin(2 * np.pi * freq * u)
                c = np.cos(2 * np.pi * freq * u)
                sins.append((s / np.linalg.norm(s)).ravel())
                coss.append((c / np.linalg.norm(c)).ravel())
        self._sin = np.asarray(sins, dtype=np.float32)   # [J, H*W]
        self._cos = np.asarray(coss, dtype=np.float32)
        self.bands = self._sin.shape[0]
        self.embed_dim = self.bands + 3
        self._eps = 1e-6
        self._text_tower = ToyConvEncoder(embed_dim=self.embed_dim,
                                          image_resolution=image_resolution)

    def encode_image_and_vjp(self, images):
        images = self.check_image_batch(images)
        b, c, h, w = images.shape
        gray = images.mean(axis=1).reshape(b, h * w)
        u = gray @ self._sin.T
        v = gray @ self._cos.T
        energy = np.sqrt(u * u + v * v + self._eps)
        tint = images.mean(axis=(2, 3))
        emb = np.concatenate([energy, tint], axis=1).astype(np.float32)

        def vjp(grad_emb):
            grad_emb = np.asarray(grad_emb, dtype=np.float32)
            g_energy = grad_emb[:, :self.bands]
            g_tint = grad_emb[:, self.bands:]
            g_gray = (g_energy * u / energy) @ self._sin + (g_energy * v / energy) @ self._cos
            grad = np.repeat(g_gray.reshape(b, 1, h, w) / c, c, axis=1)
            grad += (g_tint / (h * w))[:, :, None, None]
            return grad.astype(np.float32)

        return emb, vjp

    def encode_text(self, texts):
        return self._text_tower.encode_text(texts)
