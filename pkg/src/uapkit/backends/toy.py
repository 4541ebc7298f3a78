"""Small deterministic encoder used for tests, smoke runs and offline demos.

The image tower is a seeded random-feature patch network (patch linear ->
tanh -> mean pool -> linear) with a hand-written VJP. The text tower is a
stable character n-gram hashing featurizer: deterministic and distinct per
string, but not semantically aligned with the image tower — use image
concepts when crafting against this backend.
"""

import zlib

import numpy as np

from .base import EncoderBackend


class ToyConvEncoder(EncoderBackend):
    def __init__(self, embed_dim=64, image_resolution=32, patch=8, hidden=256, seed=0):
        if image_resolution % patch != 0:
            raise ValueError("image_resolution must be a multiple of patch")
        self.embed_dim = embed_dim
        self.image_resolution = image_resolution
        self.patch = patch
        self.hidden = hidden
        self.seed = seed
        self.name = f"toyconv-d{embed_dim}-r{image_resolution}-s{seed}"

        rng = np.random.default_rng(seed)
        fan_in = 3 * patch * patch
        self.w1 = (rng.standard_normal((hidden, fan_in)) / np.sqrt(fan_in)).astype(np.float32)
        self.b1 = (0.1 * rng.standard_normal(hidden)).astype(np.float32)
        self.w2 = (rng.standard_normal((embed_dim, hidden)) / np.sqrt(hidden)).astype(np.float32)

    def _to_patches(self, images):
        b = images.shape[0]
        g = self.image_resolution // self.patch
        p = self.patch
        cols = images.reshape(b, 3, g, p, g, p).transpose(0, 2, 4, 1, 3, 5)
        return np.ascontiguousarray(cols).reshape(b, g * g, 3 * p * p)

    def _from_patches(self, cols, batch):
        g = self.image_resolution // self.patch
        p = self.patch
        cols = cols.reshape(batch, g, g, 3, p, p).transpose(0, 3, 1, 4, 2, 5)
        return np.ascontiguousarray(cols).reshape(batch, 3, self.image_resolution, self.image_resolution)

    def encode_image_and_vjp(self, images):
        images = self.check_image_batch(images)
        cols = self._to_patches(images)                      # [B,P,fan_in]
        hidden = np.tanh(cols @ self.w1.T + self.b1)         # [B,P,hidden]
        pooled = hidden.mean(axis=1)                         # [B,hidden]
        emb = pooled @ self.w2.T                             # [B,d]
        n_patches = cols.shape[1]
        batch = images.shape[0]

        def vjp(grad_emb):
            grad_emb = np.asarray(grad_emb, dtype=np.float32)
            g_pooled = grad_emb @ self.w2                    # [B,hidden]
            g_hidden = g_pooled[:, None, :] / n_patches      # mean-pool backward
            g_pre = g_hidden * (1.0 - hidden ** 2)           # tanh backward
            g_cols = g_pre @ self.w1                         # [B,P,fan_in]
            return self._from_patches(g_cols, batch)

        return emb.astype(np.float32), vjp

    def encode_text(self, texts):
        out = np.zeros((len(texts), self.embed_dim), dtype=np.float32)
        for k, text in enumerate(texts):
            data = text.lower().encode("utf-8")
            count = 0
            for n in (1, 2, 3):
                for i in range(len(data) - n + 1):
                    h = zlib.crc32(data[i:i + n], n)
                    out[k, (h >> 1) % self.embed_dim] += 1.0 if h & 1 else -1.0
                    count += 1
            if count:
                out[k] /= np.sqrt(count)
        return out
