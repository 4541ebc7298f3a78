"""Reference convolutional victim, trainable in minutes on CIFAR-scale data.

Three conv/relu/maxpool stages plus a linear head, implemented with im2col
and BLAS matmuls. The adapter owns its input normalization: ``classify``
takes pixels in [0,1] and standardizes with the statistics stored alongside
the weights.
"""

import json
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger("uapkit")


def _im2col(x, k, pad):
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))       # [B,C,H,W,k,k]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h * w, c * k * k)


def _col2im(gcols, shape, k, pad):
    b, c, h, w = shape
    gp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=np.float32)
    g = gcols.reshape(b, h, w, c, k, k).transpose(0, 3, 4, 5, 1, 2)  # [B,C,k,k,H,W]
    for ki in range(k):
        for kj in range(k):
            gp[:, :, ki:ki + h, kj:kj + w] += g[:, :, ki, kj]
    return gp[:, :, pad:pad + h, pad:pad + w]


def _maxpool(x):
    b, c, h, w = x.shape
    xr = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool_vjp(grad, idx, shape):
    b, c, h, w = shape
    gr = np.zeros((b, c, h // 2, w // 2, 4), dtype=np.float32)
    np.put_along_axis(gr, idx[..., None], grad[..., None], axis=-1)
    return gr.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


class SmallConvNet:
    KERNEL = 3
    PAD = 1

    def __init__(self, num_classes=10, input_shape=(3, 32, 32), channels=(16, 32, 64),
                 seed=0, mean=None, std=None, name="refconv"):
        self.name = name
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        self.channels = tuple(channels)
        c, h, w = self.input_shape
        if h % 8 or w % 8:
            raise ValueError("input spatial dims must be divisible by 8 (three 2x maxpools)")
        self.mean = np.asarray(mean if mean is not None else [0.5] * c, dtype=np.float32).reshape(1, c, 1, 1)
        self.std = np.asarray(std if std is not None else [0.5] * c, dtype=np.float32).reshape(1, c, 1, 1)

        rng = np.random.default_rng(seed)
        sizes = [c, *channels]
        self.params = {}
        for i in range(3):
            fan_in = sizes[i] * self.KERNEL * self.KERNEL
            self.params[f"w{i}"] = (rng.standard_normal((sizes[i + 1], fan_in))
                                    * np.sqrt(2.0 / fan_in)).astype(np.float32)
            self.params[f"b{i}"] = np.zeros(sizes[i + 1], dtype=np.float32)
        feat = channels[2] * (h // 8) * (w // 8)
        self.params["wf"] = (rng.standard_normal((num_classes, feat))
                             * np.sqrt(1.0 / feat)).astype(np.float32)
        self.params["bf"] = np.zeros(num_classes, dtype=np.float32)

    # forward ---------------------------------------------------------------

    def _forward(self, x, want_cache=False):
        cache = {"inputs": [], "relu": [], "pool": []}
        out = x
        for i in range(3):
            b, c, h, w = out.shape
            cols = _im2col(out, self.KERNEL, self.PAD)
            pre = cols @ self.params[f"w{i}"].T + self.params[f"b{i}"]
            pre = pre.reshape(b, h, w, -1).transpose(0, 3, 1, 2)
            mask = pre > 0
            act = pre * mask
            pooled, idx = _maxpool(act)
            if want_cache:
                cache["inputs"].append((cols, out.shape))
                cache["relu"].append(mask)
                cache["pool"].append((idx, act.shape))
            out = pooled
        flat = out.reshape(out.shape[0], -1)
        logits = flat @ self.params["wf"].T + self.params["bf"]
        if want_cache:
            cache["flat"] = flat
            cache["feat_shape"] = out.shape
        return logits, cache

    def classify(self, images):
        """Class scores for a [B,C,H,W] batch of pixels in [0,1]."""
        x = (np.asarray(images, dtype=np.float32) - self.mean) / self.std
        logits, _ = self._forward(x)
        return logits.astype(np.float32)

    # training --------------------------------------------------------------

    def _backward(self, grad_logits, cache):
        grads = {}
        flat = cache["flat"]
        grads["wf"] = grad_logits.T @ flat
        grads["bf"] = grad_logits.sum(axis=0)
        g = (grad_logits @ self.params["wf"]).reshape(cache["feat_shape"])
        for i in reversed(range(3)):
            idx, act_shape = cache["pool"][i]
            g = _maxpool_vjp(g, idx, act_shape)
            g = g * cache["relu"][i]
            b, oc, h, w = g.shape
            gflat = g.transpose(0, 2, 3, 1).reshape(b, h * w, oc)
            cols, in_shape = cache["inputs"][i]
            grads[f"w{i}"] = np.einsum("bno,bnc->oc", gflat, cols, optimize=True)
            grads[f"b{i}"] = gflat.sum(axis=(0, 1))
            if i > 0:
                gcols = gflat @ self.params[f"w{i}"]
                g = _col2im(gcols, in_shape, self.KERNEL, self.PAD)
        return grads

    def fit(self, images, labels, epochs=10, batch_size=128, lr=1e-3, weight_decay=1e-4,
            augment=True, seed=0, val_images=None, val_labels=None, log_every=1):
        """AdamW + cross-entropy; optional pad-crop/flip augmentation."""
        rng = np.random.default_rng(seed)
        images = np.asarray(images, dtype=np.float32)
        labels = np.asarray(labels, dtype=np.int64)
        m = {k: np.zeros_like(v) for k, v in self.params.items()}
        v = {k: np.zeros_like(w) for k, w in self.params.items()}
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        t = 0
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(images))
            losses = []
            for start in range(0, len(order), batch_size):
                take = order[start:start + batch_size]
                x = images[take]
                y = labels[take]
                if augment:
                    x = _augment(x, rng)
                x = (x - self.mean) / self.std
                logits, cache = self._forward(x, want_cache=True)
                z = logits - logits.max(axis=1, keepdims=True)
                ez = np.exp(z)
                p = ez / ez.sum(axis=1, keepdims=True)
                losses.append(float(np.mean(-z[np.arange(len(y)), y]
                                            + np.log(ez.sum(axis=1)))))
                gl = p
                gl[np.arange(len(y)), y] -= 1.0
                gl /= len(y)
                grads = self._backward(gl.astype(np.float32), cache)
                t += 1
                for key, param in self.params.items():
                    g = grads[key]
                    m[key] = beta1 * m[key] + (1 - beta1) * g
                    v[key] = beta2 * v[key] + (1 - beta2) * g * g
                    mh = m[key] / (1 - beta1 ** t)
                    vh = v[key] / (1 - beta2 ** t)
                    param -= lr * mh / (np.sqrt(vh) + eps)
                    param -= lr * weight_decay * param
            if log_every and epoch % log_every == 0:
                msg = f"epoch {epoch}: train loss {np.mean(losses):.4f}"
                if val_images is not None:
                    msg += f", val acc {self.accuracy(val_images, val_labels):.4f}"
                log.info(msg)
        return self

    def accuracy(self, images, labels, batch_size=512):
        hits = 0
        for start in range(0, len(images), batch_size):
            scores = self.classify(images[start:start + batch_size])
            hits += int((scores.argmax(axis=1) == labels[start:start + batch_size]).sum())
        return hits / len(images)

    # persistence -----------------------------------------------------------

    def save(self, path):
        meta = json.dumps({"num_classes": self.num_classes, "input_shape": self.input_shape,
                           "channels": self.channels, "name": self.name})
        np.savez(path, meta=np.frombuffer(meta.encode(), dtype=np.uint8),
                 mean=self.mean, std=self.std, **self.params)

    @classmethod
    def load(cls, path):
        blob = np.load(path)
        meta = json.loads(bytes(blob["meta"]).decode())
        net = cls(num_classes=meta["num_classes"], input_shape=tuple(meta["input_shape"]),
                  channels=tuple(meta["channels"]), name=meta["name"],
                  mean=blob["mean"].ravel(), std=blob["std"].ravel())
        for key in net.params:
            net.params[key] = blob[key].astype(np.float32)
        return net


def _augment(x, rng):
    """Pad-4 random crop plus horizontal flip, per sample."""
    b, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (4, 4), (4, 4)))
    out = np.empty_like(x)
    offs = rng.integers(0, 9, size=(b, 2))
    flips = rng.random(b) < 0.5
    for i in range(b):
        oy, ox = offs[i]
        crop = padded[i, :, oy:oy + h, ox:ox + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
