"""CLIP adapter over Hugging Face transformers (optional extra ``[clip]``).

Wraps a CLIPModel so its image tower satisfies the VJP contract via torch
autograd. torch and transformers are imported lazily; their absence (or a
missing checkpoint) surfaces as EncoderBackendError.
"""

import os

import numpy as np

from ..errors import EncoderBackendError
from .base import EncoderBackend

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class HfClipEncoder(EncoderBackend):
    def __init__(self, model="openai/clip-vit-base-patch32", device="cpu",
                 model_obj=None, tokenize_fn=None, cache_dir=None):
        try:
            import torch
        except ImportError as exc:
            raise EncoderBackendError("hf-clip backend requires torch (pip install uapkit[clip])") from exc
        self._torch = torch
        self.device = device

        if model_obj is not None:
            self.model = model_obj
            if tokenize_fn is None:
                raise EncoderBackendError("tokenize_fn is required when injecting a model object")
            self._tokenize = tokenize_fn
        else:
            try:
                from transformers import CLIPModel, CLIPTokenizerFast
            except ImportError as exc:
                raise EncoderBackendError(
                    "hf-clip backend requires transformers (pip install uapkit[clip])") from exc
            cache_dir = cache_dir or os.environ.get("UAPKIT_CACHE_DIR") or None
            try:
                self.model = CLIPModel.from_pretrained(model, cache_dir=cache_dir)
                tokenizer = CLIPTokenizerFast.from_pretrained(model, cache_dir=cache_dir)
            except Exception as exc:
                raise EncoderBackendError(f"could not load CLIP checkpoint {model!r}: {exc}") from exc
            self._tokenize = lambda texts: tokenizer(texts, padding=True, return_tensors="pt")

        self.model.eval().to(device)
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.embed_dim = int(self.model.config.projection_dim)
        self.image_resolution = int(self.model.config.vision_config.image_size)
        self.name = f"hf-clip:{model if model_obj is None else 'injected'}"
        self._mean = torch.tensor(CLIP_MEAN, device=device).view(1, 3, 1, 1)
        self._std = torch.tensor(CLIP_STD, device=device).view(1, 3, 1, 1)

    @staticmethod
    def _as_features(out):
        # transformers >= 5 returns an output object; the projected features
        # live in pooler_output. Older versions return the tensor directly.
        return out.pooler_output if hasattr(out, "pooler_output") else out

    def _image_features(self, pixels):
        normalized = (pixels - self._mean) / self._std
        return self._as_features(self.model.get_image_features(pixel_values=normalized))

    def encode_image(self, images):
        torch = self._torch
        images = self.check_image_batch(images)
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(images)).to(self.device)
            feats = self._image_features(x)
        return feats.cpu().numpy().astype(np.float32)

    def encode_image_and_vjp(self, images):
        torch = self._torch
        images = self.check_image_batch(images)
        x = torch.from_numpy(np.ascontiguousarray(images)).to(self.device)
        x.requires_grad_(True)
        feats = self._image_features(x)

        def vjp(grad_emb):
            g = torch.from_numpy(np.ascontiguousarray(grad_emb, dtype=np.float32)).to(self.device)
            (grad_x,) = torch.autograd.grad(feats, x, grad_outputs=g)
            return grad_x.detach().cpu().numpy().astype(np.float32)

        return feats.detach().cpu().numpy().astype(np.float32), vjp

    def encode_text(self, texts):
        torch = self._torch
        tokens = self._tokenize(list(texts))
        with torch.no_grad():
            tokens = {k: v.to(self.device) for k, v in tokens.items()}
            feats = self._as_features(self.model.get_text_features(**tokens))
        return feats.cpu().numpy().astype(np.float32)
