"""Shared fixtures: cheap stub backends plus session-scoped desk-scale
artifacts (trained victim, crafted perturbation) reused by the acceptance
suite so the expensive pieces are built once."""

import numpy as np
import pytest

from uapkit.backends import create_backend
from uapkit.backends.base import EncoderBackend
from uapkit.concepts import ConceptSet, build_concept_embeddings
from uapkit.crafter import CraftConfig, craft
from uapkit.synthetic import (CLASS_NAMES, POOD_NAMES, make_concept_samples,
                              make_pood_data, make_victim_data, train_reference_victim)
from uapkit.transforms import TransformConfig

TARGET_CLASS = 8


class LinearStubEncoder(EncoderBackend):
    """Linear map E(v) = W v over flattened pixels; exact analytic VJP."""

    def __init__(self, embed_dim=8, image_resolution=8, seed=0, check_range=True):
        self.embed_dim = embed_dim
        self.image_resolution = image_resolution
        self.name = f"linear-stub-{seed}"
        self._check_range = check_range
        n = 3 * image_resolution * image_resolution
        rng = np.random.default_rng(seed)
        self.w = (rng.standard_normal((embed_dim, n)) / np.sqrt(n)).astype(np.float32)

    def encode_image_and_vjp(self, images):
        images = np.asarray(images, dtype=np.float32)
        if self._check_range:
            images = self.check_image_batch(images)
        b = images.shape[0]
        flat = images.reshape(b, -1)
        emb = flat @ self.w.T

        def vjp(grad_emb):
            return (np.asarray(grad_emb, dtype=np.float32) @ self.w).reshape(images.shape)

        return emb, vjp

    def encode_text(self, texts):
        rng = np.random.default_rng(abs(hash(tuple(texts))) % (2 ** 31))
        return rng.standard_normal((len(texts), self.embed_dim)).astype(np.float32)


@pytest.fixture(scope="session")
def toy_backend():
    return create_backend("toyconv")


@pytest.fixture(scope="session")
def texture_backend():
    return create_backend("texture")


def identity_transforms():
    return TransformConfig(rot_degrees=0.0, translate_frac=0.0, scale_range=(1.0, 1.0),
                           hflip_prob=0.0, patch_count=0)


def desk_concepts(backend, pood, samples_per_source=8):
    """Image-concept embeddings over the synthetic universe."""
    samples = make_concept_samples(per_class=4, seed=7)
    concept_set = ConceptSet(target=CLASS_NAMES[TARGET_CLASS],
                             negatives=[n for n in CLASS_NAMES if n != CLASS_NAMES[TARGET_CLASS]],
                             source_vocabulary=POOD_NAMES)
    image_concepts = dict(samples)
    labels = pood.labels
    for idx, name in enumerate(POOD_NAMES):
        image_concepts[name] = pood.images[np.flatnonzero(labels == idx)[:samples_per_source]]
    return build_concept_embeddings(concept_set, backend, image_concepts=image_concepts)


@pytest.fixture(scope="session")
def desk_victim():
    """Reference convnet trained on the synthetic task (CIFAR-10 stand-in)."""
    return train_reference_victim(seed=0)


@pytest.fixture(scope="session")
def desk_eval_data():
    """Held-out eval split: 1100 images, 990 of them non-target."""
    return make_victim_data(110, seed=200)


@pytest.fixture(scope="session")
def desk_craft(texture_backend):
    """Desk-scale crafted perturbation: 1000 steps, eps 32/255, full EOT."""
    pood = make_pood_data(100, seed=100)
    embeddings = desk_concepts(texture_backend, pood)
    cfg = CraftConfig(steps=1000, batch_size=48, seed=0)
    return craft(pood, embeddings, texture_backend, cfg)
