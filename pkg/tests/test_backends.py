"""Backend registry and bundled encoders."""

import numpy as np
import pytest

from uapkit.backends import backend_names, create_backend, gradient_probe, register_backend
from uapkit.errors import EncoderBackendError, ResolutionError


def test_registry_lists_bundled_backends():
    names = backend_names()
    assert {"toyconv", "texture", "hf-clip"} <= set(names)


def test_unknown_backend_name():
    with pytest.raises(EncoderBackendError, match="unknown backend"):
        create_backend("nope")


def test_register_custom_backend(toy_backend):
    register_backend("alias-for-test", lambda: toy_backend)
    assert create_backend("alias-for-test") is toy_backend


@pytest.mark.parametrize("name", ["toyconv", "texture"])
def test_embed_dim_consistency(name):
    backend = create_backend(name)
    rng = np.random.default_rng(0)
    for batch in (1, 3):
        imgs = rng.random((batch, 3, backend.image_resolution, backend.image_resolution))
        emb = backend.encode_image(imgs.astype(np.float32))
        assert emb.shape == (batch, backend.embed_dim)
        assert np.isfinite(emb).all()


@pytest.mark.parametrize("name", ["toyconv", "texture"])
def test_gradient_flow_by_finite_differences(name):
    backend = create_backend(name)
    for seed in range(3):
        gradient_probe(backend, np.random.default_rng(seed))


@pytest.mark.parametrize("name", ["toyconv", "texture"])
def test_vjp_matches_directional_finite_difference(name):
    backend = create_backend(name)
    rng = np.random.default_rng(1)
    r = backend.image_resolution
    x = rng.uniform(0.3, 0.7, (2, 3, r, r)).astype(np.float32)
    v = rng.standard_normal(x.shape).astype(np.float32) * 0.01
    u = rng.standard_normal((2, backend.embed_dim)).astype(np.float32)
    emb, vjp = backend.encode_image_and_vjp(x)
    analytic = float((vjp(u) * v).sum())
    h = 1.0
    plus = backend.encode_image(np.clip(x + h * v, 0, 1).astype(np.float32))
    minus = backend.encode_image(np.clip(x - h * v, 0, 1).astype(np.float32))
    numeric = float(((plus - minus) * u).sum() / (2 * h))
    assert analytic == pytest.approx(numeric, rel=5e-2)


def test_toyconv_deterministic_across_instances():
    a = create_backend("toyconv")
    b = create_backend("toyconv")
    rng = np.random.default_rng(2)
    img = rng.random((1, 3, 32, 32)).astype(np.float32)
    np.testing.assert_array_equal(a.encode_image(img), b.encode_image(img))
    np.testing.assert_array_equal(a.encode_text(["hen"]), b.encode_text(["hen"]))


def test_toyconv_text_distinct_and_stable():
    backend = create_backend("toyconv")
    emb = backend.encode_text(["ship", "dog", "ship"])
    np.testing.assert_array_equal(emb[0], emb[2])
    assert not np.array_equal(emb[0], emb[1])


def test_resolution_mismatch_rejected(toy_backend):
    with pytest.raises(ResolutionError):
        toy_backend.encode_image(np.zeros((1, 3, 16, 16), np.float32))


def test_out_of_range_pixels_rejected(toy_backend):
    bad = np.full((1, 3, 32, 32), 1.5, np.float32)
    with pytest.raises(EncoderBackendError):
        toy_backend.encode_image(bad)


def test_texture_energy_is_phase_invariant(texture_backend):
    """Same grating at two phases lands on nearly identical band energies."""
    from uapkit.synthetic import _grating

    base = np.full((3, 32, 32), 0.5, np.float32)
    a = np.clip(base + _grating(32, 45.0, 6.0, 0.0, 0.1)[None], 0, 1)
    b = np.clip(base + _grating(32, 45.0, 6.0, 2.1, 0.1)[None], 0, 1)
    ea = texture_backend.encode_image(a[None])[0][:texture_backend.bands]
    eb = texture_backend.encode_image(b[None])[0][:texture_backend.bands]
    cos = float(ea @ eb / (np.linalg.norm(ea) * np.linalg.norm(eb)))
    assert cos > 0.99


# --- hf-clip adapter ---------------------------------------------------------

def test_hf_clip_without_checkpoint_raises():
    torch = pytest.importorskip("torch")
    transformers = pytest.importorskip("transformers")
    with pytest.raises(EncoderBackendError):
        create_backend("hf-clip", model="definitely/not-a-real-checkpoint")


def test_hf_clip_with_injected_tiny_model():
    torch = pytest.importorskip("torch")
    transformers = pytest.importorskip("transformers")
    from transformers import CLIPConfig, CLIPModel, CLIPTextConfig, CLIPVisionConfig

    config = CLIPConfig(
        text_config=CLIPTextConfig(hidden_size=32, intermediate_size=64,
                                   num_hidden_layers=2, num_attention_heads=2,
                                   vocab_size=512, max_position_embeddings=16).to_dict(),
        vision_config=CLIPVisionConfig(hidden_size=32, intermediate_size=64,
                                       num_hidden_layers=2, num_attention_heads=2,
                                       image_size=32, patch_size=8).to_dict(),
        projection_dim=16)
    torch.manual_seed(0)
    model = CLIPModel(config)

    def tokenize(texts):
        ids = torch.zeros((len(texts), 8), dtype=torch.long)
        for i, text in enumerate(texts):
            for j, ch in enumerate(text[-8:]):
                ids[i, j] = ord(ch) % 512
        return {"input_ids": ids, "attention_mask": torch.ones_like(ids)}

    backend = create_backend("hf-clip", model_obj=model, tokenize_fn=tokenize)
    assert backend.embed_dim == 16
    assert backend.image_resolution == 32

    rng = np.random.default_rng(0)
    imgs = rng.uniform(0.2, 0.8, (2, 3, 32, 32)).astype(np.float32)
    emb, vjp = backend.encode_image_and_vjp(imgs)
    assert emb.shape == (2, 16)
    grad = vjp(np.ones((2, 16), np.float32))
    assert grad.shape == imgs.shape
    assert np.abs(grad).sum() > 0

    # directional derivative check (single-pixel probes drown in fp32 noise
    # for a random-weight ViT)
    v = rng.standard_normal(imgs.shape).astype(np.float32) * 0.02
    u = rng.standard_normal((2, 16)).astype(np.float32)
    _, vjp2 = backend.encode_image_and_vjp(imgs)
    analytic = float((vjp2(u) * v).sum())
    plus = backend.encode_image(np.clip(imgs + v, 0, 1))
    minus = backend.encode_image(np.clip(imgs - v, 0, 1))
    numeric = float(((plus - minus) * u).sum() / 2.0)
    assert analytic == pytest.approx(numeric, rel=0.05)

    text = backend.encode_text(["a photo of a ship", "a photo of a dog"])
    assert text.shape == (2, 16)
    assert not np.array_equal(text[0], text[1])
