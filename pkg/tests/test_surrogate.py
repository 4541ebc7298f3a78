"""Direction/logit/NLL math against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uapkit.errors import ConfigError, ZeroDirectionError
from uapkit.surrogate import (DirectionBatch, LogitBatch, direction_logits, image_direction,
                              nll_loss, nll_loss_grad, surrogate_loss, surrogate_loss_and_grad,
                              text_directions)

from conftest import LinearStubEncoder


def nll_brute(target_sims, negative_sims, temperature=1.0):
    """Independent extended-precision oracle: explicit exponentials, no
    max-subtraction, per-sample loop."""
    total = np.longdouble(0)
    for s_t, row in zip(target_sims, negative_sims):
        s_t = np.longdouble(s_t) / temperature
        denom = np.exp(s_t)
        for s_n in row:
            denom += np.exp(np.longdouble(s_n) / temperature)
        total += -np.log(np.exp(s_t) / denom)
    return float(total / len(target_sims))


def random_logits(rng, batch=6, negatives=9):
    return LogitBatch(target_sim=rng.uniform(-1, 1, batch),
                      negative_sims=rng.uniform(-1, 1, (batch, negatives)))


# --- image_direction ---------------------------------------------------------

def test_image_direction_identity_encoder():
    d = image_direction(np.array([[0.3, 0.2]]), np.array([[0.1, 0.2]]))
    np.testing.assert_allclose(d, [[0.2, 0.0]], atol=1e-12)


def test_image_direction_null_perturbation_rejected():
    x = np.array([[0.1, 0.2]])
    with pytest.raises(ZeroDirectionError):
        image_direction(x, x)


def test_image_direction_shape_mismatch():
    with pytest.raises(ValueError):
        image_direction(np.zeros((1, 3)), np.zeros((2, 3)))


def test_image_direction_bias_cancellation_linear():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((4, 6))
    x = rng.standard_normal((3, 6))
    x_hat = x + rng.standard_normal((3, 6))
    sigma = rng.standard_normal(6)
    plain = image_direction(x_hat @ w.T, x @ w.T)
    biased = image_direction((x_hat + sigma) @ w.T, (x + sigma) @ w.T)
    np.testing.assert_allclose(plain, biased, rtol=1e-9, atol=1e-9)


# --- text_directions ---------------------------------------------------------

def test_text_directions_zero_source():
    d_t, d_n = text_directions(np.array([1.0, 0.0]), np.array([[0.0, 2.0]]),
                               np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(d_t, [[1.0, 0.0]])
    np.testing.assert_allclose(d_n, [[[0.0, 2.0]]])


def test_text_directions_hand_subtraction():
    d_t, d_n = text_directions(np.array([1.0, 1.0]), np.array([[0.0, 2.0]]),
                               np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(d_t, [[0.0, 1.0]])
    np.testing.assert_allclose(d_n, [[[-1.0, 2.0]]])


def test_text_directions_coincident_concepts_rejected():
    target = np.array([0.5, 0.5])
    with pytest.raises(ZeroDirectionError):
        text_directions(target, np.array([[1.0, 0.0]]), target[None, :])


# --- direction_logits --------------------------------------------------------

@pytest.mark.parametrize("u,v,expected", [
    ([1.0, 0.0], [1.0, 0.0], 1.0),
    ([1.0, 0.0], [0.0, 1.0], 0.0),
    ([1.0, 1.0], [1.0, 0.0], 0.70710678),
])
def test_direction_logits_analytic(u, v, expected):
    dirs = DirectionBatch(d_x=np.array([u], dtype=float),
                          d_target=np.array([v], dtype=float),
                          d_negatives=np.array([[[0.0, 0.5]]]))
    logits = direction_logits(dirs)
    assert logits.target_sim[0] == pytest.approx(expected, abs=1e-8)


def test_direction_batch_rejects_zero_rows():
    with pytest.raises(ZeroDirectionError):
        DirectionBatch(d_x=np.zeros((1, 2)), d_target=np.ones((1, 2)),
                       d_negatives=np.ones((1, 1, 2)))


@settings(deadline=None, max_examples=50)
@given(scale=st.floats(min_value=1e-3, max_value=1e3), seed=st.integers(0, 999))
def test_cosine_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    d_x = rng.standard_normal((3, 5))
    d_t = rng.standard_normal((3, 5))
    d_n = rng.standard_normal((3, 2, 5))
    base = direction_logits(DirectionBatch(d_x=d_x, d_target=d_t, d_negatives=d_n))
    scaled = direction_logits(DirectionBatch(d_x=d_x * scale, d_target=d_t, d_negatives=d_n))
    np.testing.assert_allclose(base.target_sim, scaled.target_sim, rtol=1e-6)
    np.testing.assert_allclose(base.negative_sims, scaled.negative_sims, rtol=1e-6)


# --- nll_loss ----------------------------------------------------------------

def test_nll_equal_similarities_is_log_m_plus_one():
    logits = LogitBatch(target_sim=np.full(4, 0.3), negative_sims=np.full((4, 9), 0.3))
    assert nll_loss(logits) == pytest.approx(math.log(10.0), abs=1e-9)


def test_nll_direct_evaluation():
    # -log(e / (e + 2)) with one sample, two zero negatives
    logits = LogitBatch(target_sim=np.array([1.0]), negative_sims=np.array([[0.0, 0.0]]))
    expected = -math.log(math.e / (math.e + 2.0))
    assert nll_loss(logits) == pytest.approx(expected, rel=1e-9)
    assert nll_loss(logits) == pytest.approx(0.55144, abs=5e-6)


def test_nll_monotone_in_target_sim():
    negatives = np.array([[0.1, -0.4, 0.3]])
    values = [nll_loss(LogitBatch(target_sim=np.array([s]), negative_sims=negatives))
              for s in np.linspace(-1, 1, 9)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_nll_requires_positive_temperature():
    logits = LogitBatch(target_sim=np.array([0.0]), negative_sims=np.array([[0.0]]))
    with pytest.raises(ConfigError):
        nll_loss(logits, temperature=0.0)


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 10_000), temperature=st.floats(min_value=0.05, max_value=4.0))
def test_nll_matches_brute_force(seed, temperature):
    rng = np.random.default_rng(seed)
    logits = random_logits(rng, batch=int(rng.integers(1, 8)), negatives=int(rng.integers(1, 12)))
    ours = nll_loss(logits, temperature)
    oracle = nll_brute(logits.target_sim, logits.negative_sims, temperature)
    assert ours == pytest.approx(oracle, rel=1e-6)


def test_nll_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    logits = random_logits(rng)
    _, g_t, g_n = nll_loss_grad(logits, temperature=0.7)
    eps = 1e-6
    for b in range(len(logits.target_sim)):
        plus = LogitBatch(logits.target_sim.copy(), logits.negative_sims.copy())
        plus.target_sim[b] += eps
        minus = LogitBatch(logits.target_sim.copy(), logits.negative_sims.copy())
        minus.target_sim[b] -= eps
        fd = (nll_loss(plus, 0.7) - nll_loss(minus, 0.7)) / (2 * eps)
        assert g_t[b] == pytest.approx(fd, rel=1e-4, abs=1e-9)


# --- full chain --------------------------------------------------------------

def test_surrogate_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    b, m, d = 4, 3, 6
    perturbed = rng.standard_normal((b, d))
    clean = rng.standard_normal((b, d))
    d_t = rng.standard_normal((b, d))
    d_n = rng.standard_normal((b, m, d))
    loss, grad = surrogate_loss_and_grad(perturbed, clean, d_t, d_n)

    step = 1e-4
    for _ in range(20):
        bi, di = rng.integers(b), rng.integers(d)
        plus = perturbed.copy()
        plus[bi, di] += step
        minus = perturbed.copy()
        minus[bi, di] -= step
        fd = (surrogate_loss(plus, clean, d_t, d_n)
              - surrogate_loss(minus, clean, d_t, d_n)) / (2 * step)
        assert grad[bi, di] == pytest.approx(fd, rel=1e-3, abs=1e-8)


def test_full_loss_bias_cancellation():
    """Constant input bias through a linear encoder leaves the loss unchanged."""
    backend = LinearStubEncoder(embed_dim=6, image_resolution=8, check_range=False)
    rng = np.random.default_rng(7)
    x = rng.uniform(0.2, 0.8, (5, 3, 8, 8)).astype(np.float32)
    x_hat = np.clip(x + rng.uniform(-0.1, 0.1, x.shape), 0, 1).astype(np.float32)
    d_t = rng.standard_normal((5, 6))
    d_n = rng.standard_normal((5, 4, 6))

    def loss_of(a, b):
        return surrogate_loss(backend.encode_image(a), backend.encode_image(b), d_t, d_n)

    base = loss_of(x_hat, x)
    for trial in range(20):
        sigma = np.float32(rng.uniform(-0.5, 0.5))
        biased = loss_of(x_hat + sigma, x + sigma)
        assert biased == pytest.approx(base, rel=1e-6)
