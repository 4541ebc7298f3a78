"""Direction-based surrogate: feature directions, cosine logits, NLL loss.

Directions are differences of embeddings (perturbed minus clean for images,
concept minus per-sample source for text); cosine similarities between the
image direction and each text direction act as logits for a softmax
negative log-likelihood on the target concept. Gradients with respect to
the perturbed embeddings are analytic, so the crafting loop needs no
autodiff framework.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ZeroDirectionError

ZERO_DIRECTION_TOL = 1e-12


def _check_rows_nonzero(arr, what):
    flat = arr.reshape(-1, arr.shape[-1])
    norms = np.linalg.norm(flat, axis=1)
    if (norms < ZERO_DIRECTION_TOL).any():
        idx = int(np.argmin(norms))
        raise ZeroDirectionError(f"{what} row {idx} is the zero vector")


@dataclass
class DirectionBatch:
    d_x: np.ndarray          # [B,d] image directions
    d_target: np.ndarray     # [B,d] target text directions
    d_negatives: np.ndarray  # [B,M,d] negative text directions

    def __post_init__(self):
        b, d = self.d_x.shape
        if self.d_target.shape != (b, d):
            raise ValueError(f"d_target shape {self.d_target.shape} != {(b, d)}")
        if self.d_negatives.ndim != 3 or self.d_negatives.shape[0] != b or self.d_negatives.shape[2] != d:
            raise ValueError(f"d_negatives shape {self.d_negatives.shape} incompatible with B={b}, d={d}")
        _check_rows_nonzero(self.d_x, "image direction")
        _check_rows_nonzero(self.d_target, "target direction")
        _check_rows_nonzero(self.d_negatives, "negative direction")


@dataclass
class LogitBatch:
    target_sim: np.ndarray     # [B]
    negative_sims: np.ndarray  # [B,M]

    def __post_init__(self):
        if self.target_sim.ndim != 1 or self.negative_sims.ndim != 2 \
                or self.negative_sims.shape[0] != self.target_sim.shape[0]:
            raise ValueError("inconsistent logit shapes")
        slack = 1e-6
        for arr, name in ((self.target_sim, "target_sim"), (self.negative_sims, "negative_sims")):
            if arr.size and (np.abs(arr) > 1.0 + slack).any():
                raise ValueError(f"{name} outside [-1, 1]")


def image_direction(perturbed_emb, clean_emb):
    """Perturbed-minus-clean embedding difference; identity Jacobian toward
    ``perturbed_emb``. Zero rows signal a null perturbation."""
    perturbed_emb = np.asarray(perturbed_emb, dtype=np.float64)
    clean_emb = np.asarray(clean_emb, dtype=np.float64)
    if perturbed_emb.shape != clean_emb.shape:
        raise ValueError(f"shape mismatch {perturbed_emb.shape} vs {clean_emb.shape}")
    d_x = perturbed_emb - clean_emb
    _check_rows_nonzero(d_x, "image direction")
    return d_x


def text_directions(target_emb, negative_embs, source_embs):
    """Per-sample concept-minus-source directions.

    ``source_embs[b]`` must be the embedding of sample b's own source label.
    A zero row means the target or a negative coincides with that source
    concept; the caller must exclude such samples.
    """
    target_emb = np.asarray(target_emb, dtype=np.float64)
    negative_embs = np.asarray(negative_embs, dtype=np.float64)
    source_embs = np.asarray(source_embs, dtype=np.float64)
    d_target = target_emb[None, :] - source_embs
    d_negatives = negative_embs[None, :, :] - source_embs[:, None, :]
    _check_rows_nonzero(d_target, "target direction")
    _check_rows_nonzero(d_negatives, "negative direction")
    return d_target, d_negatives


def direction_logits(dirs):
    """Cosine similarity of the image direction against target and negative
    text directions, per sample."""
    u = dirs.d_x
    un = np.linalg.norm(u, axis=1)
    tn = np.linalg.norm(dirs.d_target, axis=1)
    target_sim = np.einsum("bd,bd->b", u, dirs.d_target) / (un * tn)
    nn = np.linalg.norm(dirs.d_negatives, axis=2)
    negative_sims = np.einsum("bd,bmd->bm", u, dirs.d_negatives) / (un[:, None] * nn)
    return LogitBatch(target_sim=target_sim, negative_sims=negative_sims)


def _scaled_logit_matrix(logits, temperature):
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    z = np.concatenate([logits.negative_sims, logits.target_sim[:, None]], axis=1)
    return np.asarray(z, dtype=np.float64) / temperature


def nll_loss(logits, temperature=1.0):
    """Mean over the batch of -log softmax(target | target + negatives),
    stabilized by max subtraction."""
    z = _scaled_logit_matrix(logits, temperature)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[:, -1]))


def nll_loss_grad(logits, temperature=1.0):
    """Loss plus its gradient with respect to the target and negative
    similarities (gradient of the batch mean)."""
    z = _scaled_logit_matrix(logits, temperature)
    b = z.shape[0]
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    p = ez / ez.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(ez.sum(axis=1)) + zmax[:, 0] - z[:, -1]))
    g_target = (p[:, -1] - 1.0) / (temperature * b)
    g_negatives = p[:, :-1] / (temperature * b)
    return loss, g_target, g_negatives


def surrogate_loss(perturbed_emb, clean_emb, target_dirs, negative_dirs, temperature=1.0):
    """Full chain: image direction -> cosine logits -> NLL."""
    d_x = image_direction(perturbed_emb, clean_emb)
    dirs = DirectionBatch(d_x=d_x, d_target=np.asarray(target_dirs, dtype=np.float64),
                          d_negatives=np.asarray(negative_dirs, dtype=np.float64))
    return nll_loss(direction_logits(dirs), temperature)


def surrogate_loss_and_grad(perturbed_emb, clean_emb, target_dirs, negative_dirs, temperature=1.0):
    """Loss plus its analytic gradient with respect to ``perturbed_emb``."""
    d_x = image_direction(perturbed_emb, clean_emb)
    target_dirs = np.asarray(target_dirs, dtype=np.float64)
    negative_dirs = np.asarray(negative_dirs, dtype=np.float64)
    dirs = DirectionBatch(d_x=d_x, d_target=target_dirs, d_negatives=negative_dirs)
    logits = direction_logits(dirs)
    loss, g_t, g_n = nll_loss_grad(logits, temperature)

    u = d_x
    un = np.linalg.norm(u, axis=1)                      # [B]
    tn = np.linalg.norm(target_dirs, axis=1)            # [B]
    nn = np.linalg.norm(negative_dirs, axis=2)           # [B,M]

    # d cos(u, v) / du = v / (|u||v|) - cos * u / |u|^2
    grad = (g_t / (un * tn))[:, None] * target_dirs
    grad -= (g_t * logits.target_sim / un ** 2)[:, None] * u
    grad += np.einsum("bm,bmd->bd", g_n / (un[:, None] * nn), negative_dirs)
    grad -= ((g_n * logits.negative_sims).sum(axis=1) / un ** 2)[:, None] * u
    return loss, grad
