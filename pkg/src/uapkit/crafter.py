"""Universal perturbation crafting loop.

Each iteration samples a crafting batch, adds the current perturbation,
pushes it through the random transform composite and the encoder, evaluates
the direction-NLL surrogate loss, backpropagates analytically to the
perturbation, takes one AdamW step and projects back onto the norm ball.
"""

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .concepts import ConceptEmbeddings, ConceptSet, build_concept_embeddings
from .data import normalize_label
from .errors import ConfigError, DivergenceError, ResolutionError, UnusablePoodError
from .imageops import resize_bilinear, resize_bilinear_vjp
from .surrogate import ZERO_DIRECTION_TOL, surrogate_loss_and_grad
from .transforms import TransformConfig, apply_transform, sample_transform_params, transform_vjp

log = logging.getLogger("uapkit")

LINF_SLACK = 1e-7
L2_SLACK = 1e-5


@dataclass
class Perturbation:
    data: np.ndarray           # [C,H,W] float32
    epsilon: float
    norm: str                  # "linf" | "l2"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"perturbation must be [C,H,W], got shape {self.data.shape}")
        if self.norm not in ("linf", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}")

    def check_budget(self):
        if self.norm == "linf":
            peak = float(np.abs(self.data).max())
            if peak > self.epsilon + LINF_SLACK:
                raise ValueError(f"linf budget violated: {peak} > {self.epsilon}")
        else:
            size = float(np.linalg.norm(self.data))
            if size > self.epsilon + L2_SLACK:
                raise ValueError(f"l2 budget violated: {size} > {self.epsilon}")


@dataclass
class CraftConfig:
    steps: int = 5000
    lr: float = 0.01
    weight_decay: float = 1e-5
    batch_size: int = 64
    epsilon: float = 32.0 / 255.0
    norm: str = "linf"
    temperature: float = 1.0
    resolution: tuple = (3, 32, 32)
    seed: int = 0
    transforms: TransformConfig = field(default_factory=TransformConfig)
    resample_templates: bool = False
    trace_every: int = 10

    def __post_init__(self):
        problems = []
        if self.steps < 1:
            problems.append(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            problems.append(f"lr must be positive, got {self.lr}")
        if self.epsilon <= 0:
            problems.append(f"epsilon must be positive, got {self.epsilon}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.norm not in ("linf", "l2"):
            problems.append(f"norm must be linf or l2, got {self.norm!r}")
        if self.temperature <= 0:
            problems.append(f"temperature must be positive, got {self.temperature}")
        if len(self.resolution) != 3 or any(int(v) <= 0 for v in self.resolution):
            problems.append(f"resolution must be a (C,H,W) triple, got {self.resolution}")
        if self.weight_decay < 0:
            problems.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class CraftResult:
    perturbation: Perturbation
    loss_trace: list           # [(step, loss)]
    dropped_labels: list       # source vocabulary entries excluded by the guard


def _project_array(data, epsilon, norm):
    if norm == "linf":
        np.clip(data, -epsilon, epsilon, out=data)
    else:
        size = float(np.linalg.norm(data))
        if size > epsilon:
            data *= np.float32(epsilon / size)
    return data


def project(t):
    """Project onto the norm ball: clamp for linf, radial rescale for l2."""
    data = np.array(t.data, dtype=np.float32, copy=True)
    _project_array(data, t.epsilon, t.norm)
    return replace(t, data=data)


def init_perturbation(cfg, rng):
    """Standard-normal draw projected straight onto the epsilon ball."""
    data = rng.standard_normal(tuple(cfg.resolution)).astype(np.float32)
    _project_array(data, cfg.epsilon, cfg.norm)
    return Perturbation(data=data, epsilon=cfg.epsilon, norm=cfg.norm,
                        meta={"seed": cfg.seed})


def apply(t, batch):
    """clip(x + T, 0, 1) broadcast over a [B,C,H,W] batch."""
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 4 or batch.shape[1:] != t.data.shape:
        raise ResolutionError(
            f"batch shape {batch.shape} does not match perturbation {t.data.shape}")
    return np.clip(batch + t.data[None], 0.0, 1.0)


def _config_digest(cfg):
    fields = (cfg.steps, cfg.lr, cfg.weight_decay, cfg.batch_size, cfg.epsilon, cfg.norm,
              cfg.temperature, tuple(cfg.resolution), cfg.seed, cfg.resample_templates,
              cfg.transforms.rot_degrees, cfg.transforms.translate_frac,
              tuple(cfg.transforms.scale_range), cfg.transforms.hflip_prob,
              cfg.transforms.patch_count, tuple(cfg.transforms.patch_side_frac))
    return hashlib.sha256(repr(fields).encode()).hexdigest()[:16]


def _usable_vocabulary(embeddings):
    """Source vocabulary indices that survive the coincident-concept and
    zero-direction guards."""
    cset = embeddings.concept_set
    banned = {normalize_label(cset.target)}
    banned.update(normalize_label(n) for n in cset.negatives)
    keep, dropped = [], []
    target = embeddings.target.astype(np.float64)
    negatives = embeddings.negatives.astype(np.float64)
    for v, label in enumerate(cset.source_vocabulary):
        src = embeddings.source[v].astype(np.float64)
        if normalize_label(label) in banned:
            dropped.append(label)
            continue
        if np.linalg.norm(target - src) < ZERO_DIRECTION_TOL or \
                (np.linalg.norm(negatives - src[None], axis=1) < ZERO_DIRECTION_TOL).any():
            dropped.append(label)
            continue
        keep.append(v)
    if dropped:
        log.warning("dropping %d source labels coinciding with attack concepts: %s",
                    len(dropped), ", ".join(dropped[:8]))
    return keep, dropped


def craft(pood, concepts, backend, cfg, rng=None, on_step=None, extra_meta=None):
    """Run the full crafting loop and return the final perturbation.

    ``concepts`` may be a ConceptSet (embedded internally via templated text)
    or a prebuilt ConceptEmbeddings. ``on_step(step, perturbation_view, loss)``
    is invoked after every projected update.
    """
    if isinstance(concepts, ConceptSet):
        concept_set = concepts
        embeddings = build_concept_embeddings(concept_set, backend)
    elif isinstance(concepts, ConceptEmbeddings):
        concept_set = concepts.concept_set
        embeddings = concepts
        if cfg.resample_templates:
            raise ConfigError("resample_templates requires passing a ConceptSet")
    else:
        raise TypeError(f"concepts must be ConceptSet or ConceptEmbeddings, got {type(concepts)}")

    labels = np.asarray(pood.labels)
    if labels.size == 0:
        raise UnusablePoodError("crafting dataset is empty")
    if labels.max() >= len(concept_set.source_vocabulary):
        raise UnusablePoodError("dataset label index outside the source vocabulary")

    keep, dropped = _usable_vocabulary(embeddings)
    allowed = np.flatnonzero(np.isin(labels, keep))
    if allowed.size == 0:
        raise UnusablePoodError("every crafting sample was dropped by the coincident-concept guard")

    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    c, h, w = (int(v) for v in cfg.resolution)
    res = backend.image_resolution

    pert = init_perturbation(cfg, rng)
    t_data = pert.data
    m = np.zeros_like(t_data)
    v = np.zeros_like(t_data)
    beta1, beta2, opt_eps = 0.9, 0.999, 1e-8

    trace = []
    loss = float("nan")
    for step in range(1, cfg.steps + 1):
        if cfg.resample_templates:
            embeddings = build_concept_embeddings(concept_set, backend, rng=rng, sample=1)

        batch_idx = rng.choice(allowed, size=cfg.batch_size, replace=True)
        imgs, lbls = [], []
        for i in batch_idx:
            img, lbl = pood.get(int(i))
            if img.shape != (c, h, w):
                raise ResolutionError(
                    f"sample shape {img.shape} does not match craft resolution {(c, h, w)}")
            imgs.append(img)
            lbls.append(lbl)
        x = np.stack(imgs).astype(np.float32)
        lbls = np.asarray(lbls)

        src = embeddings.source[lbls].astype(np.float64)
        d_target = embeddings.target[None].astype(np.float64) - src
        d_negatives = embeddings.negatives[None].astype(np.float64) - src[:, None, :]

        raw = x + t_data[None]
        inside = ((raw >= 0.0) & (raw <= 1.0)).astype(np.float32)
        x_hat = np.clip(raw, 0.0, 1.0)

        params = sample_transform_params(len(x), h, w, cfg.transforms, rng)
        x_t = apply_transform(x_hat, params)
        x_r = resize_bilinear(x_t, (res, res))
        clean_r = resize_bilinear(x, (res, res))

        # warp and resize are convex in the pixels, so x_r stays inside [0,1]
        e_hat, vjp = backend.encode_image_and_vjp(x_r)
        e_clean = backend.encode_image(clean_r)

        loss, g_emb = surrogate_loss_and_grad(e_hat, e_clean, d_target, d_negatives,
                                              cfg.temperature)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", step=step)

        g_xr = vjp(g_emb.astype(np.float32))
        g_xt = resize_bilinear_vjp(g_xr, (h, w))
        g_xhat = transform_vjp(g_xt, params)
        g_t = (g_xhat * inside).sum(axis=0)

        m = beta1 * m + (1.0 - beta1) * g_t
        v = beta2 * v + (1.0 - beta2) * g_t * g_t
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        t_data -= cfg.lr * m_hat / (np.sqrt(v_hat) + opt_eps)
        t_data -= cfg.lr * cfg.weight_decay * t_data
        _project_array(t_data, cfg.epsilon, cfg.norm)

        if step == 1 or step == cfg.steps or step % cfg.trace_every == 0:
            trace.append((step, float(loss)))
        if on_step is not None:
            on_step(step, t_data.copy(), float(loss))

    meta = {
        "target": concept_set.target,
        "backend": backend.name,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "config_digest": _config_digest(cfg),
        "final_loss": float(loss),
    }
    meta.update(extra_meta or {})
    result = Perturbation(data=t_data, epsilon=cfg.epsilon, norm=cfg.norm, meta=meta)
    result.check_budget()
    return CraftResult(perturbation=result, loss_trace=trace, dropped_labels=dropped)
