"""Detection-by-robustness probe.

Measures cosine similarity between an image's embedding and the embeddings
of randomly transformed variants (JPEG, blur, affine, color jitter, flip,
perspective — all non-differentiable, fixed parameters), then compares the
score distributions of clean and perturbed sets via a histogram-overlap
statistic. No detection threshold is claimed; the probe reports raw
distributions.
"""

from dataclasses import dataclass, field

import numpy as np

from .accel import warp_bilinear
from .errors import EmptyEvalError
from .imageops import (adjust_hue, affine_inverse_matrix, gaussian_blur, grayscale,
                       homography_from_points, jpeg_roundtrip, resize_bilinear)


@dataclass
class ProbeTransform:
    name: str
    params: dict
    fn: object  # (image [C,H,W], rng) -> image


@dataclass
class ProbeSuite:
    transforms: list


def _warp_single(img, inv_mat):
    return warp_bilinear(img[None].astype(np.float32), inv_mat[None])[0]


def _jpeg(params):
    def fn(img, rng):
        return jpeg_roundtrip(img, params["quality"])
    return fn


def _blur(params):
    lo, hi = params["sigma"]

    def fn(img, rng):
        return gaussian_blur(img, params["kernel_size"], rng.uniform(lo, hi))
    return fn


def _affine(params):
    def fn(img, rng):
        _, h, w = img.shape
        mat = affine_inverse_matrix(
            h, w,
            angle_deg=rng.uniform(-params["degrees"], params["degrees"]),
            scale=rng.uniform(*params["scale"]),
            tx=rng.uniform(-params["translate"] * w, params["translate"] * w),
            ty=rng.uniform(-params["translate"] * h, params["translate"] * h),
            shear_x_deg=rng.uniform(-params["shear"], params["shear"]))
        return _warp_single(img, mat)
    return fn


def _color_jitter(params):
    def fn(img, rng):
        out = np.clip(img, 0.0, 1.0)
        f = rng.uniform(max(0.0, 1.0 - params["brightness"]), 1.0 + params["brightness"])
        out = np.clip(out * f, 0.0, 1.0)
        f = rng.uniform(max(0.0, 1.0 - params["contrast"]), 1.0 + params["contrast"])
        out = np.clip(f * out + (1.0 - f) * grayscale(out).mean(), 0.0, 1.0)
        f = rng.uniform(max(0.0, 1.0 - params["saturation"]), 1.0 + params["saturation"])
        out = np.clip(f * out + (1.0 - f) * grayscale(out)[None], 0.0, 1.0)
        out = adjust_hue(out, rng.uniform(-params["hue"], params["hue"]))
        return np.clip(out, 0.0, 1.0).astype(np.float32)
    return fn


def _hflip(params):
    def fn(img, rng):
        return np.ascontiguousarray(img[:, :, ::-1]) if rng.random() < params["p"] else img
    return fn


def _perspective(params):
    def fn(img, rng):
        _, h, w = img.shape
        d = params["distortion_scale"]
        half_h, half_w = d * h / 2.0, d * w / 2.0
        corners = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)]
        inner = [
            (rng.uniform(0, half_w), rng.uniform(0, half_h)),
            (w - 1 - rng.uniform(0, half_w), rng.uniform(0, half_h)),
            (w - 1 - rng.uniform(0, half_w), h - 1 - rng.uniform(0, half_h)),
            (rng.uniform(0, half_w), h - 1 - rng.uniform(0, half_h)),
        ]
        # output -> source map sends the displaced corners back to the frame
        return _warp_single(img, homography_from_points(inner, corners))
    return fn


_BUILDERS = {
    "jpeg": _jpeg,
    "gaussian_blur": _blur,
    "affine": _affine,
    "color_jitter": _color_jitter,
    "horizontal_flip": _hflip,
    "perspective": _perspective,
}

DEFAULT_PROBE_PARAMS = {
    "jpeg": {"quality": 50},
    "gaussian_blur": {"kernel_size": 7, "sigma": (0.1, 2.0)},
    "affine": {"degrees": 15.0, "translate": 0.10, "scale": (0.8, 1.2), "shear": 10.0},
    "color_jitter": {"brightness": 0.2, "contrast": 0.2, "saturation": 0.2, "hue": 0.1},
    "horizontal_flip": {"p": 0.5},
    "perspective": {"distortion_scale": 0.5},
}


def default_probe_suite():
    return ProbeSuite(transforms=[
        ProbeTransform(name=name, params=dict(params), fn=_BUILDERS[name](params))
        for name, params in DEFAULT_PROBE_PARAMS.items()
    ])


@dataclass
class RobustnessScore:
    per_transform: dict
    aggregate: float = field(init=False)

    def __post_init__(self):
        values = list(self.per_transform.values())
        self.aggregate = float(np.mean(values)) if values else 0.0


def _cosine(a, b):
    na = max(float(np.linalg.norm(a)), 1e-12)
    nb = max(float(np.linalg.norm(b)), 1e-12)
    return float(np.dot(a, b) / (na * nb))


def robustness_score(image, backend, suite, samples_per_transform=4, rng=None):
    """Mean embedding similarity between an image and its transformed
    variants, per transform."""
    if samples_per_transform < 1:
        raise ValueError("samples_per_transform must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    image = np.asarray(image, dtype=np.float32)
    res = (backend.image_resolution, backend.image_resolution)
    base = backend.encode_image(resize_bilinear(image, res)[None])[0].astype(np.float64)

    per = {}
    for transform in suite.transforms:
        sims = []
        for _ in range(samples_per_transform):
            variant = np.clip(transform.fn(image, rng), 0.0, 1.0)
            emb = backend.encode_image(resize_bilinear(variant, res)[None])[0].astype(np.float64)
            sims.append(_cosine(base, emb))
        per[transform.name] = float(np.mean(sims))
    return RobustnessScore(per_transform=per)


def overlap_statistic(scores_a, scores_b, bins=32, lo=-1.0, hi=1.0):
    """1 - total-variation distance between the two binned score histograms."""
    ha, _ = np.histogram(np.asarray(scores_a), bins=bins, range=(lo, hi))
    hb, _ = np.histogram(np.asarray(scores_b), bins=bins, range=(lo, hi))
    pa = ha / max(ha.sum(), 1)
    pb = hb / max(hb.sum(), 1)
    return float(np.minimum(pa, pb).sum())


def _as_images(dataset_or_images):
    if hasattr(dataset_or_images, "get"):
        return [dataset_or_images.get(i)[0] for i in range(len(dataset_or_images))]
    return [np.asarray(img, dtype=np.float32) for img in dataset_or_images]


@dataclass
class ProbeReport:
    clean_scores: np.ndarray
    perturbed_scores: np.ndarray
    overlap: float
    per_transform_means: dict = field(default_factory=dict)


def score_distributions(clean_set, perturbed_set, backend, suite,
                        samples_per_transform=4, rng=None, bins=32):
    """Robustness scores for both sets plus their histogram overlap."""
    clean = _as_images(clean_set)
    perturbed = _as_images(perturbed_set)
    if not clean or not perturbed:
        raise EmptyEvalError("probe requested on an empty image set")
    if rng is None:
        rng = np.random.default_rng(0)

    def run(images):
        aggregates, per_lists = [], {}
        for img in images:
            score = robustness_score(img, backend, suite, samples_per_transform, rng)
            aggregates.append(score.aggregate)
            for name, value in score.per_transform.items():
                per_lists.setdefault(name, []).append(value)
        return np.asarray(aggregates), per_lists

    clean_scores, clean_per = run(clean)
    perturbed_scores, perturbed_per = run(perturbed)
    means = {name: {"clean": float(np.mean(clean_per[name])),
                    "perturbed": float(np.mean(perturbed_per[name]))}
             for name in clean_per}
    return ProbeReport(clean_scores=clean_scores, perturbed_scores=perturbed_scores,
                       overlap=overlap_statistic(clean_scores, perturbed_scores, bins=bins),
                       per_transform_means=means)
