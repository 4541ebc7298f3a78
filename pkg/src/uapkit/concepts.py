"""Concept embeddings: text templates and few-shot image concepts.

Concepts (a target, a list of negatives, and the source vocabulary of the
crafting dataset) are embedded once per run through the backend. Text
concepts pass through a template list and the per-template embeddings are
averaged; image concepts average the embeddings of a handful of sample
images instead and feed the crafter exactly as a text embedding would.
"""

from dataclasses import dataclass, field

import numpy as np

from .backends.base import EncoderBackend
from .data import normalize_label
from .errors import ConfigError, EmptyConceptError, EncoderBackendError, MalformedTemplateError

PLACEHOLDER = "[concept]"

DEFAULT_TEMPLATES = (
    "a photo of a [concept]",
    "a blurry image of a [concept]",
    "a pixelated version of a [concept]",
    "a close-up photo of a [concept]",
    "a bright photo of a [concept]",
    "a dark photo of a [concept]",
    "a low resolution photo of a [concept]",
    "a cropped photo of a [concept]",
)


@dataclass
class Embedding:
    vector: np.ndarray
    provenance: str  # "text" | "image"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        if not np.isfinite(self.vector).all():
            raise EncoderBackendError("embedding contains non-finite entries")
        if self.provenance not in ("text", "image"):
            raise ValueError(f"bad provenance {self.provenance!r}")


@dataclass
class ConceptSet:
    target: str
    negatives: list
    source_vocabulary: list

    def __post_init__(self):
        norm_negatives = [normalize_label(n) for n in self.negatives]
        if len(set(norm_negatives)) != len(norm_negatives):
            raise ConfigError("negative concepts contain duplicates")
        if normalize_label(self.target) in norm_negatives:
            raise ConfigError(f"target concept {self.target!r} also appears in negatives")
        if not self.negatives:
            raise ConfigError("at least one negative concept is required")
        if not self.source_vocabulary:
            raise ConfigError("source vocabulary must be nonempty")


def compose_templates(concept, templates):
    """Render one string per template, substituting the concept verbatim."""
    if not templates:
        raise ConfigError("template list must be nonempty")
    rendered = []
    for pattern in templates:
        if pattern.count(PLACEHOLDER) != 1:
            raise MalformedTemplateError(
                f"template {pattern!r} must contain exactly one {PLACEHOLDER!r} placeholder")
        rendered.append(pattern.replace(PLACEHOLDER, concept))
    return rendered


def embed_text_concept(concept, backend, templates=DEFAULT_TEMPLATES, rng=None, sample=None):
    """Mean of encode_text over rendered templates.

    With ``sample=k`` and an rng, k templates are drawn without replacement
    instead of using the full list (per-step resampling mode).
    """
    templates = list(templates)
    if sample is not None:
        if rng is None:
            raise ConfigError("template sampling requires an rng")
        take = min(int(sample), len(templates))
        idx = rng.choice(len(templates), size=take, replace=False)
        templates = [templates[i] for i in idx]
    rendered = compose_templates(concept, templates)
    try:
        vectors = np.asarray(backend.encode_text(rendered), dtype=np.float64)
    except EncoderBackendError:
        raise
    except Exception as exc:
        raise EncoderBackendError(f"text encoding failed for {concept!r}: {exc}") from exc
    return Embedding(vector=vectors.mean(axis=0), provenance="text")


def embed_image_concept(samples, backend):
    """Mean image embedding over a [N,C,H,W] batch of concept samples."""
    samples = np.asarray(samples, dtype=np.float32)
    if samples.ndim != 4 or samples.shape[0] == 0:
        raise EmptyConceptError("image concept needs at least one sample image")
    vectors = np.asarray(backend.encode_image(samples), dtype=np.float64)
    return Embedding(vector=vectors.mean(axis=0), provenance="image")


@dataclass
class ConceptEmbeddings:
    """Embedded concept set ready for the crafting loop."""

    concept_set: ConceptSet
    target: np.ndarray        # [d]
    negatives: np.ndarray     # [M,d]
    source: np.ndarray        # [V,d] row v embeds source_vocabulary[v]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float32).reshape(-1)
        self.negatives = np.asarray(self.negatives, dtype=np.float32)
        self.source = np.asarray(self.source, dtype=np.float32)
        d = self.target.shape[0]
        if self.negatives.ndim != 2 or self.negatives.shape[1] != d:
            raise ValueError("negatives must be [M,d]")
        if self.source.ndim != 2 or self.source.shape[1] != d:
            raise ValueError("source must be [V,d]")
        if len(self.concept_set.source_vocabulary) != self.source.shape[0]:
            raise ValueError("source rows must align with the vocabulary")


def build_concept_embeddings(concept_set, backend, templates=DEFAULT_TEMPLATES,
                             image_concepts=None, rng=None, sample=None):
    """Embed a ConceptSet through a backend.

    ``image_concepts`` maps concept strings to sample batches; any concept
    present there is embedded from images, the rest from templated text.
    """
    image_concepts = image_concepts or {}

    def embed_one(concept):
        if concept in image_concepts:
            return embed_image_concept(image_concepts[concept], backend)
        return embed_text_concept(concept, backend, templates=templates, rng=rng, sample=sample)

    target = embed_one(concept_set.target)
    negatives = [embed_one(n) for n in concept_set.negatives]
    source = [embed_one(y) for y in concept_set.source_vocabulary]
    return ConceptEmbeddings(
        concept_set=concept_set,
        target=target.vector,
        negatives=np.stack([e.vector for e in negatives]),
        source=np.stack([e.vector for e in source]),
        provenance={
            "target": target.provenance,
            "negatives": [e.provenance for e in negatives],
            "source": [e.provenance for e in source],
        },
    )
