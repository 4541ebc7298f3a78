"""uapkit: universal targeted adversarial perturbations from concept directions.

Craft a single perturbation against a pluggable vision-language encoder
surrogate, evaluate its transfer to victim classifiers, warm-start
decision-based query attacks with it, and probe it against an
embedding-robustness detector.
"""

from .backends import EncoderBackend, create_backend, register_backend
from .concepts import (ConceptEmbeddings, ConceptSet, DEFAULT_TEMPLATES, Embedding,
                       build_concept_embeddings, compose_templates, embed_image_concept,
                       embed_text_concept)
from .crafter import (CraftConfig, CraftResult, Perturbation, apply, craft,
                      init_perturbation, project)
from .errors import UapkitError
from .pert_io import read_perturbation, write_perturbation
from .probe import default_probe_suite, robustness_score, score_distributions
from .sfa import QueryBudget, SfaResult, sign_flip_attack
from .surrogate import (DirectionBatch, LogitBatch, direction_logits, image_direction,
                        nll_loss, surrogate_loss, surrogate_loss_and_grad, text_directions)
from .transforms import PatchSet, TransformConfig, random_transform, sample_patches
from .victim import EvalReport, attack_success_rate, clean_accuracy, evaluate, per_class_report

__version__ = "0.1.0"

__all__ = [
    "ConceptEmbeddings", "ConceptSet", "CraftConfig", "CraftResult", "DEFAULT_TEMPLATES",
    "DirectionBatch", "Embedding", "EncoderBackend", "EvalReport", "LogitBatch",
    "PatchSet", "Perturbation", "QueryBudget", "SfaResult", "TransformConfig",
    "UapkitError", "apply", "attack_success_rate", "build_concept_embeddings",
    "clean_accuracy", "compose_templates", "craft", "create_backend",
    "default_probe_suite", "direction_logits", "embed_image_concept",
    "embed_text_concept", "evaluate", "image_direction", "init_perturbation",
    "nll_loss", "per_class_report", "project", "random_transform",
    "read_perturbation", "register_backend", "robustness_score", "sample_patches",
    "score_distributions", "sign_flip_attack", "surrogate_loss",
    "surrogate_loss_and_grad", "text_directions", "write_perturbation",
]
