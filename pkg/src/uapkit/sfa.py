"""Decision-based sign-flip query attack, optionally warm-started from a
crafted universal perturbation.

Minimal random-search variant: keep a candidate delta on the epsilon ball
surface structure of the initializer, flip the signs of a few entries per
query, accept flips that hit the target class (or, before the first hit,
flips that keep the oracle away from the source label), and halve the flip
fraction after repeated rejection. Every oracle invocation is counted.
"""

import logging
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ResolutionError, UapkitError

log = logging.getLogger("uapkit")


@dataclass
class QueryBudget:
    max_queries: int
    queries_used: int = 0

    def __post_init__(self):
        if self.max_queries < 0:
            raise ValueError("max_queries must be >= 0")

    def spend(self):
        if self.queries_used >= self.max_queries:
            raise _BudgetExhausted
        self.queries_used += 1


class _BudgetExhausted(Exception):
    pass


@dataclass
class SfaResult:
    success: bool
    queries: int
    final_example: np.ndarray


def sign_flip_attack(query, x, init, target_class, epsilon, budget, rng,
                     source_label=None, flip_fraction=0.05, patience=10,
                     min_flip_fraction=1e-4):
    """Targeted attack against a label-only oracle.

    ``query(image) -> int`` is charged once per call. ``init`` may be a
    Perturbation (its data is clamped to epsilon) or None for a random sign
    start. Before the first target hit, flips that keep the oracle label
    away from ``source_label`` count as progress (when a source label is
    supplied). Terminates on the first target hit or on budget exhaustion.
    """
    x = np.asarray(x, dtype=np.float32)
    if init is not None:
        if init.data.shape != x.shape:
            raise ResolutionError(
                f"init shape {init.data.shape} does not match sample {x.shape}")
        delta = np.clip(init.data.astype(np.float32), -epsilon, epsilon)
    else:
        delta = (rng.integers(0, 2, size=x.shape).astype(np.float32) * 2.0 - 1.0) * epsilon

    def candidate(d):
        return np.clip(x + d, 0.0, 1.0)

    p = flip_fraction
    rejects = 0
    n = delta.size
    try:
        budget.spend()
        label = int(query(candidate(delta)))
        if label == target_class:
            return SfaResult(success=True, queries=budget.queries_used,
                             final_example=candidate(delta))
        while True:
            count = max(1, int(round(p * n)))
            flat = rng.choice(n, size=min(count, n), replace=False)
            proposal = delta.copy()
            proposal.reshape(-1)[flat] *= -1.0
            budget.spend()
            label = int(query(candidate(proposal)))
            if label == target_class:
                return SfaResult(success=True, queries=budget.queries_used,
                                 final_example=candidate(proposal))
            if source_label is not None and label != source_label:
                delta = proposal
                rejects = 0
            else:
                rejects += 1
                if rejects >= patience:
                    p = max(p / 2.0, min_flip_fraction)
                    rejects = 0
    except _BudgetExhausted:
        return SfaResult(success=False, queries=budget.queries_used,
                         final_example=candidate(delta))


def victim_oracle(victim):
    """Label-only adapter over an in-process victim."""

    def query(image):
        scores = victim.classify(image[None])
        return int(scores.argmax(axis=1)[0])

    return query


def command_oracle(command, labels=None, workdir=None):
    """External-command adapter: the image is written to a PNG file, the
    command is run with the path substituted for ``{image}``, and its stdout
    (a bare class index, or a label string resolved through ``labels``)
    becomes the oracle answer."""

    def query(image):
        arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
        with tempfile.NamedTemporaryFile(suffix=".png", dir=workdir, delete=False) as fh:
            path = fh.name
        try:
            Image.fromarray(arr.transpose(1, 2, 0)).save(path)
            argv = [a.replace("{image}", path) for a in command]
            out = subprocess.run(argv, capture_output=True, text=True, check=True).stdout.strip()
        finally:
            Path(path).unlink(missing_ok=True)
        if labels is not None and out in labels:
            return labels.index(out)
        try:
            return int(out)
        except ValueError:
            raise UapkitError(f"oracle command returned unrecognized label {out!r}") from None

    return query
