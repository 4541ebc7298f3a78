"""Victim-side evaluation: clean accuracy, top-k attack success, per-class tables.

A victim is anything with ``name``, ``num_classes`` and
``classify([B,C,H,W] in [0,1]) -> [B,num_classes]``; adapters own their
normalization. Samples whose ground truth equals the target class are
excluded from both the ASR numerator and denominator.

Top-k membership uses the total order (score descending, class index
ascending) so results are deterministic under ties and monotone in k.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .crafter import apply
from .errors import EmptyEvalError

from .convnet import SmallConvNet

VICTIM_LOADERS = {"convnet": SmallConvNet.load}


def _iter_batches(dataset, batch_size=256):
    n = len(dataset)
    for start in range(0, n, batch_size):
        imgs, labels = [], []
        for i in range(start, min(start + batch_size, n)):
            img, lbl = dataset.get(i)
            imgs.append(img)
            labels.append(lbl)
        yield np.stack(imgs).astype(np.float32), np.asarray(labels)


def _topk_hit(scores, target_class, k):
    """True where the target class ranks within the first k under
    (score desc, class asc)."""
    target_scores = scores[:, target_class]
    better = (scores > target_scores[:, None]).sum(axis=1)
    tied_before = ((scores == target_scores[:, None])
                   & (np.arange(scores.shape[1])[None, :] < target_class)).sum(axis=1)
    return (better + tied_before) < k


def clean_accuracy(victim, dataset, batch_size=256):
    """Fraction of samples whose argmax score equals the ground truth."""
    if len(dataset) == 0:
        raise EmptyEvalError("clean accuracy requested on an empty dataset")
    hits = total = 0
    for imgs, labels in _iter_batches(dataset, batch_size):
        if labels.max() >= victim.num_classes:
            raise ValueError("dataset label outside victim class range")
        preds = victim.classify(imgs).argmax(axis=1)
        hits += int((preds == labels).sum())
        total += len(labels)
    return hits / total


def attack_success_rate(victim, dataset, t, target_class, k=1, batch_size=256):
    """Fraction of perturbed non-target samples whose top-k set contains the
    target class."""
    if not (0 <= target_class < victim.num_classes):
        raise ValueError(f"target_class {target_class} outside range")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = total = 0
    for imgs, labels in _iter_batches(dataset, batch_size):
        keep = labels != target_class
        if not keep.any():
            continue
        scores = victim.classify(apply(t, imgs[keep]))
        hits += int(_topk_hit(scores, target_class, k).sum())
        total += int(keep.sum())
    if total == 0:
        raise EmptyEvalError("no non-target samples to evaluate")
    return hits / total


def per_class_report(victim, dataset, t, target_class, k=1, batch_size=256):
    """Per-ground-truth-class ASR. The target class entry and classes with no
    samples are None (absent), never 0."""
    hits = np.zeros(victim.num_classes, dtype=np.int64)
    counts = np.zeros(victim.num_classes, dtype=np.int64)
    for imgs, labels in _iter_batches(dataset, batch_size):
        scores = victim.classify(apply(t, imgs))
        hit = _topk_hit(scores, target_class, k)
        for cls in np.unique(labels):
            sel = labels == cls
            hits[cls] += int(hit[sel].sum())
            counts[cls] += int(sel.sum())
    out = []
    for cls in range(victim.num_classes):
        if cls == target_class or counts[cls] == 0:
            out.append(None)
        else:
            out.append(hits[cls] / counts[cls])
    return out


@dataclass
class EvalReport:
    victim_name: str
    clean_accuracy: float
    asr_topk: dict                    # k -> fraction
    per_class_asr: list               # None marks absent / excluded entries
    n_evaluated: int
    excluded_target_class: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_evaluated <= 0:
            raise EmptyEvalError("report over zero evaluated samples")
        fracs = [self.clean_accuracy, *self.asr_topk.values()]
        fracs += [v for v in self.per_class_asr if v is not None]
        if any(not (0.0 <= v <= 1.0) for v in fracs):
            raise ValueError("fractions must lie in [0, 1]")

    def to_json(self):
        doc = {
            "victim": self.victim_name,
            "clean_accuracy": self.clean_accuracy,
            "asr_topk": {str(k): v for k, v in self.asr_topk.items()},
            "per_class_asr": self.per_class_asr,
            "n_evaluated": self.n_evaluated,
            "excluded_target_class": self.excluded_target_class,
        }
        doc.update(self.extra)
        return json.dumps(doc, indent=2, sort_keys=True)


def evaluate(victim, dataset, t, target_class, topk=(1, 5), extra=None):
    """Full report: clean accuracy plus ASR at every requested k."""
    ca = clean_accuracy(victim, dataset)
    ks = [k for k in topk if k <= victim.num_classes]
    asr = {k: attack_success_rate(victim, dataset, t, target_class, k=k) for k in ks}
    per_class = per_class_report(victim, dataset, t, target_class, k=min(ks))
    labels = np.asarray(dataset.labels)
    n_eval = int((labels != target_class).sum())
    return EvalReport(victim_name=victim.name, clean_accuracy=ca, asr_topk=asr,
                      per_class_asr=per_class, n_evaluated=n_eval,
                      excluded_target_class=target_class, extra=extra or {})


def format_report_table(reports):
    """Aligned text table over a list of EvalReports."""
    ks = sorted({k for r in reports for k in r.asr_topk})
    header = ["Victim", "CA(%)"] + [f"ASR@{k}(%)" for k in ks]
    rows = [header]
    for r in reports:
        rows.append([r.victim_name, f"{100 * r.clean_accuracy:.2f}"]
                    + [f"{100 * r.asr_topk[k]:.2f}" if k in r.asr_topk else "-" for k in ks])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines)
