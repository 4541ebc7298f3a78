"""Evaluation harness against counting oracles and degenerate victims."""

import numpy as np
import pytest

from uapkit.crafter import Perturbation, apply
from uapkit.data import ArrayDataset
from uapkit.errors import EmptyEvalError
from uapkit.victim import (attack_success_rate, clean_accuracy, evaluate, format_report_table,
                           per_class_report)

N_CLASSES = 10


class ConstantVictim:
    name = "constant"
    num_classes = N_CLASSES

    def classify(self, images):
        return np.tile(np.linspace(0.0, 1.0, self.num_classes), (len(images), 1))


class OracleVictim:
    """Returns a one-hot of a hidden labeling rule (pixel sum bucket)."""

    name = "oracle"
    num_classes = N_CLASSES

    def __init__(self, labels_of):
        self._labels_of = labels_of

    def classify(self, images):
        labels = self._labels_of(images)
        scores = np.zeros((len(images), self.num_classes))
        scores[np.arange(len(images)), labels] = 1.0
        return scores


class AlwaysTargetVictim:
    name = "always-target"
    num_classes = N_CLASSES

    def __init__(self, target):
        self.target = target

    def classify(self, images):
        scores = np.zeros((len(images), self.num_classes))
        scores[:, self.target] = 1.0
        return scores


def balanced_dataset(per_class=20, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.random((per_class * N_CLASSES, 3, 8, 8)).astype(np.float32)
    labels = np.repeat(np.arange(N_CLASSES), per_class)
    return ArrayDataset(images, labels, [f"c{i}" for i in range(N_CLASSES)])


def null_pert():
    return Perturbation(data=np.zeros((3, 8, 8), np.float32), epsilon=0.1, norm="linf")


def test_constant_victim_scores_chance():
    ds = balanced_dataset()
    # constant scores put argmax at the last class; a balanced set gives 1/10
    assert clean_accuracy(ConstantVictim(), ds) == pytest.approx(0.1)


def test_oracle_victim_is_perfect():
    ds = balanced_dataset()
    victim = OracleVictim(lambda imgs: np.repeat(np.arange(N_CLASSES), 20)[:len(imgs)])
    # oracle labels echo dataset order, which matches ground truth here
    assert clean_accuracy(victim, ds) == 1.0


def test_clean_accuracy_empty_dataset():
    ds = ArrayDataset(np.zeros((0, 3, 8, 8), np.float32), [], ["a"])
    with pytest.raises(EmptyEvalError):
        clean_accuracy(ConstantVictim(), ds)


def test_always_target_victim_asr_one():
    ds = balanced_dataset()
    victim = AlwaysTargetVictim(target=3)
    for k in (1, 3, N_CLASSES):
        assert attack_success_rate(victim, ds, null_pert(), 3, k=k) == 1.0


def test_topk_saturates_at_num_classes():
    ds = balanced_dataset()
    rng = np.random.default_rng(1)

    class RandomVictim:
        name = "random"
        num_classes = N_CLASSES

        def classify(self, images):
            return rng.random((len(images), N_CLASSES))

    assert attack_success_rate(RandomVictim(), ds, null_pert(), 5, k=N_CLASSES) == 1.0


def test_asr_matches_brute_force_loop():
    """Counting identity on a 200-sample set with a deterministic victim."""
    ds = balanced_dataset(per_class=20, seed=7)
    pert = Perturbation(data=np.random.default_rng(3).uniform(-0.05, 0.05, (3, 8, 8))
                        .astype(np.float32), epsilon=0.1, norm="linf")

    class HashVictim:
        name = "hash"
        num_classes = N_CLASSES

        def classify(self, images):
            sums = images.sum(axis=(1, 2, 3))
            scores = np.stack([np.sin(sums * (j + 1)) for j in range(N_CLASSES)], axis=1)
            return scores

    victim = HashVictim()
    target = 4
    for k in (1, 3):
        harness = attack_success_rate(victim, ds, pert, target, k=k)
        hits = total = 0
        for i in range(len(ds)):
            img, label = ds.get(i)
            if label == target:
                continue
            scores = victim.classify(apply(pert, img[None]))[0]
            order = np.lexsort((np.arange(N_CLASSES), -scores))
            if target in order[:k]:
                hits += 1
            total += 1
        assert harness == hits / total


def test_asr_monotone_in_k():
    ds = balanced_dataset(per_class=10, seed=2)
    rng = np.random.default_rng(0)

    class NoisyVictim:
        name = "noisy"
        num_classes = N_CLASSES

        def classify(self, images):
            sums = images.sum(axis=(1, 2, 3))
            base = np.stack([np.cos(sums * (j + 2)) for j in range(N_CLASSES)], axis=1)
            return base

    values = [attack_success_rate(NoisyVictim(), ds, null_pert(), 6, k=k)
              for k in range(1, N_CLASSES + 1)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] == 1.0


def test_target_class_samples_excluded():
    ds = balanced_dataset(per_class=5)
    victim = AlwaysTargetVictim(target=0)
    assert attack_success_rate(victim, ds, null_pert(), 0, k=1) == 1.0
    report = evaluate(victim, ds, null_pert(), 0, topk=(1,))
    assert report.n_evaluated == 45  # 50 minus the 5 target-class samples


def test_per_class_report_always_target():
    ds = balanced_dataset(per_class=4)
    report = per_class_report(AlwaysTargetVictim(target=2), ds, null_pert(), 2)
    assert report[2] is None
    assert all(v == 1.0 for i, v in enumerate(report) if i != 2)


def test_per_class_report_absent_bucket_flagged():
    images = np.random.default_rng(0).random((6, 3, 8, 8)).astype(np.float32)
    ds = ArrayDataset(images, [0, 0, 1, 1, 1, 3], [f"c{i}" for i in range(N_CLASSES)])
    report = per_class_report(AlwaysTargetVictim(target=5), ds, null_pert(), 5)
    assert report[2] is None and report[4] is None
    assert report[0] == 1.0 and report[3] == 1.0


def test_per_class_weighted_mean_equals_overall():
    ds = balanced_dataset(per_class=7, seed=9)
    pert = null_pert()

    class HashVictim:
        name = "hash2"
        num_classes = N_CLASSES

        def classify(self, images):
            sums = images.sum(axis=(1, 2, 3))
            return np.stack([np.sin(sums * (j + 1.5)) for j in range(N_CLASSES)], axis=1)

    victim = HashVictim()
    target = 1
    per = per_class_report(victim, ds, pert, target)
    labels = ds.labels
    weights = [int((labels == c).sum()) for c in range(N_CLASSES)]
    total = sum(w for c, w in enumerate(weights) if c != target)
    mean = sum(per[c] * weights[c] for c in range(N_CLASSES) if per[c] is not None) / total
    overall = attack_success_rate(victim, ds, pert, target, k=1)
    assert mean == pytest.approx(overall, abs=1e-9)


def test_report_json_and_table():
    ds = balanced_dataset(per_class=3)
    report = evaluate(AlwaysTargetVictim(target=9), ds, null_pert(), 9, topk=(1, 5))
    doc = report.to_json()
    assert '"clean_accuracy"' in doc and '"asr_topk"' in doc
    table = format_report_table([report])
    assert "always-target" in table and "ASR@1" in table
