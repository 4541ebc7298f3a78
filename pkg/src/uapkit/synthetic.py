"""Procedural 10-class texture task for offline demos and integration tests.

Victim classes are oriented sinusoid gratings (one orientation/frequency
pair per class) over a randomly tinted base, so classifiers must key on
texture rather than color. The crafting pool uses a disjoint set of
orientation/frequency pairs under wider tints, standing in for a public
out-of-distribution dataset. A few held-out per-class samples serve as
image concepts.
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .convnet import SmallConvNet
from .data import ArrayDataset

log = logging.getLogger("uapkit")

N_CLASSES = 10
CLASS_NAMES = [f"tex{k:02d}" for k in range(N_CLASSES)]
POOD_NAMES = [f"pood{v:02d}" for v in range(20)]


def _grating(size, angle_deg, cycles, phase, amplitude):
    coords = np.arange(size, dtype=np.float32)
    gx, gy = np.meshgrid(coords, coords)
    theta = np.deg2rad(angle_deg)
    wave = np.sin(2.0 * np.pi * cycles * (gx * np.cos(theta) + gy * np.sin(theta)) / size + phase)
    return amplitude * wave.astype(np.float32)


def _render(size, angle_deg, cycles, amplitude, tint_span, rng, noise=0.025):
    base = 0.5 + rng.uniform(-tint_span, tint_span, size=(3, 1, 1)).astype(np.float32)
    amp = amplitude * rng.uniform(0.75, 1.25)
    pattern = _grating(size, angle_deg, cycles, rng.uniform(0, 2 * np.pi), amp)
    jitter = rng.normal(0.0, noise, size=(3, size, size)).astype(np.float32)
    return np.clip(base + pattern[None] + jitter, 0.0, 1.0)


def victim_class_params(k):
    # contrast calibrated so a well-trained classifier keys on the gratings
    # while an additive pattern inside the default pixel budget can compete
    return {"angle_deg": 18.0 * k, "cycles": 2.5 + 0.7 * k, "amplitude": 0.075,
            "tint_span": 0.12}


def pood_class_params(v):
    return {"angle_deg": 9.0 + 18.0 * (v % 10), "cycles": 2.8 + 0.65 * (v % 10) + 1.5 * (v // 10),
            "amplitude": 0.13, "tint_span": 0.2}


def _build(param_fn, names, n_per_class, size, rng):
    images, labels = [], []
    for idx in range(len(names)):
        params = param_fn(idx)
        for _ in range(n_per_class):
            images.append(_render(size, rng=rng, **params))
            labels.append(idx)
    return ArrayDataset(np.stack(images), np.asarray(labels), names)


def make_victim_data(n_per_class, size=32, seed=0):
    return _build(victim_class_params, CLASS_NAMES, n_per_class, size, np.random.default_rng(seed))


def make_pood_data(n_per_class, size=32, seed=100):
    return _build(pood_class_params, POOD_NAMES, n_per_class, size, np.random.default_rng(seed))


def make_concept_samples(per_class=4, size=32, seed=7):
    """Few-shot image concepts, one small batch per victim class."""
    rng = np.random.default_rng(seed)
    return {name: np.stack([_render(size, rng=rng, **victim_class_params(k))
                            for _ in range(per_class)])
            for k, name in enumerate(CLASS_NAMES)}


def train_reference_victim(train=None, epochs=10, seed=0, n_per_class=250, size=32):
    """Train the bundled convnet on the synthetic task."""
    if train is None:
        train = make_victim_data(n_per_class, size=size, seed=seed)
    mean = train.images.mean(axis=(0, 2, 3))
    std = train.images.std(axis=(0, 2, 3)) + 1e-6
    net = SmallConvNet(num_classes=len(train.label_names), input_shape=train.images.shape[1:],
                       seed=seed, mean=mean, std=std, name="refconv")
    net.fit(train.images, train.labels, epochs=epochs, seed=seed, log_every=0)
    return net


def write_image_tree(root, dataset):
    root = Path(root)
    counters = {}
    for i in range(len(dataset)):
        img, label = dataset.get(i)
        name = dataset.label_names[label]
        sub = root / name
        sub.mkdir(parents=True, exist_ok=True)
        n = counters.get(name, 0)
        counters[name] = n + 1
        arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr.transpose(1, 2, 0)).save(sub / f"img{n:04d}.png")
    return root


def materialize_demo(out_dir, pood_per_class=300, eval_per_class=120, concept_per_class=4,
                     victim_per_class=250, epochs=10, seed=0, train_victim=True):
    """Write a self-contained demo workspace: crafting pool, eval split,
    concept samples, a trained victim and a ready-to-run config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image_tree(out / "pood", make_pood_data(pood_per_class, seed=seed + 100))
    write_image_tree(out / "eval", make_victim_data(eval_per_class, seed=seed + 200))
    concept_root = out / "concepts"
    samples = make_concept_samples(per_class=concept_per_class, seed=seed + 7)
    for name, batch in samples.items():
        write_image_tree(concept_root, ArrayDataset(batch, [0] * len(batch), [name]))
    if train_victim:
        net = train_reference_victim(epochs=epochs, seed=seed, n_per_class=victim_per_class)
        net.save(out / "victim.npz")
        log.info("victim saved with train accuracy %.4f",
                 net.accuracy(make_victim_data(50, seed=seed + 300).images,
                              make_victim_data(50, seed=seed + 300).labels))

    target = CLASS_NAMES[8]
    doc = {
        "seed": seed,
        "craft": {"steps": 1000, "batch_size": 48},
        "concepts": {
            "target": target,
            "negatives": [n for n in CLASS_NAMES if n != target],
            "image_concept_dir": str(concept_root),
            "source_from_pood_samples": 8,
        },
        "pood": {"root": str(out / "pood")},
        "backend": {"name": "texture", "options": {}},
        "victims": [{"name": "refconv", "type": "convnet", "path": str(out / "victim.npz")}],
        "eval": {"data_root": str(out / "eval"), "target_class": 8, "topk": [1, 5]},
        "outputs": {"dir": str(out)},
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return config_path


def main(argv=None):
    parser = argparse.ArgumentParser(description="materialize the synthetic demo workspace")
    parser.add_argument("--out", required=True)
    parser.add_argument("--pood-per-class", type=int, default=300)
    parser.add_argument("--eval-per-class", type=int, default=120)
    parser.add_argument("--victim-per-class", type=int, default=250)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-victim", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    path = materialize_demo(args.out, pood_per_class=args.pood_per_class,
                            eval_per_class=args.eval_per_class,
                            victim_per_class=args.victim_per_class,
                            epochs=args.epochs, seed=args.seed,
                            train_victim=not args.no_victim)
    print(f"demo config written to {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
