"""Dataset ingestion: directory-per-label image trees and in-memory arrays.

Both dataset flavors expose the same minimal protocol the crafter and
evaluator consume: ``len(ds)``, ``ds.get(i) -> (chw_float_image, label_idx)``
and ``ds.label_names``.
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import UnusablePoodError

log = logging.getLogger("uapkit")

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".webp", ".gif"}


def normalize_label(text):
    """Canonical form used when comparing concept / label strings."""
    return " ".join(text.casefold().split())


def load_image(path, size=None):
    """Decode to a [3,H,W] float32 array in [0,1], optionally resized."""
    with Image.open(path) as pil:
        pil = pil.convert("RGB")
        if size is not None and pil.size != (size[1], size[0]):
            pil = pil.resize((size[1], size[0]), Image.BILINEAR)
        arr = np.asarray(pil, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


class ArrayDataset:
    """Dataset over in-memory arrays, used by tests and the synthetic task."""

    def __init__(self, images, labels, label_names):
        self.images = np.asarray(images, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.label_names = list(label_names)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ValueError("images must be [N,C,H,W] aligned with labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.label_names)):
            raise ValueError("label index out of range")

    def __len__(self):
        return len(self.images)

    def get(self, i):
        return self.images[i], int(self.labels[i])


class PoodDataset:
    """Images under one subdirectory per label, decoded lazily."""

    def __init__(self, root, items, label_names, image_size=None, skipped=0, cache=True):
        self.root = Path(root)
        self.items = items                  # [(path, label_idx)]
        self.label_names = list(label_names)
        self.image_size = image_size        # (H, W) or None for native size
        self.skipped = skipped
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.items)

    @property
    def labels(self):
        return np.asarray([label for _, label in self.items], dtype=np.int64)

    def get(self, i):
        path, label = self.items[i]
        if self._cache is not None and path in self._cache:
            return self._cache[path], label
        img = load_image(path, self.image_size)
        if self._cache is not None:
            self._cache[path] = img
        return img, label


def ingest_pood(root, image_size=None, exclude_labels=None, cache=True):
    """Scan a directory-per-label tree.

    Label indices follow lexicographic subdirectory order so they are stable
    across filesystems. Undecodable files are skipped and counted. Labels
    matching ``exclude_labels`` (after normalization) are dropped entirely,
    mirroring the removal of overlapping classes from the crafting pool.
    """
    root = Path(root)
    if not root.is_dir():
        raise UnusablePoodError(f"dataset root {root} is not a directory")
    excluded = {normalize_label(x) for x in (exclude_labels or [])}

    label_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    kept_dirs = [p for p in label_dirs if normalize_label(p.name) not in excluded]
    dropped = len(label_dirs) - len(kept_dirs)
    if dropped:
        log.warning("excluded %d overlapping label directories under %s", dropped, root)

    label_names = [p.name for p in kept_dirs]
    items = []
    skipped = 0
    for idx, label_dir in enumerate(kept_dirs):
        for path in sorted(label_dir.iterdir()):
            if path.suffix.lower() not in IMAGE_EXTENSIONS or not path.is_file():
                continue
            try:
                with Image.open(path) as pil:
                    pil.verify()
            except Exception:
                skipped += 1
                continue
            items.append((path, idx))
    if skipped:
        log.warning("skipped %d undecodable files under %s", skipped, root)
    if not items:
        raise UnusablePoodError(f"no decodable images under {root}")
    return PoodDataset(root, items, label_names, image_size=image_size, skipped=skipped, cache=cache)
