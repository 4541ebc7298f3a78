"""Binary perturbation file format.

Layout: magic bytes ``UIPERT01`` (8 bytes) | little-endian u32 metadata
length | UTF-8 JSON metadata | raw little-endian float32 array in C order.
The metadata JSON always carries shape, epsilon, norm, target, backend,
steps, seed and created. Readers reject bad magic and truncated payloads.
"""

import json
import os
import struct
import time
from datetime import datetime, timezone

import numpy as np

from .crafter import Perturbation
from .errors import PerturbationFormatError

MAGIC = b"UIPERT01"
REQUIRED_KEYS = ("shape", "epsilon", "norm", "target", "backend", "steps", "seed", "created")


def _default_created():
    # honor SOURCE_DATE_EPOCH so identical runs can produce identical bytes
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = int(epoch) if epoch else time.time()
    return datetime.fromtimestamp(stamp, tz=timezone.utc).isoformat(timespec="seconds")


def write_perturbation(path, pert, created=None):
    """Serialize; returns the metadata dict actually written."""
    data = np.ascontiguousarray(pert.data, dtype="<f4")
    meta = dict(pert.meta)
    meta["shape"] = list(data.shape)
    meta["epsilon"] = float(pert.epsilon)
    meta["norm"] = pert.norm
    meta.setdefault("target", None)
    meta.setdefault("backend", None)
    meta.setdefault("steps", None)
    meta.setdefault("seed", None)
    meta["created"] = created if created is not None else meta.get("created") or _default_created()
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes(order="C"))
    return meta


def read_perturbation(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise PerturbationFormatError(f"{path}: bad magic bytes")
    (meta_len,) = struct.unpack("<I", raw[8:12])
    if 12 + meta_len > len(raw):
        raise PerturbationFormatError(f"{path}: metadata extends past end of file")
    try:
        meta = json.loads(raw[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PerturbationFormatError(f"{path}: unreadable metadata ({exc})") from exc
    missing = [k for k in REQUIRED_KEYS if k not in meta]
    if missing:
        raise PerturbationFormatError(f"{path}: metadata missing keys {missing}")
    shape = tuple(int(v) for v in meta["shape"])
    if len(shape) != 3 or any(v <= 0 for v in shape):
        raise PerturbationFormatError(f"{path}: bad shape {shape}")
    payload = raw[12 + meta_len:]
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise PerturbationFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} (truncated or corrupt)")
    data = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    extra = {k: v for k, v in meta.items() if k not in ("shape", "epsilon", "norm")}
    return Perturbation(data=data, epsilon=float(meta["epsilon"]), norm=str(meta["norm"]), meta=extra)
