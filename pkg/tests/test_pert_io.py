"""Perturbation file format: round trips and rejection of corrupt files."""

import struct

import numpy as np
import pytest

from uapkit.crafter import Perturbation
from uapkit.errors import PerturbationFormatError
from uapkit.pert_io import MAGIC, read_perturbation, write_perturbation


def sample_pert(seed=0):
    rng = np.random.default_rng(seed)
    data = rng.uniform(-0.1, 0.1, (3, 8, 8)).astype(np.float32)
    return Perturbation(data=data, epsilon=0.1255, norm="linf",
                        meta={"target": "ship", "backend": "toyconv", "steps": 100,
                              "seed": 7, "config_digest": "deadbeef"})


def test_round_trip_bit_identical(tmp_path):
    path = tmp_path / "t.uip"
    pert = sample_pert()
    write_perturbation(path, pert, created="2026-01-01T00:00:00+00:00")
    back = read_perturbation(path)
    assert back.data.tobytes() == pert.data.tobytes()
    assert back.epsilon == pert.epsilon
    assert back.norm == pert.norm
    assert back.meta["target"] == "ship"
    assert back.meta["config_digest"] == "deadbeef"


def test_identical_writes_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.uip", tmp_path / "b.uip"
    write_perturbation(a, sample_pert(), created="2026-01-01T00:00:00+00:00")
    write_perturbation(b, sample_pert(), created="2026-01-01T00:00:00+00:00")
    assert a.read_bytes() == b.read_bytes()


def test_write_read_write_is_stable(tmp_path):
    a = tmp_path / "a.uip"
    b = tmp_path / "b.uip"
    write_perturbation(a, sample_pert(), created="2026-01-01T00:00:00+00:00")
    write_perturbation(b, read_perturbation(a))
    assert a.read_bytes() == b.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.uip"
    write_perturbation(path, sample_pert())
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTMAGIC"
    path.write_bytes(bytes(raw))
    with pytest.raises(PerturbationFormatError, match="magic"):
        read_perturbation(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.uip"
    write_perturbation(path, sample_pert())
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(PerturbationFormatError, match="payload"):
        read_perturbation(path)


def test_truncated_metadata_rejected(tmp_path):
    path = tmp_path / "t.uip"
    write_perturbation(path, sample_pert())
    raw = path.read_bytes()
    path.write_bytes(raw[:14])
    with pytest.raises(PerturbationFormatError):
        read_perturbation(path)


def test_oversized_payload_rejected(tmp_path):
    path = tmp_path / "t.uip"
    write_perturbation(path, sample_pert())
    path.write_bytes(path.read_bytes() + b"\x00" * 4)
    with pytest.raises(PerturbationFormatError):
        read_perturbation(path)


def test_missing_meta_keys_rejected(tmp_path):
    path = tmp_path / "t.uip"
    blob = b'{"shape": [3, 2, 2], "epsilon": 0.1, "norm": "linf"}'
    payload = np.zeros((3, 2, 2), dtype="<f4").tobytes()
    path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob + payload)
    with pytest.raises(PerturbationFormatError, match="missing"):
        read_perturbation(path)


def test_unparseable_metadata_rejected(tmp_path):
    path = tmp_path / "t.uip"
    blob = b"not json at all!"
    path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob + b"\x00" * 48)
    with pytest.raises(PerturbationFormatError, match="metadata"):
        read_perturbation(path)


def test_source_date_epoch_controls_created(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    path = tmp_path / "t.uip"
    meta = write_perturbation(path, sample_pert())
    assert meta["created"] == "1970-01-01T00:00:00+00:00"
