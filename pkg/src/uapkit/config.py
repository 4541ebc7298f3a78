"""Run configuration: one JSON document driving all CLI commands.

Defaults follow the reference operating point (5000 steps, lr 0.01, weight
decay 1e-5, batch 64, epsilon 32/255, the standard transform strengths).
Validation is collected, not fail-fast: a bad document reports every
violation at once, and unknown keys are rejected everywhere except the
free-form backend options.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .concepts import DEFAULT_TEMPLATES
from .crafter import CraftConfig
from .errors import ConfigError
from .transforms import TransformConfig

_NUMBER = (int, float)


def _default_doc():
    return {
        "seed": 0,
        "craft": {
            "steps": 5000,
            "lr": 0.01,
            "weight_decay": 1e-5,
            "batch_size": 64,
            "epsilon": 32.0 / 255.0,
            "norm": "linf",
            "temperature": 1.0,
            "resolution": [3, 32, 32],
            "resample_templates": False,
            "trace_every": 10,
        },
        "transforms": {
            "rot_degrees": 5.0,
            "translate_frac": 0.05,
            "scale_range": [0.95, 1.05],
            "hflip_prob": 0.5,
            "patch_count": 3,
            "patch_side_frac": [0.10, 0.30],
        },
        "concepts": {
            "target": None,
            "negatives": [],
            "templates": list(DEFAULT_TEMPLATES),
            "image_concept_dir": None,
            "source_from_pood_samples": 0,
        },
        "pood": {"root": None, "exclude_labels": []},
        "backend": {"name": "toyconv", "options": {}},
        "victims": [],
        "eval": {"data_root": None, "target_class": None, "topk": [1, 5]},
        "sfa": {"epsilon": 16.0 / 255.0, "max_queries": 2000, "samples": 100,
                "flip_fraction": 0.05, "patience": 10},
        "probe": {"samples_per_transform": 4, "bins": 32, "max_images": None},
        "outputs": {"dir": "."},
    }


def _merge(defaults, doc, path, problems):
    """Overlay ``doc`` onto ``defaults``, flagging unknown keys."""
    merged = dict(defaults)
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            problems.append(f"unknown key {where!r}")
            continue
        if isinstance(defaults[key], dict) and not (path == "backend" and key == "options"):
            if not isinstance(value, dict):
                problems.append(f"{where} must be an object")
            else:
                merged[key] = _merge(defaults[key], value, where, problems)
        else:
            merged[key] = value
    return merged


def _require(problems, condition, message):
    if not condition:
        problems.append(message)


def _validate(doc, problems):
    craft = doc["craft"]
    _require(problems, isinstance(craft["steps"], int) and craft["steps"] >= 1,
             f"craft.steps must be an integer >= 1, got {craft['steps']!r}")
    _require(problems, isinstance(craft["lr"], _NUMBER) and craft["lr"] > 0,
             f"craft.lr must be positive, got {craft['lr']!r}")
    _require(problems, isinstance(craft["weight_decay"], _NUMBER) and craft["weight_decay"] >= 0,
             f"craft.weight_decay must be >= 0, got {craft['weight_decay']!r}")
    _require(problems, isinstance(craft["batch_size"], int) and craft["batch_size"] >= 1,
             f"craft.batch_size must be an integer >= 1, got {craft['batch_size']!r}")
    _require(problems, isinstance(craft["epsilon"], _NUMBER) and craft["epsilon"] > 0,
             f"craft.epsilon must be positive, got {craft['epsilon']!r}")
    _require(problems, craft["norm"] in ("linf", "l2"),
             f"craft.norm must be 'linf' or 'l2', got {craft['norm']!r}")
    _require(problems, isinstance(craft["temperature"], _NUMBER) and craft["temperature"] > 0,
             f"craft.temperature must be positive, got {craft['temperature']!r}")
    res = craft["resolution"]
    _require(problems, isinstance(res, (list, tuple)) and len(res) == 3
             and all(isinstance(v, int) and v > 0 for v in res),
             f"craft.resolution must be three positive integers, got {res!r}")

    tr = doc["transforms"]
    _require(problems, isinstance(tr["rot_degrees"], _NUMBER) and tr["rot_degrees"] >= 0,
             "transforms.rot_degrees must be >= 0")
    _require(problems, isinstance(tr["translate_frac"], _NUMBER) and tr["translate_frac"] >= 0,
             "transforms.translate_frac must be >= 0")
    sr = tr["scale_range"]
    _require(problems, isinstance(sr, (list, tuple)) and len(sr) == 2 and 0 < sr[0] <= sr[1],
             f"transforms.scale_range must satisfy 0 < low <= high, got {sr!r}")
    _require(problems, isinstance(tr["hflip_prob"], _NUMBER) and 0 <= tr["hflip_prob"] <= 1,
             "transforms.hflip_prob must lie in [0, 1]")
    _require(problems, isinstance(tr["patch_count"], int) and tr["patch_count"] >= 0,
             "transforms.patch_count must be an integer >= 0")
    pf = tr["patch_side_frac"]
    _require(problems, isinstance(pf, (list, tuple)) and len(pf) == 2 and 0 < pf[0] <= pf[1] <= 1,
             f"transforms.patch_side_frac must lie in (0, 1] with low <= high, got {pf!r}")

    concepts = doc["concepts"]
    _require(problems, concepts["target"] is None or isinstance(concepts["target"], str),
             "concepts.target must be a string")
    _require(problems, isinstance(concepts["negatives"], list)
             and all(isinstance(n, str) for n in concepts["negatives"]),
             "concepts.negatives must be a list of strings")
    _require(problems, isinstance(concepts["templates"], list) and concepts["templates"],
             "concepts.templates must be a nonempty list")
    _require(problems, isinstance(concepts["source_from_pood_samples"], int)
             and concepts["source_from_pood_samples"] >= 0,
             "concepts.source_from_pood_samples must be an integer >= 0")

    _require(problems, isinstance(doc["seed"], int), "seed must be an integer")
    _require(problems, isinstance(doc["victims"], list), "victims must be a list")
    for i, victim in enumerate(doc["victims"]):
        if not (isinstance(victim, dict) and {"name", "type", "path"} >= set(victim)
                and "name" in victim):
            problems.append(f"victims[{i}] must be an object with name/type/path")

    sfa = doc["sfa"]
    _require(problems, isinstance(sfa["epsilon"], _NUMBER) and sfa["epsilon"] > 0,
             "sfa.epsilon must be positive")
    _require(problems, isinstance(sfa["max_queries"], int) and sfa["max_queries"] >= 0,
             "sfa.max_queries must be an integer >= 0")

    pr = doc["probe"]
    _require(problems, isinstance(pr["samples_per_transform"], int) and pr["samples_per_transform"] >= 1,
             "probe.samples_per_transform must be an integer >= 1")
    _require(problems, isinstance(pr["bins"], int) and pr["bins"] >= 2,
             "probe.bins must be an integer >= 2")

    topk = doc["eval"]["topk"]
    _require(problems, isinstance(topk, list) and topk
             and all(isinstance(k, int) and k >= 1 for k in topk),
             f"eval.topk must be a nonempty list of integers >= 1, got {topk!r}")


@dataclass
class RunConfig:
    doc: dict
    path: str | None = None

    def digest(self):
        canon = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def craft_config(self, overrides=None):
        craft = dict(self.doc["craft"])
        craft.update(overrides or {})
        return CraftConfig(
            steps=craft["steps"], lr=craft["lr"], weight_decay=craft["weight_decay"],
            batch_size=craft["batch_size"], epsilon=craft["epsilon"], norm=craft["norm"],
            temperature=craft["temperature"], resolution=tuple(craft["resolution"]),
            seed=self.doc["seed"], transforms=self.transform_config(),
            resample_templates=craft["resample_templates"], trace_every=craft["trace_every"])

    def transform_config(self):
        tr = self.doc["transforms"]
        return TransformConfig(
            rot_degrees=tr["rot_degrees"], translate_frac=tr["translate_frac"],
            scale_range=tuple(tr["scale_range"]), hflip_prob=tr["hflip_prob"],
            patch_count=tr["patch_count"], patch_side_frac=tuple(tr["patch_side_frac"]),
            seed=self.doc["seed"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def parse_config(doc):
    """Merge a raw dict with defaults and fully validate it."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    problems = []
    merged = _merge(_default_doc(), doc, "", problems)
    if not problems:
        _validate(merged, problems)
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    return RunConfig(doc=merged)


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    cfg = parse_config(doc)
    cfg.path = str(path)
    return cfg
