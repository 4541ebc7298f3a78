"""Command-line entry points: craft, eval, sfa, probe.

Every command takes --config (a JSON document, see config.py) plus a few
overrides; artifacts land in the configured outputs directory unless --out
is given. Failures exit with the error-class-specific code from errors.py.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pert_io
from .backends import create_backend
from .concepts import ConceptSet, build_concept_embeddings
from .config import load_config
from .crafter import craft
from .data import ingest_pood, load_image
from .errors import ConfigError, EmptyEvalError, UapkitError
from .imageops import resize_bilinear
from .probe import default_probe_suite, score_distributions
from .sfa import QueryBudget, sign_flip_attack, victim_oracle
from .victim import VICTIM_LOADERS, evaluate, format_report_table

log = logging.getLogger("uapkit")


def _out_path(args, cfg, default_name):
    if getattr(args, "out", None):
        return Path(args.out)
    out_dir = Path(cfg.doc["outputs"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / default_name


def _load_victims(cfg, selector=None):
    entries = cfg.doc["victims"]
    if selector is not None:
        entries = [v for v in entries if v["name"] == selector]
        if not entries:
            raise ConfigError(f"no victim named {selector!r} in config")
    if not entries:
        raise ConfigError("config declares no victims")
    victims = []
    for entry in entries:
        kind = entry.get("type", "convnet")
        if kind not in VICTIM_LOADERS:
            raise ConfigError(f"unknown victim type {kind!r}; available: {sorted(VICTIM_LOADERS)}")
        victim = VICTIM_LOADERS[kind](entry["path"])
        victim.name = entry["name"]
        victims.append(victim)
    return victims


def _concept_image_batches(cfg, backend, pood):
    """Resolve image concepts: explicit per-concept sample directories plus
    optional source-vocabulary embeddings from the crafting pool itself."""
    conc = cfg.doc["concepts"]
    batches = {}
    root = conc["image_concept_dir"]
    if root:
        root = Path(root)
        for concept in [conc["target"], *conc["negatives"]]:
            sub = root / concept
            if not sub.is_dir():
                log.warning("no image-concept directory for %r; falling back to text", concept)
                continue
            size = (backend.image_resolution, backend.image_resolution)
            files = sorted(p for p in sub.iterdir() if p.is_file())
            imgs = [load_image(p, size) for p in files]
            if imgs:
                batches[concept] = np.stack(imgs)
    n_src = conc["source_from_pood_samples"]
    if n_src > 0:
        labels = pood.labels
        res = (backend.image_resolution, backend.image_resolution)
        for idx, name in enumerate(pood.label_names):
            take = np.flatnonzero(labels == idx)[:n_src]
            if take.size:
                batch = np.stack([pood.get(int(i))[0] for i in take])
                batches[name] = resize_bilinear(batch, res)
    return batches


def _cmd_craft(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.seed is not None:
        cfg.doc["seed"] = args.seed
    craft_cfg = cfg.craft_config(overrides)

    conc = cfg.doc["concepts"]
    if not conc["target"]:
        raise ConfigError("concepts.target is required for crafting")
    if not conc["negatives"]:
        raise ConfigError("concepts.negatives must list at least one concept")
    if not cfg.doc["pood"]["root"]:
        raise ConfigError("pood.root is required for crafting")

    backend = create_backend(cfg.doc["backend"]["name"], **cfg.doc["backend"]["options"])
    _, h, w = craft_cfg.resolution
    pood = ingest_pood(cfg.doc["pood"]["root"], image_size=(h, w),
                       exclude_labels=cfg.doc["pood"]["exclude_labels"])
    concept_set = ConceptSet(target=conc["target"], negatives=list(conc["negatives"]),
                             source_vocabulary=pood.label_names)
    if craft_cfg.resample_templates:
        concepts = concept_set
    else:
        concepts = build_concept_embeddings(
            concept_set, backend, templates=conc["templates"],
            image_concepts=_concept_image_batches(cfg, backend, pood))

    log.info("crafting %d steps against backend %s", craft_cfg.steps, backend.name)
    result = craft(pood, concepts, backend, craft_cfg,
                   extra_meta={"config_digest": cfg.digest()})

    out = _out_path(args, cfg, "perturbation.uip")
    pert_io.write_perturbation(out, result.perturbation)
    trace_path = Path(str(out) + ".trace.csv")
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows(result.loss_trace)
    print(f"perturbation written to {out} (final loss {result.loss_trace[-1][1]:.4f}, "
          f"trace at {trace_path})")
    return 0


def _eval_dataset(cfg, pert):
    data_root = cfg.doc["eval"]["data_root"]
    if not data_root:
        raise ConfigError("eval.data_root is required")
    _, h, w = pert.data.shape
    return ingest_pood(data_root, image_size=(h, w))


def _cmd_eval(args):
    cfg = load_config(args.config)
    pert = pert_io.read_perturbation(args.perturbation)
    target_class = args.target_class if args.target_class is not None \
        else cfg.doc["eval"]["target_class"]
    if target_class is None:
        raise ConfigError("eval.target_class (or --target-class) is required")
    ks = [args.topk] if args.topk is not None else list(cfg.doc["eval"]["topk"])

    dataset = _eval_dataset(cfg, pert)
    reports = []
    for victim in _load_victims(cfg, args.victim):
        report = evaluate(victim, dataset, pert, target_class, topk=ks,
                          extra={"perturbation_meta": pert.meta,
                                 "config_digest": cfg.digest()})
        out = _out_path(args, cfg, f"eval_{victim.name}.json")
        Path(out).write_text(report.to_json() + "\n", encoding="utf-8")
        reports.append(report)
    print(format_report_table(reports))
    return 0


def _cmd_sfa(args):
    cfg = load_config(args.config)
    sfa_cfg = cfg.doc["sfa"]
    epsilon = args.epsilon if args.epsilon is not None else sfa_cfg["epsilon"]
    init = pert_io.read_perturbation(args.perturbation) if args.perturbation else None
    victims = _load_victims(cfg, args.victim)
    victim = victims[0]
    target_class = args.target_class if args.target_class is not None \
        else cfg.doc["eval"]["target_class"]
    if target_class is None:
        raise ConfigError("eval.target_class (or --target-class) is required")

    if init is not None:
        shape = tuple(init.data.shape)
    else:
        shape = tuple(cfg.doc["craft"]["resolution"])
    dataset = ingest_pood(cfg.doc["eval"]["data_root"], image_size=shape[1:]) \
        if cfg.doc["eval"]["data_root"] else None
    if dataset is None:
        raise ConfigError("eval.data_root is required for sfa")

    labels = dataset.labels
    candidates = np.flatnonzero(labels != target_class)[:sfa_cfg["samples"]]
    if candidates.size == 0:
        raise EmptyEvalError("no non-target samples available for sfa")

    seed = cfg.doc["seed"] if args.seed is None else args.seed
    oracle = victim_oracle(victim)
    rows = []
    arms = [("uap", init)] if init is not None else []
    arms.append(("random", None))
    for i in candidates:
        img, label = dataset.get(int(i))
        for arm_name, arm_init in arms:
            rng = np.random.default_rng((seed, int(i)))  # paired across arms
            result = sign_flip_attack(
                oracle, img, arm_init, target_class, epsilon,
                QueryBudget(max_queries=sfa_cfg["max_queries"]), rng,
                source_label=label, flip_fraction=sfa_cfg["flip_fraction"],
                patience=sfa_cfg["patience"])
            rows.append({"sample": int(i), "label": int(label), "init": arm_name,
                         "queries": result.queries, "success": int(result.success)})

    out = _out_path(args, cfg, "sfa_queries.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["sample", "label", "init", "queries", "success"])
        writer.writeheader()
        writer.writerows(rows)
    for arm_name, _ in arms:
        qs = [r["queries"] for r in rows if r["init"] == arm_name]
        wins = [r["success"] for r in rows if r["init"] == arm_name]
        print(f"{arm_name}: median queries {np.median(qs):.0f}, "
              f"success {np.mean(wins):.2%} over {len(qs)} samples")
    print(f"per-sample counts written to {out}")
    return 0


def _cmd_probe(args):
    cfg = load_config(args.config)
    backend = create_backend(cfg.doc["backend"]["name"], **cfg.doc["backend"]["options"])
    suite = default_probe_suite()
    probe_cfg = cfg.doc["probe"]

    if not args.clean:
        raise ConfigError("--clean directory is required")
    limit = probe_cfg["max_images"]
    clean_ds = ingest_pood(args.clean)
    clean = [clean_ds.get(i)[0] for i in range(len(clean_ds))][:limit]

    if args.perturbed:
        pert_ds = ingest_pood(args.perturbed)
        perturbed = [pert_ds.get(i)[0] for i in range(len(pert_ds))][:limit]
    elif args.perturbation:
        pert = pert_io.read_perturbation(args.perturbation)
        _, h, w = pert.data.shape
        clean_sized = [resize_bilinear(img, (h, w)) for img in clean]
        perturbed = [np.clip(img + pert.data, 0.0, 1.0) for img in clean_sized]
    else:
        raise ConfigError("either --perturbed or --perturbation is required")

    seed = cfg.doc["seed"] if args.seed is None else args.seed
    report = score_distributions(clean, perturbed, backend, suite,
                                 samples_per_transform=probe_cfg["samples_per_transform"],
                                 rng=np.random.default_rng(seed), bins=probe_cfg["bins"])
    doc = {
        "overlap": report.overlap,
        "per_transform_means": report.per_transform_means,
        "clean_scores": report.clean_scores.tolist(),
        "perturbed_scores": report.perturbed_scores.tolist(),
    }
    out = _out_path(args, cfg, "probe_scores.json")
    Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"overlap statistic: {report.overlap:.4f} (scores at {out})")

    if args.plot:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError as exc:
            raise UapkitError("--plot requires matplotlib (pip install uapkit[plot])") from exc
        fig, ax = plt.subplots(figsize=(6, 4))
        bins = np.linspace(-1, 1, probe_cfg["bins"] + 1)
        ax.hist(report.clean_scores, bins=bins, alpha=0.6, label="clean")
        ax.hist(report.perturbed_scores, bins=bins, alpha=0.6, label="perturbed")
        ax.set_xlabel("robustness score")
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"histogram written to {args.plot}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="uapkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p_craft = sub.add_parser("craft", help="optimize a universal perturbation")
    common(p_craft)
    p_craft.add_argument("--steps", type=int, default=None)
    p_craft.add_argument("--epsilon", type=float, default=None)
    p_craft.set_defaults(fn=_cmd_craft)

    p_eval = sub.add_parser("eval", help="evaluate a perturbation against victims")
    common(p_eval)
    p_eval.add_argument("--perturbation", required=True)
    p_eval.add_argument("--victim", default=None)
    p_eval.add_argument("--target-class", type=int, default=None)
    p_eval.add_argument("--topk", type=int, default=None)
    p_eval.set_defaults(fn=_cmd_eval)

    p_sfa = sub.add_parser("sfa", help="query attack with optional warm start")
    common(p_sfa)
    p_sfa.add_argument("--perturbation", default=None)
    p_sfa.add_argument("--victim", default=None)
    p_sfa.add_argument("--target-class", type=int, default=None)
    p_sfa.add_argument("--epsilon", type=float, default=None)
    p_sfa.set_defaults(fn=_cmd_sfa)

    p_probe = sub.add_parser("probe", help="embedding-robustness detection probe")
    common(p_probe)
    p_probe.add_argument("--clean", default=None)
    p_probe.add_argument("--perturbed", default=None)
    p_probe.add_argument("--perturbation", default=None)
    p_probe.add_argument("--plot", default=None)
    p_probe.set_defaults(fn=_cmd_probe)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UapkitError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
