"""Command-line entry points.

Every subcommand takes --config <path> and --seed (which overrides the
config's seed).  Exit codes: 0 success, 1 runtime failure, 2 invalid
configuration or usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..allocator import (
    AllocProblem,
    is_pairwise_stable,
    m3_mama,
    matching_to_json,
)
from ..codebook import build_codebook
from ..csi_map.dataset import dataset_from_jsonl, dataset_to_jsonl
from ..csi_map.lqtn import load_checkpoint, save_checkpoint
from ..csi_map.predictors import (
    IndependentPerRbPredictor,
    LqtnPredictor,
    evaluate_mae,
)
from ..link import default_esm_config
from ..rate_model import load_mcs_table
from ..scenario import generate_scenario, scenario_to_json
from .config import ConfigError, load_experiment_config
from .experiments import (
    build_predictor,
    generate_dataset,
    run_mobility_experiment,
    run_static_experiment,
    write_mobility_report,
    write_static_aggregates,
    write_static_report,
)


def _common_setup(args):
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out) if args.out else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _world(cfg):
    s = generate_scenario(cfg.scenario, cfg.scenario_seed)
    cb = build_codebook(cfg.codebook)
    esm = default_esm_config(load_mcs_table().as_tuples())
    return s, cb, esm


def cmd_scenario_gen(args) -> int:
    cfg, out = _common_setup(args)
    s, _, _ = _world(cfg)
    (out / "scenario.json").write_text(scenario_to_json(s))
    print(f"wrote {out / 'scenario.json'}")
    return 0


def cmd_dataset_gen(args) -> int:
    cfg, out = _common_setup(args)
    s, cb, esm = _world(cfg)
    ds = generate_dataset(s, cfg.dataset.n_train, cfg.dataset.n_test, cfg.dataset.seed, cb, esm)
    (out / "dataset.jsonl").write_text(dataset_to_jsonl(ds))
    manifest = {
        "records": len(ds.records),
        "rb_count": ds.rb_count,
        "n_train": cfg.dataset.n_train,
        "n_test": cfg.dataset.n_test,
        "seed": cfg.dataset.seed,
    }
    (out / "dataset_manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {out / 'dataset.jsonl'} ({len(ds.records)} records)")
    return 0


def _load_or_make_dataset(cfg, out, s, cb, esm):
    path = out / "dataset.jsonl"
    if path.exists():
        return dataset_from_jsonl(path.read_text())
    ds = generate_dataset(s, cfg.dataset.n_train, cfg.dataset.n_test, cfg.dataset.seed, cb, esm)
    path.write_text(dataset_to_jsonl(ds))
    return ds


def cmd_train(args) -> int:
    cfg, out = _common_setup(args)
    if cfg.predictor.kind not in ("lqtn", "independent"):
        print("train: predictor kind must be lqtn or independent", file=sys.stderr)
        return 2
    s, cb, esm = _world(cfg)
    ds = _load_or_make_dataset(cfg, out, s, cb, esm)
    predictor = build_predictor(cfg, s, cb, esm, dataset=ds)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    from ..csi_map.lqtn import model_memory_mb

    summary = {"kind": cfg.predictor.kind, "models": []}
    if cfg.predictor.kind == "lqtn":
        for bs_id, model in predictor.models.items():
            save_checkpoint(model, ckpt_dir / f"lqtn_bs{bs_id}")
            summary["models"].append(
                {
                    "bs_id": bs_id,
                    "parameters": model.parameter_count(),
                    "memory_mb": model_memory_mb(model),
                }
            )
    else:
        for bs_id, models in predictor.models.items():
            for rb, model in enumerate(models):
                save_checkpoint(model, ckpt_dir / f"indep_bs{bs_id}_rb{rb}")
            summary["models"].append(
                {
                    "bs_id": bs_id,
                    "parameters": sum(m.parameter_count() for m in models),
                    "memory_mb": sum(model_memory_mb(m) for m in models),
                }
            )
    (out / "train_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote checkpoints to {ckpt_dir}")
    return 0


def _predictor_from_checkpoints(cfg, s, ds, out):
    """Reload models written by `train`; None when no checkpoints exist."""
    ckpt_dir = out / "checkpoints"
    if not ckpt_dir.is_dir():
        return None
    bs_positions = {bs.id: bs.position for bs in s.bs_list}
    if cfg.predictor.kind == "lqtn":
        models = {}
        for bs_id in ds.bs_ids:
            prefix = ckpt_dir / f"lqtn_bs{bs_id}"
            if not prefix.with_suffix(".json").exists():
                return None
            models[bs_id] = load_checkpoint(prefix)
        return LqtnPredictor(models, bs_positions)
    if cfg.predictor.kind == "independent":
        by_bs = {}
        for bs_id in ds.bs_ids:
            models = []
            for rb in range(ds.rb_count):
                prefix = ckpt_dir / f"indep_bs{bs_id}_rb{rb}"
                if not prefix.with_suffix(".json").exists():
                    return None
                models.append(load_checkpoint(prefix))
            by_bs[bs_id] = models
        return IndependentPerRbPredictor(by_bs, bs_positions)
    return None


def cmd_eval_csi(args) -> int:
    cfg, out = _common_setup(args)
    s, cb, esm = _world(cfg)
    ds = _load_or_make_dataset(cfg, out, s, cb, esm)
    predictor = _predictor_from_checkpoints(cfg, s, ds, out)
    if predictor is None:
        predictor = build_predictor(cfg, s, cb, esm, dataset=ds)
    test = ds.split_records("test")
    metrics = evaluate_mae(predictor, test)
    (out / "csi_eval.json").write_text(json.dumps(metrics, indent=2))
    lines = ["field,mae,normalized_mae,accuracy"]
    for f, m in metrics.items():
        lines.append(f"{f},{m['mae']!r},{m['normalized_mae']!r},{m['accuracy']!r}")
    (out / "csi_eval.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'csi_eval.csv'}")
    return 0


def cmd_alloc_run(args) -> int:
    cfg, out = _common_setup(args)
    if not args.rates:
        print("alloc run: --rates <csv> is required", file=sys.stderr)
        return 2
    rates = np.loadtxt(args.rates, delimiter=",", ndmin=2)
    problem = AllocProblem(rates=rates, quota=args.quota)
    result = m3_mama(problem)
    stable, witness = is_pairwise_stable(result.matching, problem)
    (out / "matching.json").write_text(matching_to_json(result.matching))
    summary = {
        "sum_rate": result.matching.sum_rate(problem),
        "sweeps": result.sweeps,
        "accepted_exchanges": len(result.trace),
        "pairwise_stable": stable,
        "witness": witness,
    }
    (out / "alloc_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {out / 'matching.json'}")
    return 0


def cmd_experiment_static(args) -> int:
    cfg, out = _common_setup(args)
    report = run_static_experiment(cfg)
    write_static_report(report, out)
    print(f"wrote static report to {out}")
    return 0


def cmd_experiment_mobility(args) -> int:
    cfg, out = _common_setup(args)
    report = run_mobility_experiment(cfg)
    write_mobility_report(report, out)
    print(f"wrote mobility report to {out}")
    return 0


def cmd_report(args) -> int:
    cfg, out = _common_setup(args)
    records_path = out / "records.json"
    if not records_path.exists():
        print(f"report: {records_path} not found", file=sys.stderr)
        return 1
    report = json.loads(records_path.read_text())
    if report.get("kind") == "static":
        write_static_aggregates(report, out)
    else:
        write_mobility_report(report, out)
    print(f"regenerated aggregates in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffmimo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override config output_dir")

    scenario = sub.add_parser("scenario", help="scenario tools").add_subparsers(
        dest="sub", required=True
    )
    p = scenario.add_parser("gen", help="generate and write scenario.json")
    add_common(p)
    p.set_defaults(func=cmd_scenario_gen)

    dataset = sub.add_parser("dataset", help="dataset tools").add_subparsers(
        dest="sub", required=True
    )
    p = dataset.add_parser("gen", help="generate labeled dataset.jsonl")
    add_common(p)
    p.set_defaults(func=cmd_dataset_gen)

    p = sub.add_parser("train", help="train the configured predictor, save checkpoints")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-csi", help="per-field normalized MAE on the test split")
    add_common(p)
    p.set_defaults(func=cmd_eval_csi)

    alloc = sub.add_parser("alloc", help="allocator tools").add_subparsers(
        dest="sub", required=True
    )
    p = alloc.add_parser("run", help="solve a rate-matrix CSV standalone")
    add_common(p)
    p.add_argument("--rates", help="W x M rate matrix CSV (no header)")
    p.add_argument("--quota", type=int, default=1)
    p.set_defaults(func=cmd_alloc_run)

    experiment = sub.add_parser("experiment", help="experiment suites").add_subparsers(
        dest="sub", required=True
    )
    p = experiment.add_parser("static", help="static capacity comparison")
    add_common(p)
    p.set_defaults(func=cmd_experiment_static)
    p = experiment.add_parser("mobility", help="mobility comparison with feedback delay")
    add_common(p)
    p.set_defaults(func=cmd_experiment_mobility)

    p = sub.add_parser("report", help="regenerate aggregate CSVs from records.json")
    add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
