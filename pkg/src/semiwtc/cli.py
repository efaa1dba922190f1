"""Command-line experiment driver.

Subcommands: preprocess, train, evaluate, experiment <mode>, aar. Every
report embeds the fully-resolved config and seeds so any run can be
reproduced bit-for-bit with --threads 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import experiments
from .config import EXPERIMENT_MODES, ExperimentConfig, load_config
from .model import RBMLPModel


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _load(args) -> ExperimentConfig:
    if not os.path.exists(args.config):
        raise SystemExit(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def _write_report(out_dir: str, name: str, cfg: ExperimentConfig, payload: dict) -> None:
    report = {"config": cfg.flat(), **payload}
    with open(os.path.join(out_dir, f"{name}.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, f"{name}.txt"), "w", encoding="utf-8") as fh:
        for k, v in sorted(_flatten(report).items()):
            fh.write(f"{k}={v}\n")


def _flatten(obj, prefix="") -> dict:
    flat = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            flat.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            flat.update(_flatten(v, f"{prefix}{i}."))
    else:
        flat[prefix.rstrip(".")] = obj
    return flat


def cmd_preprocess(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    split = experiments.prepare_split(cfg.data, cfg.seeds[0])
    split.save_manifests(out)
    split.encoder.save(os.path.join(out, "encoder.state"))
    sizes = {part: len(ids) for part, ids in split.row_ids.items()}
    _write_report(out, "preprocess", cfg, {"sizes": sizes, "seed": cfg.seeds[0]})
    print(f"partitions: {sizes}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    seed = cfg.seeds[0]
    report, history, model, split = experiments.run_standard(cfg, seed)
    model.save(os.path.join(out, f"model_seed{seed}.ckpt"))
    split.encoder.save(os.path.join(out, "encoder.state"))
    split.save_manifests(out)
    history.write_log(os.path.join(out, f"train_seed{seed}.log"))
    _write_report(out, f"train_seed{seed}", cfg, {"test": report})
    print(f"seed {seed}: acc={report['accuracy']} f1={report['macro_f1']}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    seed = cfg.seeds[0]
    model = RBMLPModel.load(args.checkpoint)
    split = experiments.prepare_split(cfg.data, seed)
    report = experiments.test_report(model, split)
    _write_report(out, f"evaluate_seed{seed}", cfg, {"test": report})
    print(f"acc={report['accuracy']} f1={report['macro_f1']}")
    return 0


def _seed_run(packed):
    mode, cfg, seed = packed
    if mode == "standard":
        return experiments.run_standard(cfg, seed)[0]
    if mode == "mislabel":
        return experiments.run_mislabel(cfg, seed)[0]
    if mode == "unseen":
        return experiments.run_unseen(cfg, seed)[0]
    if mode == "aar":
        return experiments.run_aar(cfg, seed)[0]
    raise ValueError(mode)


def _per_seed(mode: str, cfg: ExperimentConfig, threads: int) -> list[dict]:
    jobs = [(mode, cfg, s) for s in cfg.seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_seed_run, jobs))
    return [_seed_run(j) for j in jobs]


def cmd_experiment(args) -> int:
    cfg = _load(args)
    cfg.mode = args.mode
    out = _outdir(args)
    if args.mode == "ratio_sweep":
        payload = experiments.run_ratio_sweep(cfg)
        for row in payload["rows"]:
            print(f"ratio={row['label_ratio']}: acc={row['accuracy']} "
                  f"f1={row['macro_f1']}")
    elif args.mode == "ablation":
        payload = experiments.run_ablation(cfg)
        for name, cell in payload["cells"].items():
            print(f"{name}: acc={cell['accuracy']} f1={cell['macro_f1']}")
    else:
        reports = _per_seed(args.mode, cfg, args.threads)
        payload = {"runs": reports}
        if args.mode != "aar":
            payload["mean"] = experiments.mean_metrics(reports)
            print(f"mean: {payload['mean']}")
    _write_report(out, f"experiment_{args.mode}", cfg, payload)
    return 0


def cmd_aar(args) -> int:
    args.mode = "aar"
    return cmd_experiment(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiwtc")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override config seeds with a single seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="parallel seed runs (>1 may not be bit-exact)")

    p = sub.add_parser("preprocess", help="build and persist a dataset split")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one model and report test metrics")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run an experiment protocol")
    p.add_argument("mode", choices=EXPERIMENT_MODES)
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("aar", help="shorthand for `experiment aar`")
    common(p)
    p.set_defaults(func=cmd_aar)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
