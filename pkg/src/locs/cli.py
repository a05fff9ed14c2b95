"""Command-line entry point: ``locs <subcommand> ...``.

Every subcommand accepts ``--config FILE`` pointing at a JSON object with
optional sections ``synthetic``, ``charged``, ``model``, ``train``, ``eval``
and a top-level ``normalization`` string. Command-line flags override the
file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .datasets import read_dataset, write_dataset
from .harness import ABLATIONS, ablate, evaluate, evaluate_baseline, train
from .model import ModelConfig
from .simulate import ChargedConfig, SyntheticConfig, gen_charged, gen_synthetic, interactive_subset
from .training import TrainConfig


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _overrides(args, names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def _sim_config(cls, section: dict, args):
    cfg = cls(**section)
    return replace(cfg, **_overrides(args, [f.name for f in fields(cls)]))


def _model_train(cfg: dict, args) -> tuple[ModelConfig, TrainConfig, str]:
    model = ModelConfig.from_dict({**cfg.get("model", {}),
                                   **_overrides(args, [f.name for f in fields(ModelConfig)])})
    train_cfg = TrainConfig.from_dict({**cfg.get("train", {}),
                                       **_overrides(args, ["epochs", "lr", "batch_size", "seed"])})
    norm = args.normalization or cfg.get("normalization", "speed")
    return model, train_cfg, norm


def _eval_lengths(cfg: dict, args) -> tuple[int, int]:
    ev = cfg.get("eval", {})
    observed = args.observed_len if args.observed_len is not None else ev.get("observed_len")
    horizon = args.horizon if args.horizon is not None else ev.get("horizon")
    if observed is None or horizon is None:
        raise ValueError("observed_len and horizon are required (flags or eval config section)")
    return int(observed), int(horizon)


def _read_indices(path):
    if path is None:
        return None
    data = json.loads(Path(path).read_text())
    return data["indices"] if isinstance(data, dict) else data


# ---------------------------------------------------------------------- commands

def cmd_gen_synth(args, cfg):
    sim = _sim_config(SyntheticConfig, cfg.get("synthetic", {}), args)
    bundle = gen_synthetic(sim, args.num_scenes, args.seed, args.split)
    write_dataset(bundle, args.out)
    print(f"wrote {bundle.num_scenes} synthetic scenes to {args.out}")


def cmd_gen_charged(args, cfg):
    sim = _sim_config(ChargedConfig, cfg.get("charged", {}), args)
    bundle = gen_charged(sim, args.num_scenes, args.seed, args.split)
    write_dataset(bundle, args.out)
    print(f"wrote {bundle.num_scenes} charged scenes to {args.out}")


def cmd_train(args, cfg):
    model, train_cfg, norm = _model_train(cfg, args)
    path = train(args.data, model, train_cfg, args.out, norm)
    print(f"wrote checkpoint {path}")


def _emit(report, args):
    if args.csv:
        report.write_csv(args.csv)
    if args.json:
        report.write_json(args.json)
    s = report.summary()
    print(json.dumps({"final": s["final"], "f1": s["f1"], "horizon": s["horizon"]}))


def cmd_eval(args, cfg):
    observed, horizon = _eval_lengths(cfg, args)
    indices = _read_indices(args.indices)
    if args.baseline:
        report = evaluate_baseline(args.data, observed, horizon, indices)
    else:
        report = evaluate(args.checkpoint, args.data, observed, horizon, indices, args.seed or 0)
    _emit(report, args)


def cmd_subset(args, cfg):
    observed, horizon = _eval_lengths(cfg, args)
    bundle = read_dataset(args.data)
    idx = interactive_subset(bundle, observed, horizon, args.threshold).tolist()
    payload = {"indices": idx, "threshold": args.threshold, "observed_len": observed, "horizon": horizon}
    if args.out:
        Path(args.out).write_text(json.dumps(payload))
    if args.write_dataset:
        write_dataset(bundle.subset(idx), args.write_dataset)
    print(f"{len(idx)} of {bundle.num_scenes} scenes selected")


def cmd_check_props(args, cfg):
    from .props import SUITES
    names = args.suite or list(SUITES)
    failed = 0
    for name in names:
        for res in SUITES[name]():
            print(res.line())
            failed += not res.passed
    print(f"{failed} failure(s)")
    return 1 if failed else 0


def cmd_ablate(args, cfg):
    model, train_cfg, _ = _model_train(cfg, args)
    observed, horizon = _eval_lengths(cfg, args)
    reports = ablate(args.train_data, args.test_data, model, train_cfg, observed, horizon,
                     args.variants, args.out_dir)
    for name, rep in reports.items():
        print(f"{name}: final mse {rep.mse[-1]:.6g} f1 {rep.f1}")


# ---------------------------------------------------------------------- parser

def _add_sim_flags(p, cls):
    for f in fields(cls):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=f.name, action="store_true", default=None)
        else:
            p.add_argument(flag, dest=f.name, type=int if f.type in ("int", int) else float, default=None)


def _add_model_flags(p):
    p.add_argument("--dim", type=int)
    p.add_argument("--decoder", choices=["markovian", "recurrent"])
    p.add_argument("--frame", choices=["roto_translated", "translated_only", "global"])
    p.add_argument("--filters", choices=["anisotropic", "isotropic"])
    p.add_argument("--hidden", type=int)
    p.add_argument("--no-edge-prior", dest="no_edge_prior", type=float)
    p.add_argument("--normalization", choices=["none", "speed", "minmax"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)


def _add_eval_flags(p):
    p.add_argument("--observed-len", dest="observed_len", type=int)
    p.add_argument("--horizon", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locs", description="Locally canonicalised trajectory forecasting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON config file")
        p.set_defaults(func=fn)
        return p

    for name, fn, cls, help in [("gen-synth", cmd_gen_synth, SyntheticConfig, "generate synthetic scenes"),
                                ("gen-charged", cmd_gen_charged, ChargedConfig, "generate charged-particle scenes")]:
        p = add(name, fn, help)
        p.add_argument("--out", required=True)
        p.add_argument("--num-scenes", dest="num_scenes", type=int, default=100)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--split", default="train")
        _add_sim_flags(p, cls)

    p = add("train", cmd_train, "train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)

    p = add("eval", cmd_eval, "evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", action="store_true", help="evaluate the constant-velocity baseline")
    p.add_argument("--indices", help="JSON file with scene indices (e.g. from `subset`)")
    p.add_argument("--seed", type=int)
    p.add_argument("--csv")
    p.add_argument("--json")
    _add_eval_flags(p)

    p = add("subset", cmd_subset, "select scenes where constant velocity performs poorly")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--out", help="write selected indices as JSON")
    p.add_argument("--write-dataset", dest="write_dataset", help="write the subset as a dataset directory")
    _add_eval_flags(p)

    p = add("check-props", cmd_check_props, "run the property suites")
    p.add_argument("--suite", action="append", choices=["rotation", "invariance", "gradient", "physics", "normalization"])

    p = add("ablate", cmd_ablate, "train and evaluate the ablation grid")
    p.add_argument("--train-data", dest="train_data", required=True)
    p.add_argument("--test-data", dest="test_data", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--variants", nargs="+", choices=sorted(ABLATIONS))
    _add_model_flags(p)
    _add_eval_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "eval" and not args.baseline and not args.checkpoint:
        print("error: eval needs --checkpoint or --baseline", file=sys.stderr)
        return 2
    try:
        cfg = _load_config(args.config)
        rc = args.func(args, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
