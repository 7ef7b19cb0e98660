"""Command line entry points: train, evaluate, certify, experiment, prepare-data."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import attack, certify, datasets, harness
from .data import load_csv
from .model import load_forest, save_forest
from .training import TrainConfig, fpf_train, rf_train, rsm_train


def _load_dataset(args):
    if args.dataset.startswith("builtin:"):
        return datasets.builtin_dataset(args.dataset.split(":", 1)[1])
    return load_csv(args.dataset, args.label_column, args.positive_label)


def _add_dataset_args(p):
    p.add_argument("--dataset", required=True,
                   help="CSV path, or builtin:<name> (e.g. builtin:breast_cancer)")
    p.add_argument("--label-column", default="label")
    p.add_argument("--positive-label", default="1")


def cmd_train(args) -> int:
    data = _load_dataset(args)
    if args.algo == "fpf":
        model = fpf_train(data, TrainConfig(
            b=args.b, rounds=args.rounds, max_leaves=args.max_leaves, seed=args.seed))
    elif args.algo == "rf":
        model = rf_train(data, args.trees, seed=args.seed)
    else:
        model = rsm_train(data, args.trees, feature_fraction=args.feature_fraction,
                          max_leaves=args.max_leaves, seed=args.seed)
    save_forest(model, args.model_out)
    print(f"saved {args.algo} forest ({len(model)} trees) to {args.model_out}")
    return 0


def cmd_evaluate(args) -> int:
    data = _load_dataset(args)
    model = load_forest(args.model)
    report = certify.cascade_evaluate(model, data, args.attack_budget, mode="bf")
    payload = {
        "accuracy": report.accuracy,
        "accuracy_under_attack": report.value,
        "per_instance": [
            _instance_obj(c) for c in report.per_instance
        ],
    }
    out = Path(args.report_out)
    out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    with out.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "k", "accuracy", "accuracy_under_attack", "attacked"])
        attacked = sum(1 for c in report.per_instance if c.status == certify.CertStatus.ATTACKED_BF)
        writer.writerow([report.n_instances, args.attack_budget,
                         f"{report.accuracy:.3f}", f"{report.value:.3f}", attacked])
    print(f"accuracy {report.accuracy:.3f}, under attack (k={args.attack_budget}) "
          f"{report.value:.3f}; report at {out}")
    return 0


def _instance_obj(cert):
    obj = {"index": cert.index, "status": cert.status.value}
    if cert.flb_cover is not None:
        obj["flb_cover"] = cert.flb_cover
    if cert.elb_cover is not None:
        obj["elb_cover"] = cert.elb_cover
    if cert.witness is not None:
        obj["witness"] = {str(f): v for f, v in cert.witness.items()}
    return obj


def cmd_certify(args) -> int:
    data = _load_dataset(args)
    model = load_forest(args.model)
    report = certify.cascade_evaluate(model, data, args.attack_budget, mode=args.mode)
    payload = {
        "mode": report.mode,
        "k": report.k,
        "accuracy": report.accuracy,
        "lower_bound_or_exact": report.value,
        "stage_counts": report.stage_counts,
        "per_instance": [_instance_obj(c) for c in report.per_instance],
    }
    Path(args.report_out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(f"mode={report.mode} k={report.k}: accuracy {report.accuracy:.3f}, "
          f"value {report.value:.3f}, stages {report.stage_counts}")
    return 0


def cmd_experiment(args) -> int:
    spec = harness.ExperimentSpec.from_json(args.spec)
    table = harness.run_experiment(spec, args.out_dir)
    print(harness.render_report(table, "markdown"))
    return 0


def cmd_prepare(args) -> int:
    prep = datasets.PREPARERS[args.dataset]
    data = prep(args.raw, args.out)
    print(f"wrote {data.n} x {data.d} dataset to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a forest and save it as JSON")
    _add_dataset_args(p)
    p.add_argument("--algo", choices=["fpf", "rf", "rsm"], required=True)
    p.add_argument("--b", type=int, default=1, help="FPF defense strength")
    p.add_argument("--rounds", type=int, default=10, help="FPF training rounds")
    p.add_argument("--max-leaves", type=int, default=8)
    p.add_argument("--trees", type=int, default=100, help="RF/RSM ensemble size")
    p.add_argument("--feature-fraction", type=float, default=0.2, help="RSM sampling")
    p.add_argument("--seed", type=int, default=harness.DEFAULT_SEED)
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="exact accuracy under attack by brute force")
    _add_dataset_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--attack-budget", type=int, required=True)
    p.add_argument("--mode", choices=["bruteforce"], default="bruteforce")
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("certify", help="robustness certification / cascade evaluation")
    _add_dataset_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--attack-budget", type=int, required=True)
    p.add_argument("--mode", choices=list(certify.MODES), default="cascade")
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("experiment", help="run a model grid from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("prepare-data", help="binarize raw UCI files into our CSV format")
    p.add_argument("--dataset", choices=sorted(datasets.PREPARERS), required=True)
    p.add_argument("--raw", required=True, help="path to the raw UCI data file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
