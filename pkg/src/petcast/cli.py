"""Command-line interface.

Subcommands: prepare (build artifacts from raw records), train (fit one
model variant), eval (score a checkpoint or reference predictor on the
held-out split), stats (significance and representation reports), and
predict (one-off prediction for raw text).

Exit codes: 0 on success, 1 for validation and input-format problems,
2 for numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import eval as ev
from . import pipeline
from .errors import NumericError, PetcastError, ValidationError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="petcast",
        description="Predict end-of-life petition signature counts from text.",
    )
    parser.add_argument("--config", required=True, help="run config JSON path")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", help="split the corpus and build artifacts")

    p_train = sub.add_parser("train", help="train one model variant")
    p_train.add_argument(
        "--variant", required=True, choices=sorted(pipeline.VARIANTS)
    )
    p_train.add_argument(
        "--gamma",
        type=float,
        default=None,
        help="auxiliary loss weight; defaults to a dev-set grid search",
    )

    p_eval = sub.add_parser("eval", help="score a model on the held-out split")
    p_eval.add_argument(
        "--model",
        required=True,
        help=f"checkpoint path or one of {', '.join(pipeline.BASELINE_NAMES)}",
    )
    p_eval.add_argument(
        "--raw-space",
        action="store_true",
        help="report MAE/MAPE on raw counts instead of log counts",
    )

    p_stats = sub.add_parser("stats", help="feature significance and dependency reports")
    p_stats.add_argument("--model", required=True, help="checkpoint path")

    p_pred = sub.add_parser("predict", help="predict for one text")
    p_pred.add_argument("--model", required=True, help="checkpoint path")
    p_pred.add_argument("--text", required=True, help="petition text")

    return parser


def _load_config(args) -> pipeline.RunConfig:
    config = pipeline.RunConfig.from_json(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def cmd_prepare(config, store, args) -> None:
    manifest = pipeline.prepare_artifacts(config, store)
    counts = manifest["counts"]
    print(
        f"prepared {store.root}: train={counts['train']} dev={counts['dev']} "
        f"test={counts['test']} dropped={counts['dropped']}"
    )


def cmd_train(config, store, args) -> None:
    name, history = pipeline.train_variant(config, store, args.variant, gamma=args.gamma)
    for row in history:
        print(
            f"epoch {row['epoch']:3d}  loss {row['train_loss']:.4f}  "
            f"dev_mae {row['dev_mae']:.4f}"
        )
    print(f"saved {store.path(name)}")


def cmd_eval(config, store, args) -> None:
    raw = True if args.raw_space else None
    report = pipeline.evaluate_target(config, store, args.model, raw_space=raw)
    rows = [
        ("MAE", f"{report.mae:.4f}"),
        ("MAPE", f"{report.mape:.2f}"),
        ("macro-F", f"{report.macro_f:.4f}"),
    ]
    for edge, f1 in zip(
        [f"<{report.bin_edges[0]:.0f}"]
        + [f">={e:.0f}" for e in report.bin_edges],
        report.per_bin_f,
    ):
        rows.append((f"F[{edge}]", f"{f1:.4f}"))
    print(ev.format_table(("metric", "value"), rows))
    if report.mape_excluded:
        print(f"note: MAPE excluded {report.mape_excluded} zero-target rows", file=sys.stderr)


def cmd_stats(config, store, args) -> None:
    pipeline.stats_report(config, store, args.model)
    print(store.path("stats.txt").read_text(encoding="utf-8"), end="")


def cmd_predict(config, store, args) -> None:
    out = pipeline.predict_one(config, store, args.model, args.text)
    print(json.dumps(out, sort_keys=True, indent=2))


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        store = pipeline.ArtifactStore(config.out_dir)
        COMMANDS[args.command](config, store, args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, PetcastError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
