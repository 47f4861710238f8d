"""Command-line frontend: build-dataset, train, predict, validate.

Single binary, subcommand style. All defaults reproduce the reference
configuration, so a bare ``train`` runs 600 iterations at learning rate
0.6, depth 12, L2 leaf regularization 1.0 with a 55/20/25 split.

Exit codes: 0 success, 2 input or validation error, 3 runtime or
degenerate-data error. Output files are written atomically; a failed run
never leaves partial files behind.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Optional, Sequence

from . import builder, evaluation, gbdt
from .core import (
    DegenerateDatasetError,
    Hyperparams,
    InputFileError,
    atomic_text_writer,
    validate_insitu_file,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

PREDICTIONS_HEADER = ["record_id", "predicted_turbidity_ntu"]

SEED_ENV_VAR = "AQUABOOST_SEED"


def _resolve_seed(flag_value: Optional[int]) -> int:
    """Flag wins; otherwise the AQUABOOST_SEED environment variable; otherwise 0."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR}={env!r} is not an integer") from None


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"--split needs three comma-separated fractions, got {text!r}")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"--split fractions must be numbers, got {text!r}") from None
    if min(a, b, c) <= 0.0:
        raise ValueError("every split is mandatory: all three fractions must be > 0")
    return a, b, c


def cmd_build_dataset(args: argparse.Namespace) -> int:
    policy = builder.MatchPolicy(
        window_days=args.window_days,
        min_valid_fraction=args.min_valid_fraction,
    )
    records = validate_insitu_file(args.insitu)
    samples = builder.read_band_samples(args.bands)
    if args.patches is not None:
        for patch in builder.read_patches(args.patches):
            samples.append(builder.aggregate_patch(patch))
    ds, unmatched = builder.build_dataset(records, samples, policy)
    builder.write_dataset(args.out, ds)
    builder.write_unmatched(args.unmatched_out, unmatched)
    print(f"dataset rows: {len(ds)}")
    print(f"unmatched records: {len(unmatched)}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    fractions = _parse_split(args.split)
    hp = Hyperparams(
        iterations=args.iterations,
        learning_rate=args.learning_rate,
        depth=args.depth,
        l2_leaf_reg=args.l2_leaf_reg,
        seed=seed,
    )
    spec = builder.SplitSpec(
        train_fraction=fractions[0],
        test_fraction=fractions[1],
        val_fraction=fractions[2],
        seed=seed,
    )
    ds = builder.read_dataset(args.dataset)
    splits = builder.split_dataset(ds, spec)
    model = gbdt.fit(splits[0], hp)
    report = evaluation.evaluate(model, splits)

    gbdt.save_model(model, args.model_out)
    base = args.report_out
    if base.endswith(".json"):
        base = base[: -len(".json")]
    series_paths = evaluation.emit_series(report, f"{base}_series")
    evaluation.write_report(report, args.report_out, series_paths)

    print(f"dataset mean: {report.dataset_mean_ntu:.6f} NTU")
    for name in evaluation.SPLIT_NAMES:
        m = report.split_by_name(name).metrics
        print(f"{name}: n={m.n} rmse={m.rmse:.6f} mae={m.mae:.6f}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    model = gbdt.load_model(args.model)
    rows = builder.read_features(args.features)
    with atomic_text_writer(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTIONS_HEADER)
        for rid, features in rows:
            writer.writerow([rid, repr(gbdt.predict(model, features))])
    print(f"predictions: {len(rows)}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    checked = 0
    if args.insitu is not None:
        records = validate_insitu_file(args.insitu)
        print(f"OK: {args.insitu} ({len(records)} records)")
        checked += 1
    if args.bands is not None:
        samples = builder.read_band_samples(args.bands)
        print(f"OK: {args.bands} ({len(samples)} samples)")
        checked += 1
    if args.patches is not None:
        patches = builder.read_patches(args.patches)
        print(f"OK: {args.patches} ({len(patches)} patches)")
        checked += 1
    if args.dataset is not None:
        ds = builder.read_dataset(args.dataset)
        print(f"OK: {args.dataset} ({len(ds)} rows)")
        checked += 1
    if checked == 0:
        raise ValueError("nothing to validate: pass at least one of --insitu/--bands/--patches/--dataset")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquaboost",
        description="Turbidity regression from satellite band averages.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="match in-situ records to scenes and write the dataset CSV")
    p.add_argument("--insitu", required=True, help="in-situ turbidity CSV")
    p.add_argument("--bands", required=True, help="band-samples CSV (per record/scene means)")
    p.add_argument("--patches", help="optional long-form patch CSV, aggregated into extra samples")
    p.add_argument("--window-days", type=int, default=3, help="inclusive matching window (civil days)")
    p.add_argument("--min-valid-fraction", type=float, default=0.5, help="minimum usable-pixel share")
    p.add_argument("--out", required=True, help="dataset CSV to write")
    p.add_argument("--unmatched-out", required=True, help="unmatched-records sidecar CSV to write")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="split the dataset, train, and write model + report + series")
    p.add_argument("--dataset", required=True, help="dataset CSV from build-dataset")
    p.add_argument("--iterations", type=int, default=600)
    p.add_argument("--learning-rate", type=float, default=0.6)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--l2-leaf-reg", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None,
                   help=f"shuffle seed (default: ${SEED_ENV_VAR} or 0)")
    p.add_argument("--split", default="0.55,0.20,0.25", help="train,test,val fractions")
    p.add_argument("--model-out", required=True, help="model JSON to write")
    p.add_argument("--report-out", required=True, help="report JSON to write (series CSVs land beside it)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a features CSV")
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--features", required=True, help="CSV with record_id and the 12 band columns")
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate", help="schema-check input files without producing outputs")
    p.add_argument("--insitu", help="in-situ turbidity CSV")
    p.add_argument("--bands", help="band-samples CSV")
    p.add_argument("--patches", help="long-form patch CSV")
    p.add_argument("--dataset", help="dataset CSV")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (gbdt.ModelFormatError, builder.EmptyPatchError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
