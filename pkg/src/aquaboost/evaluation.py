"""Metrics, per-split evaluation reports, and plot-ready series emission.

The report is one JSON document plus three sidecar CSVs (one
expected-vs-predicted series per split) that external tooling can plot
directly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Dataset,
    DegenerateDatasetError,
    Hyperparams,
    Metrics,
    atomic_text_writer,
)
from .gbdt import GbdtModel, predict_batch

__all__ = [
    "SplitEvaluation",
    "EvaluationReport",
    "compute_metrics",
    "evaluate",
    "emit_series",
    "read_series",
    "write_report",
    "SERIES_HEADER",
    "SPLIT_NAMES",
]

SERIES_HEADER = ["index", "record_id", "expected_ntu", "predicted_ntu"]

# Canonical report order; the middle split is called "validation" in
# reports even though the splitter hands back (train, test, val).
SPLIT_NAMES = ("train", "validation", "test")


def compute_metrics(expected, predicted) -> Metrics:
    """Population MSE and MAE of one prediction set (RMSE derives from MSE)."""
    e = np.asarray(expected, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if e.ndim != 1 or e.shape != p.shape:
        raise ValueError(f"length mismatch: expected {e.shape} vs predicted {p.shape}")
    if e.size == 0:
        raise ValueError("empty vectors")
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(p))):
        raise ValueError("non-finite value in expected or predicted")
    err = e - p
    return Metrics(
        mse=float(np.mean(err * err)),
        mae=float(np.mean(np.abs(err))),
        n=int(e.size),
    )


@dataclass(frozen=True)
class SplitEvaluation:
    """Metrics plus the per-row (record_id, expected, predicted) series of one split."""

    name: str
    metrics: Metrics
    series: tuple[tuple[str, float, float], ...]

    def __post_init__(self) -> None:
        if self.metrics.n != len(self.series):
            raise ValueError(
                f"{self.name}: metrics count {self.metrics.n} != series length {len(self.series)}"
            )


@dataclass(frozen=True)
class EvaluationReport:
    """Full three-split evaluation of one model against one dataset split."""

    dataset_mean_ntu: float
    train: SplitEvaluation
    validation: SplitEvaluation
    test: SplitEvaluation
    hyperparams: Hyperparams

    def __post_init__(self) -> None:
        for split in (self.train, self.validation, self.test):
            if not (math.isfinite(split.metrics.mse) and math.isfinite(split.metrics.mae)):
                raise ValueError(f"{split.name}: non-finite metrics")
        if not math.isfinite(self.dataset_mean_ntu):
            raise ValueError("non-finite dataset mean")

    def split_by_name(self, name: str) -> SplitEvaluation:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]

    def to_dict(self, series_paths: Optional[dict] = None) -> dict:
        doc = {
            "dataset_mean_ntu": self.dataset_mean_ntu,
            "splits": {
                name: self.split_by_name(name).metrics.to_dict() for name in SPLIT_NAMES
            },
            "hyperparams": self.hyperparams.to_dict(),
        }
        doc["series_paths"] = dict(series_paths) if series_paths else {}
        return doc


def _evaluate_split(model: GbdtModel, ds: Dataset, name: str) -> SplitEvaluation:
    if len(ds) == 0:
        raise DegenerateDatasetError(f"{name} split is empty, nothing to evaluate")
    expected = ds.targets()
    predicted = predict_batch(model, ds.feature_matrix())
    series = tuple(
        (row.record_id, float(e), float(p))
        for row, e, p in zip(ds.rows, expected, predicted)
    )
    return SplitEvaluation(name=name, metrics=compute_metrics(expected, predicted), series=series)


def evaluate(model: GbdtModel, splits: tuple[Dataset, Dataset, Dataset]) -> EvaluationReport:
    """Score the model on (train, test, val); pure, so reruns give identical reports.

    Each split is scored on its own rows only, in split-internal order.
    The dataset mean pools the targets of all three splits.
    """
    train, test, val = splits
    for ds in (train, test, val):
        if tuple(ds.band_schema) != tuple(model.band_schema):
            raise ValueError("dataset band schema does not match model band schema")
    pooled = np.concatenate([train.targets(), test.targets(), val.targets()])
    if pooled.size == 0:
        raise DegenerateDatasetError("all splits are empty")
    return EvaluationReport(
        dataset_mean_ntu=float(np.mean(pooled)),
        train=_evaluate_split(model, train, "train"),
        validation=_evaluate_split(model, val, "validation"),
        test=_evaluate_split(model, test, "test"),
        hyperparams=model.hyperparams,
    )


def emit_series(report: EvaluationReport, base_path: str) -> dict:
    """Write one `index,record_id,expected_ntu,predicted_ntu` CSV per split.

    Files land at `<base_path>_<split>.csv`; the returned mapping gives
    the path written for each split name.
    """
    paths = {}
    for name in SPLIT_NAMES:
        split = report.split_by_name(name)
        path = f"{base_path}_{name}.csv"
        with atomic_text_writer(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SERIES_HEADER)
            for i, (rid, e, p) in enumerate(split.series):
                writer.writerow([i, rid, repr(e), repr(p)])
        paths[name] = path
    return paths


def read_series(path: str) -> list[tuple[str, float, float]]:
    """Parse an emitted series CSV back into (record_id, expected, predicted) rows."""
    out: list[tuple[str, float, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SERIES_HEADER:
            raise ValueError(f"{path}: bad header {header!r}")
        for i, (idx, rid, e, p) in enumerate(reader):
            if int(idx) != i:
                raise ValueError(f"{path}: index column broke sequence at row {i}")
            out.append((rid, float(e), float(p)))
    return out


def write_report(report: EvaluationReport, path: str, series_paths: Optional[dict] = None) -> None:
    """Serialize the report JSON atomically (floats as shortest round-trip decimals)."""
    with atomic_text_writer(path) as fh:
        json.dump(report.to_dict(series_paths), fh, indent=2)
        fh.write("\n")
