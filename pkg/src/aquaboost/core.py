"""Shared domain types, the canonical band list, and in-situ CSV handling.

Everything downstream (matching, training, evaluation) works in terms of
these types. All of them are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import date, datetime, timezone
from typing import Iterable, Iterator, Sequence, TextIO

__all__ = [
    "BANDS",
    "NUM_BANDS",
    "AquaboostError",
    "InputFileError",
    "DegenerateDatasetError",
    "canonical_band_index",
    "InSituRecord",
    "BandSample",
    "DatasetRow",
    "Dataset",
    "Hyperparams",
    "Metrics",
    "validate_insitu_file",
    "write_insitu_file",
    "parse_utc_date",
    "parse_utc_datetime",
    "format_utc_datetime",
    "atomic_text_writer",
]

# Canonical band ordering: feature column i always means BANDS[i].
# B10 does not exist at surface-reflectance level and is never valid.
BANDS: tuple[str, ...] = (
    "B1", "B2", "B3", "B4", "B5", "B6",
    "B7", "B8", "B8A", "B9", "B11", "B12",
)
NUM_BANDS = len(BANDS)

_BAND_INDEX = {name: i for i, name in enumerate(BANDS)}

INSITU_HEADER = ["record_id", "station_id", "lat", "lon", "date", "turbidity_ntu"]


class AquaboostError(Exception):
    """Base class for all library errors."""


class InputFileError(AquaboostError):
    """A file failed schema or range validation.

    ``diagnostics`` holds one human-readable message per offending line,
    each prefixed with the 1-based line number.
    """

    def __init__(self, path: str, diagnostics: Sequence[str]):
        self.path = path
        self.diagnostics = list(diagnostics)
        joined = "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(f"{path}: {len(self.diagnostics)} problem(s)\n{joined}")


class DegenerateDatasetError(AquaboostError):
    """The data is structurally unusable (empty, or too small to split)."""


@contextmanager
def atomic_text_writer(path: str) -> Iterator[TextIO]:
    """Write to a sibling temp file, renaming over ``path`` only on success.

    A failure mid-write leaves the destination untouched (no partial files).
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".partial-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_band_index(band: str) -> int:
    """Map a band identifier to its feature column, a bijection onto 0..11."""
    try:
        return _BAND_INDEX[band]
    except KeyError:
        raise ValueError(f"unknown band {band!r}; expected one of {', '.join(BANDS)}") from None


def parse_utc_date(text: str) -> date:
    """Parse a ``YYYY-MM-DD`` civil date (UTC)."""
    return datetime.strptime(text, "%Y-%m-%d").date()


def parse_utc_datetime(text: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    Accepts a trailing ``Z`` or an explicit offset; naive timestamps are
    taken as UTC.
    """
    cleaned = text.strip()
    if cleaned.endswith("Z"):
        cleaned = cleaned[:-1] + "+00:00"
    dt = datetime.fromisoformat(cleaned)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_utc_datetime(dt: datetime) -> str:
    """Canonical wire form: ``YYYY-MM-DDTHH:MM:SSZ`` (microseconds kept only if nonzero)."""
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class InSituRecord:
    """One ground-truth turbidity measurement at a station on a civil date (UTC)."""

    record_id: str
    station_id: str
    lat: float
    lon: float
    date: date
    turbidity: float  # NTU, nonnegative

    def __post_init__(self) -> None:
        if not self.record_id:
            raise ValueError("record_id must be nonempty")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180]")
        if not math.isfinite(self.turbidity) or self.turbidity < 0.0:
            raise ValueError(f"turbidity {self.turbidity} must be finite and >= 0")


@dataclass(frozen=True)
class BandSample:
    """Per-(record, scene) mean reflectance over the averaging square.

    ``bands`` holds exactly 12 finite values in canonical band order, in
    whatever reflectance scale the source used (models are scale-specific).
    """

    record_id: str
    scene_id: str
    scene_datetime: datetime
    valid_fraction: float
    bands: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.bands) != NUM_BANDS:
            raise ValueError(f"expected {NUM_BANDS} band values, got {len(self.bands)}")
        if any(not math.isfinite(v) for v in self.bands):
            raise ValueError(f"non-finite band value for {self.record_id}/{self.scene_id}")
        if not 0.0 <= self.valid_fraction <= 1.0:
            raise ValueError(f"valid_fraction {self.valid_fraction} outside [0, 1]")
        if self.scene_datetime.tzinfo is None:
            object.__setattr__(self, "scene_datetime", self.scene_datetime.replace(tzinfo=timezone.utc))


@dataclass(frozen=True)
class DatasetRow:
    """One tabular row: 12 band features plus the turbidity target."""

    record_id: str
    features: tuple[float, ...]
    target: float

    def __post_init__(self) -> None:
        if len(self.features) != NUM_BANDS:
            raise ValueError(f"row {self.record_id}: expected {NUM_BANDS} features, got {len(self.features)}")
        if any(not math.isfinite(v) for v in self.features):
            raise ValueError(f"row {self.record_id}: non-finite feature")
        if not math.isfinite(self.target) or self.target < 0.0:
            raise ValueError(f"row {self.record_id}: target must be finite and >= 0")


@dataclass(frozen=True)
class Dataset:
    """Tabular dataset with a fixed 12-band schema and provenance note."""

    rows: tuple[DatasetRow, ...]
    provenance: str = ""
    band_schema: tuple[str, ...] = BANDS

    def __post_init__(self) -> None:
        if tuple(self.band_schema) != BANDS:
            raise ValueError("band schema must be the canonical 12-band list")
        seen: set[str] = set()
        for row in self.rows:
            if row.record_id in seen:
                raise ValueError(f"duplicate record_id {row.record_id!r} in dataset")
            seen.add(row.record_id)

    def __len__(self) -> int:
        return len(self.rows)

    def feature_matrix(self):
        import numpy as np

        return np.array([r.features for r in self.rows], dtype=np.float64).reshape(len(self.rows), NUM_BANDS)

    def targets(self):
        import numpy as np

        return np.array([r.target for r in self.rows], dtype=np.float64)

    def record_ids(self) -> list[str]:
        return [r.record_id for r in self.rows]


@dataclass(frozen=True)
class Hyperparams:
    """Boosting configuration; defaults reproduce the reference setup."""

    iterations: int = 600
    learning_rate: float = 0.6
    depth: int = 12
    l2_leaf_reg: float = 1.0
    loss: str = "RMSE"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0.0):
            raise ValueError("learning_rate must be finite and > 0")
        if not 1 <= self.depth <= 24:
            raise ValueError("depth must be in [1, 24]")
        if not (math.isfinite(self.l2_leaf_reg) and self.l2_leaf_reg >= 0.0):
            raise ValueError("l2_leaf_reg must be finite and >= 0")
        if self.loss != "RMSE":
            raise ValueError(f"unsupported loss {self.loss!r}; only RMSE")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "depth": self.depth,
            "l2_leaf_reg": self.l2_leaf_reg,
            "loss": self.loss,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(
            iterations=int(d["iterations"]),
            learning_rate=float(d["learning_rate"]),
            depth=int(d["depth"]),
            l2_leaf_reg=float(d["l2_leaf_reg"]),
            loss=str(d.get("loss", "RMSE")),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class Metrics:
    """MSE / RMSE / MAE for one prediction set.

    ``rmse`` is derived from ``mse`` on access, never stored, so the
    identity rmse**2 == mse cannot drift.
    """

    mse: float
    mae: float
    n: int

    @property
    def rmse(self) -> float:
        return math.sqrt(self.mse)

    def to_dict(self) -> dict:
        return {"n": self.n, "mse": self.mse, "rmse": self.rmse, "mae": self.mae}


def _parse_float(text: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{what} {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ValueError(f"{what} {text!r} is not finite")
    return value


def validate_insitu_file(path: str) -> list[InSituRecord]:
    """Parse and validate an in-situ CSV, preserving file order.

    Schema (exact header): record_id,station_id,lat,lon,date,turbidity_ntu
    with dates as YYYY-MM-DD. Raises InputFileError listing every
    malformed row with its 1-based line number.
    """
    records: list[InSituRecord] = []
    diagnostics: list[str] = []
    seen_ids: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFileError(path, ["line 1: empty file, expected header"])
        if header != INSITU_HEADER:
            raise InputFileError(
                path,
                [f"line 1: bad header {','.join(header)!r}, expected {','.join(INSITU_HEADER)!r}"],
            )
        for lineno, fields in enumerate(reader, start=2):
            if not fields or fields == [""]:
                continue
            if len(fields) != len(INSITU_HEADER):
                diagnostics.append(f"line {lineno}: expected {len(INSITU_HEADER)} fields, got {len(fields)}")
                continue
            rid, station, lat_s, lon_s, date_s, turb_s = fields
            try:
                rec = InSituRecord(
                    record_id=rid,
                    station_id=station,
                    lat=_parse_float(lat_s, "lat"),
                    lon=_parse_float(lon_s, "lon"),
                    date=parse_utc_date(date_s),
                    turbidity=_parse_float(turb_s, "turbidity_ntu"),
                )
            except ValueError as exc:
                diagnostics.append(f"line {lineno}: {exc}")
                continue
            if rid in seen_ids:
                diagnostics.append(f"line {lineno}: duplicate record_id {rid!r} (first seen line {seen_ids[rid]})")
                continue
            seen_ids[rid] = lineno
            records.append(rec)
    if diagnostics:
        raise InputFileError(path, diagnostics)
    return records


def write_insitu_file(path: str, records: Iterable[InSituRecord]) -> None:
    """Serialize records in canonical form (LF line endings, shortest float repr)."""
    with atomic_text_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(INSITU_HEADER)
        for rec in records:
            writer.writerow([
                rec.record_id,
                rec.station_id,
                repr(rec.lat),
                repr(rec.lon),
                rec.date.isoformat(),
                repr(rec.turbidity),
            ])
