"""Match in-situ records to scene band statistics and assemble the tabular dataset.

The matching policy is deliberately simple and deterministic: scenes are
gated by an inclusive civil-date window and a minimum valid-pixel
fraction, then the scene nearest in absolute time to the record's day
(anchored at 12:00 UTC, the unbiased center of the civil day) wins, with
ties broken toward the earlier scene.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, time, timedelta, timezone
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    BANDS,
    NUM_BANDS,
    AquaboostError,
    BandSample,
    Dataset,
    DatasetRow,
    DegenerateDatasetError,
    InputFileError,
    InSituRecord,
    atomic_text_writer,
    format_utc_datetime,
    parse_utc_datetime,
)

__all__ = [
    "MatchPolicy",
    "SplitSpec",
    "PatchGrid",
    "Unmatched",
    "EmptyPatchError",
    "match_scenes",
    "aggregate_patch",
    "build_dataset",
    "split_dataset",
    "read_band_samples",
    "write_band_samples",
    "read_patches",
    "read_dataset",
    "write_dataset",
    "write_unmatched",
    "read_features",
]

BAND_SAMPLES_HEADER = ["record_id", "scene_id", "scene_datetime", "valid_fraction", *BANDS]
PATCH_HEADER = ["record_id", "scene_id", "scene_datetime", "band", "row", "col", "value", "valid"]
DATASET_HEADER = ["record_id", *BANDS, "turbidity_ntu"]
UNMATCHED_HEADER = ["record_id", "reason"]

REASON_NO_SCENE = "no_scene_in_window"
REASON_LOW_VALID_FRACTION = "low_valid_fraction"


class EmptyPatchError(AquaboostError):
    """A patch had zero valid pixels, so no mean exists."""

    def __init__(self, record_id: str, scene_id: str):
        super().__init__(f"empty patch: no valid pixels for record {record_id!r}, scene {scene_id!r}")
        self.record_id = record_id
        self.scene_id = scene_id


@dataclass(frozen=True)
class MatchPolicy:
    """Scene-selection policy for attaching satellite statistics to a record."""

    window_days: int = 3
    min_valid_fraction: float = 0.5
    scene_selection: str = "nearest_in_time"

    def __post_init__(self) -> None:
        if self.window_days < 0:
            raise ValueError("window_days must be >= 0")
        if not 0.0 <= self.min_valid_fraction <= 1.0:
            raise ValueError("min_valid_fraction must be in [0, 1]")
        if self.scene_selection != "nearest_in_time":
            raise ValueError(f"unsupported scene_selection {self.scene_selection!r}")


@dataclass(frozen=True)
class SplitSpec:
    """Train/test/validation fractions plus the shuffle seed."""

    train_fraction: float = 0.55
    test_fraction: float = 0.20
    val_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        for name, frac in (
            ("train_fraction", self.train_fraction),
            ("test_fraction", self.test_fraction),
            ("val_fraction", self.val_fraction),
        ):
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name} {frac} outside [0, 1]")
        total = self.train_fraction + self.test_fraction + self.val_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"fractions sum to {total}, expected 1")


@dataclass(frozen=True)
class PatchGrid:
    """Per-band pixel grids over the averaging square, with a shared validity mask.

    All 12 bands must be present with identical dimensions (already
    resampled to a common 10 m grid); ``valid`` marks usable pixels and
    applies identically to every band.
    """

    record_id: str
    scene_id: str
    scene_datetime: datetime
    bands: dict  # band name -> 2-D float array
    valid: np.ndarray  # 2-D bool array

    def __post_init__(self) -> None:
        missing = [b for b in BANDS if b not in self.bands]
        if missing:
            raise ValueError(f"patch {self.record_id}/{self.scene_id}: missing bands {missing}")
        shape = np.asarray(self.valid).shape
        if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
            raise ValueError(f"patch {self.record_id}/{self.scene_id}: validity mask must be a nonempty 2-D grid")
        for name in BANDS:
            if np.asarray(self.bands[name]).shape != shape:
                raise ValueError(
                    f"patch {self.record_id}/{self.scene_id}: band {name} shape "
                    f"{np.asarray(self.bands[name]).shape} != mask shape {shape}"
                )


@dataclass(frozen=True)
class Unmatched:
    """A record that found no qualifying scene, with the reason it was skipped."""

    record_id: str
    reason: str


def _noon_anchor(record: InSituRecord) -> datetime:
    return datetime.combine(record.date, time(12, 0), tzinfo=timezone.utc)


def match_scenes(
    record: InSituRecord,
    samples: Sequence[BandSample],
    policy: MatchPolicy,
) -> Optional[BandSample]:
    """Pick the qualifying scene for one record, or None if nothing qualifies.

    A scene qualifies when its civil date (UTC) lies within
    ``record.date +/- window_days`` inclusive and its valid_fraction meets
    the policy minimum. Among qualifiers, the one nearest in absolute time
    to the record's 12:00 UTC anchor wins; exact ties go to the earlier
    scene, then the lexically smaller scene_id, so the result never
    depends on input order. Absence is a value, not an error.
    """
    for s in samples:
        if s.record_id != record.record_id:
            raise ValueError(
                f"sample for record {s.record_id!r} passed to match_scenes for {record.record_id!r}"
            )
    window = timedelta(days=policy.window_days)
    anchor = _noon_anchor(record)
    best: Optional[BandSample] = None
    best_dist: Optional[timedelta] = None
    for s in samples:
        scene_day = s.scene_datetime.astimezone(timezone.utc).date()
        if abs(scene_day - record.date) > window:
            continue
        if s.valid_fraction < policy.min_valid_fraction:
            continue
        dist = abs(s.scene_datetime - anchor)
        if (
            best is None
            or dist < best_dist
            or (dist == best_dist and s.scene_datetime < best.scene_datetime)
            or (
                dist == best_dist
                and s.scene_datetime == best.scene_datetime
                and s.scene_id < best.scene_id
            )
        ):
            best = s
            best_dist = dist
    return best


def aggregate_patch(patch: PatchGrid) -> BandSample:
    """Average each band over valid pixels; valid_fraction is their share of the grid."""
    mask = np.asarray(patch.valid, dtype=bool)
    total = mask.size
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise EmptyPatchError(patch.record_id, patch.scene_id)
    means = []
    for name in BANDS:
        values = np.asarray(patch.bands[name], dtype=np.float64)[mask]
        if not np.all(np.isfinite(values)):
            raise ValueError(f"patch {patch.record_id}/{patch.scene_id}: non-finite value in band {name}")
        means.append(float(values.mean()))
    return BandSample(
        record_id=patch.record_id,
        scene_id=patch.scene_id,
        scene_datetime=patch.scene_datetime,
        valid_fraction=n_valid / total,
        bands=tuple(means),
    )


def build_dataset(
    records: Sequence[InSituRecord],
    samples: Sequence[BandSample],
    policy: MatchPolicy,
) -> tuple[Dataset, list[Unmatched]]:
    """One dataset row per record with a qualifying scene; the rest go to a sidecar list.

    Rows are sorted by record_id, so the output is invariant under
    permutation of the inputs. Duplicate (record_id, scene_id) pairs in
    the samples are rejected.
    """
    seen_pairs: set[tuple[str, str]] = set()
    by_record: dict[str, list[BandSample]] = {}
    for s in samples:
        key = (s.record_id, s.scene_id)
        if key in seen_pairs:
            raise ValueError(f"duplicate (record_id, scene_id) pair {key}")
        seen_pairs.add(key)
        by_record.setdefault(s.record_id, []).append(s)

    rows: list[DatasetRow] = []
    unmatched: list[Unmatched] = []
    for record in sorted(records, key=lambda r: r.record_id):
        candidates = by_record.get(record.record_id, [])
        chosen = match_scenes(record, candidates, policy)
        if chosen is not None:
            rows.append(DatasetRow(record.record_id, chosen.bands, record.turbidity))
            continue
        # Distinguish "nothing in the window" from "in window but too cloudy".
        window = timedelta(days=policy.window_days)
        in_window = [
            s for s in candidates
            if abs(s.scene_datetime.astimezone(timezone.utc).date() - record.date) <= window
        ]
        reason = REASON_LOW_VALID_FRACTION if in_window else REASON_NO_SCENE
        unmatched.append(Unmatched(record.record_id, reason))

    provenance = (
        f"matched {len(rows)}/{len(records)} records; "
        f"window_days={policy.window_days}, min_valid_fraction={policy.min_valid_fraction}, "
        f"scene_selection={policy.scene_selection}"
    )
    return Dataset(rows=tuple(rows), provenance=provenance), unmatched


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    """Sizes of the train/test/val partition for n rows (round-half-even on the first two)."""
    n_train = round(spec.train_fraction * n)
    n_test = round(spec.test_fraction * n)
    n_train = min(n_train, n)
    n_test = min(n_test, n - n_train)
    return n_train, n_test, n - n_train - n_test


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic seeded shuffle into (train, test, val).

    The permutation comes from numpy's seeded PCG64 generator, so the same
    seed always yields the same partition. The partition is disjoint and
    covering. Raises DegenerateDatasetError if a mandatory split would be
    empty while n >= 3.
    """
    n = len(ds)
    if n == 0:
        raise DegenerateDatasetError("cannot split an empty dataset")
    n_train, n_test, n_val = split_sizes(n, spec)
    if n >= 3 and min(n_train, n_test, n_val) == 0:
        raise DegenerateDatasetError(
            f"fractions {spec.train_fraction}/{spec.test_fraction}/{spec.val_fraction} "
            f"leave an empty split at n={n} (sizes {n_train}/{n_test}/{n_val})"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    idx_train = sorted(perm[:n_train].tolist())
    idx_test = sorted(perm[n_train:n_train + n_test].tolist())
    idx_val = sorted(perm[n_train + n_test:].tolist())

    def take(indices: list[int], label: str) -> Dataset:
        return Dataset(
            rows=tuple(ds.rows[i] for i in indices),
            provenance=f"{label} split of [{ds.provenance}] seed={spec.seed}",
        )

    return take(idx_train, "train"), take(idx_test, "test"), take(idx_val, "val")


# ---------------------------------------------------------------------------
# CSV interchange


def _float_field(text: str, what: str, lineno: int, diagnostics: list[str]) -> Optional[float]:
    try:
        value = float(text)
    except ValueError:
        diagnostics.append(f"line {lineno}: {what} {text!r} is not a number")
        return None
    if not math.isfinite(value):
        diagnostics.append(f"line {lineno}: {what} {text!r} is not finite")
        return None
    return value


def read_band_samples(path: str) -> list[BandSample]:
    """Parse a band-samples CSV (exporter output).

    Leading lines starting with ``#`` are treated as comments (exporters
    document the reflectance scaling there). Headers and 12-band arity are
    enforced; problems are reported with line numbers.
    """
    samples: list[BandSample] = []
    diagnostics: list[str] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lineno = 0
        header: Optional[list[str]] = None
        for raw in csv.reader(fh):
            lineno += 1
            if header is None:
                if raw and raw[0].startswith("#"):
                    continue
                header = raw
                if header != BAND_SAMPLES_HEADER:
                    raise InputFileError(
                        path,
                        [f"line {lineno}: bad header {','.join(header)!r}, "
                         f"expected {','.join(BAND_SAMPLES_HEADER)!r}"],
                    )
                continue
            if not raw or raw == [""]:
                continue
            if len(raw) != len(BAND_SAMPLES_HEADER):
                diagnostics.append(f"line {lineno}: expected {len(BAND_SAMPLES_HEADER)} fields, got {len(raw)}")
                continue
            rid, sid, dt_s, vf_s, *band_s = raw
            try:
                dt = parse_utc_datetime(dt_s)
            except ValueError:
                diagnostics.append(f"line {lineno}: scene_datetime {dt_s!r} is not ISO-8601")
                continue
            vf = _float_field(vf_s, "valid_fraction", lineno, diagnostics)
            if vf is None:
                continue
            values = []
            ok = True
            for name, text in zip(BANDS, band_s):
                v = _float_field(text, name, lineno, diagnostics)
                if v is None:
                    ok = False
                    break
                values.append(v)
            if not ok:
                continue
            if (rid, sid) in seen:
                diagnostics.append(f"line {lineno}: duplicate (record_id, scene_id) pair ({rid!r}, {sid!r})")
                continue
            try:
                sample = BandSample(rid, sid, dt, vf, tuple(values))
            except ValueError as exc:
                diagnostics.append(f"line {lineno}: {exc}")
                continue
            seen.add((rid, sid))
            samples.append(sample)
        if header is None:
            raise InputFileError(path, ["line 1: empty file, expected header"])
    if diagnostics:
        raise InputFileError(path, diagnostics)
    return samples


def write_band_samples(path: str, samples: Iterable[BandSample]) -> None:
    with atomic_text_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BAND_SAMPLES_HEADER)
        for s in samples:
            writer.writerow([
                s.record_id,
                s.scene_id,
                format_utc_datetime(s.scene_datetime),
                repr(s.valid_fraction),
                *[repr(v) for v in s.bands],
            ])


def read_patches(path: str) -> list[PatchGrid]:
    """Parse a long-form patch CSV into PatchGrids, validating grid completeness.

    Every (band, row, col) cell must be present for each (record, scene),
    and the validity flag must agree across bands for the same pixel.
    """
    cells: dict[tuple[str, str], dict] = {}
    diagnostics: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFileError(path, ["line 1: empty file, expected header"])
        if header != PATCH_HEADER:
            raise InputFileError(
                path,
                [f"line 1: bad header {','.join(header)!r}, expected {','.join(PATCH_HEADER)!r}"],
            )
        for lineno, raw in enumerate(reader, start=2):
            if not raw or raw == [""]:
                continue
            if len(raw) != len(PATCH_HEADER):
                diagnostics.append(f"line {lineno}: expected {len(PATCH_HEADER)} fields, got {len(raw)}")
                continue
            rid, sid, dt_s, band, row_s, col_s, value_s, valid_s = raw
            if band not in BANDS:
                diagnostics.append(f"line {lineno}: unknown band {band!r}")
                continue
            try:
                dt = parse_utc_datetime(dt_s)
                r, c = int(row_s), int(col_s)
                value = float(value_s)
            except ValueError as exc:
                diagnostics.append(f"line {lineno}: {exc}")
                continue
            if valid_s not in ("0", "1"):
                diagnostics.append(f"line {lineno}: valid flag {valid_s!r} must be 0 or 1")
                continue
            entry = cells.setdefault((rid, sid), {"datetime": dt, "values": {}, "valid": {}})
            key = (band, r, c)
            if key in entry["values"]:
                diagnostics.append(f"line {lineno}: duplicate cell {key} for ({rid!r}, {sid!r})")
                continue
            entry["values"][key] = value
            prior = entry["valid"].get((r, c))
            flag = valid_s == "1"
            if prior is not None and prior != flag:
                diagnostics.append(
                    f"line {lineno}: valid flag for pixel ({r},{c}) of ({rid!r}, {sid!r}) "
                    f"disagrees across bands"
                )
                continue
            entry["valid"][(r, c)] = flag
    if diagnostics:
        raise InputFileError(path, diagnostics)

    patches: list[PatchGrid] = []
    for (rid, sid), entry in sorted(cells.items()):
        pixels = sorted(entry["valid"])
        n_rows = max(r for r, _ in pixels) + 1
        n_cols = max(c for _, c in pixels) + 1
        problems = []
        if len(pixels) != n_rows * n_cols:
            problems.append(f"({rid!r}, {sid!r}): grid is not a complete {n_rows}x{n_cols} rectangle")
        for band in BANDS:
            have = sum(1 for (b, _, _) in entry["values"] if b == band)
            if have != len(pixels):
                problems.append(f"({rid!r}, {sid!r}): band {band} has {have}/{len(pixels)} cells")
        if problems:
            raise InputFileError(path, problems)
        valid = np.zeros((n_rows, n_cols), dtype=bool)
        for (r, c), flag in entry["valid"].items():
            valid[r, c] = flag
        bands = {}
        for band in BANDS:
            grid = np.zeros((n_rows, n_cols), dtype=np.float64)
            for (b, r, c), value in entry["values"].items():
                if b == band:
                    grid[r, c] = value
            bands[band] = grid
        patches.append(PatchGrid(rid, sid, entry["datetime"], bands, valid))
    return patches


def read_dataset(path: str) -> Dataset:
    rows: list[DatasetRow] = []
    diagnostics: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFileError(path, ["line 1: empty file, expected header"])
        if header != DATASET_HEADER:
            raise InputFileError(
                path,
                [f"line 1: bad header {','.join(header)!r}, expected {','.join(DATASET_HEADER)!r}"],
            )
        for lineno, raw in enumerate(reader, start=2):
            if not raw or raw == [""]:
                continue
            if len(raw) != len(DATASET_HEADER):
                diagnostics.append(f"line {lineno}: expected {len(DATASET_HEADER)} fields, got {len(raw)}")
                continue
            rid, *rest = raw
            try:
                features = tuple(float(v) for v in rest[:NUM_BANDS])
                target = float(rest[NUM_BANDS])
                rows.append(DatasetRow(rid, features, target))
            except ValueError as exc:
                diagnostics.append(f"line {lineno}: {exc}")
    if diagnostics:
        raise InputFileError(path, diagnostics)
    try:
        return Dataset(rows=tuple(rows), provenance=f"loaded from {path}")
    except ValueError as exc:
        raise InputFileError(path, [str(exc)])


def write_dataset(path: str, ds: Dataset) -> None:
    with atomic_text_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        for row in ds.rows:
            writer.writerow([row.record_id, *[repr(v) for v in row.features], repr(row.target)])


def write_unmatched(path: str, unmatched: Iterable[Unmatched]) -> None:
    with atomic_text_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(UNMATCHED_HEADER)
        for u in unmatched:
            writer.writerow([u.record_id, u.reason])


def read_features(path: str) -> list[tuple[str, tuple[float, ...]]]:
    """Parse a features CSV for prediction: record_id plus the 12 band columns.

    Accepts either the bare feature schema or a full dataset CSV (the
    turbidity column, when present, is ignored).
    """
    out: list[tuple[str, tuple[float, ...]]] = []
    diagnostics: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFileError(path, ["line 1: empty file, expected header"])
        bare = ["record_id", *BANDS]
        if header == bare:
            width = len(bare)
        elif header == DATASET_HEADER:
            width = len(DATASET_HEADER)
        else:
            missing = [c for c in bare if c not in header]
            detail = f"missing column(s) {', '.join(missing)}" if missing else "unexpected column order"
            raise InputFileError(
                path,
                [f"line 1: bad header {','.join(header)!r} ({detail}); "
                 f"expected {','.join(bare)!r}"],
            )
        for lineno, raw in enumerate(reader, start=2):
            if not raw or raw == [""]:
                continue
            if len(raw) != width:
                diagnostics.append(f"line {lineno}: expected {width} fields, got {len(raw)}")
                continue
            rid = raw[0]
            try:
                features = tuple(float(v) for v in raw[1:1 + NUM_BANDS])
            except ValueError as exc:
                diagnostics.append(f"line {lineno}: {exc}")
                continue
            if any(not math.isfinite(v) for v in features):
                diagnostics.append(f"line {lineno}: non-finite feature value")
                continue
            out.append((rid, features))
    if diagnostics:
        raise InputFileError(path, diagnostics)
    return out
