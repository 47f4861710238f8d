"""Gradient-boosted regression with depth-limited oblivious trees.

Squared-error boosting on residuals: each round fits one symmetric tree
(a single shared (feature, threshold) test per depth level, hence
2**depth leaves) to the current residuals, leaf values are L2-shrunk
residual means, and the ensemble adds trees under a global learning-rate
multiplier.

Split search is exhaustive over midpoints of consecutive distinct
feature values. Selection is canonical: the winning candidate maximizes
the regularized score sum((sum r)^2 / (n + l2)) over leaves, computed by
sequential accumulation in ascending leaf order, so an independent
brute-force enumeration reproduces both the gain and the chosen split
bit-for-bit whenever the per-leaf sums are exact (e.g. integer-valued
inputs). A fast incremental scan only shortlists near-optimal candidates;
it never decides.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    BANDS,
    NUM_BANDS,
    AquaboostError,
    Dataset,
    DegenerateDatasetError,
    Hyperparams,
    atomic_text_writer,
)

__all__ = [
    "SplitChoice",
    "ObliviousTree",
    "GbdtModel",
    "ModelFormatError",
    "residuals",
    "leaf_value",
    "find_best_level_split",
    "fit",
    "predict",
    "predict_batch",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1

# Relative slack used only to decide which candidates get exact re-scoring.
# Accumulated rounding in the fast scan is bounded by ~4n*eps of the score
# magnitude; 1e-9 leaves three orders of magnitude of headroom.
_SHORTLIST_RTOL = 1e-9


class ModelFormatError(AquaboostError):
    """A model file failed version, schema, or structural validation."""


@dataclass(frozen=True)
class SplitChoice:
    """Outcome of one level's split search; gain is the regularized score reduction."""

    feature_index: int
    threshold: float
    gain: float

    @property
    def is_sentinel(self) -> bool:
        return self.feature_index < 0

    @staticmethod
    def sentinel() -> "SplitChoice":
        """No-improvement marker: the level duplicates the current partition."""
        return SplitChoice(feature_index=-1, threshold=0.0, gain=0.0)


@dataclass(frozen=True)
class ObliviousTree:
    """Symmetric tree: one (feature, threshold) per level, 2**depth leaf values.

    Routing: at each level go right iff feature > threshold; the leaf
    index accumulates level bits most-significant-first.
    """

    levels: tuple[tuple[int, float], ...]
    leaf_values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.leaf_values) != 2 ** len(self.levels):
            raise ValueError(
                f"{len(self.levels)} levels need {2 ** len(self.levels)} leaf values, "
                f"got {len(self.leaf_values)}"
            )
        for f, t in self.levels:
            if not 0 <= f < NUM_BANDS:
                raise ValueError(f"feature index {f} outside [0, {NUM_BANDS})")
            if not math.isfinite(t):
                raise ValueError(f"non-finite threshold {t}")

    def leaf_index(self, features: Sequence[float]) -> int:
        idx = 0
        for f, t in self.levels:
            idx = 2 * idx + (1 if features[f] > t else 0)
        return idx


@dataclass(frozen=True)
class GbdtModel:
    """Trained ensemble: base prediction plus learning-rate-scaled tree sum."""

    base_prediction: float
    trees: tuple[ObliviousTree, ...]
    hyperparams: Hyperparams
    band_schema: tuple[str, ...] = BANDS
    training_mse: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if len(self.trees) > self.hyperparams.iterations:
            raise ValueError("more trees than hyperparams.iterations")
        if tuple(self.band_schema) != BANDS:
            raise ValueError("band schema must be the canonical 12-band list")


def residuals(targets, predictions) -> np.ndarray:
    """Elementwise target - prediction (the negative gradient of squared loss)."""
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"length mismatch: targets {t.shape} vs predictions {p.shape}")
    if t.size < 1:
        raise ValueError("need at least one element")
    return t - p


def leaf_value(residuals_in_leaf, l2_leaf_reg: float) -> float:
    """L2-shrunk leaf output: sum(r) / (n + l2); an empty leaf yields 0."""
    if l2_leaf_reg < 0:
        raise ValueError("l2_leaf_reg must be >= 0")
    arr = np.asarray(residuals_in_leaf, dtype=np.float64)
    n = arr.size
    if n == 0:
        return 0.0
    return float(arr.sum() / (n + l2_leaf_reg))


def _score_partition(s_left: np.ndarray, n_left: np.ndarray, totals: np.ndarray,
                     counts: np.ndarray, l2: float) -> float:
    # Canonical accumulation: ascending leaf order, left then right term,
    # empty sides skipped. Selection ties are resolved on these exact values,
    # so the order must stay reproducible by plain enumeration.
    score = 0.0
    for leaf in range(len(totals)):
        nl = n_left[leaf]
        if nl > 0:
            sl = s_left[leaf]
            score += sl * sl / (nl + l2)
        nr = counts[leaf] - nl
        if nr > 0:
            sr = totals[leaf] - s_left[leaf]
            score += sr * sr / (nr + l2)
    return float(score)


class _SplitScan:
    """Reusable split-search state over a fixed feature matrix.

    Per-feature sort orders, distinct-value boundaries, and midpoint
    thresholds are computed once; `best` is then called with fresh
    residuals and leaf assignments for every tree level.
    """

    def __init__(self, X: np.ndarray):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("feature matrix must be 2-D and nonempty")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite feature value")
        self.X = X
        self.n, self.p = X.shape
        self.orders = []
        self.boundaries = []
        self.thresholds = []
        for f in range(self.p):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            b = np.flatnonzero(xs[:-1] < xs[1:])
            self.orders.append(order)
            self.boundaries.append(b)
            self.thresholds.append((xs[b] + xs[b + 1]) / 2.0)
        # No-op level for sentinel rounds: strictly below every feature-0 value,
        # so all training rows route right and the partition is unchanged.
        self.noop_threshold = float(np.nextafter(X[:, 0].min(), -np.inf))

    def _fast_scores(self, f: int, r_sorted: np.ndarray, a_sorted: np.ndarray,
                     totals: np.ndarray, counts: np.ndarray, l2: float):
        """Approximate (score - base) at each boundary of feature f, plus an error scale."""
        keep = counts[a_sorted] >= 2  # single-row leaves contribute exactly zero
        delta = np.zeros(self.n)
        if np.any(keep):
            leaves = a_sorted[keep]
            r = r_sorted[keep]
            # Exclusive within-leaf prefix rank/sum in sorted-position order.
            idx = np.argsort(leaves, kind="stable")
            grouped_leaf = leaves[idx]
            grouped_r = r[idx]
            new_group = np.empty(len(idx), dtype=bool)
            new_group[0] = True
            np.not_equal(grouped_leaf[1:], grouped_leaf[:-1], out=new_group[1:])
            starts = np.flatnonzero(new_group)
            gidx = np.cumsum(new_group) - 1
            rank_g = np.arange(len(idx)) - starts[gidx]
            incl = np.cumsum(grouped_r)
            excl = incl - grouped_r
            prefix_g = excl - excl[starts][gidx]
            rank = np.empty(len(idx))
            prefix = np.empty(len(idx))
            rank[idx] = rank_g
            prefix[idx] = prefix_g

            T = totals[leaves]
            N = counts[leaves]
            with np.errstate(divide="ignore", invalid="ignore"):
                g_old_l = np.where(rank > 0, prefix * prefix / (rank + l2), 0.0)
                nr_old = N - rank
                s_old_r = T - prefix
                g_old_r = np.where(nr_old > 0, s_old_r * s_old_r / (nr_old + l2), 0.0)
                s_new_l = prefix + r
                g_new_l = s_new_l * s_new_l / (rank + 1 + l2)
                nr_new = nr_old - 1
                s_new_r = s_old_r - r
                g_new_r = np.where(nr_new > 0, s_new_r * s_new_r / (nr_new + l2), 0.0)
            delta[keep] = (g_new_l + g_new_r) - (g_old_l + g_old_r)
        cum = np.cumsum(delta)
        b = self.boundaries[f]
        return cum[b], float(np.abs(delta).sum())

    def best(self, res: np.ndarray, assign: np.ndarray, n_leaves: int, l2: float) -> SplitChoice:
        if not np.any(res):
            # All-zero residuals score 0 under every candidate; nothing can improve.
            return SplitChoice.sentinel()
        totals = np.bincount(assign, weights=res, minlength=n_leaves)
        counts = np.bincount(assign, minlength=n_leaves)
        base = _score_partition(totals, counts, totals, counts, l2)

        per_feature = []
        best_fast = -math.inf
        scale = abs(base)
        for f in range(self.p):
            if len(self.boundaries[f]) == 0:
                per_feature.append(None)
                continue
            order = self.orders[f]
            fast, absum = self._fast_scores(f, res[order], assign[order], totals, counts, l2)
            per_feature.append(fast)
            scale = max(scale, absum)
            m = fast.max()
            if m > best_fast:
                best_fast = m
        if best_fast == -math.inf:
            return SplitChoice.sentinel()

        tol = _SHORTLIST_RTOL * scale + 1e-300
        best_score = -math.inf
        best_f = -1
        best_t = 0.0
        for f in range(self.p):
            fast = per_feature[f]
            if fast is None:
                continue
            for j in np.flatnonzero(fast >= best_fast - tol):
                t = float(self.thresholds[f][j])
                mask = self.X[:, f] <= t
                s_left = np.bincount(assign[mask], weights=res[mask], minlength=n_leaves)
                n_left = np.bincount(assign[mask], minlength=n_leaves)
                score = _score_partition(s_left, n_left, totals, counts, l2)
                if score > best_score:  # iteration order already favors lower (f, t)
                    best_score = score
                    best_f = f
                    best_t = t
        gain = best_score - base
        if best_f < 0 or gain <= 0.0:
            return SplitChoice.sentinel()
        return SplitChoice(feature_index=best_f, threshold=best_t, gain=gain)


def find_best_level_split(rows, residuals_vec, current_leaf_assignment, l2_leaf_reg: float) -> SplitChoice:
    """Exhaustive oblivious split search over one level.

    Candidates are midpoints of consecutive distinct values per feature;
    the winner maximizes the total regularized score over the partition
    obtained by applying the split to every current leaf. Ties go to the
    lower feature index, then the lower threshold. If nothing improves on
    the current partition (or no split exists), the sentinel is returned.
    """
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    r = np.asarray(residuals_vec, dtype=np.float64)
    a = np.asarray(current_leaf_assignment, dtype=np.int64)
    if not (len(X) == len(r) == len(a)):
        raise ValueError("rows, residuals, and leaf assignment must have equal length")
    if l2_leaf_reg < 0:
        raise ValueError("l2_leaf_reg must be >= 0")
    uniq, compact = np.unique(a, return_inverse=True)
    return _SplitScan(X).best(r, compact, len(uniq), float(l2_leaf_reg))


def fit(train: Dataset, hp: Hyperparams) -> GbdtModel:
    """Train the full ensemble on one dataset.

    Rows are canonicalized by record_id first, so any permutation of the
    input yields an identical model. Every round builds exactly hp.depth
    levels; a level with no improving split becomes a no-op that keeps
    the partition intact. Per-round training MSE is kept on the model
    (in memory only, never serialized).
    """
    if len(train) == 0:
        raise DegenerateDatasetError("cannot fit on an empty dataset")
    rows = sorted(train.rows, key=lambda row: row.record_id)
    X = np.array([row.features for row in rows], dtype=np.float64)
    y = np.array([row.target for row in rows], dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite feature or target")

    n = len(rows)
    lr = hp.learning_rate
    l2 = hp.l2_leaf_reg
    n_leaf = 2 ** hp.depth
    scan = _SplitScan(X)

    base = float(np.mean(y))
    leaf_acc = np.zeros(n)
    pred = base + lr * leaf_acc
    trees: list[ObliviousTree] = []
    history: list[float] = []

    for _ in range(hp.iterations):
        res = y - pred
        assign = np.zeros(n, dtype=np.int64)
        n_assigned = 1
        full_index = np.zeros(n, dtype=np.int64)
        levels: list[tuple[int, float]] = []
        for _level in range(hp.depth):
            choice = scan.best(res, assign, n_assigned, l2)
            if choice.is_sentinel:
                f, t = 0, scan.noop_threshold
            else:
                f, t = choice.feature_index, choice.threshold
            bit = (X[:, f] > t).astype(np.int64)
            full_index = full_index * 2 + bit
            uniq, assign = np.unique(assign * 2 + bit, return_inverse=True)
            n_assigned = len(uniq)
            levels.append((f, t))

        sums = np.bincount(full_index, weights=res, minlength=n_leaf)
        counts = np.bincount(full_index, minlength=n_leaf)
        values = np.zeros(n_leaf)
        occupied = counts > 0
        values[occupied] = sums[occupied] / (counts[occupied] + l2)

        leaf_acc = leaf_acc + values[full_index]
        pred = base + lr * leaf_acc
        history.append(float(np.mean((y - pred) ** 2)))
        trees.append(ObliviousTree(tuple(levels), tuple(values.tolist())))

    return GbdtModel(
        base_prediction=base,
        trees=tuple(trees),
        hyperparams=hp,
        training_mse=tuple(history),
    )


def _validate_features(features: Sequence[float]) -> None:
    if len(features) != NUM_BANDS:
        raise ValueError(f"expected {NUM_BANDS} features, got {len(features)}")
    for v in features:
        if not math.isfinite(v):
            raise ValueError("non-finite feature value")


def predict(model: GbdtModel, features: Sequence[float]) -> float:
    """Single prediction: base plus learning-rate-scaled sum of routed leaves."""
    _validate_features(features)
    acc = 0.0
    for tree in model.trees:
        acc += tree.leaf_values[tree.leaf_index(features)]
    return model.base_prediction + model.hyperparams.learning_rate * acc


def predict_batch(model: GbdtModel, feature_matrix) -> np.ndarray:
    """Vectorized predict; bit-identical to looping `predict` row by row."""
    X = np.asarray(feature_matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != NUM_BANDS:
        raise ValueError(f"expected an (n, {NUM_BANDS}) feature matrix, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature value")
    acc = np.zeros(len(X))
    for tree in model.trees:
        idx = np.zeros(len(X), dtype=np.int64)
        for f, t in tree.levels:
            idx = 2 * idx + (X[:, f] > t)
        acc = acc + np.asarray(tree.leaf_values)[idx]
    return model.base_prediction + model.hyperparams.learning_rate * acc


def save_model(model: GbdtModel, path: str) -> None:
    """Write the model as one JSON document, atomically.

    Floats are serialized as shortest round-trip decimals (Python's repr),
    so loading reproduces every binary64 value exactly.
    """
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "band_schema": list(model.band_schema),
        "hyperparams": model.hyperparams.to_dict(),
        "base_prediction": model.base_prediction,
        "trees": [
            {
                "levels": [{"feature": f, "threshold": t} for f, t in tree.levels],
                "leaf_values": list(tree.leaf_values),
            }
            for tree in model.trees
        ],
    }
    with atomic_text_writer(path) as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> GbdtModel:
    """Parse and fully validate a model file; never yields a partial model."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupted model file ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format_version {version!r}")
    schema = doc.get("band_schema")
    if schema != list(BANDS):
        raise ModelFormatError(f"{path}: band schema {schema!r} does not match {list(BANDS)!r}")
    try:
        hp = Hyperparams.from_dict(doc["hyperparams"])
        base = float(doc["base_prediction"])
        trees = []
        for entry in doc["trees"]:
            levels = tuple((int(lv["feature"]), float(lv["threshold"])) for lv in entry["levels"])
            leaf_values = tuple(float(v) for v in entry["leaf_values"])
            trees.append(ObliviousTree(levels, leaf_values))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: invalid model structure ({exc})") from None
    if not math.isfinite(base):
        raise ModelFormatError(f"{path}: non-finite base_prediction")
    try:
        return GbdtModel(base_prediction=base, trees=tuple(trees), hyperparams=hp)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
