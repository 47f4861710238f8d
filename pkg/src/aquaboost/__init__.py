"""Turbidity regression from Sentinel-2 Level-2A band averages.

Pipeline: match in-situ turbidity records to per-scene band means
(builder), train a gradient-boosted oblivious-tree regressor on the
resulting table (gbdt), and score it per split with plot-ready series
(evaluation). The ``aquaboost`` CLI wires the stages together.
"""

from .core import (
    BANDS,
    NUM_BANDS,
    AquaboostError,
    BandSample,
    Dataset,
    DatasetRow,
    DegenerateDatasetError,
    Hyperparams,
    InputFileError,
    InSituRecord,
    Metrics,
    canonical_band_index,
    format_utc_datetime,
    parse_utc_date,
    parse_utc_datetime,
    validate_insitu_file,
    write_insitu_file,
)
from .builder import (
    EmptyPatchError,
    MatchPolicy,
    PatchGrid,
    SplitSpec,
    Unmatched,
    aggregate_patch,
    build_dataset,
    match_scenes,
    read_band_samples,
    read_dataset,
    read_features,
    read_patches,
    split_dataset,
    write_band_samples,
    write_dataset,
    write_unmatched,
)
from .gbdt import (
    GbdtModel,
    ModelFormatError,
    ObliviousTree,
    SplitChoice,
    find_best_level_split,
    fit,
    leaf_value,
    load_model,
    predict,
    predict_batch,
    residuals,
    save_model,
)
from .evaluation import (
    EvaluationReport,
    SplitEvaluation,
    compute_metrics,
    emit_series,
    evaluate,
    read_series,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "BANDS",
    "NUM_BANDS",
    "AquaboostError",
    "InputFileError",
    "DegenerateDatasetError",
    "EmptyPatchError",
    "ModelFormatError",
    "InSituRecord",
    "BandSample",
    "DatasetRow",
    "Dataset",
    "Hyperparams",
    "Metrics",
    "MatchPolicy",
    "SplitSpec",
    "PatchGrid",
    "Unmatched",
    "SplitChoice",
    "ObliviousTree",
    "GbdtModel",
    "EvaluationReport",
    "SplitEvaluation",
    "canonical_band_index",
    "parse_utc_date",
    "parse_utc_datetime",
    "format_utc_datetime",
    "validate_insitu_file",
    "write_insitu_file",
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
    "residuals",
    "leaf_value",
    "find_best_level_split",
    "fit",
    "predict",
    "predict_batch",
    "save_model",
    "load_model",
    "compute_metrics",
    "evaluate",
    "emit_series",
    "read_series",
    "write_report",
    "__version__",
]
