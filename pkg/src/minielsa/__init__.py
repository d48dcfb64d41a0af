"""Screened edge/cloud searchable encrypted sensor store.

Streams of industrial sensor records are screened at the edge (isolation
forest + exact KNN-Shapley valuation); only clean, high-value records are
admitted into a keyword-searchable encrypted store, and a gradient-boosted
regressor trained on the kept rows serves predictions.
"""

from .dataset import (
    BinCode,
    Dataset,
    KEYWORDS,
    Scaler,
    SensorRecord,
    bin_power,
    fit_scaler,
    apply_scaler,
    load_ccpp,
    synth_ccpp,
    split,
    subsplit_test,
)
from .pipeline import (
    BenchmarkReport,
    PipelineConfig,
    ScreeningDecision,
    TrainedBundle,
    ingest_stream,
    run_benchmark,
    screen,
    tradeoff_curve,
    train_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "BinCode",
    "Dataset",
    "KEYWORDS",
    "Scaler",
    "SensorRecord",
    "bin_power",
    "fit_scaler",
    "apply_scaler",
    "load_ccpp",
    "synth_ccpp",
    "split",
    "subsplit_test",
    "BenchmarkReport",
    "PipelineConfig",
    "ScreeningDecision",
    "TrainedBundle",
    "ingest_stream",
    "run_benchmark",
    "screen",
    "tradeoff_curve",
    "train_pipeline",
    "__version__",
]
