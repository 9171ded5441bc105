"""Adaptive test-time augmentation with confidence-gated early exit.

The package splits into five layers: :mod:`~adaptta.imaging` (image values,
PPM codec, crop policies), :mod:`~adaptta.backend` (classifier backends and
the latency model), :mod:`~adaptta.engine` (the adaptive and static
executors), :mod:`~adaptta.harness` (benchmark evaluation and reporting),
and :mod:`~adaptta.cli` (the ``adaptta`` command).
"""

__version__ = "0.1.0"

from .backend import (
    PROB_SUM_TOL,
    ImageBackend,
    LatencyModel,
    ProbVector,
    ToyClassifier,
    TraceBackend,
    TraceError,
    TraceRecord,
    load_trace,
    read_trace,
    write_trace,
)
from .engine import (
    AdapttaConfig,
    AggregationState,
    InferenceError,
    Mode,
    PredictionOutcome,
    aggregate,
    confidence_score,
    decide_label,
    run,
    run_adaptta,
    run_static,
)
from .harness import (
    BenchmarkReport,
    DatasetManifest,
    ManifestEntry,
    ModeComparison,
    baseline_single,
    compare_modes,
    evaluate,
    reports_to_json,
    sweep_tau,
    write_reports_csv,
)
from .imaging import (
    Image,
    PpmError,
    TransformPolicy,
    ViewSpec,
    crop,
    decode_ppm,
    encode_ppm,
    make_policy,
    policy_views,
    prepare_source,
    resize,
    resize_to_square,
)

__all__ = [
    "__version__",
    # imaging
    "Image",
    "PpmError",
    "TransformPolicy",
    "ViewSpec",
    "crop",
    "decode_ppm",
    "encode_ppm",
    "make_policy",
    "policy_views",
    "prepare_source",
    "resize",
    "resize_to_square",
    # backend
    "PROB_SUM_TOL",
    "ImageBackend",
    "LatencyModel",
    "ProbVector",
    "ToyClassifier",
    "TraceBackend",
    "TraceError",
    "TraceRecord",
    "load_trace",
    "read_trace",
    "write_trace",
    # engine
    "AdapttaConfig",
    "AggregationState",
    "InferenceError",
    "Mode",
    "PredictionOutcome",
    "aggregate",
    "confidence_score",
    "decide_label",
    "run",
    "run_adaptta",
    "run_static",
    # harness
    "BenchmarkReport",
    "DatasetManifest",
    "ManifestEntry",
    "ModeComparison",
    "baseline_single",
    "compare_modes",
    "evaluate",
    "reports_to_json",
    "sweep_tau",
    "write_reports_csv",
]
