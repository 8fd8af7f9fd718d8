"""Deterministic simulator for fairness-aware multi-tenant LLM serving.

The C++ core does the work; this package re-exports its operations:
scenario generation, GPU profile calibration, predictors, fairness
counters, and the experiment runners.
"""

from equinox_sim._core import (
    ConfigError,
    EngineError,
    GpuProfile,
    ParseError,
    PerfParams,
    ProfileEntry,
    Request,
    Trace,
    TrainingError,
    __version__,
    build_profile,
    default_bucket_bounds,
    generate_scenario,
    jain_index,
    load_trace,
    make_prediction_corpus,
    predict_corpus_l1,
    rfc_increment,
    run,
    run_ablation,
    run_events,
    run_sweep_alpha,
    run_to_dir,
    ufc_increment,
)

__all__ = [
    "ConfigError",
    "EngineError",
    "GpuProfile",
    "ParseError",
    "PerfParams",
    "ProfileEntry",
    "Request",
    "Trace",
    "TrainingError",
    "__version__",
    "build_profile",
    "default_bucket_bounds",
    "generate_scenario",
    "jain_index",
    "load_trace",
    "make_prediction_corpus",
    "predict_corpus_l1",
    "rfc_increment",
    "run",
    "run_ablation",
    "run_events",
    "run_sweep_alpha",
    "run_to_dir",
    "ufc_increment",
]
