"""Temporal link prediction on trade networks."""

from ._core import (
    ConfigError,
    Dataset,
    DimensionError,
    EvalReport,
    EvaluationError,
    NumericError,
    ParseError,
    RunResult,
    SynthOptions,
    TrainConfig,
    __version__,
    aggregate_runs,
    auc_score,
    average_precision,
    load_dataset,
    memory_sequence,
    read_config,
    run_cli,
    run_seeds,
    synth_generate,
    train_run,
    write_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
