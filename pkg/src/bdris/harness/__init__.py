"""Configuration, Monte-Carlo runner, CSV output, validation suite and CLI."""
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .csvio import ResultRow, SummaryRow, emit_csv, emit_summary, read_csv, summarize
from .experiments import RunResult, parse_arch_label, run_experiment

__all__ = [
    "ConfigError", "ExperimentConfig", "config_from_dict", "load_config",
    "ResultRow", "SummaryRow", "emit_csv", "emit_summary", "read_csv", "summarize",
    "RunResult", "parse_arch_label", "run_experiment",
]
