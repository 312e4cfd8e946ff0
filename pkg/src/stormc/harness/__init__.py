"""Experiment configuration, metrics serialization and the command line."""
from .cli import main
from .config import ExperimentConfig, load_config, parse_config
from .metrics import CSV_HEADER, aggregate, write_record

__all__ = ["CSV_HEADER", "ExperimentConfig", "aggregate", "load_config", "main",
           "parse_config", "write_record"]
