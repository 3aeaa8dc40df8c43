"""Configuration, deterministic RNG, snapshot output and the CLI."""

from .config import ConfigError, RunConfig, load_config, make_config, preset_config
from .main import cli_main, main
from .presets import get_preset, preset_names
from .rng import philox4x64, raw_words, uniform_doubles
from .snapshots import (SnapshotRecord, read_snapshot_csv, write_diagnostics,
                        write_metadata, write_snapshot)

__all__ = [
    "ConfigError", "RunConfig", "load_config", "make_config", "preset_config",
    "cli_main", "main", "get_preset", "preset_names",
    "philox4x64", "raw_words", "uniform_doubles",
    "SnapshotRecord", "read_snapshot_csv", "write_diagnostics",
    "write_metadata", "write_snapshot",
]
