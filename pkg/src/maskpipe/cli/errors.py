"""Error kinds that map to process exit codes."""

from __future__ import annotations


class CliError(Exception):
    kind = "internal"
    exit_code = 4


class ConfigError(CliError):
    kind = "config"
    exit_code = 2


class DataError(CliError):
    kind = "data"
    exit_code = 3
