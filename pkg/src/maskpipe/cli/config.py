"""Run configuration: a flat TOML file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..optimize import ALL_METHODS, TtaMethod
from ..preprocess import DEFAULT_AR_HEIGHTS, DEFAULT_RESOLUTIONS, MODES, UNET_STRIDE
from .errors import ConfigError

REPORT_FORMATS = ("csv", "markdown")
RANK_BY = ("tta", "plain")
THREADS_ENV = "MASKPIPE_THREADS"

_PATH_KEYS = ("manifest", "out", "predictions")


@dataclass(frozen=True)
class RunConfig:
    manifest: Path | None = None
    out: Path = Path("maskpipe-out")
    mode: str = "original"
    # square sides for original/cropped, heights for ar_corrected; None picks the mode default
    resolutions: tuple[int, ...] | None = None
    aspect_ratio: float | None = None
    grid_count: int = 200
    tta_methods: tuple[str, ...] = tuple(m.name for m in ALL_METHODS)
    topk: tuple[int, ...] = (2, 3, 4, 5, 6)
    seed: int = 0
    report_formats: tuple[str, ...] = REPORT_FORMATS
    split_ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    eval_split: str = "test"
    predictions: Path | None = None
    synthetic_snapshots: int = 0
    synthetic_fidelity: float = 1.0
    synthetic_fidelity_step: float = 0.0
    synthetic_blur: float = 0.0
    threshold: float = 0.5
    rank_by: str = "tta"
    figure_limit: int = 4
    heatmap_side: int = 256
    confidence: float = 0.95

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.resolutions is not None:
            if not self.resolutions:
                raise ConfigError("resolutions must not be empty")
            if any(r < 1 for r in self.resolutions):
                raise ConfigError("resolutions must be positive")
            if self.mode == "ar_corrected" and any(r % UNET_STRIDE for r in self.resolutions):
                raise ConfigError(f"ar_corrected heights must be multiples of {UNET_STRIDE}")
        if self.aspect_ratio is not None and not 0 < self.aspect_ratio <= 1:
            raise ConfigError("aspect_ratio must lie in (0, 1]")
        if self.grid_count < 2:
            raise ConfigError("grid_count must be at least 2")
        if not self.tta_methods:
            raise ConfigError("tta_methods must not be empty")
        for name in self.tta_methods:
            try:
                TtaMethod.parse(name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if any(k < 1 for k in self.topk):
            raise ConfigError("topk values must be >= 1")
        if not set(self.report_formats) <= set(REPORT_FORMATS) or not self.report_formats:
            raise ConfigError(f"report_formats must be a non-empty subset of {REPORT_FORMATS}")
        if len(self.split_ratios) != 3 or abs(sum(self.split_ratios) - 1) > 1e-9:
            raise ConfigError("split_ratios must be three values summing to 1")
        if self.eval_split not in ("train", "val", "test"):
            raise ConfigError("eval_split must be train, val or test")
        if self.synthetic_snapshots < 0:
            raise ConfigError("synthetic_snapshots must be >= 0")
        if not 0 <= self.synthetic_fidelity <= 1:
            raise ConfigError("synthetic_fidelity must lie in [0, 1]")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.rank_by not in RANK_BY:
            raise ConfigError(f"rank_by must be one of {RANK_BY}")
        if self.figure_limit < 0 or self.heatmap_side < 1:
            raise ConfigError("figure_limit must be >= 0 and heatmap_side >= 1")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")

    @property
    def methods(self) -> tuple[TtaMethod, ...]:
        return tuple(sorted({TtaMethod.parse(n) for n in self.tta_methods}, key=lambda m: m.index))

    @property
    def ladder(self) -> tuple[int, ...]:
        if self.resolutions is not None:
            return self.resolutions
        if self.mode == "ar_corrected":
            return DEFAULT_AR_HEIGHTS
        return tuple(w for w, _ in DEFAULT_RESOLUTIONS)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready view with absolute paths; ``from_mapping`` inverts it."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v.resolve())
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TUPLE_KEYS = {"resolutions", "tta_methods", "topk", "report_formats", "split_ratios"}
_INT_KEYS = {"grid_count", "seed", "synthetic_snapshots", "figure_limit", "heatmap_side"}
_FLOAT_KEYS = {
    "aspect_ratio",
    "synthetic_fidelity",
    "synthetic_fidelity_step",
    "synthetic_blur",
    "threshold",
    "confidence",
}


def _coerce(key: str, value: Any, base: Path | None) -> Any:
    if value is None:
        return None
    try:
        if key in _PATH_KEYS:
            p = Path(os.fspath(value))
            return p if p.is_absolute() or base is None else base / p
        if key in _TUPLE_KEYS:
            if isinstance(value, (str, int, float)):
                value = [value]
            items = list(value)
            if key in ("resolutions", "topk"):
                return tuple(_as_int(key, v) for v in items)
            if key == "split_ratios":
                return tuple(float(v) for v in items)
            return tuple(str(v) for v in items)
        if key in _INT_KEYS:
            return _as_int(key, value)
        if key in _FLOAT_KEYS:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def _as_int(key: str, v: Any) -> int:
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValueError
    return int(v)


def from_mapping(values: Mapping[str, Any], base: Path | None = None) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return RunConfig(**{k: _coerce(k, v, base) for k, v in values.items()})


def load_config(path: Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read ``path`` (if given), then apply non-None ``overrides``.

    Relative paths in the file resolve against the file's directory;
    overrides resolve against the working directory.
    """
    values: dict[str, Any] = {}
    base = None
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                values = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"{path}: config must be flat, found table(s) {', '.join(nested)}")
        base = path.resolve().parent
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    merged = {k: _coerce(k, v, base) for k, v in values.items()}
    for k, v in (overrides or {}).items():
        if v is not None:
            if k not in _FIELDS:
                raise ConfigError(f"unknown override {k}")
            merged[k] = _coerce(k, v, Path.cwd())
    return RunConfig(**merged)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n
