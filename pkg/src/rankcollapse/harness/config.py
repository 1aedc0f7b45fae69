"""Experiment configuration: flat ``key = value`` files overridable from the command line."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Optional

from ..dynamics import MODES, SCHEDULE_KINDS
from ..mask_graph import MASK_KINDS, MaskError, MaskGraph, assert_a1, build_mask, load_edge_file

OUT_ENV = "RANKCOLLAPSE_OUT"
DEFAULT_OUT = "rankcollapse_out"
INIT_KINDS = ("sphere", "hemisphere", "counterexample")
THEOREMS = ("1", "2", "cor1", "3")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything a run, sweep or verification needs.

    ``masks``, ``temperatures`` and ``modes`` are the sweep axes; when empty
    they default to the single ``mask``, ``d_qk`` and ``mode``.
    """

    mask: str = "complete"
    n: int = 16
    width: int = 1
    mask_file: Optional[str] = None
    mode: str = "san"
    scores_from: str = "raw"
    schedule: str = "random_bounded"
    cap: float = 1.0
    w: float = 2.0
    k: Optional[int] = None
    fixed: bool = False
    d: int = 32
    T: int = 64
    d_qk: float = 1.0
    masks: tuple = ()
    temperatures: tuple = ()
    modes: tuple = ()
    seeds: tuple = (0,)
    init: str = "sphere"
    snapshot_steps: tuple = ()
    theorem: Optional[str] = None
    a3_bound: float = 10.0
    workers: int = 1
    out_dir: Optional[str] = None

    @property
    def mask_axis(self) -> tuple:
        return tuple(self.masks) or (self.mask,)

    @property
    def temperature_axis(self) -> tuple:
        return tuple(self.temperatures) or (self.d_qk,)

    @property
    def mode_axis(self) -> tuple:
        return tuple(self.modes) or (self.mode,)

    def output_dir(self) -> str:
        return self.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT

    def build_mask(self, kind: Optional[str] = None) -> MaskGraph:
        kind = kind or self.mask
        if kind == "custom":
            if not self.mask_file:
                raise ConfigError("mask kind 'custom' needs mask_file")
            g = load_edge_file(self.mask_file)
            if g.n != self.n:
                raise ConfigError(f"mask_file has n={g.n} but config n={self.n}")
            return g
        return build_mask(kind, self.n, width=self.width)

    def validate(self) -> "ExperimentConfig":
        """Check every field against the module preconditions; returns self."""
        for name in ("n", "d"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list has duplicates")
        for m in self.mode_axis:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}; expected one of {MODES}")
        if self.scores_from not in ("raw", "normalized"):
            raise ConfigError("scores_from must be 'raw' or 'normalized'")
        if self.schedule not in SCHEDULE_KINDS or self.schedule == "constant":
            kinds = [k for k in SCHEDULE_KINDS if k != "constant"]
            raise ConfigError(f"unknown schedule {self.schedule!r}; expected one of {kinds}")
        if self.cap < 0:
            raise ConfigError("cap must be nonnegative")
        for t in self.temperature_axis:
            if not t > 0:
                raise ConfigError(f"temperature d_qk must be positive, got {t}")
        if self.schedule == "zero_qk_jordan":
            if not self.w > 1:
                raise ConfigError("w must exceed 1")
            if self.k is not None and not 1 <= self.k <= self.d:
                raise ConfigError(f"Jordan block size k={self.k} must lie in [1, d={self.d}]")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"unknown init {self.init!r}; expected one of {INIT_KINDS}")
        if self.init == "counterexample":
            if self.n < 2 or self.d < 2:
                raise ConfigError("counterexample init needs n >= 2 and d >= 2")
            if not self.w > 1:
                raise ConfigError("w must exceed 1")
        if self.theorem is not None and self.theorem not in THEOREMS:
            raise ConfigError(f"unknown theorem {self.theorem!r}; expected one of {THEOREMS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(not 0 <= s <= self.T for s in self.snapshot_steps):
            raise ConfigError(f"snapshot steps must lie in [0, T={self.T}]")
        for kind in self.mask_axis:
            if kind not in MASK_KINDS:
                raise ConfigError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
            try:
                assert_a1(self.build_mask(kind))
            except (MaskError, OSError) as exc:
                raise ConfigError(f"mask {kind!r}: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, v in out.items():
            if isinstance(v, tuple):
                out[key] = list(v)
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_ITEM = {
    "masks": str,
    "temperatures": float,
    "modes": str,
    "seeds": int,
    "snapshot_steps": int,
}
_SCALAR = {
    "n": int, "width": int, "k": int, "d": int, "T": int, "workers": int,
    "cap": float, "w": float, "d_qk": float, "a3_bound": float,
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str):
    """Convert the text form of ``key`` to its field type."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    try:
        if key in _LIST_ITEM:
            items = [p.strip() for p in text.split(",") if p.strip()]
            if key == "seeds" and len(items) == 1 and ":" in items[0]:
                lo, hi = items[0].split(":")
                return tuple(range(int(lo), int(hi)))
            return tuple(_LIST_ITEM[key](p) for p in items)
        if key == "fixed":
            return _parse_bool(text)
        if key in _SCALAR:
            if key == "k" and text.lower() in ("", "none"):
                return None
            return _SCALAR[key](text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None
    if text.lower() == "none" and _FIELDS[key].default is None:
        return None
    return text


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, val = (p.strip() for p in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                values[key] = parse_value(key, val)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def make_config(path: Optional[str] = None, overrides: Optional[dict] = None, **defaults) -> ExperimentConfig:
    """Defaults, then ``defaults``, then the file at ``path``, then ``overrides``; validated."""
    values = dict(defaults)
    if path:
        values.update(read_config_file(path))
    for key, v in (overrides or {}).items():
        if v is not None:
            values[key] = v
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**values).validate()
