"""Run configuration: flat ``section.key = value`` files, overrides and manifests."""

from __future__ import annotations

import ast
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dynamics import PropagationConfig
from .errors import ConfigError
from .grid import PROPAGATION_POINTS, GridSpec, TrapParams
from .scanlab import BACKENDS, LEVEL, ScanConfig


@dataclass(frozen=True)
class ScanSettings:
    backend: str = "fourmode"
    omega_min: float = 0.6
    omega_max: float = 0.7
    omega_step: float = 0.002
    c1: complex = 1 + 0j
    c2: complex = 0j
    batch: int = 16
    level: float = LEVEL


@dataclass(frozen=True)
class RunSettings:
    output_dir: str = ""
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs; each section maps to a key prefix."""

    trap: TrapParams = field(default_factory=TrapParams)
    grid: GridSpec = field(default_factory=GridSpec)
    propagation_grid: GridSpec = field(default_factory=lambda: GridSpec(n_points=PROPAGATION_POINTS))
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    scan: ScanSettings = field(default_factory=ScanSettings)
    run: RunSettings = field(default_factory=RunSettings)

    def validate(self) -> None:
        self.trap.validate()
        self.grid.validate()
        self.propagation_grid.validate()
        self.propagation.validate()
        if self.scan.backend not in BACKENDS:
            raise ConfigError(f"scan.backend must be one of {BACKENDS}, got {self.scan.backend!r}")
        if self.run.workers < 1:
            raise ConfigError("run.workers must be >= 1")

    def scan_config(self, **changes) -> ScanConfig:
        s = self.scan
        cfg = ScanConfig(
            backend=s.backend, omega_min=s.omega_min, omega_max=s.omega_max, omega_step=s.omega_step,
            c1=s.c1, c2=s.c2, trap=self.trap, grid=self.propagation_grid, analysis_grid=self.grid,
            propagation=self.propagation, workers=self.run.workers, batch=s.batch,
        )
        return replace(cfg, **changes)

    def to_items(self) -> dict[str, object]:
        out = {}
        for sec in fields(self):
            obj = getattr(self, sec.name)
            for f in fields(obj):
                out[f"{sec.name}.{f.name}"] = getattr(obj, f.name)
        return out

    def dumps(self, header: dict[str, str] | None = None) -> str:
        lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
        lines += [f"{k} = {v!r}" for k, v in self.to_items().items()]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha1(self.dumps().encode()).hexdigest()[:10]


def _parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _coerce(current, value, key: str):
    try:
        if isinstance(current, bool):
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, complex):
            return complex(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(current).__name__}") from None


def apply_overrides(cfg: RunConfig, items: dict[str, object]) -> RunConfig:
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for key, value in items.items():
        if "." not in key:
            raise ConfigError(f"configuration key {key!r} must be of the form section.name")
        sec, name = key.split(".", 1)
        if sec not in sections:
            raise ConfigError(f"unknown configuration section {sec!r}")
        obj = sections[sec]
        if name not in {f.name for f in fields(obj)}:
            raise ConfigError(f"unknown configuration key {key!r}")
        sections[sec] = replace(obj, **{name: _coerce(getattr(obj, name), value, key)})
    return RunConfig(**sections)


def parse_text(text: str) -> dict[str, object]:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        items[key.strip()] = _parse_value(value)
    return items


def load(path: str | Path | None = None, overrides: dict[str, object] | None = None,
         base: RunConfig | None = None) -> RunConfig:
    """Defaults (or ``base``), then the file, then ``overrides``."""
    cfg = base or RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration file {path}: {exc}") from None
        cfg = apply_overrides(cfg, parse_text(text))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
