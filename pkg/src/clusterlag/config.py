"""Run configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cluster import LINKAGES
from .errors import ConfigError
from .ingest import Schema

OUTPUT_ENV = "CLUSTERLAG_OUTPUT_DIR"


def _default_output() -> str:
    return os.environ.get(OUTPUT_ENV, "clusterlag-out")


@dataclass
class RunConfig:
    input: str = ""
    output: str = field(default_factory=_default_output)
    schema: Schema = field(default_factory=Schema)
    start: str | None = None
    end: str | None = None
    exclude: list[str] = field(default_factory=list)
    series: str = "x"  # analyze only: "x" or "y"

    mode: str = "daily"  # "daily" (exact 1-D) or "rolling" (Lloyd on windows)
    window: int = 3
    alpha: float = 0.3
    k_min: int = 2
    k_max: int = 20
    seed: int = 0
    restarts: int = 10
    workers: int = 1

    linkage: str = "ward"
    skip_x: int | None = None
    skip_y: int | None = None
    m_values: list[int] = field(default_factory=lambda: [1, 2, 3])

    delta_scan: list[int] = field(default_factory=lambda: [0, 60])
    tau_scan: list[int] = field(default_factory=lambda: [0, 40])
    delta_normalized: bool = True
    start_dates: list[str] = field(default_factory=list)

    threshold: float = 5000
    as_of: str | None = None
    tau: int | None = None  # anomaly offset; None uses the Aff consistency offset
    direction: int = 1
    anomaly_dates: list[str] = field(default_factory=list)
    anomaly_step: int = 10
    top_n: int = 10

    dump_matrices: bool = False

    def validate(self) -> "RunConfig":
        if not self.input:
            raise ConfigError("no input CSV given")
        if self.series not in ("x", "y"):
            raise ConfigError("series must be 'x' or 'y'")
        if self.mode not in ("daily", "rolling"):
            raise ConfigError("mode must be 'daily' or 'rolling'")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError("need 2 <= k_min <= k_max")
        if self.restarts < 1 or self.workers < 1:
            raise ConfigError("restarts and workers must be >= 1")
        if self.linkage not in LINKAGES:
            raise ConfigError(f"linkage must be one of {LINKAGES}")
        if not self.m_values or any(m <= 0 for m in self.m_values):
            raise ConfigError("m_values must be positive")
        for name in ("delta_scan", "tau_scan"):
            scan = getattr(self, name)
            if len(scan) != 2 or scan[0] > scan[1]:
                raise ConfigError(f"{name} must be [lo, hi] with lo <= hi")
        if self.direction not in (1, -1):
            raise ConfigError("direction must be 1 or -1")
        if self.top_n < 1 or self.anomaly_step < 1:
            raise ConfigError("top_n and anomaly_step must be >= 1")
        for name in ("start", "end", "as_of"):
            _check_date(name, getattr(self, name))
        for d in [*self.start_dates, *self.anomaly_dates]:
            _check_date("date list entry", d)
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_date(name: str, value: str | None) -> None:
    if value is None:
        return
    try:
        dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{name}: {value!r} is not an ISO date") from exc


def _coerce(cfg: RunConfig, key: str, value: Any) -> Any:
    fields = {f.name: f for f in dataclasses.fields(cfg)}
    if key not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    if key == "schema":
        if not isinstance(value, dict):
            raise ConfigError("schema must be a table")
        try:
            return Schema(**value)
        except TypeError as exc:
            raise ConfigError(f"bad schema: {exc}") from exc
    if isinstance(value, dt.date):
        return value.isoformat()
    if key in ("start_dates", "anomaly_dates"):
        return [v.isoformat() if isinstance(v, dt.date) else str(v) for v in value]
    return value


def bundle_config(bundle: str | Path) -> dict[str, Any]:
    """The configuration saved alongside a previous run's outputs."""
    path = Path(bundle) / "config.json"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{bundle} has no readable config.json: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    base: dict[str, Any] | None = None,
) -> RunConfig:
    """Build a :class:`RunConfig` from ``base`` (e.g. a bundle's saved config),
    then an optional TOML file, then overrides.

    Overrides whose value is ``None`` are ignored.
    """
    cfg = RunConfig()
    for key, value in (base or {}).items():
        setattr(cfg, key, _coerce(cfg, key, value))
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    for key, value in {**data, **{k: v for k, v in (overrides or {}).items() if v is not None}}.items():
        setattr(cfg, key, _coerce(cfg, key, value))
    try:
        return cfg.validate()
    except TypeError as exc:
        raise ConfigError(f"config value has the wrong type: {exc}") from exc
