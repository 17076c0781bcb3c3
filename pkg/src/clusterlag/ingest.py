"""Loading and preparing paired count panels.

A panel holds ``n`` entities observed on ``T`` consecutive days. Counts are
cumulative and are floored at 1 so that their logarithm is defined.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schema:
    """Column names of the long-format input CSV."""

    date: str = "date"
    entity: str = "location"
    x: str = "total_cases"
    y: str = "total_deaths"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_axes(entities: Sequence[str], dates: Sequence[dt.date], shape: tuple[int, ...]) -> None:
    if shape[:2] != (len(entities), len(dates)):
        raise DomainError(
            f"values shape {shape[:2]} does not match axes ({len(entities)}, {len(dates)})"
        )
    if list(entities) != sorted(entities) or len(set(entities)) != len(entities):
        raise DomainError("entities must be unique and sorted ascending")
    for a, b in zip(dates, dates[1:]):
        if (b - a).days != 1:
            raise DomainError(f"dates must be contiguous daily, got {a} -> {b}")


@dataclass(frozen=True, eq=False)
class CountPanel:
    """Preprocessed counts, shape ``(n, T)``, every value >= 1.

    ``floored`` marks cells that were zero or missing before preprocessing.
    """

    entities: tuple[str, ...]
    dates: tuple[dt.date, ...]
    values: np.ndarray
    floored: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "dates", tuple(self.dates))
        values = np.asarray(self.values, dtype=float)
        _check_axes(self.entities, self.dates, values.shape)
        if values.ndim != 2:
            raise DomainError("count panel values must be 2-D")
        if np.isnan(values).any() or (values < 1).any():
            raise DomainError("count panel values must be >= 1; run preprocess first")
        floored = self.floored
        floored = np.zeros(values.shape, bool) if floored is None else np.asarray(floored, bool)
        if floored.shape != values.shape:
            raise DomainError("floored mask shape mismatch")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "floored", _frozen(floored))

    @classmethod
    def from_raw(
        cls, entities: Sequence[str], dates: Sequence[dt.date], raw: np.ndarray, name: str = ""
    ) -> "CountPanel":
        raw = np.asarray(raw, dtype=float)
        return cls(entities, dates, preprocess(raw), floor_mask(raw), name)

    @property
    def n(self) -> int:
        return len(self.entities)

    @property
    def T(self) -> int:
        return len(self.dates)

    def date_index(self, day: dt.date | str) -> int:
        day = _as_date(day)
        offset = (day - self.dates[0]).days
        if not 0 <= offset < self.T:
            raise DomainError(f"date {day} outside panel range {self.dates[0]}..{self.dates[-1]}")
        return offset

    def truncate(self, start: dt.date | str | None = None, end: dt.date | str | None = None) -> "CountPanel":
        i = 0 if start is None else self.date_index(start)
        j = self.T - 1 if end is None else self.date_index(end)
        if j - i + 1 < 2:
            raise DomainError("truncated panel has fewer than 2 dates")
        return CountPanel(
            self.entities, self.dates[i : j + 1], self.values[:, i : j + 1],
            self.floored[:, i : j + 1], self.name,
        )

    def select(self, entities: Iterable[str]) -> "CountPanel":
        keep = set(entities)
        rows = [i for i, e in enumerate(self.entities) if e in keep]
        return CountPanel(
            [self.entities[i] for i in rows], self.dates, self.values[rows],
            self.floored[rows], self.name,
        )


@dataclass(frozen=True, eq=False)
class LogPanel:
    entities: tuple[str, ...]
    dates: tuple[dt.date, ...]
    values: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        _check_axes(self.entities, self.dates, values.shape)
        if (values < 0).any():
            raise DomainError("log panel values must be >= 0")
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n(self) -> int:
        return len(self.entities)

    @property
    def T(self) -> int:
        return len(self.dates)


@dataclass(frozen=True, eq=False)
class RollingPanel:
    """Trailing windows of log counts, shape ``(n, T, w)``."""

    entities: tuple[str, ...]
    dates: tuple[dt.date, ...]
    values: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise DomainError("rolling panel values must be 3-D")
        _check_axes(self.entities, self.dates, values.shape)
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def w(self) -> int:
        return self.values.shape[2]


def _as_date(day: dt.date | str) -> dt.date:
    if isinstance(day, dt.datetime):
        return day.date()
    if isinstance(day, dt.date):
        return day
    return dt.date.fromisoformat(str(day))


def floor_mask(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    return np.isnan(raw) | (raw == 0)


def preprocess(raw: np.ndarray) -> np.ndarray:
    """Replace zero and missing entries with 1; positive entries pass through.

    >>> preprocess(np.array([0.0, np.nan, 3.0])).tolist()
    [1.0, 1.0, 3.0]
    """
    raw = np.asarray(raw, dtype=float)
    if (raw < 0).any():
        raise DomainError("counts must be nonnegative")
    return np.where(floor_mask(raw), 1.0, raw)


def log_transform(panel: CountPanel) -> LogPanel:
    if (panel.values < 1).any():
        raise DomainError("internal invariant violated: count below 1 after preprocessing")
    return LogPanel(panel.entities, panel.dates, np.log(panel.values), panel.name)


def rolling_window(panel: LogPanel, w: int = 3) -> RollingPanel:
    """Stack the trailing ``w`` days of each series; early days repeat the first value."""
    if w < 1:
        raise DomainError("window length must be >= 1")
    if w > panel.T:
        raise DomainError(f"window length {w} exceeds series length {panel.T}")
    padded = np.concatenate([np.repeat(panel.values[:, :1], w - 1, axis=1), panel.values], axis=1)
    windows = np.lib.stride_tricks.sliding_window_view(padded, w, axis=1)
    return RollingPanel(panel.entities, panel.dates, windows, panel.name)


def _coerce_counts(frame: pd.DataFrame, column: str) -> np.ndarray:
    text = frame[column]
    values = pd.to_numeric(text, errors="coerce")
    bad = values.isna() & text.notna() & (text.astype(str).str.strip() != "")
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(
            f"non-numeric value {text.iloc[row]!r} in column {column!r} at data row {row} "
            f"(line {row + 2})"
        )
    neg = values < 0
    if neg.any():
        row = int(np.flatnonzero(neg.to_numpy())[0])
        raise DataError(f"negative count in column {column!r} at data row {row} (line {row + 2})")
    return values.to_numpy(dtype=float)


def parse_csv(
    path: str | Path,
    schema: Schema = Schema(),
    start: dt.date | str | None = None,
    end: dt.date | str | None = None,
    exclude: Iterable[str] = (),
) -> tuple[CountPanel, CountPanel]:
    """Read a long-format CSV into two aligned panels (series X and series Y).

    Missing (entity, date) cells and explicit zeros both become 1. Entities
    with no observation at all in one of the two count columns are dropped.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except pd.errors.ParserError as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from exc

    missing = [c for c in (schema.date, schema.entity, schema.x, schema.y) if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")

    try:
        days = pd.to_datetime(frame[schema.date], format="ISO8601").dt.date
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable date: {exc}") from exc
    xs = _coerce_counts(frame, schema.x)
    ys = _coerce_counts(frame, schema.y)
    long = pd.DataFrame({"entity": frame[schema.entity].astype(str), "date": days, "x": xs, "y": ys})

    drop = set(exclude)
    if drop:
        long = long[~long["entity"].isin(drop)]
    observed = long.groupby("entity")[["x", "y"]].count()
    one_sided = observed[(observed["x"] == 0) ^ (observed["y"] == 0)].index.tolist()
    if one_sided:
        log.warning("dropping %d entities present in only one series: %s", len(one_sided), one_sided)
        long = long[~long["entity"].isin(one_sided)]
    # entity set is fixed before clipping so n does not depend on the date range
    entities = sorted(long["entity"].unique())
    if start is not None:
        long = long[long["date"] >= _as_date(start)]
    if end is not None:
        long = long[long["date"] <= _as_date(end)]
    if long.empty:
        raise DomainError("no rows left after date clipping and exclusions")

    dup = long.duplicated(["entity", "date"])
    if dup.any():
        row = long[dup].iloc[0]
        raise DataError(f"duplicate row for entity {row['entity']!r} on {row['date']}")

    lo = _as_date(start) if start is not None else long["date"].min()
    hi = _as_date(end) if end is not None else long["date"].max()
    dates = [lo + dt.timedelta(days=i) for i in range((hi - lo).days + 1)]
    if len(dates) < 2:
        raise DomainError("need at least 2 dates")

    panels = []
    for col, name in (("x", schema.x), ("y", schema.y)):
        wide = long.pivot(index="entity", columns="date", values=col)
        wide = wide.reindex(index=entities, columns=dates)
        panels.append(CountPanel.from_raw(entities, dates, wide.to_numpy(dtype=float), name))
    return panels[0], panels[1]


def emit_csv(panel_x: CountPanel, panel_y: CountPanel, path: str | Path, schema: Schema = Schema()) -> None:
    """Write two aligned panels in the long format :func:`parse_csv` reads.

    Floored cells are written as 0 so that re-parsing restores the mask.
    """
    if panel_x.entities != panel_y.entities or panel_x.dates != panel_y.dates:
        raise DomainError("panels must share entity and date axes")
    rows = []
    for i, entity in enumerate(panel_x.entities):
        for t, day in enumerate(panel_x.dates):
            rows.append((
                day.isoformat(), entity,
                0.0 if panel_x.floored[i, t] else panel_x.values[i, t],
                0.0 if panel_y.floored[i, t] else panel_y.values[i, t],
            ))
    frame = pd.DataFrame(rows, columns=[schema.date, schema.entity, schema.x, schema.y])
    frame.to_csv(path, index=False, encoding="utf-8")
