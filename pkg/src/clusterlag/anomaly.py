"""Entity-level anomalies in the progression from series X to series Y.

Reports are indexed by the X (case) day ``t``. With ``direction=+1`` the X
affinity on day ``t`` is compared with the Y affinity on day ``t + tau``;
``direction=-1`` pairs it with day ``t - tau`` instead.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .ingest import CountPanel


@dataclass(frozen=True, eq=False)
class InconsistencyMatrix:
    matrix: np.ndarray
    entities: tuple[str, ...]
    t: int
    partner: int
    tau: int


@dataclass(frozen=True, eq=False)
class AnomalyReport:
    t: int
    partner: int
    entities: tuple[str, ...]
    scores: np.ndarray
    ranking: tuple[int, ...]
    ldr: np.ndarray | None = None
    ldr_floored: np.ndarray | None = None

    def top(self, n: int) -> list[tuple[str, float]]:
        return [(self.entities[i], float(self.scores[i])) for i in self.ranking[:n]]


def filter_entities(panel_x: CountPanel, threshold: float = 5000, as_of: dt.date | str | None = None) -> list[str]:
    """Entities whose X count on ``as_of`` (default: last day) reaches ``threshold``."""
    t = panel_x.T - 1 if as_of is None else panel_x.date_index(as_of)
    keep = [e for e, v in zip(panel_x.entities, panel_x.values[:, t]) if v >= threshold]
    if not keep:
        top = float(panel_x.values[:, t].max())
        raise DomainError(
            f"no entity has at least {threshold:g} on {panel_x.dates[t]} (largest is {top:g}); lower the threshold"
        )
    return keep


def _partner(t: int, tau: int, direction: int, T: int) -> int:
    if direction not in (1, -1):
        raise DomainError("direction must be +1 or -1")
    u = t + direction * tau
    if not 0 <= t < T or not 0 <= u < T:
        raise DomainError(f"day {t} paired with day {u} falls outside 0..{T - 1}")
    return u


def inconsistency(
    affX: np.ndarray,
    affY: np.ndarray,
    tau: int,
    t: int,
    subset: Sequence[int] | None = None,
    entities: Sequence[str] | None = None,
    direction: int = 1,
) -> InconsistencyMatrix:
    """Entrywise ``|AffX(t) - AffY(t + direction * tau)|`` on the chosen rows/columns."""
    if affX.shape != affY.shape:
        raise DomainError("affinity sequences differ in shape")
    T, n = affX.shape[0], affX.shape[1]
    u = _partner(t, tau, direction, T)
    idx = np.arange(n) if subset is None else np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise DomainError("empty entity subset")
    names = tuple(str(i) for i in range(n)) if entities is None else tuple(entities)
    block = np.ix_(idx, idx)
    inc = np.abs(affX[t][block] - affY[u][block])
    return InconsistencyMatrix(inc, tuple(names[i] for i in idx), t, u, tau)


def anomaly_scores(inc: InconsistencyMatrix) -> np.ndarray:
    return inc.matrix.sum(axis=0)


def rank(scores: np.ndarray) -> tuple[int, ...]:
    """Descending by score; equal scores keep index order."""
    return tuple(int(i) for i in np.lexsort((np.arange(scores.size), -scores)))


def ldr(panel_x: CountPanel, panel_y: CountPanel, tau: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Lag-adjusted ratio ``y(t) / x(t - tau)`` for every entity.

    Also returns a mask of entities whose denominator was floored from 0 or
    missing.
    """
    if not tau <= t < panel_y.T:
        raise DomainError(f"day index {t} must satisfy {tau} <= t < {panel_y.T}")
    return panel_y.values[:, t] / panel_x.values[:, t - tau], panel_x.floored[:, t - tau].copy()


def anomaly_report(
    affX: np.ndarray,
    affY: np.ndarray,
    tau: int,
    t: int,
    subset: Sequence[int] | None = None,
    entities: Sequence[str] | None = None,
    direction: int = 1,
    panels: tuple[CountPanel, CountPanel] | None = None,
) -> AnomalyReport:
    inc = inconsistency(affX, affY, tau, t, subset, entities, direction)
    scores = anomaly_scores(inc)
    ratio = floored = None
    if panels is not None and inc.partner >= tau:
        idx = np.arange(affX.shape[1]) if subset is None else np.asarray(subset)
        full_ratio, full_floor = ldr(panels[0], panels[1], tau, inc.partner)
        ratio, floored = full_ratio[idx], full_floor[idx]
    return AnomalyReport(t, inc.partner, inc.entities, scores, rank(scores), ratio, floored)


def anomaly_timeline(
    affX: np.ndarray,
    affY: np.ndarray,
    tau: int,
    days: Sequence[int],
    subset: Sequence[int] | None = None,
    entities: Sequence[str] | None = None,
    direction: int = 1,
    panels: tuple[CountPanel, CountPanel] | None = None,
) -> list[AnomalyReport]:
    """One report per requested X day; :func:`timeline_rows` turns them into ranked rows."""
    return [anomaly_report(affX, affY, tau, t, subset, entities, direction, panels) for t in days]


def timeline_rows(reports: Sequence[AnomalyReport], top_n: int = 10) -> list[tuple[int, int, list[str]]]:
    """``(x_day, y_day, top entities)`` per report, the layout of a ranked anomaly table."""
    if top_n < 1:
        raise DomainError("top_n must be >= 1")
    return [(r.t, r.partner, [name for name, _ in r.top(top_n)]) for r in reports]
