"""Temporal offset between two series.

Both estimators use the same sign convention: a positive offset means series
Y lags series X, so X on day ``t`` is compared with Y on day ``t + offset``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError

CURVE_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class OffsetResult:
    offset: int
    curve: dict[int, float]
    kind: str
    scan: tuple[int, int]
    start_date: str | None = None
    normalized: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def objective_min(self) -> float:
        return self.curve[self.offset]

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "offset": self.offset,
            "objective_min": self.objective_min,
            "scan": list(self.scan),
            "start_date": self.start_date,
            "normalized": self.normalized,
        }


def _overlap(T: int, lag: int) -> tuple[slice, slice]:
    """Index ranges pairing X[s] with Y[s + lag]."""
    lo = max(0, -lag)
    hi = min(T, T - lag)
    return slice(lo, hi), slice(lo + lag, hi + lag)


def _argmin(curve: dict[int, float]) -> int:
    best = min(curve.values())
    tol = CURVE_TIE_RTOL * max(abs(best), 1.0)
    tied = [o for o, v in curve.items() if v - best <= tol]
    return min(tied, key=lambda o: (abs(o), o))


def _check_scan(scan: tuple[int, int]) -> tuple[int, int]:
    lo, hi = int(scan[0]), int(scan[1])
    if lo > hi:
        raise DomainError(f"empty scan range {scan}")
    return lo, hi


def series_evolution_offset(
    kX: Sequence[float],
    kY: Sequence[float],
    scan: tuple[int, int] = (0, 60),
    normalize: bool = True,
) -> OffsetResult:
    """Shift minimizing the L1 gap between the two cluster-count curves.

    With ``normalize`` the summed gap is divided by the overlap length;
    otherwise the plain sum is used.
    """
    x = np.asarray(kX, dtype=float)
    y = np.asarray(kY, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("cluster-count sequences must be 1-D and of equal length")
    T = x.size
    lo, hi = _check_scan(scan)
    curve: dict[int, float] = {}
    for lag in range(lo, hi + 1):
        if abs(lag) >= T:
            continue
        sx, sy = _overlap(T, lag)
        gap = np.abs(x[sx] - y[sy])
        curve[lag] = float(gap.mean() if normalize else gap.sum())
    if not curve:
        raise DomainError("no candidate offset has a non-empty overlap")
    return OffsetResult(_argmin(curve), curve, "series_evolution", (lo, hi), normalized=normalize)


def consistency_objective(MX: np.ndarray, MY: np.ndarray, lag: int) -> float:
    """Mean Frobenius distance between X's matrix on day ``s`` and Y's on day ``s + lag``."""
    T = MX.shape[0]
    sx, sy = _overlap(T, lag)
    diff = MX[sx] - MY[sy]
    norms = np.sqrt((diff * diff).sum(axis=(1, 2)))
    return float(norms.sum() / (T - abs(lag)))


def consistency_objective_pairs(MX: np.ndarray, MY: np.ndarray, lag: int) -> float:
    """Same quantity as :func:`consistency_objective`, summed over all day pairs
    ``(s, t)`` with ``t - s == lag``; kept as a cross-check."""
    T = MX.shape[0]
    total = 0.0
    for s in range(T):
        for t in range(T):
            if t - s == lag:
                total += float(np.linalg.norm(MX[s] - MY[t], "fro"))
    return total / (T - abs(lag))


def consistency_offset(
    MX: np.ndarray,
    MY: np.ndarray,
    scan: tuple[int, int] = (0, 40),
    kind: str = "Aff",
    start_date: str | None = None,
) -> OffsetResult:
    """Shift minimizing the normalized total offset difference of two matrix sequences."""
    MX = np.asarray(MX, dtype=float)
    MY = np.asarray(MY, dtype=float)
    if MX.shape != MY.shape or MX.ndim != 3:
        raise DomainError("matrix sequences must both be (T, n, n) with equal shapes")
    T = MX.shape[0]
    lo, hi = _check_scan(scan)
    curve = {lag: consistency_objective(MX, MY, lag) for lag in range(lo, hi + 1) if abs(lag) < T}
    if not curve:
        raise DomainError("scan range has no offset shorter than the series")
    return OffsetResult(_argmin(curve), curve, f"consistency:{kind}", (lo, hi), start_date)


def offset_curve_report(result: OffsetResult) -> dict:
    """Curve as sorted ``(offset, objective)`` rows plus a unimodality check.

    ``local_minima`` counts strict local minima after collapsing runs of equal
    values; a curve that is one flat run is flagged ``plateau``.
    """
    if not result.curve:
        raise DomainError("empty objective curve")
    rows = sorted(result.curve.items())
    values = [v for _, v in rows]
    runs = [values[0]]
    for v in values[1:]:
        if not math.isclose(v, runs[-1], rel_tol=CURVE_TIE_RTOL, abs_tol=CURVE_TIE_RTOL):
            runs.append(v)
    plateau = len(runs) == 1
    minima = 0
    if not plateau:
        for i, v in enumerate(runs):
            left = runs[i - 1] if i > 0 else math.inf
            right = runs[i + 1] if i + 1 < len(runs) else math.inf
            if v < left and v < right:
                minima += 1
    return {
        "kind": result.kind,
        "rows": rows,
        "local_minima": minima,
        "plateau": plateau,
        "offset": result.offset,
    }
