"""Synthetic paired panels with a known lag, for tests and demos."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .ingest import CountPanel


def logistic_counts(n: int, length: int, quiet: int, seed: int = 0) -> np.ndarray:
    """Cumulative integer counts ``(n, length)``: zero for ``quiet`` days, then
    logistic growth in log space with entity-specific onset, rate and size."""
    rng = np.random.default_rng(seed)
    size = rng.uniform(2.0, 12.0, n)
    onset = quiet + rng.uniform(5.0, 0.6 * max(length - quiet, 10), n)
    scale = rng.uniform(3.0, 10.0, n)
    u = np.arange(length)[None, :]
    logc = size[:, None] / (1.0 + np.exp(-(u - onset[:, None]) / scale[:, None]))
    counts = np.floor(np.exp(logc))
    counts[:, :quiet] = 0.0
    # cumulative series never decrease
    return np.maximum.accumulate(counts, axis=1)


def shifted_pair(
    n: int = 20, T: int = 150, lag: int = 16, seed: int = 0, start: dt.date = dt.date(2020, 1, 1)
) -> tuple[CountPanel, CountPanel]:
    """Panels with ``Y(t) = X(t - lag)`` for ``t >= lag``.

    Both series begin with enough all-zero days that their cluster-count
    curves also line up exactly under the shift.
    """
    quiet = lag + 10
    latent = logistic_counts(n, T + lag, quiet, seed)
    entities = [f"E{i:02d}" for i in range(n)]
    dates = [start + dt.timedelta(days=i) for i in range(T)]
    x = CountPanel.from_raw(entities, dates, latent[:, lag:], "x")
    y = CountPanel.from_raw(entities, dates, latent[:, :T], "y")
    return x, y
