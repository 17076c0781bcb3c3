"""Choosing the number of clusters for each day.

Six internal validity indices each nominate a cluster count; their mean is
exponentially smoothed over time and rounded to give the daily count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cluster import Partition, ckmeans_1d_path, lloyd_kmeans
from .errors import DomainError

INDEX_NAMES = ("ptbiserial", "silhouette", "kl", "cindex", "mcclain", "dunn")
MAXIMIZE = {"ptbiserial": True, "silhouette": True, "kl": True, "cindex": False, "mcclain": False, "dunn": True}

# gap under which two index values count as tied; every index is scale-free
TIE_RTOL = 1e-9
TIE_ATOL = 1e-12


@dataclass(frozen=True)
class KEstimate:
    per_index: dict[str, int]
    k_av: float
    t: int | None = None
    degenerate: bool = False
    scores: dict[str, dict[int, float]] = field(default_factory=dict, repr=False)

    def as_row(self) -> list[int]:
        return [self.per_index[name] for name in INDEX_NAMES]


@dataclass(frozen=True, eq=False)
class SmoothedK:
    k_hat: np.ndarray
    smoothed: np.ndarray
    raw: np.ndarray
    alpha: float


class PairwiseStats:
    """Condensed pairwise distances of one day's data, reused across candidate ``k``."""

    def __init__(self, dist: np.ndarray):
        d = np.asarray(dist, dtype=float)
        n = d.shape[0]
        self.n = n
        self.dist = d
        self.iu = np.triu_indices(n, 1)
        self.pairs = d[self.iu]
        self.sorted_pairs = np.sort(self.pairs)
        self.cum = np.concatenate([[0.0], np.cumsum(self.sorted_pairs)])

    def within(self, labels: np.ndarray) -> np.ndarray:
        return labels[self.iu[0]] == labels[self.iu[1]]


def _ptbiserial(ps: PairwiseStats, within: np.ndarray) -> float:
    nw = int(within.sum())
    nb = within.size - nw
    if nw == 0 or nb == 0:
        return math.nan
    sd = ps.pairs.std()
    if sd == 0:
        return math.nan
    mb = ps.pairs[~within].mean()
    mw = ps.pairs[within].mean()
    return float((mb - mw) * math.sqrt(nw * nb) / (within.size * sd))


def _cindex(ps: PairwiseStats, within: np.ndarray) -> float:
    nw = int(within.sum())
    if nw == 0:
        return math.nan
    s = ps.pairs[within].sum()
    s_min = ps.cum[nw]
    s_max = ps.cum[-1] - ps.cum[-1 - nw]
    if s_max == s_min:
        return math.nan
    return float((s - s_min) / (s_max - s_min))


def _mcclain(ps: PairwiseStats, within: np.ndarray) -> float:
    nw = int(within.sum())
    nb = within.size - nw
    if nw == 0 or nb == 0:
        return math.nan
    mb = ps.pairs[~within].mean()
    if mb == 0:
        return math.nan
    return float(ps.pairs[within].mean() / mb)


def _dunn(ps: PairwiseStats, within: np.ndarray) -> float:
    if within.all():
        return math.nan
    sep = ps.pairs[~within].min()
    diam = ps.pairs[within].max() if within.any() else 0.0
    if sep == 0:
        return 0.0
    if diam == 0:
        return math.inf
    return float(sep / diam)


def _silhouette(ps: PairwiseStats, labels: np.ndarray) -> float:
    k = int(labels.max())
    if k < 2:
        return math.nan
    onehot = np.zeros((ps.n, k))
    onehot[np.arange(ps.n), labels - 1] = 1.0
    sums = ps.dist @ onehot
    sizes = onehot.sum(axis=0)
    own = labels - 1
    own_size = sizes[own]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[np.arange(ps.n), own] / (own_size - 1)
        mean_other = sums / sizes
    mean_other[np.arange(ps.n), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own_size == 1] = 0.0
    return float(s.mean())


def _kl_scores(wcss: dict[int, float], p: int, candidates: Sequence[int]) -> dict[int, float]:
    def diff(k: int) -> float:
        return (k - 1) ** (2 / p) * wcss[k - 1] - k ** (2 / p) * wcss[k]

    out = {}
    for k in candidates:
        if k - 1 not in wcss or k + 1 not in wcss:
            continue  # undefined without both neighbours
        den = abs(diff(k + 1))
        if den == 0:
            continue
        out[k] = abs(diff(k)) / den
    return out


def _pick(scores: dict[int, float], maximize: bool) -> int | None:
    vals = {k: v for k, v in scores.items() if not math.isnan(v)}
    if not vals:
        return None
    best = max(vals.values()) if maximize else min(vals.values())
    if math.isinf(best):
        return min(k for k, v in vals.items() if v == best)
    tol = max(TIE_RTOL * abs(best), TIE_ATOL)
    return min(k for k, v in vals.items() if abs(v - best) <= tol)


def score_partitions(
    partitions: dict[int, Partition], dist: np.ndarray, candidates: Sequence[int], dim: int
) -> dict[str, dict[int, float]]:
    """Evaluate all six indices for each candidate ``k``.

    ``partitions`` must also contain ``k - 1`` and ``k + 1`` where available;
    the KL index is skipped at candidates lacking either neighbour.
    """
    ps = PairwiseStats(dist)
    scores: dict[str, dict[int, float]] = {name: {} for name in INDEX_NAMES}
    for k in candidates:
        labels = partitions[k].labels
        within = ps.within(labels)
        scores["ptbiserial"][k] = _ptbiserial(ps, within)
        scores["silhouette"][k] = _silhouette(ps, labels)
        scores["cindex"][k] = _cindex(ps, within)
        scores["mcclain"][k] = _mcclain(ps, within)
        scores["dunn"][k] = _dunn(ps, within)
    scores["kl"] = _kl_scores({k: p.wcss for k, p in partitions.items()}, dim, candidates)
    return scores


def pairwise_distances(values: np.ndarray) -> np.ndarray:
    pts = np.asarray(values, dtype=float)
    if pts.ndim == 1:
        return np.abs(pts[:, None] - pts[None, :])
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def index_scores(
    values: np.ndarray,
    dist: np.ndarray | None = None,
    k_range: tuple[int, int] = (2, 20),
    t: int | None = None,
    seed: int = 0,
    restarts: int = 10,
) -> KEstimate:
    """Nominate a cluster count with each of the six indices for one day.

    Scalar data is partitioned by :func:`ckmeans_1d_path`; vector data (shape
    ``(n, w)``) by :func:`lloyd_kmeans`. The scan is capped at the number of
    distinct points. Fewer than two distinct points gives the degenerate
    estimate with every index at 1.
    """
    k_min, k_max = k_range
    if k_min < 2 or k_max < k_min:
        raise DomainError(f"invalid k range {k_range}")
    pts = np.asarray(values, dtype=float)
    vector = pts.ndim == 2 and pts.shape[1] > 1
    if pts.ndim == 2 and not vector:
        pts = pts[:, 0]
    n = pts.shape[0]
    distinct = np.unique(pts, axis=0).shape[0] if vector else np.unique(pts).size
    if distinct < 2:
        return KEstimate({name: 1 for name in INDEX_NAMES}, 1.0, t, degenerate=True)

    hi = min(k_max, distinct, n - 1) if n > 2 else 2
    lo = min(k_min, hi)
    candidates = list(range(lo, hi + 1))
    k_top = min(hi + 1, n)

    if vector:
        def part(k: int) -> Partition:
            return lloyd_kmeans(pts, k, seed=seed, restarts=restarts)

        partitions = {k: part(k) for k in range(lo - 1, k_top + 1)}
        dim = pts.shape[1]
    else:
        path = ckmeans_1d_path(pts, k_top)
        partitions = {k: path[k - 1] for k in range(max(lo - 1, 1), k_top + 1)}
        dim = 1
    if dist is None:
        dist = pairwise_distances(pts)

    scores = score_partitions(partitions, dist, candidates, dim)
    per_index = {}
    for name in INDEX_NAMES:
        pick = _pick(scores[name], MAXIMIZE[name])
        per_index[name] = lo if pick is None else pick
    k_av = sum(per_index.values()) / len(per_index)
    return KEstimate(per_index, k_av, t, False, scores)


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def smooth_k(raw: Sequence[float], alpha: float = 0.3) -> SmoothedK:
    """Simple exponential smoothing of the averaged counts, then rounding.

    ``s[0] = raw[0]`` and ``s[t] = alpha * raw[t] + (1 - alpha) * s[t-1]``;
    the integer count is ``s`` rounded half up and floored at 1.
    """
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    r = np.asarray(raw, dtype=float)
    if r.size == 0:
        raise DomainError("raw sequence is empty")
    s = np.empty_like(r)
    s[0] = r[0]
    for i in range(1, r.size):
        s[i] = alpha * r[i] + (1 - alpha) * s[i - 1]
    k_hat = np.maximum(round_half_up(s), 1)
    return SmoothedK(k_hat, s, r, alpha)


def estimate_series(
    days: Sequence[np.ndarray],
    k_range: tuple[int, int] = (2, 20),
    seed: int = 0,
    restarts: int = 10,
    workers: int = 1,
    progress: Callable[[int], None] | None = None,
) -> list[KEstimate]:
    """Run :func:`index_scores` for each day, optionally in a process pool.

    Vector days get seed ``seed + t`` so results do not depend on scheduling.
    """
    jobs = [(np.asarray(v), k_range, t, seed + t, restarts) for t, v in enumerate(days)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_estimate_job, jobs, chunksize=4))
    out = []
    for job in jobs:
        out.append(_estimate_job(job))
        if progress is not None:
            progress(job[2])
    return out


def _estimate_job(job: tuple) -> KEstimate:
    values, k_range, t, seed, restarts = job
    return index_scores(values, None, k_range, t, seed, restarts)
