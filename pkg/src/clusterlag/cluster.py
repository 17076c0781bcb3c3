"""Clustering engines.

* :func:`ckmeans_1d` -- globally optimal k-means on the real line by dynamic
  programming over the sorted values.
* :func:`lloyd_kmeans` -- Lloyd iterations with k-means++ seeding and restarts,
  for vector data.
* :func:`hierarchical` -- agglomerative clustering of a precomputed distance
  matrix via the Lance-Williams update.

Partitions use labels ``1..k`` with label 1 for the cluster holding the
largest values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DomainError

LINKAGES = ("average", "complete", "ward")


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of ``n`` items to clusters ``1..k``.

    ``centroids`` is ``(k,)`` for scalar data, ``(k, w)`` for vector data, and
    ``None`` for partitions read off a dendrogram (no coordinates).
    """

    labels: np.ndarray
    centroids: np.ndarray | None
    wcss: float | None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    @property
    def n(self) -> int:
        return int(self.labels.size)


def wcss_of(points: np.ndarray, labels: np.ndarray) -> float:
    """Total within-cluster sum of squares, recomputed from scratch."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    total = 0.0
    for lab in np.unique(labels):
        member = pts[labels == lab]
        total += float(((member - member.mean(axis=0)) ** 2).sum())
    return total


# ---------------------------------------------------------------------------
# optimal univariate k-means


def _segment_costs(xs: np.ndarray) -> np.ndarray:
    """``cost[s, t]`` = sum of squares of ``xs[s..t]`` around its mean (``inf`` for s > t)."""
    n = xs.size
    p1 = np.concatenate([[0.0], np.cumsum(xs)])
    p2 = np.concatenate([[0.0], np.cumsum(xs * xs)])
    s = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    length = (t - s + 1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        seg_sum = p1[t + 1] - p1[s]
        cost = (p2[t + 1] - p2[s]) - seg_sum * seg_sum / length
    cost = np.maximum(cost, 0.0)
    cost[s > t] = np.inf
    return cost


def _dp_tables(xs: np.ndarray, k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Fill the DP over sorted ``xs`` for every cluster count up to ``k_max``.

    ``best[j, t]`` is the minimal cost of splitting ``xs[:t+1]`` into ``j+1``
    clusters; ``start[j, t]`` is the first index of the last cluster.
    """
    n = xs.size
    seg = _segment_costs(xs)
    best = np.full((k_max, n), np.inf)
    start = np.zeros((k_max, n), dtype=np.int64)
    best[0] = seg[0]
    for j in range(1, k_max):
        # candidate last cluster xs[s..t] with s >= j so earlier clusters are non-empty
        prev = np.full(n, np.inf)
        prev[j:] = best[j - 1, j - 1 : n - 1]
        total = prev[:, None] + seg
        start[j] = np.argmin(total, axis=0)  # first minimum -> lowest split index
        best[j] = total[start[j], np.arange(n)]
    return best, start


def _backtrack(start: np.ndarray, k: int, n: int) -> list[int]:
    bounds = []
    t = n - 1
    for j in range(k - 1, -1, -1):
        s = int(start[j, t]) if j else 0
        bounds.append(s)
        t = s - 1
    return bounds[::-1]


def _partition_from_sorted(values: np.ndarray, order: np.ndarray, bounds: list[int]) -> Partition:
    n = values.size
    k = len(bounds)
    sorted_labels = np.empty(n, dtype=np.int64)
    edges = bounds + [n]
    for j in range(k):
        # sorted ascending, so the last segment is the highest and gets label 1
        sorted_labels[edges[j] : edges[j + 1]] = k - j
    labels = np.empty(n, dtype=np.int64)
    labels[order] = sorted_labels
    xs = values[order]
    centroids = np.array([xs[edges[j] : edges[j + 1]].mean() for j in range(k)])[::-1]
    wcss = float(sum(((xs[edges[j] : edges[j + 1]] - centroids[k - 1 - j]) ** 2).sum() for j in range(k)))
    return Partition(labels, centroids, wcss)


def _sorted_input(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError("cannot cluster an empty sequence")
    if not np.isfinite(arr).all():
        raise DomainError("values must be finite")
    return arr, np.argsort(arr, kind="stable")


def ckmeans_1d(values: Sequence[float], k: int) -> Partition:
    """Optimal ``k``-cluster partition of scalar values (minimum total WCSS).

    >>> ckmeans_1d([1, 2, 10, 11], 2).labels.tolist()
    [2, 2, 1, 1]
    """
    arr, order = _sorted_input(values)
    if not 1 <= k <= arr.size:
        raise DomainError(f"k must lie in [1, {arr.size}], got {k}")
    xs = arr[order]
    _, start = _dp_tables(xs - np.median(xs), k)
    return _partition_from_sorted(arr, order, _backtrack(start, k, arr.size))


def ckmeans_1d_path(values: Sequence[float], k_max: int) -> list[Partition]:
    """Optimal partitions for every ``k`` in ``1..k_max`` from a single DP pass."""
    arr, order = _sorted_input(values)
    if not 1 <= k_max <= arr.size:
        raise DomainError(f"k_max must lie in [1, {arr.size}], got {k_max}")
    xs = arr[order]
    _, start = _dp_tables(xs - np.median(xs), k_max)
    return [_partition_from_sorted(arr, order, _backtrack(start, k, arr.size)) for k in range(1, k_max + 1)]


# ---------------------------------------------------------------------------
# Lloyd k-means


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    lab = np.argmin(d2, axis=1)
    return lab, d2[np.arange(points.shape[0]), lab]


def _repair_empty(points: np.ndarray, lab: np.ndarray, d2: np.ndarray, k: int) -> int:
    """Move the point farthest from its centroid into each empty cluster."""
    repaired = 0
    for c in range(k):
        if (lab == c).any():
            continue
        sizes = np.bincount(lab, minlength=k)
        movable = sizes[lab] > 1
        cand = np.where(movable, d2, -1.0)
        idx = int(np.argmax(cand))
        lab[idx] = c
        d2[idx] = 0.0
        repaired += 1
    return repaired


def _lloyd_once(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, list[float], int]:
    centers = _kmeanspp(points, k, rng)
    history: list[float] = []
    repaired = 0
    lab = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        lab, d2 = _assign(points, centers)
        repaired += _repair_empty(points, lab, d2, k)
        centers = np.array([points[lab == c].mean(axis=0) for c in range(k)])
        obj = float(((points - centers[lab]) ** 2).sum())
        history.append(obj)
        if len(history) > 1 and history[-2] - obj <= tol * max(history[-2], 1e-300):
            break
    return lab, centers, history[-1], history, repaired


def lloyd_kmeans(
    vectors: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> Partition:
    """Best of ``restarts`` Lloyd runs; deterministic for a fixed ``seed``.

    Labels are ordered by descending mean centroid component. ``meta`` holds
    the objective history of the winning restart and the number of empty
    clusters that had to be repaired.
    """
    pts = np.asarray(vectors, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n == 0:
        raise DomainError("cannot cluster an empty point set")
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}], got {k}")
    if restarts < 1:
        raise DomainError("restarts must be >= 1")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        run = _lloyd_once(pts, k, rng, max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    lab, centers, obj, history, repaired = best

    rank = np.argsort(-centers.mean(axis=1), kind="stable")
    relabel = np.empty(k, dtype=np.int64)
    relabel[rank] = np.arange(1, k + 1)
    centroids = centers[rank]
    if np.asarray(vectors).ndim == 1:
        centroids = centroids[:, 0]
    meta = {"history": history, "repaired_empty": repaired, "distinct_points": int(np.unique(pts, axis=0).shape[0])}
    return Partition(relabel[lab], centroids, obj, meta)


# ---------------------------------------------------------------------------
# agglomerative clustering


@dataclass(frozen=True)
class Merge:
    step: int
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Merge tree in the usual convention: leaves are ``0..n-1`` and the node
    created at step ``i`` has id ``n + i``."""

    merges: tuple[Merge, ...]
    leaf_labels: tuple[str, ...]
    linkage: str = "ward"

    @property
    def n(self) -> int:
        return len(self.leaf_labels)

    def to_dict(self) -> dict[str, Any]:
        return {
            "linkage": self.linkage,
            "leaves": list(self.leaf_labels),
            "merges": [
                {"step": m.step, "left": m.left, "right": m.right, "height": m.height, "size": m.size}
                for m in self.merges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_newick(self) -> str:
        n = self.n
        if n == 1:
            return f"{_newick_name(self.leaf_labels[0])};"
        heights = {i: 0.0 for i in range(n)}
        text = {i: _newick_name(lab) for i, lab in enumerate(self.leaf_labels)}
        for m in self.merges:
            node = n + m.step
            heights[node] = m.height
            parts = []
            for child in (m.left, m.right):
                parts.append(f"{text.pop(child)}:{_fmt(m.height - heights[child])}")
            text[node] = f"({','.join(parts)})"
        (root,) = text.values()
        return root + ";"

    def linkage_matrix(self) -> np.ndarray:
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float)


def _newick_name(label: str) -> str:
    if any(ch in label for ch in " ():,;[]'"):
        return "'" + label.replace("'", "''") + "'"
    return label


def _fmt(x: float) -> str:
    return repr(float(max(x, 0.0)))


def _check_distance(dist: np.ndarray) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DomainError("distance matrix must be square")
    if not np.isfinite(d).all():
        raise DomainError("distance matrix must be finite")
    if (d < 0).any():
        raise DomainError("distance matrix has negative entries")
    if not np.array_equal(d, d.T):
        if not np.allclose(d, d.T, rtol=1e-12, atol=1e-12):
            raise DomainError("distance matrix is not symmetric")
        d = (d + d.T) / 2
    if np.any(np.diag(d) != 0):
        raise DomainError("distance matrix must have a zero diagonal")
    return d


def hierarchical(
    dist: np.ndarray, linkage: str = "ward", labels: Sequence[str] | None = None
) -> Dendrogram:
    """Agglomerative clustering of a precomputed distance matrix.

    Ties in the closest pair are broken toward the lowest ``(i, j)`` slot
    pair; the merged cluster keeps slot ``i``. Ward heights follow the
    Lance-Williams recurrence on unsquared distances (scipy's convention).
    """
    if linkage not in LINKAGES:
        raise DomainError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    d = _check_distance(dist).copy()
    n = d.shape[0]
    if n == 0:
        raise DomainError("need at least one item")
    leaf_labels = tuple(str(i) for i in range(n)) if labels is None else tuple(str(x) for x in labels)
    if len(leaf_labels) != n:
        raise DomainError("label count does not match matrix size")

    active = np.ones(n, dtype=bool)
    size = np.ones(n, dtype=np.int64)
    node = np.arange(n)
    np.fill_diagonal(d, np.inf)
    merges = []
    for step in range(n - 1):
        sub = np.where(active[:, None] & active[None, :], d, np.inf)
        upper = np.triu(sub, 1)
        upper[np.tril_indices(n)] = np.inf
        flat = int(np.argmin(upper))  # row-major first minimum = lowest (i, j)
        i, j = divmod(flat, n)
        h = float(upper[i, j])
        ni, nj = size[i], size[j]
        others = active.copy()
        others[[i, j]] = False
        dik, djk = d[i, others], d[j, others]
        if linkage == "average":
            new = (ni * dik + nj * djk) / (ni + nj)
        elif linkage == "complete":
            new = np.maximum(dik, djk)
        else:
            nk = size[others]
            new = np.sqrt(((ni + nk) * dik**2 + (nj + nk) * djk**2 - nk * h**2) / (ni + nj + nk))
        d[i, others] = new
        d[others, i] = new
        merges.append(Merge(step, int(min(node[i], node[j])), int(max(node[i], node[j])), h, int(ni + nj)))
        active[j] = False
        size[i] = ni + nj
        node[i] = n + step
    return Dendrogram(tuple(merges), leaf_labels, linkage)


def cut_dendrogram(dendro: Dendrogram, k: int) -> Partition:
    """Undo the ``k - 1`` last merges.

    Clusters are numbered by their lowest leaf index, so a dendrogram over
    dates yields labels in chronological order of first appearance.
    """
    n = dendro.n
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}], got {k}")
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    members: dict[int, int] = {i: i for i in range(n)}  # node id -> representative leaf
    for m in dendro.merges[: n - k]:
        a, b = find(members[m.left]), find(members[m.right])
        lo, hi = min(a, b), max(a, b)
        parent[hi] = lo
        members[n + m.step] = lo
    roots = [find(i) for i in range(n)]
    order = {r: c + 1 for c, r in enumerate(sorted(set(roots)))}
    labels = np.array([order[r] for r in roots], dtype=np.int64)
    return Partition(labels, None, None, {"source": "dendrogram", "linkage": dendro.linkage})
