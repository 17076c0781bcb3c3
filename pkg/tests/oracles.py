"""Brute-force reference computations used as independent test oracles."""

from __future__ import annotations

import itertools

import numpy as np


def wcss_direct(points, groups) -> float:
    total = 0.0
    for g in groups:
        arr = np.asarray([points[i] for i in g], dtype=float)
        total += float(((arr - arr.mean(axis=0)) ** 2).sum())
    return total


def min_wcss_contiguous(values, k: int) -> float:
    """Minimum WCSS over every way to cut the sorted values into ``k`` runs."""
    xs = sorted(values)
    n = len(xs)
    best = np.inf
    for cuts in itertools.combinations(range(1, n), k - 1):
        edges = (0, *cuts, n)
        cost = 0.0
        for a, b in zip(edges, edges[1:]):
            seg = xs[a:b]
            m = sum(seg) / len(seg)
            cost += sum((v - m) ** 2 for v in seg)
        best = min(best, cost)
    return best


def set_partitions(n: int, k: int):
    """All partitions of ``range(n)`` into exactly ``k`` non-empty blocks."""

    def rec(i, blocks):
        if i == n:
            if len(blocks) == k:
                yield [list(b) for b in blocks]
            return
        if len(blocks) + (n - i) < k:
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1, blocks)
            b.pop()
        if len(blocks) < k:
            blocks.append([i])
            yield from rec(i + 1, blocks)
            blocks.pop()

    yield from rec(0, [])


def min_wcss_all_partitions(values, k: int) -> float:
    return min(wcss_direct(values, p) for p in set_partitions(len(values), k))


def min_wcss_two_groups(points: np.ndarray) -> tuple[float, np.ndarray]:
    """Exhaustive minimum WCSS over all 2-partitions of a small point set."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    codes = np.arange(1, 2 ** (n - 1), dtype=np.int64)  # item n-1 fixed in group 0
    mask = ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    n1 = mask.sum(axis=1)
    n0 = n - n1
    s1 = mask @ pts
    s0 = pts.sum(axis=0) - s1
    sq = float((pts**2).sum())
    w = sq - (s1**2).sum(axis=1) / n1 - (s0**2).sum(axis=1) / n0
    i = int(np.argmin(w))
    return float(w[i]), mask[i].astype(bool)
