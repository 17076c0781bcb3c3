"""Per-day distance, affinity and adjacency matrices, and distances between days."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .cluster import Dendrogram, Partition, hierarchical
from .errors import DataError, DomainError

# tags used in the binary dump header
KIND_TAGS = {"D": 0, "Aff": 1, "G1": 2, "G2": 3, "G3": 4, "Adj": 5, "Inc": 6, "DateDist": 7}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}
_HEADER = struct.Struct("<II")


def distance_matrix(log_values: np.ndarray) -> np.ndarray:
    x = np.asarray(log_values, dtype=float).ravel()
    return np.abs(x[:, None] - x[None, :])


def affinity(D: np.ndarray) -> np.ndarray:
    """``1 - D / max(D)``; all ones when every distance is zero."""
    top = D.max()
    if top == 0:
        return np.ones_like(D)
    return 1.0 - D / top


def gaussian_affinity(D: np.ndarray, m: float) -> np.ndarray:
    top = D.max()
    if top == 0:
        return np.ones_like(D)
    r = D / top
    return np.exp(-(m * m) * r * r / 2.0)


def adjacency(labels: np.ndarray) -> np.ndarray:
    lab = np.asarray(labels)
    return (lab[:, None] == lab[None, :]).astype(float)


@dataclass(frozen=True, eq=False)
class DayMatrices:
    D: np.ndarray
    Aff: np.ndarray
    G: dict[int, np.ndarray]
    Adj: np.ndarray
    t: int | None = None

    def get(self, kind: str) -> np.ndarray:
        if kind == "D":
            return self.D
        if kind == "Aff":
            return self.Aff
        if kind == "Adj":
            return self.Adj
        if kind.startswith("G"):
            return self.G[int(kind[1:])]
        raise DomainError(f"unknown matrix kind {kind!r}")


def build_day_matrices(
    log_values: np.ndarray, partition: Partition, m_values: Sequence[int] = (1, 2, 3), t: int | None = None
) -> DayMatrices:
    x = np.asarray(log_values, dtype=float).ravel()
    if partition.labels.size != x.size:
        raise DomainError(f"partition covers {partition.labels.size} entities, data has {x.size}")
    D = distance_matrix(x)
    return DayMatrices(
        D, affinity(D), {int(m): gaussian_affinity(D, m) for m in m_values}, adjacency(partition.labels), t
    )


def matrix_kinds(m_values: Sequence[int] = (1, 2, 3)) -> list[str]:
    return ["Aff", *[f"G{m}" for m in m_values], "Adj"]


def matrix_sequence(log_values: np.ndarray, labels: np.ndarray, kind: str) -> np.ndarray:
    """Stack one matrix kind over all days: ``(T, n, n)``.

    ``log_values`` and ``labels`` are ``(n, T)``.
    """
    x = np.asarray(log_values, dtype=float)
    n, T = x.shape
    out = np.empty((T, n, n))
    for t in range(T):
        if kind == "Adj":
            out[t] = adjacency(labels[:, t])
            continue
        D = distance_matrix(x[:, t])
        if kind == "D":
            out[t] = D
        elif kind == "Aff":
            out[t] = affinity(D)
        elif kind.startswith("G"):
            out[t] = gaussian_affinity(D, int(kind[1:]))
        else:
            raise DomainError(f"unknown matrix kind {kind!r}")
    return out


def date_distances(adjs: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Frobenius distance between every pair of days' adjacency matrices."""
    if len({np.shape(a) for a in adjs}) > 1:
        raise DomainError("adjacency matrices differ in size")
    stack = np.asarray(adjs, dtype=float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise DomainError("expected a sequence of equal-sized square matrices")
    flat = stack.reshape(stack.shape[0], -1)
    # entries are 0/1, so the squared norm of a difference is an exact count
    sq = flat @ flat.T
    norms = np.diag(sq)
    d2 = norms[:, None] + norms[None, :] - 2 * sq
    d2 = np.maximum(np.rint(d2) if np.all((flat == 0) | (flat == 1)) else d2, 0.0)
    out = np.sqrt(d2)
    np.fill_diagonal(out, 0.0)
    return out


def trivial_prefix(adjs: Sequence[np.ndarray] | np.ndarray) -> int:
    """Length of the leading run of identical adjacency matrices.

    Returns 0 when every day is identical, so the whole range stays in play.
    """
    stack = np.asarray(adjs)
    run = 1
    while run < len(stack) and np.array_equal(stack[run], stack[0]):
        run += 1
    return 0 if run == len(stack) else run


def cluster_evolution_dendrogram(
    dd: np.ndarray, skip: int = 0, labels: Sequence[str] | None = None, linkage: str = "ward"
) -> Dendrogram:
    """Hierarchically cluster days ``skip..T-1`` by their adjacency distances."""
    T = dd.shape[0]
    if not 0 <= skip < T:
        raise DomainError(f"skip must lie in [0, {T}), got {skip}")
    names = [str(i) for i in range(T)] if labels is None else [str(x) for x in labels]
    return hierarchical(dd[skip:, skip:], linkage, names[skip:])


# ---------------------------------------------------------------------------
# dumps


def write_matrix_csv(path: str | Path, M: np.ndarray, labels: Sequence[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if labels is not None:
            fh.write(",".join(["", *labels]) + "\n")
        for i, row in enumerate(np.asarray(M, dtype=float)):
            cells = [repr(float(v)) for v in row]
            fh.write(",".join(([labels[i]] if labels is not None else []) + cells) + "\n")


def write_matrices(fh: BinaryIO, matrices: Iterable[np.ndarray], kind: str) -> None:
    """Append records of ``<u32 n><u32 kind tag>`` followed by ``n*n`` little-endian f64."""
    tag = KIND_TAGS[kind]
    for M in matrices:
        M = np.asarray(M, dtype="<f8")
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DomainError("only square matrices can be dumped")
        fh.write(_HEADER.pack(M.shape[0], tag))
        fh.write(np.ascontiguousarray(M).tobytes(order="C"))


def save_matrices(path: str | Path, matrices: Iterable[np.ndarray], kind: str) -> None:
    with open(path, "wb") as fh:
        write_matrices(fh, matrices, kind)


def load_matrices(path: str | Path) -> tuple[str, np.ndarray]:
    data = Path(path).read_bytes()
    pos = 0
    kind = None
    out = []
    while pos < len(data):
        if pos + _HEADER.size > len(data):
            raise DataError(f"{path}: truncated header at byte {pos}")
        n, tag = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        if tag not in TAG_KINDS:
            raise DataError(f"{path}: unknown matrix kind tag {tag}")
        if kind is not None and TAG_KINDS[tag] != kind:
            raise DataError(f"{path}: mixed matrix kinds")
        kind = TAG_KINDS[tag]
        nbytes = 8 * n * n
        if pos + nbytes > len(data):
            raise DataError(f"{path}: truncated matrix body at byte {pos}")
        out.append(np.frombuffer(data, dtype="<f8", count=n * n, offset=pos).reshape(n, n))
        pos += nbytes
    if kind is None:
        raise DataError(f"{path}: empty matrix dump")
    return kind, np.stack(out)
