import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterlag.cluster import Partition, ckmeans_1d
from clusterlag.errors import DataError, DomainError
from clusterlag.matrices import (
    adjacency,
    affinity,
    build_day_matrices,
    cluster_evolution_dendrogram,
    date_distances,
    distance_matrix,
    gaussian_affinity,
    load_matrices,
    matrix_sequence,
    save_matrices,
    trivial_prefix,
)


def _part(labels):
    labels = np.asarray(labels)
    return Partition(labels, None, None)


def test_two_entity_example():
    # counts e and e**3 -> log values 1 and 3
    m = build_day_matrices(np.array([1.0, 3.0]), _part([2, 1]))
    assert m.D.tolist() == [[0.0, 2.0], [2.0, 0.0]]
    assert m.Aff.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert m.G[1][0, 1] == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert m.G[2][0, 1] == pytest.approx(math.exp(-2.0), rel=1e-15)
    assert m.G[3][0, 1] == pytest.approx(math.exp(-4.5), rel=1e-15)
    assert m.Adj.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert m.get("G2") is m.G[2]
    with pytest.raises(DomainError):
        m.get("Q")


def test_all_equal_day_is_all_ones():
    x = np.zeros(5)
    m = build_day_matrices(x, _part([1] * 5))
    assert (m.D == 0).all()
    for M in (m.Aff, m.G[1], m.G[2], m.G[3], m.Adj):
        assert (M == 1).all()


def test_adjacency_block_structure():
    A = adjacency(np.array([1, 2, 1, 3, 2]))
    expected = np.array(
        [[1, 0, 1, 0, 0], [0, 1, 0, 0, 1], [1, 0, 1, 0, 0], [0, 0, 0, 1, 0], [0, 1, 0, 0, 1]], dtype=float
    )
    assert np.array_equal(A, expected)
    order = np.argsort([1, 2, 1, 3, 2], kind="stable")
    P = A[np.ix_(order, order)]
    assert np.array_equal(P[:2, :2], np.ones((2, 2)))
    assert np.array_equal(P[2:4, 2:4], np.ones((2, 2)))
    assert P[:2, 2:].sum() == 0


def test_partition_size_mismatch():
    with pytest.raises(DomainError):
        build_day_matrices(np.arange(3.0), _part([1, 2]))


@settings(max_examples=100)
@given(st.lists(st.floats(0, 15, allow_nan=False), min_size=2, max_size=12), st.integers(1, 4))
def test_day_invariants(values, k):
    x = np.array(values)
    k = min(k, np.unique(x).size)
    m = build_day_matrices(x, ckmeans_1d(x, k))
    for M in (m.D, m.Aff, m.G[1], m.G[2], m.G[3], m.Adj):
        assert np.array_equal(M, M.T)
    assert (np.diag(m.D) == 0).all()
    for M in (m.Aff, m.G[1], m.G[2], m.G[3], m.Adj):
        assert (np.diag(M) == 1).all()
        assert (M >= 0).all() and (M <= 1).all()
    assert set(np.unique(m.Adj).tolist()) <= {0.0, 1.0}
    if m.D.max() > 0:
        assert m.Aff.min() == 0.0
        # larger m gives a faster decay
        assert (m.G[3] <= m.G[2] + 1e-15).all() and (m.G[2] <= m.G[1] + 1e-15).all()


@settings(max_examples=50)
@given(st.lists(st.floats(0, 15, allow_nan=False), min_size=2, max_size=10), st.floats(0.1, 10))
def test_affinity_scale_invariant(values, c):
    D = distance_matrix(np.array(values))
    assert np.allclose(affinity(c * D), affinity(D), atol=1e-12)
    assert np.allclose(gaussian_affinity(c * D, 2), gaussian_affinity(D, 2), atol=1e-12)


def test_adjacency_is_equivalence_relation():
    rng = np.random.default_rng(1)
    A = adjacency(rng.integers(1, 4, 9)).astype(bool)
    assert A.diagonal().all() and (A == A.T).all()
    for i, j, l in itertools.product(range(9), repeat=3):
        if A[i, j] and A[j, l]:
            assert A[i, l]


def test_date_distance_extremes():
    n = 6
    one = adjacency(np.ones(n))
    single = adjacency(np.arange(n))
    dd = date_distances([one, single])
    assert dd[0, 1] == math.sqrt(n * n - n)


def test_date_distance_single_move():
    # entity 0 moves from a cluster of size 2 to one of size 3 (5 entities)
    a = adjacency(np.array([1, 1, 2, 2, 3]))
    b = adjacency(np.array([2, 1, 2, 2, 3]))
    changed = int(sum(a[i, j] != b[i, j] for i in range(5) for j in range(5)))
    # loses 1 partner (1), gains 2 (2, 3); each counted twice
    assert changed == 2 * (1 + 2)
    assert date_distances([a, b])[0, 1] == math.sqrt(6)


@settings(max_examples=40)
@given(st.lists(st.lists(st.integers(1, 3), min_size=5, max_size=5), min_size=3, max_size=6))
def test_date_distance_metric(label_rows):
    adjs = [adjacency(np.array(r)) for r in label_rows]
    dd = date_distances(adjs)
    T = len(adjs)
    assert np.array_equal(dd, dd.T) and (np.diag(dd) == 0).all()
    for i in range(T):
        for j in range(T):
            assert dd[i, j] == np.linalg.norm(adjs[i] - adjs[j])
            for l in range(T):
                assert dd[i, l] <= dd[i, j] + dd[j, l] + 1e-12


def test_date_distance_size_mismatch():
    with pytest.raises(DomainError):
        date_distances([np.eye(3), np.eye(4)])


def test_trivial_prefix():
    a, b = adjacency(np.ones(4)), adjacency(np.array([1, 1, 2, 2]))
    assert trivial_prefix([a, a, a, b, a]) == 3
    assert trivial_prefix([a, b]) == 1
    assert trivial_prefix([a, a, a]) == 0


def test_constant_partition_dendrogram_has_zero_heights():
    adjs = [adjacency(np.array([1, 1, 2]))] * 4
    dendro = cluster_evolution_dendrogram(date_distances(adjs), linkage="average")
    assert all(m.height == 0 for m in dendro.merges)
    with pytest.raises(DomainError):
        cluster_evolution_dendrogram(date_distances(adjs), skip=4)


def test_evolution_dendrogram_separates_regimes():
    early = [adjacency(np.ones(6))] * 3
    late = [adjacency(np.array([1, 1, 1, 2, 2, 2]))] * 3
    dd = date_distances(early + late)
    dendro = cluster_evolution_dendrogram(dd, labels=[f"d{i}" for i in range(6)])
    assert dendro.merges[-1].height > 0
    assert dendro.leaf_labels[0] == "d0"
    skipped = cluster_evolution_dendrogram(dd, skip=2)
    assert len(skipped.leaf_labels) == 4


def test_matrix_sequence_matches_day_builder():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 8, (5, 4))
    labels = rng.integers(1, 3, (5, 4))
    for kind in ("D", "Aff", "G1", "G3", "Adj"):
        seq = matrix_sequence(x, labels, kind)
        for t in range(4):
            assert np.array_equal(seq[t], build_day_matrices(x[:, t], _part(labels[:, t])).get(kind))
    with pytest.raises(DomainError):
        matrix_sequence(x, labels, "Z")


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    mats = rng.uniform(size=(3, 4, 4))
    path = tmp_path / "aff.bin"
    save_matrices(path, mats, "Aff")
    kind, back = load_matrices(path)
    assert kind == "Aff"
    assert np.array_equal(back, mats)
    assert path.stat().st_size == 3 * (8 + 8 * 16)


def test_binary_errors(tmp_path):
    path = tmp_path / "m.bin"
    save_matrices(path, [np.eye(3)], "D")
    raw = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-4])
    with pytest.raises(DataError, match="truncated"):
        load_matrices(tmp_path / "short.bin")
    (tmp_path / "tag.bin").write_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    with pytest.raises(DataError, match="unknown"):
        load_matrices(tmp_path / "tag.bin")
    with open(tmp_path / "mixed.bin", "wb") as fh:
        from clusterlag.matrices import write_matrices

        write_matrices(fh, [np.eye(2)], "D")
        write_matrices(fh, [np.eye(2)], "Adj")
    with pytest.raises(DataError, match="mixed"):
        load_matrices(tmp_path / "mixed.bin")
    (tmp_path / "empty.bin").write_bytes(b"")
    with pytest.raises(DataError):
        load_matrices(tmp_path / "empty.bin")
    with pytest.raises(DomainError):
        save_matrices(tmp_path / "x.bin", [np.ones((2, 3))], "D")
