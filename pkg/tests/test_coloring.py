import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fegrad.ad import ops as anp
from fegrad.coloring import (
    Coloring,
    SparsityPattern,
    augment_with_constraints,
    constraint_jacobian_pattern,
    distance2_coloring,
    is_valid_coloring,
    pattern_from_entries,
    restrict_pattern,
    sparsity_from_mesh,
)
from fegrad.errors import DimensionMismatch
from fegrad.mesh import Block, Mesh, line_mesh, structured_grid


def dense_pattern(D):
    r, c = np.nonzero(D)
    return pattern_from_entries(r, c, *D.shape)


def brute_greedy(D):
    """Reference greedy distance-2 coloring on a dense boolean matrix."""
    n = D.shape[1]
    color = -np.ones(n, dtype=int)
    for j in range(n):
        rows = np.flatnonzero(D[:, j])
        nbr = np.flatnonzero(D[rows].any(axis=0))
        used = set(color[nbr][color[nbr] >= 0])
        c = 0
        while c in used:
            c += 1
        color[j] = c
    return color


def brute_mesh_pattern(mesh, m):
    n = mesh.n_nodes * m
    D = np.zeros((n, n), dtype=bool)
    for conn in mesh.blocks[0].conn:
        dofs = [a * m + k for a in conn for k in range(m)]
        for i, j in itertools.product(dofs, dofs):
            D[i, j] = True
    return D


random_bool = st.builds(
    lambda seed, n, p: np.random.default_rng(seed).random((n, n)) < p,
    st.integers(0, 10_000),
    st.integers(1, 25),
    st.floats(0.02, 0.6),
)


# -- patterns ------------------------------------------------------------------------


def test_mesh_pattern_examples():
    tri = Mesh(2, np.array([[0.0, 0], [1, 0], [0, 1]]), (Block("Tri3", np.array([[0, 1, 2]])),))
    assert sparsity_from_mesh(tri, 1).nnz == 9
    two = structured_grid(1, 1)
    assert two.n_nodes == 4 and sparsity_from_mesh(two, 1).nnz == 14
    chain = sparsity_from_mesh(line_mesh(np.linspace(0, 1, 6)[:, None]), 1)
    D = chain.to_dense()
    np.testing.assert_array_equal(D, np.abs(np.subtract.outer(np.arange(6), np.arange(6))) <= 1)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_mesh_pattern_brute_force(m):
    mesh = structured_grid(3, 2, kind="Quad4")
    pat = sparsity_from_mesh(mesh, m)
    np.testing.assert_array_equal(pat.to_dense(), brute_mesh_pattern(mesh, m))
    assert pat.is_symmetric()
    assert np.all(np.diff(pat.row_ptr) >= 0)
    for i in range(pat.n_rows):
        assert np.all(np.diff(pat.col_idx[pat.row_ptr[i] : pat.row_ptr[i + 1]]) > 0)


def test_pattern_json_round_trip():
    p = sparsity_from_mesh(structured_grid(2, 2), 2)
    q = SparsityPattern.from_json(p.to_json())
    np.testing.assert_array_equal(p.row_ptr, q.row_ptr)
    np.testing.assert_array_equal(p.col_idx, q.col_idx)
    c = distance2_coloring(p)
    d = Coloring.from_json(c.to_json())
    np.testing.assert_array_equal(c.color, d.color)


def test_pattern_from_entries_rejects_out_of_range():
    with pytest.raises(DimensionMismatch):
        pattern_from_entries([0, 3], [0, 0], 3, 3)


@given(random_bool)
def test_restrict_pattern(D):
    p = dense_pattern(D)
    keep = np.flatnonzero(np.arange(D.shape[0]) % 2 == 0)
    np.testing.assert_array_equal(restrict_pattern(p, keep).to_dense(), D[np.ix_(keep, keep)])


# -- constraint patterns --------------------------------------------------------------


def test_constraint_pattern_examples():
    n = 8
    left, right = np.array([0, 1, 2]), np.array([5, 6, 7])

    def pairs(u):
        return anp.getitem(u, right) - anp.getitem(u, left)

    for mode in ("rows", "cols", "auto"):
        B = constraint_jacobian_pattern(pairs, n, mode)
        assert B.n_rows == 3 and np.all(np.diff(B.row_ptr) == 2)
        np.testing.assert_array_equal(B.col_idx, [0, 5, 1, 6, 2, 7])
    S = constraint_jacobian_pattern(lambda u: anp.reshape(anp.sum(u), (1,)), n)
    assert S.nnz == n
    Z = constraint_jacobian_pattern(lambda u: 0.0 * u, n)
    assert Z.nnz == 0
    E = constraint_jacobian_pattern(lambda u: np.zeros(0), n)
    assert E.n_rows == 0


# -- augmentation -----------------------------------------------------------------------


def test_augment_example():
    K = dense_pattern(np.ones((2, 2), dtype=bool))
    B = dense_pattern(np.array([[True, False]]))
    A = augment_with_constraints(K, B)
    # 4 (K) + 1 (B) + 1 (Bᵀ); the multiplier block stays structurally empty
    assert A.n_rows == 3 and A.nnz == 6
    np.testing.assert_array_equal(A.to_dense(), [[1, 1, 1], [1, 1, 0], [1, 0, 0]])
    empty = pattern_from_entries([], [], 0, 2)
    np.testing.assert_array_equal(augment_with_constraints(K, empty).to_dense(), K.to_dense())


def test_augment_errors():
    K = dense_pattern(np.ones((2, 2), dtype=bool))
    with pytest.raises(DimensionMismatch):
        augment_with_constraints(K, dense_pattern(np.ones((1, 3), dtype=bool)))
    with pytest.raises(DimensionMismatch):
        augment_with_constraints(dense_pattern(np.ones((2, 3), dtype=bool)), K)


@given(random_bool, st.integers(0, 10_000))
def test_augment_blocks_and_symmetry(D, seed):
    K = D | D.T
    n = K.shape[0]
    Bd = np.random.default_rng(seed).random((3, n)) < 0.3
    A = augment_with_constraints(dense_pattern(K), dense_pattern(Bd)).to_dense()
    ref = np.block([[K, Bd.T], [Bd, np.zeros((3, 3), bool)]])
    np.testing.assert_array_equal(A, ref)
    assert augment_with_constraints(dense_pattern(K), dense_pattern(Bd)).is_symmetric()


# -- coloring ------------------------------------------------------------------------


def test_coloring_examples():
    diag = distance2_coloring(dense_pattern(np.eye(7, dtype=bool)))
    assert diag.n_colors == 1
    tri = np.abs(np.subtract.outer(np.arange(6), np.arange(6))) <= 1
    c = distance2_coloring(dense_pattern(tri))
    assert c.n_colors == 3
    np.testing.assert_array_equal(c.color, np.arange(6) % 3)
    dense = distance2_coloring(dense_pattern(np.ones((5, 5), dtype=bool)))
    assert dense.n_colors == 5


def test_tridiagonal_minimum_is_three():
    tri = np.abs(np.subtract.outer(np.arange(6), np.arange(6))) <= 1
    pat = dense_pattern(tri)
    for col in itertools.product(range(2), repeat=6):
        assert not is_valid_coloring(pat, Coloring(np.array(col), 2))


@given(random_bool)
def test_coloring_valid_and_matches_reference_greedy(D):
    pat = dense_pattern(D)
    c = distance2_coloring(pat)
    assert is_valid_coloring(pat, c)
    np.testing.assert_array_equal(c.color, brute_greedy(D))
    assert c.n_colors == max(1, c.color.max() + 1)
    # determinism
    np.testing.assert_array_equal(distance2_coloring(pat).color, c.color)


@given(random_bool)
def test_validity_checker_catches_conflicts(D):
    pat = dense_pattern(D)
    rows_with_two = [i for i in range(D.shape[0]) if D[i].sum() >= 2]
    if not rows_with_two:
        return
    cols = np.flatnonzero(D[rows_with_two[0]])[:2]
    c = distance2_coloring(pat)
    bad = c.color.copy()
    bad[cols[1]] = bad[cols[0]]
    assert not is_valid_coloring(pat, Coloring(bad, c.n_colors))


def test_rectangular_pattern_coloring():
    D = np.zeros((3, 5), dtype=bool)
    D[0, [0, 1]] = D[1, [1, 2]] = D[2, [3, 4]] = True
    c = distance2_coloring(dense_pattern(D))
    assert is_valid_coloring(dense_pattern(D), c)
    np.testing.assert_array_equal(c.color, brute_greedy(D))


def test_saddle_point_coloring_valid():
    mesh = structured_grid(4, 4)
    K = sparsity_from_mesh(mesh, 2)
    n = K.n_rows
    left = np.arange(0, 25, 5)
    right = left + 4

    def g(u):
        return anp.getitem(u, 2 * right) - anp.getitem(u, 2 * left)

    A = augment_with_constraints(K, constraint_jacobian_pattern(g, n))
    c = distance2_coloring(A)
    assert len(c.color) == n + 5 and is_valid_coloring(A, c)


def test_color_count_size_independent_2d():
    counts = [distance2_coloring(sparsity_from_mesh(structured_grid(k, k), 2)).n_colors for k in (8, 16, 32)]
    assert len(set(counts)) == 1 and counts[0] <= 48
