import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from conftest import fd_hessian
from fegrad.ad import call_counts, dense_hessian, grad_scalar, ops as anp
from fegrad.coloring import (
    Coloring,
    distance2_coloring,
    is_valid_coloring,
    pattern_from_entries,
    sparsity_from_mesh,
)
from fegrad.errors import DimensionMismatch, PatternTooSmall
from fegrad.mesh import Mesh, structured_grid
from fegrad.operator import Operator
from fegrad.physics.elasticity import (
    ElasticParams,
    elastic_density,
    linear_elastic_density,
    neo_hookean_density,
)
from fegrad.sparse import (
    CsrMatrix,
    check_pattern,
    compressed_jacobian,
    decompress,
    element_dofs,
    element_hessians,
    read_matrix_market,
    scatter_add_assemble,
    sparse_hessian,
    sparse_jacobian,
    spmv,
    write_matrix_market,
)

LAWS = {"linear": linear_elastic_density, "neo-hookean": neo_hookean_density}


def chain_energy(u):
    d = anp.getitem(u, slice(1, None)) - anp.getitem(u, slice(None, -1))
    return anp.sum(d * d)


def tridiag(n):
    r = np.arange(n)
    rows = np.concatenate([r, r[:-1], r[1:]])
    cols = np.concatenate([r, r[1:], r[:-1]])
    return pattern_from_entries(rows, cols, n, n)


def elastic_setup(nx, ny, law, rng, kind="Tri3"):
    m = structured_grid(nx, ny, kind=kind)
    X = m.coords.copy()
    inner = np.all((X > 1e-9) & (X < 1 - 1e-9), axis=1)
    X[inner] += 0.1 / max(nx, ny) * (rng.random((inner.sum(), 2)) - 0.5)
    m = Mesh(2, X, m.blocks)
    op = Operator(m, m=2, batch_size=5)
    density = elastic_density(LAWS[law], ElasticParams.from_E_nu(1.0, 0.3))
    u = 0.02 * rng.standard_normal(2 * m.n_nodes)
    return m, op, density, u


# -- compressed Jacobian and decompression -------------------------------------------------


def test_diagonal_jacobian_single_color():
    n = 7
    u = np.linspace(0.1, 1, n)
    pat = pattern_from_entries(np.arange(n), np.arange(n), n, n)
    c = distance2_coloring(pat)
    assert c.n_colors == 1
    J = compressed_jacobian(lambda x: anp.sin(x), u, c)
    np.testing.assert_allclose(J[:, 0], np.cos(u), atol=1e-15)


def test_chain_energy_three_colors():
    n = 9
    u = np.random.default_rng(0).standard_normal(n)
    pat = tridiag(n)
    c = distance2_coloring(pat)
    assert c.n_colors == 3
    K = sparse_hessian(chain_energy, u, pat, c)
    np.testing.assert_allclose(K.to_dense(), dense_hessian(chain_energy, u), atol=1e-12)
    assert np.abs(K.to_dense() - K.to_dense().T).max() == 0
    rows = K.to_dense().sum(axis=1)
    np.testing.assert_allclose(rows[1:-1], 0, atol=1e-14)
    hand = 2 * (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))
    hand[0, 0] = hand[-1, -1] = 2
    np.testing.assert_allclose(K.to_dense(), hand, atol=1e-14)


@given(st.integers(0, 10_000), st.integers(2, 30), st.floats(0.05, 0.4))
def test_linear_residual_exact_reconstruction(seed, n, p):
    rng = np.random.default_rng(seed)
    A = sps.random(n, n, density=p, random_state=rng, format="csr") + sps.eye(n)
    A.sort_indices()
    pat = pattern_from_entries(*A.nonzero(), n, n)
    c = distance2_coloring(pat)
    Ad = A.toarray()
    K = sparse_jacobian(lambda x: anp.einsum("ij,j->i", Ad, x), rng.standard_normal(n), pat, c)
    assert np.abs(K.to_dense() - A.toarray()).max() <= 1e-15 * max(1.0, np.abs(A).max())


def test_decompress_identity():
    n = 5
    pat = pattern_from_entries(np.arange(n), np.arange(n), n, n)
    c = distance2_coloring(pat)
    K = decompress(np.ones((n, 1)), pat, c)
    np.testing.assert_array_equal(K.to_dense(), np.eye(n))


def test_decompress_shape_errors():
    pat = tridiag(4)
    c = distance2_coloring(pat)
    with pytest.raises(DimensionMismatch):
        decompress(np.ones((4, 2)), pat, c)
    with pytest.raises(DimensionMismatch):
        compressed_jacobian(lambda x: x, np.zeros(5), c)


def test_two_element_hessian_and_off_pattern(rng):
    m, op, density, u = elastic_setup(1, 1, "neo-hookean", rng)
    f = lambda x: op.energy(density, x)  # noqa: E731
    pat = sparsity_from_mesh(m, 2)
    K = sparse_hessian(f, u, pat, distance2_coloring(pat))
    H = dense_hessian(f, u)
    D = pat.to_dense()
    assert np.abs(K.to_dense() - np.where(D, H, 0)).max() < 1e-12
    assert np.abs(H[~D]).max(initial=0.0) < 1e-12


def test_cost_law_one_jvp_per_color(rng):
    m, op, density, u = elastic_setup(5, 5, "linear", rng)
    pat = sparsity_from_mesh(m, 2)
    c = distance2_coloring(pat)
    before = call_counts["jvp"]
    sparse_hessian(lambda x: op.energy(density, x), u, pat, c)
    assert call_counts["jvp"] - before == c.n_colors


def test_parallel_colors_identical(rng):
    m, op, density, u = elastic_setup(4, 4, "neo-hookean", rng)
    pat = sparsity_from_mesh(m, 2)
    c = distance2_coloring(pat)
    f = lambda x: op.energy(density, x)  # noqa: E731
    a = sparse_hessian(f, u, pat, c)
    b = sparse_hessian(f, u, pat, c, parallel=True, workers=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_debug_mode_detects_small_pattern(rng):
    m, op, density, u = elastic_setup(3, 3, "linear", rng)
    f = lambda x: op.energy(density, x)  # noqa: E731
    n = 2 * m.n_nodes
    diag = pattern_from_entries(np.arange(n), np.arange(n), n, n)
    fake = Coloring(np.zeros(n, dtype=np.int64), 1)
    with pytest.raises(PatternTooSmall):
        for seed in range(5):
            K = sparse_hessian(f, u, diag, fake)
            check_pattern(lambda x: grad_scalar(f, x), u, K, rng=seed)
    pat = sparsity_from_mesh(m, 2)
    sparse_hessian(f, u, pat, distance2_coloring(pat), debug=True)


# -- pipeline equivalence ------------------------------------------------------------------


@pytest.mark.parametrize("law", ["linear", "neo-hookean"])
@pytest.mark.parametrize("kind", ["Tri3", "Quad4"])
def test_colored_scatter_dense_agree(law, kind, rng):
    m, op, density, u = elastic_setup(6, 5, law, rng, kind)
    f = lambda x: op.energy(density, x)  # noqa: E731
    pat = sparsity_from_mesh(m, 2)
    c = distance2_coloring(pat)
    assert is_valid_coloring(pat, c)
    Kc = sparse_hessian(f, u, pat, c).to_dense()
    Ks = scatter_add_assemble(density, op, u, pat).to_dense()
    Kd = dense_hessian(f, u)
    scale = np.abs(Kd).max()
    assert np.abs(Kc - Kd).max() / scale < 1e-10
    assert np.abs(Ks - Kd).max() / scale < 1e-10
    assert np.abs(Kc - Kc.T).max() / scale < 1e-10


def test_colored_vs_finite_differences(rng):
    m, op, density, u = elastic_setup(2, 2, "neo-hookean", rng)
    f = lambda x: float(op.energy(density, x))  # noqa: E731
    pat = sparsity_from_mesh(m, 2)
    K = sparse_hessian(lambda x: op.energy(density, x), u, pat, distance2_coloring(pat)).to_dense()
    H = fd_hessian(f, u, h=1e-4)
    assert np.abs(K - H).max() / np.abs(K).max() < 1e-5


def test_scatter_single_element_and_shared_entries(rng):
    m, op, density, u = elastic_setup(1, 1, "neo-hookean", rng)
    pat = sparsity_from_mesh(m, 2)
    He = element_hessians(density, op, u)
    dofs = element_dofs(op, 2)
    K = scatter_add_assemble(density, op, u, pat).to_dense()
    hand = np.zeros_like(K)
    for e in range(2):
        hand[np.ix_(dofs[e], dofs[e])] += He[e]
    np.testing.assert_allclose(K, hand, atol=1e-15)
    # nodes 0 and 3 lie on the shared diagonal
    shared = [0, 1, 6, 7]
    d0 = [list(dofs[0]).index(k) for k in shared]
    d1 = [list(dofs[1]).index(k) for k in shared]
    np.testing.assert_allclose(K[np.ix_(shared, shared)], He[0][np.ix_(d0, d0)] + He[1][np.ix_(d1, d1)], atol=1e-15)

    single = Operator(Mesh(2, m.coords, (m.blocks[0].__class__("Tri3", m.blocks[0].conn[:1]),)), m=2)
    Ks = scatter_add_assemble(density, single, u, pat).to_dense()
    np.testing.assert_allclose(Ks[np.ix_(dofs[0], dofs[0])], He[0], atol=1e-15)


def test_scatter_rejects_small_pattern(rng):
    m, op, density, u = elastic_setup(2, 2, "linear", rng)
    n = 2 * m.n_nodes
    with pytest.raises(PatternTooSmall):
        scatter_add_assemble(density, op, u, pattern_from_entries(np.arange(n), np.arange(n), n, n))


# -- CSR kernels ----------------------------------------------------------------------------


def test_spmv_examples():
    n = 6
    I = CsrMatrix.from_scipy(sps.eye(n))
    x = np.arange(n, dtype=float)
    np.testing.assert_array_equal(spmv(I, x), x)
    T = CsrMatrix.from_scipy(sps.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n)))
    np.testing.assert_array_equal(spmv(T, np.ones(n)), [1, 0, 0, 0, 0, 1])
    with pytest.raises(DimensionMismatch):
        spmv(T, np.ones(n + 1))


@given(st.integers(0, 10_000), st.integers(1, 40), st.integers(1, 40))
def test_spmv_vs_dense(seed, r, c):
    rng = np.random.default_rng(seed)
    A = sps.random(r, c, density=0.3, random_state=rng, format="csr")
    x = rng.standard_normal(c)
    M = CsrMatrix.from_scipy(A)
    np.testing.assert_allclose(M @ x, A.toarray() @ x, atol=1e-13)


def test_matrix_market_round_trip(tmp_path, rng):
    m, op, density, u = elastic_setup(3, 3, "linear", rng)
    pat = sparsity_from_mesh(m, 2)
    K = sparse_hessian(lambda x: op.energy(density, x), u, pat, distance2_coloring(pat))
    write_matrix_market(K, tmp_path / "K.mtx")
    back = read_matrix_market(tmp_path / "K.mtx")
    np.testing.assert_allclose(back.to_dense(), K.to_dense(), rtol=1e-15)
