import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from fegrad.ad import grad_scalar, ops as anp
from fegrad.coloring import (
    distance2_coloring,
    pattern_from_entries,
    restrict_pattern,
    sparsity_from_mesh,
)
from fegrad.errors import (
    BreakdownError,
    IndexOutOfRange,
    MaxIterationsExceeded,
    SingularMatrix,
)
from fegrad.mesh import Block, Mesh, Plane, boundary_nodes, structured_grid
from fegrad.operator import Operator
from fegrad.physics.elasticity import ElasticParams, elastic_energy, neo_hookean_density
from fegrad.solver import (
    NewtonOptions,
    cg_solve,
    direct_solve,
    fixed_dofs,
    gmres_solve,
    newton_assembled,
    newton_matrix_free,
    reduced_functional,
)
from fegrad.sparse import CsrMatrix


def spd(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    return M @ M.T + n * np.eye(n)


def quadratic(A, b):
    return lambda u: 0.5 * anp.sum(u * anp.einsum("ij,j->i", A, u)) - anp.sum(b * u)


def clamped_elastic(n, law=None, stretch=0.0):
    """Unit square clamped on x=0 with u_x = stretch on x=1."""
    mesh = structured_grid(n, n)
    op = Operator(mesh, m=2)
    params = ElasticParams.from_E_nu(1.0, 0.3)
    psi = elastic_energy(op, params) if law is None else elastic_energy(op, params, law)
    left = boundary_nodes(mesh, Plane(0, 0.0))
    right = boundary_nodes(mesh, Plane(0, 1.0))
    dofs = np.concatenate([fixed_dofs(left, [0, 1], 2), fixed_dofs(right, 0, 2)])
    vals = np.concatenate([np.zeros(2 * len(left)), np.full(len(right), stretch)])
    red = reduced_functional(psi, 2 * mesh.n_nodes, (dofs, vals))
    pat = restrict_pattern(sparsity_from_mesh(mesh, 2), red.free_dofs)
    return red, pat, distance2_coloring(pat)


# -- CG -----------------------------------------------------------------------------


def test_cg_examples():
    x, rep = cg_solve(np.array([[4.0, 1], [1, 3]]), [1.0, 2.0], tol=1e-14)
    np.testing.assert_allclose(x, [1 / 11, 7 / 11], atol=1e-15)
    assert rep.converged
    b = np.arange(1.0, 6.0)
    x, rep = cg_solve(np.eye(5), b)
    np.testing.assert_array_equal(x, b)
    assert rep.iterations == 1
    x, rep = cg_solve(np.eye(5), np.zeros(5))
    assert rep.iterations == 0 and not x.any()


@given(st.integers(0, 10_000), st.integers(2, 30))
def test_cg_residual_and_a_norm_monotone(seed, n):
    A = spd(n, seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    xs = np.linalg.solve(A, b)
    errs = []
    x, rep = cg_solve(A, b, tol=1e-12)
    assert rep.converged and np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 1.0001
    for k in range(1, rep.iterations + 1):
        xk, _ = cg_solve(A, b, tol=0.0, max_iter=k)
        e = xk - xs
        errs.append(e @ A @ e)
    assert all(b_ <= a_ * (1 + 1e-10) + 1e-28 for a_, b_ in zip(errs, errs[1:]))


def test_cg_breakdown():
    with pytest.raises(BreakdownError):
        cg_solve(np.array([[1.0, 0], [0, -1.0]]), [0.0, 1.0])


def test_cg_jacobi_preconditioner():
    A = np.diag([1.0, 100.0, 1e4]) + 0.1
    b = np.ones(3)
    x, rep = cg_solve(A, b, tol=1e-12, precond=np.diag(A))
    np.testing.assert_allclose(A @ x, b, atol=1e-10)


# -- GMRES -----------------------------------------------------------------------------


def test_gmres_examples():
    x, rep = gmres_solve(np.array([[2.0, 1], [0, 1]]), [3.0, 1.0], tol=1e-14)
    np.testing.assert_allclose(x, [1, 1], atol=1e-14)
    x, rep = gmres_solve(np.eye(4), np.ones(4))
    assert rep.iterations == 1
    np.testing.assert_allclose(x, 1.0)


@given(st.integers(0, 10_000), st.integers(2, 25))
def test_gmres_agrees_with_cg(seed, n):
    A = spd(n, seed)
    b = np.random.default_rng(seed).standard_normal(n)
    xg, rg = gmres_solve(A, b, tol=1e-13)
    xc, rc = cg_solve(A, b, tol=1e-13)
    assert rg.converged and rc.converged
    assert np.abs(xg - xc).max() <= 1e-10 * max(1.0, np.abs(xc).max())


@given(st.integers(0, 10_000), st.integers(5, 40), st.integers(3, 8))
def test_gmres_nonsymmetric_with_restart(seed, n, restart):
    rng = np.random.default_rng(seed)
    A = n * np.eye(n) + rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    x, rep = gmres_solve(A, b, tol=1e-11, restart=restart, max_iter=50 * n)
    assert rep.converged
    assert np.linalg.norm(A @ x - b) <= 1.01e-11 * np.linalg.norm(b)


# -- direct --------------------------------------------------------------------------------


def test_direct_examples():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(direct_solve(np.eye(3), b), b)
    K = np.array([[2.0, 0, 1], [0, 2, 1], [1, 1, 0]])
    x = direct_solve(CsrMatrix.from_scipy(sps.csr_matrix(K)), np.ones(3))
    np.testing.assert_allclose(x, np.linalg.solve(K, np.ones(3)), atol=1e-15)
    np.testing.assert_allclose(x, [0.5, 0.5, 0.0], atol=1e-15)


def test_direct_vs_cg():
    A = spd(50, 3)
    b = np.random.default_rng(3).standard_normal(50)
    xd = direct_solve(CsrMatrix.from_scipy(sps.csr_matrix(A)), b)
    xc, _ = cg_solve(A, b, tol=1e-14)
    assert np.abs(xd - xc).max() < 1e-9


@given(st.integers(0, 10_000), st.integers(3, 30), st.integers(1, 5))
def test_direct_saddle_point(seed, n, nc):
    rng = np.random.default_rng(seed)
    K = spd(n, seed)
    B = rng.standard_normal((nc, n))
    A = np.block([[K, B.T], [B, np.zeros((nc, nc))]])
    b = rng.standard_normal(n + nc)
    x = direct_solve(CsrMatrix.from_scipy(sps.csr_matrix(A)), b)
    res = np.abs(A @ x - b).max()
    assert res <= 1e-10 * (np.abs(A).sum(1).max() * np.abs(x).max() + np.abs(b).max())


def test_direct_singular():
    with pytest.raises(SingularMatrix):
        direct_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))


# -- reduced functional ----------------------------------------------------------------------


def test_reduced_all_and_none_fixed():
    f = lambda u: anp.sum(u * u * u)  # noqa: E731
    red = reduced_functional(f, 4, {0: 1.0, 1: 2.0, 2: 3.0, 3: 4.0})
    assert red.n_free == 0
    assert float(red(np.zeros(0))) == 100.0
    assert grad_scalar(red, np.zeros(0)).shape == (0,)
    ident = reduced_functional(f, 4, {})
    u = np.arange(4.0)
    assert float(ident(u)) == float(f(u))
    np.testing.assert_array_equal(grad_scalar(ident, u), 3 * u**2)


@given(st.integers(0, 10_000))
def test_reduced_gradient_is_restriction(seed):
    rng = np.random.default_rng(seed)
    n = 10
    A, b = spd(n, seed), rng.standard_normal(n)
    fixed = np.sort(rng.choice(n, n // 2, replace=False))
    vals = rng.standard_normal(fixed.size) + 1.0
    red = reduced_functional(quadratic(A, b), n, (fixed, vals))
    uf = rng.standard_normal(red.n_free)
    full = np.zeros(n)
    full[fixed], full[red.free_dofs] = vals, uf
    np.testing.assert_array_equal(red.lift(uf), full)
    np.testing.assert_array_equal(red.reduce(full), uf)
    g = grad_scalar(red, uf)
    F = red.free_dofs
    np.testing.assert_allclose(g, A[np.ix_(F, F)] @ uf + A[np.ix_(F, fixed)] @ vals - b[F], atol=1e-12)
    # Newton from anywhere hits the condensed solution in one step
    u, rep = newton_assembled(
        red, uf, *_dense_pattern(red.n_free), NewtonOptions(tol_abs=1e-10, tol_rel=0.0)
    )
    ref = np.linalg.solve(A[np.ix_(F, F)], b[F] - A[np.ix_(F, fixed)] @ vals)
    np.testing.assert_allclose(u, ref, atol=1e-10)
    assert rep.iterations == 1


def _dense_pattern(n):
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    p = pattern_from_entries(r.ravel(), c.ravel(), n, n)
    return p, distance2_coloring(p)


def test_reduced_rejects_bad_indices():
    f = lambda u: anp.sum(u)  # noqa: E731
    with pytest.raises(IndexOutOfRange):
        reduced_functional(f, 3, {5: 0.0})
    with pytest.raises(IndexOutOfRange):
        reduced_functional(f, 3, ([1, 1], [0.0, 0.0]))


# -- Newton ------------------------------------------------------------------------------------


def test_newton_quadratic_one_iteration():
    red, pat, col = clamped_elastic(5, stretch=0.01)
    u0 = np.zeros(red.n_free)
    ua, ra = newton_assembled(red, u0, pat, col)
    um, rm = newton_matrix_free(red, u0, NewtonOptions(inner_tol=1e-12))
    assert ra.iterations == 1 and rm.iterations == 1
    assert np.abs(ua - um).max() < 1e-8
    _, r0 = newton_assembled(red, ua, pat, col, NewtonOptions(tol_abs=1e-10))
    assert r0.iterations == 0


def test_newton_neo_hookean_single_element():
    mesh = Mesh(2, np.array([[0.0, 0], [1, 0], [0, 1]]), (Block("Tri3", np.array([[0, 1, 2]])),))
    psi = elastic_energy(Operator(mesh, m=2), ElasticParams.from_E_nu(1.0, 0.3), neo_hookean_density)
    red = reduced_functional(psi, 6, {0: 0.0, 1: 0.0, 3: 0.0, 2: 0.05})
    pat, col = _dense_pattern(red.n_free)
    u, rep = newton_assembled(red, np.zeros(red.n_free), pat, col, NewtonOptions(tol_abs=1e-10, tol_rel=0.0))
    assert rep.converged and rep.iterations <= 6
    assert np.linalg.norm(grad_scalar(red, u)) <= 1e-10


def test_newton_quadratic_convergence_neo_hookean():
    red, pat, col = clamped_elastic(6, neo_hookean_density, stretch=0.08)
    u, rep = newton_assembled(red, np.zeros(red.n_free), pat, col, NewtonOptions(tol_abs=1e-12, tol_rel=0.0))
    assert rep.converged
    h = np.array(rep.history)
    # steps that land on the round-off floor say nothing about the rate
    above = np.flatnonzero(h[1:] > 1e3 * np.finfo(float).eps * h[0])
    ratios = h[1:][above] / h[:-1][above] ** 2
    assert len(ratios) >= 3 and np.all(ratios[-3:] < 10.0)
    um, rm = newton_matrix_free(
        red, np.zeros(red.n_free), NewtonOptions(tol_abs=1e-12, tol_rel=0.0, inner_tol=1e-12)
    )
    assert rm.converged
    assert np.abs(u - um).max() <= 10 * 1e-12


def test_newton_max_iterations():
    red, pat, col = clamped_elastic(4, neo_hookean_density, stretch=0.1)
    with pytest.raises(MaxIterationsExceeded) as exc:
        newton_assembled(red, np.zeros(red.n_free), pat, col, NewtonOptions(max_iter=1, tol_rel=0.0))
    assert exc.value.report is not None and not exc.value.report.converged


def test_newton_gmres_inner_and_log(tmp_path):
    red, pat, col = clamped_elastic(4, neo_hookean_density, stretch=0.05)
    log = tmp_path / "newton.csv"
    opts = NewtonOptions(tol_rel=0.0, inner="gmres", inner_tol=1e-12, log_path=str(log))
    u, rep = newton_matrix_free(red, np.zeros(red.n_free), opts)
    lines = log.read_text().splitlines()
    assert lines[0] == "k,residual_norm,inner_iterations"
    assert len(lines) == rep.iterations + 2
    assert all(n > 0 for n in rep.inner_iterations)


def test_line_search_option():
    red, pat, col = clamped_elastic(4, neo_hookean_density, stretch=0.1)
    u, rep = newton_assembled(red, np.zeros(red.n_free), pat, col, NewtonOptions(tol_rel=0.0, line_search=True))
    assert rep.converged
