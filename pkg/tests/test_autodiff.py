import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_fd_gradient, fd_hessian
from fegrad.ad import Dual, Tape, call_counts, dense_hessian, grad_scalar, hvp, jvp, ops as anp, tape_counter
from fegrad.ad.api import dense_jacobian, value_and_grad
from fegrad.errors import NonFiniteValue, ShapeMismatch, SizeLimitExceeded

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


# -- grad_scalar --------------------------------------------------------------


def test_grad_half_norm():
    g = grad_scalar(lambda u: 0.5 * anp.sum(u * u), np.array([3.0, -4.0]))
    np.testing.assert_allclose(g, [3.0, -4.0])


def test_grad_product_rule():
    g = grad_scalar(lambda u: anp.getitem(u, 0) * anp.getitem(u, 1), np.array([2.0, 5.0]))
    np.testing.assert_allclose(g, [5.0, 2.0])


def branchy(u):
    u0 = anp.getitem(u, 0)
    return u0 * u0 if anp.primal(u0) > 0 else -(u0**3)


def test_branches_are_retaped_per_call():
    assert grad_scalar(branchy, np.array([1.0]))[0] == pytest.approx(2.0)
    assert grad_scalar(branchy, np.array([-1.0]))[0] == pytest.approx(-3.0)
    assert grad_scalar(branchy, np.array([1.0]))[0] == pytest.approx(2.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_value_raises():
    with pytest.raises(NonFiniteValue):
        grad_scalar(lambda u: anp.sum(anp.log(u)), np.array([-1.0, 1.0]))


def test_nonscalar_functional_rejected():
    with pytest.raises(ShapeMismatch):
        grad_scalar(lambda u: u * 2.0, np.ones(3))


def smooth(u):
    return anp.sum(anp.sin(u) * anp.exp(0.3 * u)) + anp.sum(u * u) ** 1.5 / (1.0 + anp.sum(anp.cos(u) ** 2))


@given(vec(5))
def test_grad_matches_finite_differences(u):
    g = grad_scalar(smooth, u)
    fd = central_fd_gradient(lambda x: smooth(x), u)
    assert np.abs(g - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())


def test_value_and_grad_value():
    v, g = value_and_grad(lambda u: anp.sum(u**2), np.array([1.0, 2.0]))
    assert float(v) == 5.0
    np.testing.assert_allclose(g, [2.0, 4.0])


# -- jvp ------------------------------------------------------------------------


def test_jvp_linear_map(rng):
    A = rng.standard_normal((4, 3))
    for _ in range(3):
        u, v = rng.standard_normal(3), rng.standard_normal(3)
        np.testing.assert_allclose(jvp(lambda x: anp.einsum("ij,j->i", A, x), u, v), A @ v, rtol=1e-14)


def test_jvp_square():
    np.testing.assert_allclose(jvp(lambda x: x * x, np.array([1.0, 2.0]), np.array([1.0, 1.0])), [2.0, 4.0])


def vecfun(u):
    return anp.stack([anp.sin(anp.getitem(u, 0)) * anp.getitem(u, 1), anp.exp(anp.sum(u) * 0.2), anp.sqrt(1 + anp.sum(u * u))])


@given(vec(2), vec(2))
def test_jvp_matches_central_differences(u, v):
    h = 1e-6
    fd = (np.asarray(vecfun(u + h * v)) - np.asarray(vecfun(u - h * v))) / (2 * h)
    j = jvp(vecfun, u, v)
    assert np.abs(j - fd).max() <= 1e-6 * max(1.0, np.abs(fd).max())


@given(vec(2), vec(2), vec(2), finite, finite)
def test_jvp_is_linear_in_direction(u, v, w, a, b):
    lhs = jvp(vecfun, u, a * v + b * w)
    rhs = a * jvp(vecfun, u, v) + b * jvp(vecfun, u, w)
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())


def test_jvp_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        jvp(lambda x: x, np.ones(2), np.ones(3))


# -- hvp / dense Hessian ---------------------------------------------------------


def test_hvp_quadratic(rng):
    B = rng.standard_normal((5, 5))
    A = B @ B.T + 5 * np.eye(5)
    v = rng.standard_normal(5)
    f = lambda u: 0.5 * anp.sum(u * anp.einsum("ij,j->i", A, u))
    np.testing.assert_allclose(hvp(f, rng.standard_normal(5), v), A @ v, rtol=1e-12)
    np.testing.assert_allclose(dense_hessian(f, np.zeros(5)), A, rtol=1e-13, atol=1e-13)


def test_hvp_cubic():
    out = hvp(lambda u: anp.sum(u**3), np.array([1.0, 2.0]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out, [6.0, 0.0])


def cubic(u):
    return anp.sum(u**3) + anp.getitem(u, 0) * anp.getitem(u, 1) * anp.getitem(u, 2) + anp.sum(u) ** 3


@given(vec(3), vec(3), vec(3))
def test_hvp_bilinear_symmetry(u, v, w):
    a = v @ hvp(cubic, u, w)
    b = w @ hvp(cubic, u, v)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a), abs(b))


def test_chain_hessian_is_tridiagonal():
    n = 6
    f = lambda u: anp.sum((anp.getitem(u, slice(1, None)) - anp.getitem(u, slice(0, -1))) ** 2)
    H = dense_hessian(f, np.linspace(0, 1, n))
    ref = np.diag([2.0] + [4.0] * (n - 2) + [2.0]) - 2 * np.eye(n, k=1) - 2 * np.eye(n, k=-1)
    np.testing.assert_allclose(H, ref, atol=1e-13)


def test_dense_hessian_neo_hookean_element_vs_fd():
    from fegrad.physics.elasticity import ElasticParams, neo_hookean_density

    p = ElasticParams.from_E_nu(1.0, 0.3)
    # shape-function gradients of the unit right triangle, area 1/2
    dN = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

    def f(u):
        U = anp.reshape(u, (3, 2))
        G = anp.einsum("ai,aj->ij", U, dN)
        return 0.5 * neo_hookean_density(G, p)

    u = 0.05 * np.array([0.1, -0.2, 0.3, 0.1, -0.1, 0.2])
    H = dense_hessian(f, u)
    H_fd = fd_hessian(lambda x: float(f(x)), u)
    assert np.abs(H - H_fd).max() <= 1e-5 * np.abs(H).max()
    assert np.abs(H - H.T).max() <= 1e-9 * np.abs(H).max()


def test_dense_hessian_size_limit():
    with pytest.raises(SizeLimitExceeded):
        dense_hessian(lambda u: anp.sum(u * u), np.zeros(11), limit=10)


def test_call_counts_track_hvps():
    before = call_counts["hvp"]
    dense_hessian(lambda u: anp.sum(u**4), np.ones(4))
    assert call_counts["hvp"] - before == 4


def test_dense_jacobian():
    J = dense_jacobian(vecfun, np.array([0.3, -0.2]))
    for k in range(2):
        e = np.eye(2)[k]
        np.testing.assert_allclose(J[:, k], jvp(vecfun, np.array([0.3, -0.2]), e))


# -- primitives ---------------------------------------------------------------------


def test_dual_arithmetic_rules():
    a, b = Dual(np.array(2.0), np.array(3.0)), Dual(np.array(5.0), np.array(7.0))
    p = a * b
    assert float(p.value) == 10.0 and float(p.tangent) == 2 * 7 + 3 * 5
    q = a / b
    assert float(q.tangent) == pytest.approx((3 * 5 - 2 * 7) / 25)


def test_min_max_tie_takes_first_argument():
    g = grad_scalar(lambda u: anp.maximum(anp.getitem(u, 0), anp.getitem(u, 1)), np.array([1.0, 1.0]))
    np.testing.assert_allclose(g, [1.0, 0.0])
    g = grad_scalar(lambda u: anp.minimum(anp.getitem(u, 1), anp.getitem(u, 0)), np.array([1.0, 1.0]))
    np.testing.assert_allclose(g, [0.0, 1.0])


def test_abs_right_derivative_at_zero():
    assert grad_scalar(lambda u: anp.sum(anp.abs(u)), np.zeros(1))[0] == 1.0


MATRIX_FUNCS = [
    lambda A: anp.det(A),
    lambda A: anp.sum(anp.inv(A) * anp.inv(A)),
    lambda A: anp.trace(anp.matmul(A, anp.transpose(A))),
    lambda A: anp.sum(anp.cofactor(A) * A),
    lambda A: anp.sum(anp.norm(A)),
]


@pytest.mark.parametrize("fn", MATRIX_FUNCS)
@pytest.mark.parametrize("d", [2, 3])
def test_fused_matrix_primitives_fd(fn, d, rng):
    A = np.eye(d) + 0.3 * rng.standard_normal((d, d))
    f = lambda x: fn(anp.reshape(x, (d, d)))
    g = grad_scalar(f, A.ravel())
    fd = central_fd_gradient(lambda x: float(f(x)), A.ravel())
    assert np.abs(g - fd).max() <= 1e-6 * max(1.0, np.abs(fd).max())
    v = rng.standard_normal(d * d)
    Hv = hvp(f, A.ravel(), v)
    Hv_fd = (grad_scalar(f, A.ravel() + 1e-6 * v) - grad_scalar(f, A.ravel() - 1e-6 * v)) / 2e-6
    assert np.abs(Hv - Hv_fd).max() <= 1e-5 * max(1.0, np.abs(Hv_fd).max())


@pytest.mark.parametrize(
    "fn",
    [anp.exp, anp.log, anp.sqrt, anp.sin, anp.cos, anp.tanh, anp.softplus, anp.sigmoid, anp.square],
)
def test_unary_primitives_fd(fn):
    u = np.array([0.3, 0.9, 1.7])
    f = lambda x: anp.sum(fn(x))
    assert np.abs(grad_scalar(f, u) - central_fd_gradient(lambda x: float(f(x)), u)).max() < 1e-7
    H = dense_hessian(f, u)
    Hfd = np.diag((grad_scalar(f, u + 1e-6) - grad_scalar(f, u - 1e-6)) / 2e-6)
    assert np.abs(H - Hfd).max() < 1e-6


def test_index_ops_gradients(rng):
    idx = np.array([0, 2, 2, 4])
    w = rng.standard_normal(4)
    f = lambda u: anp.sum(anp.index_add(anp.zeros_like(u), idx, anp.take(u, idx) * w) ** 2)
    u = rng.standard_normal(5)
    fd = central_fd_gradient(lambda x: float(f(x)), u)
    np.testing.assert_allclose(grad_scalar(f, u), fd, atol=1e-7)
    g = lambda u: anp.sum(anp.index_set(u, np.array([1, 3]), anp.getitem(u, np.array([0, 0])) ** 2) ** 2)
    fd = central_fd_gradient(lambda x: float(g(x)), u)
    np.testing.assert_allclose(grad_scalar(g, u), fd, atol=1e-7)


def test_einsum_and_broadcast_gradients(rng):
    A = rng.standard_normal((3, 4))
    f = lambda u: anp.sum(anp.einsum("ij,j->i", A, anp.reshape(u, (4,))) ** 2) + anp.sum(anp.broadcast_to(u, (2, 4)))
    u = rng.standard_normal(4)
    np.testing.assert_allclose(grad_scalar(f, u), 2 * A.T @ (A @ u) + 2.0, rtol=1e-12)


# -- tape bookkeeping --------------------------------------------------------------


def test_tape_released_after_gradient():
    tape_counter.reset()
    grad_scalar(lambda u: anp.sum(anp.sin(u) * u), np.ones(100))
    assert tape_counter.live == 0
    assert tape_counter.peak > 0


def test_tape_context_and_leaves_not_counted():
    tape_counter.reset()
    with Tape() as t:
        x = t.leaf(np.ones(10))
        assert tape_counter.live == 0
        y = anp.sum(x * 2.0)
        assert t.length == 11
    assert tape_counter.live == 0
    assert float(y.value) == 20.0
