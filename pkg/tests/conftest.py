import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fegrad",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fegrad")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_fd_gradient(f, u, h=1e-6):
    """Central finite differences, step scaled by ‖u‖ + 1."""
    u = np.asarray(u, dtype=float)
    h = h * (np.linalg.norm(u) + 1.0)
    g = np.zeros_like(u)
    for i in range(u.size):
        e = np.zeros_like(u)
        e.flat[i] = h
        g.flat[i] = (float(f(u + e)) - float(f(u - e))) / (2 * h)
    return g


def fd_hessian(f, u, h=1e-4):
    """Second-order central differences of the value."""
    u = np.asarray(u, dtype=float)
    n = u.size
    H = np.zeros((n, n))
    E = np.eye(n) * h
    for i in range(n):
        for j in range(n):
            H[i, j] = (
                f(u + E[i] + E[j]) - f(u + E[i] - E[j]) - f(u - E[i] + E[j]) + f(u - E[i] - E[j])
            ) / (4 * h * h)
    return H


# -- acceptance summary -------------------------------------------------------------

N_CRITERIA = 13


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; the summary prints a line per criterion."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}"
        store[number] = line
        print(line)
        assert passed, line

    return record


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, None)
    if store is None:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(store.get(k, f"FAIL criterion {k:2d}: did not complete"))
