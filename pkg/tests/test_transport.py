"""Kernel checks: optimality vs a generic LP, duals, backend parity."""

import numpy as np
import pytest
from scipy.optimize import linprog

from drnm import _transport_py
from drnm import transport

try:
    from drnm import _transport as _transport_c

    BACKENDS = [_transport_c, _transport_py]
except ImportError:  # compiled extension unavailable
    BACKENDS = [_transport_py]


def lp_reference(C, a, b):
    n, m = C.shape
    A_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1
        A_eq.append(row)
    for j in range(m):
        row = np.zeros(n * m)
        row[j::m] = 1
        A_eq.append(row)
    res = linprog(
        C.ravel(), A_eq=np.array(A_eq), b_eq=np.concatenate([a, b]), method="highs"
    )
    assert res.success
    return res.fun


def random_instance(rng):
    n = int(rng.integers(1, 10))
    m = int(rng.integers(1, 10))
    C = rng.uniform(0, 10, (n, m))
    if rng.random() < 0.4:
        C = np.round(C)  # force degenerate ties
    scale = 10.0 ** rng.integers(0, 4)
    a = rng.uniform(0.1, 5, n) * scale
    b = rng.uniform(0.1, 5, m) * scale
    b *= a.sum() / b.sum()
    return C, a, b


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda m: m.__name__)
def test_matches_lp_and_duals(backend, rng):
    for _ in range(60):
        C, a, b = random_instance(rng)
        ref = lp_reference(C, a, b)
        flow, alpha, beta = backend.solve_transport(C, a, b)
        cost = float((flow * C).sum())
        scale = max(1.0, abs(ref))
        assert abs(cost - ref) <= 1e-6 * scale
        assert (flow >= -1e-9).all()
        assert np.allclose(flow.sum(1), a, atol=1e-6 * scale)
        assert np.allclose(flow.sum(0), b, atol=1e-6 * scale)
        # dual feasibility and zero gap
        assert ((beta[None, :] - alpha[:, None]) <= C + 1e-6 * scale).all()
        assert abs(beta @ b - alpha @ a - cost) <= 1e-6 * scale


def test_backend_parity(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    for _ in range(40):
        C, a, b = random_instance(rng)
        costs = []
        for backend in BACKENDS:
            flow, _, _ = backend.solve_transport(C, a, b)
            costs.append(float((flow * C).sum()))
        assert abs(costs[0] - costs[1]) <= 1e-7 * max(1.0, abs(costs[0]))


def test_unbalanced_rejected():
    with pytest.raises(ValueError):
        transport.solve_transport(np.ones((2, 2)), np.array([1.0, 1.0]), np.array([5.0, 5.0]))


def test_selected_backend_exposed():
    assert transport.BACKEND in ("cython", "python")
