import numpy as np
import numpy.testing as npt
import pytest

from dynident import surrogate as sg


def test_orthonormal_columns():
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(12, 5)))
    npt.assert_allclose(sg.surrogate_cost(q), np.sqrt(5), rtol=1e-12)
    npt.assert_allclose(sg.condition_number(q), 1.0, rtol=1e-12)


def test_diag_2_1_value():
    yb = np.diag([2.0, 1.0])
    # H = diag(4, 1): r_c = (sqrt(17) + sqrt(1 + 1/16))/2 = (5/8) sqrt(17)
    npt.assert_allclose(sg.surrogate_cost(yb), 0.625 * np.sqrt(17.0),
                        rtol=1e-12)
    assert sg.surrogate_cost(yb) >= sg.condition_number(yb) == 2.0


def test_bound_on_random_matrices(rng):
    for _ in range(500):
        rows = int(rng.integers(4, 61))
        cols = int(rng.integers(2, min(rows, 30) + 1))
        yb = rng.normal(size=(rows, cols)) * rng.uniform(0.1, 10)
        r_c = sg.surrogate_cost(yb)
        assert r_c >= sg.condition_number(yb) * (1 - 1e-12)


def test_singular_returns_inf():
    yb = np.ones((6, 3))
    assert sg.surrogate_cost(yb) == np.inf
    r_c, w = sg.surrogate_weight(sg.normal_matrix(yb))
    assert r_c == np.inf and w is None
    assert sg.condition_number(yb) == np.inf


def test_wide_matrix_rejected():
    with pytest.raises(ValueError, match="tall"):
        sg.surrogate_cost(np.ones((3, 6)))


def test_weight_matches_finite_differences(rng):
    """dr_c/dH from surrogate_weight vs symmetric-perturbation FD."""
    a = rng.normal(size=(20, 6))
    h = a.T @ a + 0.5 * np.eye(6)
    r_c, w = sg.surrogate_weight(h)
    step = 1e-6
    for _ in range(10):
        i, j = rng.integers(6, size=2)
        d = np.zeros((6, 6))
        d[i, j] += 0.5 * step
        d[j, i] += 0.5 * step
        fd = (sg.surrogate_from_normal(h + d)
              - sg.surrogate_from_normal(h - d)) / 2.0
        # directional derivative along the symmetrized perturbation
        npt.assert_allclose(np.sum(w * d), fd, rtol=1e-5, atol=1e-12)


def test_stack_gradient_matches_finite_differences(rng):
    yb = rng.normal(size=(15, 4))
    h = sg.normal_matrix(yb)
    _, w = sg.surrogate_weight(h)
    grad = sg.stack_entry_gradient(yb, w)
    step = 1e-7
    for _ in range(12):
        i, j = rng.integers(15), rng.integers(4)
        plus = yb.copy()
        plus[i, j] += step
        minus = yb.copy()
        minus[i, j] -= step
        fd = (sg.surrogate_cost(plus) - sg.surrogate_cost(minus)) / (2 * step)
        npt.assert_allclose(grad[i, j], fd, rtol=1e-5, atol=1e-9)


def test_purity(rng):
    yb = rng.normal(size=(30, 8))
    before = yb.copy()
    first = sg.surrogate_cost(yb)
    second = sg.surrogate_cost(yb)
    assert first == second
    npt.assert_array_equal(yb, before)
    npt.assert_allclose(sg.surrogate_cost(2.0 * yb),
                        sg.surrogate_from_normal(4.0 * sg.normal_matrix(yb)))
