import json

import numpy as np
import numpy.testing as npt
import pytest

from dynident import fourier as ft

W = 2.0 * np.pi * 0.1  # rad/s


def _traj(a, b, omega_f=W, q_offset=None):
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    if q_offset is None:
        q_offset = np.zeros(a.shape[0])
    return ft.FourierTrajectory(a=a, b=b, omega_f=omega_f, q_offset=q_offset)


def _rest_start_coeffs(rng, dof, order, scale=0.3):
    """Random coefficients projected onto the rest-start equalities."""
    l = np.arange(1.0, order + 1)
    a = rng.normal(scale=scale, size=(dof, order))
    b = rng.normal(scale=scale, size=(dof, order))

    def project(rows, x):
        q, _ = np.linalg.qr(np.asarray(rows, float).T)
        return x - (x @ q) @ q.T
    a = project([np.ones(order)], a)
    b = project([1.0 / l, l], b)
    return a, b


def test_single_term_closed_form():
    traj = _traj([[W]], [[0.0]])
    q, dq, ddq = ft.evaluate(traj, 0.0)
    npt.assert_allclose([q[0], dq[0], ddq[0]], [0.0, W, 0.0], atol=1e-15)
    for t in (0.3, 1.7, 4.0):
        q, dq, ddq = ft.evaluate(traj, t)
        npt.assert_allclose(q[0], np.sin(W * t), rtol=1e-12)
        npt.assert_allclose(dq[0], W * np.cos(W * t), rtol=1e-12)
        npt.assert_allclose(ddq[0], -W * W * np.sin(W * t), rtol=1e-12)


def test_cycle_consistency(rng):
    a, b = rng.normal(size=(2, 3, 4))
    traj = _traj(a, b, q_offset=rng.normal(size=3))
    t = rng.uniform(0, 30, size=8)
    for x, y in zip(ft.evaluate(traj, t), ft.evaluate(traj, t + traj.period)):
        npt.assert_allclose(x, y, atol=1e-9)


def test_derivatives_match_finite_differences(rng):
    a, b = rng.normal(size=(2, 2, 5))
    traj = _traj(a, b)
    h = 1e-5
    for t in rng.uniform(0, 10, size=6):
        q_m, dq_m, _ = ft.evaluate(traj, t - h)
        q_p, dq_p, _ = ft.evaluate(traj, t + h)
        q, dq, ddq = ft.evaluate(traj, t)
        npt.assert_allclose(dq, (q_p - q_m) / (2 * h), atol=1e-6)
        npt.assert_allclose(ddq, (dq_p - dq_m) / (2 * h), atol=1e-6)


def test_sample_grid_count_and_start():
    # f_f = 0.1 Hz -> T = 10 s; 20 Hz sampling covers one period in 200 samples
    traj = _traj(np.full((2, 5), 0.1), np.zeros((2, 5)))
    ds = ft.sample_grid(traj, f_s=20.0)
    assert len(ds) == 200
    assert ds.tau is None
    npt.assert_allclose(ds.t[1] - ds.t[0], 0.05)
    q0, dq0, ddq0 = ft.evaluate(traj, 0.0)
    npt.assert_array_equal(ds.q[0], q0)
    npt.assert_array_equal(ds.dq[0], dq0)
    npt.assert_array_equal(ds.ddq[0], ddq0)


def test_sub_nyquist_rejected():
    traj = _traj(np.ones((1, 5)), np.zeros((1, 5)))
    with pytest.raises(ValueError, match="Nyquist"):
        ft.sample_grid(traj, f_s=0.5 * 5 * 0.1)


def test_zero_coefficients_feasible(planar2):
    traj = _traj(np.zeros((2, 5)), np.zeros((2, 5)),
                 q_offset=ft.mid_range_offset(planar2))
    report = ft.feasibility_residuals(traj, planar2)
    npt.assert_array_equal(report.boundary, np.zeros((2, 3)))
    assert np.all(report.amp_q < 0)
    assert np.all(report.amp_dq < 0)
    assert report.satisfied()


def test_velocity_amplitude_violation(planar2):
    _, _, _, dq_max = planar2.limits()
    a = np.zeros((2, 5))
    a[0, 0] = 2.0 * dq_max[0]
    traj = _traj(a, np.zeros((2, 5)), q_offset=ft.mid_range_offset(planar2))
    report = ft.feasibility_residuals(traj, planar2)
    npt.assert_allclose(report.amp_dq[0], dq_max[0])
    assert not report.satisfied()


def test_amplitude_bound_is_triangle_inequality(rng):
    a, b = rng.normal(scale=0.2, size=(2, 2, 4))
    traj = _traj(a, b)
    l = np.arange(1.0, 5.0)
    bound = (np.sqrt(a ** 2 + b ** 2) / (traj.omega_f * l)).sum(axis=1)
    t = np.linspace(0, traj.period, 1000 * traj.order)
    q, _, _ = ft.evaluate(traj, t)
    assert np.all(np.max(np.abs(q), axis=0) <= bound + 1e-12)


def test_velocity_bound_certificate(planar2, rng):
    """amp_dq <= 0 certifies max |dq(t)| <= dq_max everywhere."""
    _, _, _, dq_max = planar2.limits()
    a, b = rng.normal(size=(2, 2, 5))
    amp = np.sqrt(a ** 2 + b ** 2).sum(axis=1)
    scale = (0.9 * dq_max / amp)[:, None]
    traj = _traj(a * scale, b * scale, q_offset=ft.mid_range_offset(planar2))
    report = ft.feasibility_residuals(traj, planar2)
    assert np.all(report.amp_dq <= 0)
    t = np.linspace(0, traj.period, 5000)
    _, dq, _ = ft.evaluate(traj, t)
    assert np.all(np.abs(dq) <= dq_max[None, :] + 1e-9)


def test_rest_start_boundary(rng):
    a, b = _rest_start_coeffs(rng, dof=3, order=4)
    traj = _traj(a, b, q_offset=rng.normal(size=3))
    npt.assert_allclose(ft.boundary_residuals(traj, "rest-start"),
                        np.zeros((3, 3)), atol=1e-12)
    q, dq, ddq = ft.evaluate(traj, 0.0)
    npt.assert_allclose(q, traj.q_offset, atol=1e-12)
    npt.assert_allclose(dq, np.zeros(3), atol=1e-12)
    npt.assert_allclose(ddq, np.zeros(3), atol=1e-12)
    # and exact periodicity of the whole state
    for x, y in zip(ft.evaluate(traj, 0.0), ft.evaluate(traj, traj.period)):
        npt.assert_allclose(x, y, atol=1e-9)


def test_literal_boundary_mode_differs(rng):
    a, b = _rest_start_coeffs(rng, dof=1, order=4)
    traj = _traj(a, b)
    literal = ft.boundary_residuals(traj, "literal")
    assert np.max(np.abs(literal)) > 1e-3  # a different linear combination
    with pytest.raises(ValueError, match="boundary mode"):
        ft.boundary_residuals(traj, "bogus")


def test_coefficient_box(planar2):
    off = ft.mid_range_offset(planar2)
    lower, upper = ft.coefficient_box(planar2, W, 5, off)
    q_min, q_max, dq_min, dq_max = planar2.limits()
    rng_budget = np.minimum(q_max - off, off - q_min)
    l = np.arange(1, 6)
    expect_up = np.minimum((W / 5) * rng_budget[:, None] * l, dq_max[:, None])
    npt.assert_allclose(upper, expect_up)
    npt.assert_allclose(lower, np.maximum(-(W / 5) * rng_budget[:, None] * l,
                                          dq_min[:, None]))


def test_offset_outside_limits_rejected(planar2):
    traj = _traj(np.zeros((2, 3)), np.zeros((2, 3)),
                 q_offset=np.array([3.5, 0.0]))
    with pytest.raises(ValueError, match="q_offset outside"):
        ft.feasibility_residuals(traj, planar2)


def test_json_round_trip(rng):
    a, b = rng.normal(size=(2, 3, 5))
    traj = _traj(a, b, q_offset=rng.normal(size=3))
    clone = ft.traj_from_json(ft.traj_to_json(traj))
    npt.assert_array_equal(traj.a, clone.a)
    npt.assert_array_equal(traj.b, clone.b)
    assert traj.omega_f == clone.omega_f
    data = json.loads(ft.traj_to_json(traj))
    data["L"] = 4
    with pytest.raises(ValueError, match="stored L"):
        ft.traj_from_dict(data)


def test_validation():
    with pytest.raises(ValueError):
        ft.FourierTrajectory(a=np.zeros((2, 3)), b=np.zeros((2, 2)),
                             omega_f=W, q_offset=np.zeros(2))
    with pytest.raises(ValueError):
        ft.FourierTrajectory(a=np.zeros((1, 2)), b=np.zeros((1, 2)),
                             omega_f=-1.0, q_offset=np.zeros(1))
    with pytest.raises(ValueError):
        _traj([[np.nan]], [[0.0]])
