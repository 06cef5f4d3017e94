import numpy as np
import numpy.testing as npt
import pytest

from dynident import base_params as bp
from dynident import dynamics as dyn


def _stack(chain, n_samples, seed):
    q, dq, ddq = bp.random_states(chain, n_samples, seed)
    return dyn.regressor_stack(chain, q, dq, ddq).reshape(-1, dyn.n_params(chain))


def _residual(chain, proj, theta, n_states, seed):
    """max |Y theta - Y_b theta_b| relative, on fresh random states."""
    q, dq, ddq = bp.random_states(chain, n_states, seed)
    full = dyn.regressor_stack(chain, q, dq, ddq)
    tau_full = full @ theta
    tau_base = full[..., proj.b_idx] @ bp.project(proj, theta)
    return np.max(np.abs(tau_full - tau_base)) / max(np.max(np.abs(tau_full)), 1e-300)


def test_full_rank_toy_identity():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(40, 5))
    proj = bp.projection_from_stack(y, labels=[f"p{i}" for i in range(5)])
    assert proj.d_idx.size == 0
    npt.assert_array_equal(proj.b_idx, np.arange(5))
    npt.assert_allclose(proj.k, np.eye(5))
    theta = rng.normal(size=5)
    npt.assert_allclose(bp.project(proj, theta), theta)


def test_rank_matches_svd(planar2):
    stacked = _stack(planar2, 150, seed=7)
    proj = bp.projection_from_stack(
        stacked, dyn.param_labels(planar2),
        friction_idx=dyn.friction_indices(planar2))
    s = np.linalg.svd(stacked, compute_uv=False)
    svd_rank = int(np.sum(s > 1e-7 * s[0]))
    assert proj.rank == svd_rank


def test_planar_null_columns(planar2):
    """Parameters with no torque signature on a y-axis planar mechanism."""
    proj = bp.compute_base_projection(planar2, n_samples=150, seed=0)
    d_labels = {proj.labels[i] for i in proj.d_idx}
    expected_null = {"L1.m", "L1.mcy", "L2.mcy"}
    for link in ("L1", "L2"):
        expected_null |= {f"{link}.{p}" for p in ("Ixx", "Ixy", "Ixz", "Iyz", "Izz")}
    assert expected_null <= d_labels


def test_friction_forced_independent(arm7):
    proj = bp.compute_base_projection(arm7, n_samples=120, seed=2)
    base = set(proj.base_labels)
    for i in range(arm7.dof):
        assert f"J{i + 1}.fst" in base
        assert f"J{i + 1}.fv" in base


@pytest.mark.parametrize("fixture", ["planar2", "arm7"])
def test_projection_residual(fixture, request, rng):
    chain = request.getfixturevalue(fixture)
    proj = bp.compute_base_projection(chain, n_samples=150, seed=11)
    assert proj.rank < dyn.n_params(chain)
    theta = rng.normal(size=dyn.n_params(chain))
    assert _residual(chain, proj, theta, n_states=50, seed=99) < 1e-8


def test_rank_stable_across_seeds(arm7):
    p1 = bp.compute_base_projection(arm7, n_samples=150, seed=0)
    p2 = bp.compute_base_projection(arm7, n_samples=150, seed=1)
    assert p1.rank == p2.rank
    npt.assert_array_equal(p1.b_idx, p2.b_idx)


def test_tau_rank_insensitive(planar2):
    ranks = {bp.compute_base_projection(planar2, n_samples=150, seed=0,
                                        tau_rank=t).rank
             for t in (1e-8, 1e-6)}
    assert len(ranks) == 1


def test_project_zero(arm7):
    proj = bp.compute_base_projection(arm7, n_samples=120, seed=5)
    npt.assert_array_equal(bp.project(proj, np.zeros(proj.n_params)),
                           np.zeros(proj.rank))


def test_base_regressor_is_column_selection(planar2, rng):
    proj = bp.compute_base_projection(planar2, n_samples=150, seed=0)
    q, dq, ddq = rng.normal(size=(3, planar2.dof))
    full = dyn.regressor_row_block(planar2, q, dq, ddq)
    npt.assert_array_equal(bp.base_regressor(planar2, q, dq, ddq, proj),
                           full[:, proj.b_idx])


def test_json_round_trip(planar2, rng):
    proj = bp.compute_base_projection(planar2, n_samples=150, seed=0)
    clone = bp.projection_from_json(bp.projection_to_json(proj))
    npt.assert_array_equal(proj.b_idx, clone.b_idx)
    npt.assert_array_equal(proj.d_idx, clone.d_idx)
    npt.assert_array_equal(proj.k_d, clone.k_d)
    assert proj.labels == clone.labels
    theta = rng.normal(size=proj.n_params)
    npt.assert_array_equal(bp.project(proj, theta), bp.project(clone, theta))


def test_k_matrix_definition(arm7, rng):
    proj = bp.compute_base_projection(arm7, n_samples=120, seed=3)
    theta = rng.normal(size=proj.n_params)
    npt.assert_allclose(proj.k @ theta, bp.project(proj, theta), atol=1e-12)


def test_too_few_samples_rejected(arm7):
    with pytest.raises(ValueError, match="n_samples"):
        bp.compute_base_projection(arm7, n_samples=10)


def test_nonfinite_rejected():
    y = np.ones((10, 3))
    y[4, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        bp.projection_from_stack(y, labels=["a", "b", "c"])


def test_index_partition_enforced():
    with pytest.raises(ValueError, match="partition"):
        bp.BaseProjection(b_idx=[0, 1], d_idx=[1, 2], k_d=np.zeros((2, 2)),
                          labels=("a", "b", "c"), tau_rank=1e-7)
