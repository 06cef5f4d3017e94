"""Inverse dynamics (recursive Newton-Euler) and the identification regressor.

Standard parameter vector layout, 12 entries per joint ``i`` in chain order:

    [m, m*cx, m*cy, m*cz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz, f_st, f_v]

with the inertia tensor taken about the link-frame *origin* in link axes
(barycentric tensors from the URDF are shifted at load time). This ordering
is a stable contract: regressor columns depend on it.

Joint torque model:

    tau = M(q) ddq + C(q, dq) dq + g(q) + f_st * sgn(dq) + f_v * dq

with ``sgn(0) = 0``. All operations are pure; batched variants carry a
leading sample axis and are exactly equivalent to per-sample evaluation.
"""

import numpy as np

from .chain import KinematicChain
from .geometry import axis_rotation, skew

PARAMS_PER_JOINT = 12
INERTIAL_PER_JOINT = 10

_INERTIAL_NAMES = ("m", "mcx", "mcy", "mcz",
                   "Ixx", "Ixy", "Ixz", "Iyy", "Iyz", "Izz")


def n_params(chain: KinematicChain) -> int:
    return PARAMS_PER_JOINT * chain.dof


def param_labels(chain: KinematicChain) -> list:
    """Human-readable labels, e.g. ``L3.mcx`` or ``J5.fv`` (1-based)."""
    labels = []
    for i in range(chain.dof):
        labels.extend(f"L{i + 1}.{name}" for name in _INERTIAL_NAMES)
        labels.append(f"J{i + 1}.fst")
        labels.append(f"J{i + 1}.fv")
    return labels


def friction_indices(chain: KinematicChain) -> np.ndarray:
    """Column indices of the Coulomb and viscous friction parameters."""
    base = PARAMS_PER_JOINT * np.arange(chain.dof)
    return np.sort(np.concatenate([base + 10, base + 11]))


def std_params_from_chain(chain: KinematicChain, f_st=None, f_v=None) -> np.ndarray:
    """Nominal parameter vector from the parsed link data.

    Friction coefficients default to zero (URDFs carry none).
    """
    n = chain.dof
    f_st = np.zeros(n) if f_st is None else np.asarray(f_st, dtype=float)
    f_v = np.zeros(n) if f_v is None else np.asarray(f_v, dtype=float)
    theta = np.zeros(n_params(chain))
    for i, link in enumerate(chain.links):
        m, c = link.mass, link.com
        # parallel-axis shift: inertia about the link-frame origin
        i_origin = link.inertia + m * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
        block = theta[PARAMS_PER_JOINT * i:]
        block[0] = m
        block[1:4] = m * c
        block[4:10] = [i_origin[0, 0], i_origin[0, 1], i_origin[0, 2],
                       i_origin[1, 1], i_origin[1, 2], i_origin[2, 2]]
        block[10] = f_st[i]
        block[11] = f_v[i]
    return theta


def external_torque(tau_raw, tau_model) -> np.ndarray:
    """Estimated external torque, element-wise tau_raw - tau_model."""
    tau_raw = np.asarray(tau_raw, dtype=float)
    tau_model = np.asarray(tau_model, dtype=float)
    if tau_raw.shape != tau_model.shape:
        raise ValueError("torque vectors must have equal shapes")
    return tau_raw - tau_model


def _batch_skew(v: np.ndarray) -> np.ndarray:
    """(B, 3) -> (B, 3, 3) cross-product matrices."""
    b = v.shape[0]
    out = np.zeros((b, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _batch_lmat(w: np.ndarray) -> np.ndarray:
    """(B, 3) -> (B, 3, 6) matrix with L(w) @ vec6(I) == I @ w."""
    b = w.shape[0]
    out = np.zeros((b, 3, 6))
    out[:, 0, 0] = w[:, 0]
    out[:, 0, 1] = w[:, 1]
    out[:, 0, 2] = w[:, 2]
    out[:, 1, 1] = w[:, 0]
    out[:, 1, 3] = w[:, 1]
    out[:, 1, 4] = w[:, 2]
    out[:, 2, 2] = w[:, 0]
    out[:, 2, 4] = w[:, 1]
    out[:, 2, 5] = w[:, 2]
    return out


def _check_state(chain, q, dq, ddq):
    n = chain.dof
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    ddq = np.atleast_2d(np.asarray(ddq, dtype=float))
    if q.shape != dq.shape or q.shape != ddq.shape or q.shape[1] != n:
        raise ValueError(f"state arrays must share shape (B, {n})")
    return q, dq, ddq


def _outward_pass(chain, q, dq, ddq):
    """Link-local angular velocity/acceleration and origin acceleration.

    Returns (rot, omega, domega, acc): rot[i] maps link-i vectors into the
    parent frame, shape (B, n, 3, 3); the rest are (B, n, 3) in link-local
    frames. `acc` includes the gravity offset (d'Alembert convention).
    """
    b, n = q.shape
    rot = np.empty((b, n, 3, 3))
    omega = np.empty((b, n, 3))
    domega = np.empty((b, n, 3))
    acc = np.empty((b, n, 3))

    w_p = np.zeros((b, 3))
    dw_p = np.zeros((b, 3))
    a_p = np.broadcast_to(-chain.gravity, (b, 3))
    for i, joint in enumerate(chain.joints):
        m = joint.rotation @ axis_rotation(joint.axis, q[:, i])
        rot[:, i] = m
        u = joint.axis
        t = joint.translation
        # row-vector form of m^T v, which batched BLAS handles natively
        xi = (w_p[:, None, :] @ m)[:, 0, :]
        w = xi + u * dq[:, i, None]
        dw = ((dw_p[:, None, :] @ m)[:, 0, :]
              + u * ddq[:, i, None]
              + np.cross(xi, u) * dq[:, i, None])
        a_lin = a_p + np.cross(dw_p, t) + np.cross(w_p, np.cross(w_p, np.broadcast_to(t, w_p.shape)))
        a = (a_lin[:, None, :] @ m)[:, 0, :]
        omega[:, i], domega[:, i], acc[:, i] = w, dw, a
        w_p, dw_p, a_p = w, dw, a
    return rot, omega, domega, acc


def rnea_batch(chain: KinematicChain, q, dq, ddq, params) -> np.ndarray:
    """Inverse dynamics for a batch of states; returns torques (B, dof)."""
    q, dq, ddq = _check_state(chain, q, dq, ddq)
    params = np.asarray(params, dtype=float)
    if params.shape != (n_params(chain),):
        raise ValueError(f"params must have length {n_params(chain)}")
    b, n = q.shape
    rot, omega, domega, acc = _outward_pass(chain, q, dq, ddq)

    tau = np.empty((b, n))
    f_child = np.zeros((b, 3))
    n_child = np.zeros((b, 3))
    for i in range(n - 1, -1, -1):
        block = params[PARAMS_PER_JOINT * i:PARAMS_PER_JOINT * (i + 1)]
        m = block[0]
        h = block[1:4]
        ixx, ixy, ixz, iyy, iyz, izz = block[4:10]
        inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])

        w, dw, a = omega[:, i], domega[:, i], acc[:, i]
        f_body = m * a + np.cross(dw, np.broadcast_to(h, a.shape)) \
            + np.cross(w, np.cross(w, np.broadcast_to(h, a.shape)))
        n_body = dw @ inertia.T + np.cross(w, w @ inertia.T) \
            + np.cross(np.broadcast_to(h, a.shape), a)

        if i < n - 1:
            m_next = rot[:, i + 1]
            t_next = chain.joints[i + 1].translation
            f_down = np.einsum("bij,bj->bi", m_next, f_child)
            n_down = np.einsum("bij,bj->bi", m_next, n_child) \
                + np.cross(np.broadcast_to(t_next, f_down.shape), f_down)
            f_body = f_body + f_down
            n_body = n_body + n_down

        tau[:, i] = n_body @ chain.joints[i].axis \
            + block[10] * np.sign(dq[:, i]) + block[11] * dq[:, i]
        f_child, n_child = f_body, n_body
    return tau


def rnea(chain: KinematicChain, q, dq, ddq, params) -> np.ndarray:
    """Joint torques for a single state (dof,)."""
    return rnea_batch(chain, q, dq, ddq, params)[0]


def regressor_stack(chain: KinematicChain, q, dq, ddq) -> np.ndarray:
    """Regressor row blocks for a batch of states, shape (B, dof, 12*dof).

    Column ``j`` equals ``rnea(..., e_j)`` for the unit parameter vector
    ``e_j`` (RNEA is exactly linear in the standard parameters). The shared
    outward recursion is computed once; per-link wrench bases are then
    propagated inward, which reproduces the unit-vector probes without
    rerunning the full recursion per column.
    """
    q, dq, ddq = _check_state(chain, q, dq, ddq)
    b, n = q.shape
    rot, omega, domega, acc = _outward_pass(chain, q, dq, ddq)

    # wrench bases for every source link live in fixed 10-row slots of one
    # (B, 10n, 3) matrix: each inward step is then a single batched matmul
    # over the whole slab (inactive slots are zero and cost nothing but
    # flops). Rows are basis vectors, so the propagation reads f <- f R^T
    # and n <- n R^T - f_new S(t) (S^T = -S); double buffers keep the loop
    # allocation-free.
    width = INERTIAL_PER_JOINT * n
    f_all = np.zeros((b, width, 3))
    n_all = np.zeros((b, width, 3))
    f_buf = np.empty_like(f_all)
    n_buf = np.empty_like(n_all)
    out = np.zeros((b, n, PARAMS_PER_JOINT * n))
    param_cols = (PARAMS_PER_JOINT * np.arange(n)[:, None]
                  + np.arange(INERTIAL_PER_JOINT)[None, :])

    for j in range(n - 1, -1, -1):
        w, dw, a = omega[:, j], domega[:, j], acc[:, j]
        sw = _batch_skew(w)
        s = INERTIAL_PER_JOINT * j
        f_all[:, s, :] = a
        f_all[:, s + 1:s + 4, :] = \
            (_batch_skew(dw) + sw @ sw).transpose(0, 2, 1)
        n_all[:, s + 1:s + 4, :] = _batch_skew(a).transpose(0, 2, 1)
        np.negative(n_all[:, s + 1:s + 4, :], out=n_all[:, s + 1:s + 4, :])
        n_all[:, s + 4:s + 10, :] = \
            (_batch_lmat(dw) + sw @ _batch_lmat(w)).transpose(0, 2, 1)

        out[:, j, param_cols[j:].ravel()] = \
            (n_all[:, s:, :] @ chain.joints[j].axis)
        if j > 0:
            rot_t = np.ascontiguousarray(rot[:, j].transpose(0, 2, 1))
            t_skew = skew(chain.joints[j].translation)
            np.matmul(f_all, rot_t, out=f_buf)
            np.matmul(n_all, rot_t, out=n_buf)
            np.matmul(f_buf, t_skew, out=f_all)
            n_buf -= f_all
            f_all, f_buf = f_buf, f_all
            n_all, n_buf = n_buf, n_all

    idx = np.arange(n)
    out[:, idx, PARAMS_PER_JOINT * idx + 10] = np.sign(dq)
    out[:, idx, PARAMS_PER_JOINT * idx + 11] = dq
    return out


def regressor_row_block(chain: KinematicChain, q, dq, ddq) -> np.ndarray:
    """Regressor for one state, shape (dof, 12*dof); tau == Y @ theta."""
    return regressor_stack(chain, q, dq, ddq)[0]
