"""Finite Fourier-series joint trajectories and their feasibility limits.

Per joint ``i`` with fundamental ``omega_f`` and order ``L``:

    q_i(t) = q_offset_i + sum_l a_il/(omega_f l) sin(omega_f l t)
                        - b_il/(omega_f l) cos(omega_f l t)

The representation is periodic with T = 2 pi / omega_f, so one period
always returns to the start state. Coefficients carry velocity units
(rad/s). ``q_offset`` is a fixed constant configuration (default:
mid-range of the joint limits) about which the excitation oscillates.

Boundary conditions: starting and finishing at rest requires

    sum_l a_il = 0,   sum_l b_il / l = 0,   sum_l b_il * l = 0

(``dq(0) = 0``, ``q(0) = q_offset``, ``ddq(0) = 0``). An alternative
``literal`` mode replaces this triple with [sum a/l, sum b, sum a*l] = 0,
which constrains a different linear combination; it is kept selectable for
comparison but the rest-start triple is the default.
"""

import json
from dataclasses import dataclass

import numpy as np

from .chain import KinematicChain
from .dataset import IdentDataset

BOUNDARY_MODES = ("rest-start", "literal")


@dataclass(frozen=True)
class FourierTrajectory:
    """Immutable coefficient set; a, b have shape (dof, L)."""

    a: np.ndarray
    b: np.ndarray
    omega_f: float
    q_offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "q_offset",
                           np.asarray(self.q_offset, dtype=float))
        if self.a.ndim != 2 or self.a.shape != self.b.shape:
            raise ValueError("a and b must be matching (dof, L) matrices")
        if self.q_offset.shape != (self.a.shape[0],):
            raise ValueError("q_offset must have one entry per joint")
        if not self.omega_f > 0:
            raise ValueError("omega_f must be positive")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.q_offset))):
            raise ValueError("non-finite trajectory data")

    @property
    def dof(self) -> int:
        return self.a.shape[0]

    @property
    def order(self) -> int:
        return self.a.shape[1]

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega_f


def evaluate(traj: FourierTrajectory, t):
    """Exact (q, dq, ddq) at time(s) t; scalar -> (dof,), array -> (B, dof)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    l = np.arange(1, traj.order + 1)
    ang = traj.omega_f * t_arr[:, None] * l[None, :]     # (B, L)
    sin, cos = np.sin(ang), np.cos(ang)
    wl = traj.omega_f * l

    q = traj.q_offset + sin @ (traj.a / wl).T - cos @ (traj.b / wl).T
    dq = cos @ traj.a.T + sin @ traj.b.T
    ddq = -sin @ (traj.a * wl).T + cos @ (traj.b * wl).T
    if np.isscalar(t) or np.ndim(t) == 0:
        return q[0], dq[0], ddq[0]
    return q, dq, ddq


def sample_grid(traj: FourierTrajectory, f_s: float) -> IdentDataset:
    """One full period sampled at f_s: t_k = k / f_s, k = 0..round(f_s T)-1."""
    f_f = traj.omega_f / (2.0 * np.pi)
    if not f_s > 2.0 * traj.order * f_f:
        raise ValueError(
            f"sampling rate {f_s} Hz is below Nyquist for harmonic "
            f"{traj.order} of {f_f} Hz")
    count = int(round(f_s * traj.period))
    t = np.arange(count) / f_s
    q, dq, ddq = evaluate(traj, t)
    return IdentDataset(t=t, q=q, dq=dq, ddq=ddq)


def _q_range(chain: KinematicChain, q_offset: np.ndarray) -> np.ndarray:
    """Symmetric excursion budget about the offset configuration."""
    q_min, q_max, _, _ = chain.limits()
    rng = np.minimum(q_max - q_offset, q_offset - q_min)
    if np.any(rng <= 0):
        bad = np.where(rng <= 0)[0] + 1
        raise ValueError(f"q_offset outside joint limits for joints {bad.tolist()}")
    return rng


def mid_range_offset(chain: KinematicChain) -> np.ndarray:
    q_min, q_max, _, _ = chain.limits()
    return 0.5 * (q_min + q_max)


def boundary_residuals(traj: FourierTrajectory, mode: str = "rest-start") -> np.ndarray:
    """Per-joint equality residual triple, (dof, 3); zero when satisfied."""
    if mode not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary mode {mode!r}")
    l = np.arange(1, traj.order + 1)
    if mode == "rest-start":
        rows = [traj.a @ np.ones_like(l, dtype=float),
                traj.b @ (1.0 / l),
                traj.b @ l.astype(float)]
    else:
        rows = [traj.a @ (1.0 / l),
                traj.b @ np.ones_like(l, dtype=float),
                traj.a @ l.astype(float)]
    return np.stack(rows, axis=1)


def coefficient_box(chain: KinematicChain, omega_f: float, order: int,
                    q_offset: np.ndarray):
    """Per-coefficient bounds (lower, upper), each (dof, L).

    upper_il = min(omega_f l q_range_i / L, dq_max_i) and the symmetric
    lower bound; the position term uses the offset-centred excursion budget
    so the box stays meaningful for asymmetric limits.
    """
    _, _, dq_min, dq_max = chain.limits()
    rng = _q_range(chain, q_offset)
    l = np.arange(1, order + 1)
    pos_term = (omega_f / order) * np.outer(rng, l)
    upper = np.minimum(pos_term, dq_max[:, None])
    lower = np.maximum(-pos_term, dq_min[:, None])
    return lower, upper


@dataclass(frozen=True)
class ConstraintReport:
    """Feasibility residuals; inequalities satisfied iff <= 0, equalities
    satisfied iff == 0."""

    boundary: np.ndarray    # (dof, 3) equality residuals
    amp_q: np.ndarray       # (dof,)  sum (1/l) sqrt(a^2+b^2) - omega_f q_range
    amp_dq: np.ndarray      # (dof,)  sum sqrt(a^2+b^2) - dq_max
    box_upper: np.ndarray   # (dof, L, 2) coefficient - upper, per (a, b)
    box_lower: np.ndarray   # (dof, L, 2) lower - coefficient

    @property
    def max_violation(self) -> float:
        ineq = np.concatenate([self.amp_q.ravel(), self.amp_dq.ravel(),
                               self.box_upper.ravel(), self.box_lower.ravel()])
        return float(max(np.max(ineq, initial=-np.inf),
                         np.max(np.abs(self.boundary), initial=0.0)))

    def satisfied(self, tol: float = 0.0) -> bool:
        return self.max_violation <= tol


def feasibility_residuals(traj: FourierTrajectory, chain: KinematicChain,
                          boundary_mode: str = "rest-start") -> ConstraintReport:
    if traj.dof != chain.dof:
        raise ValueError("trajectory/chain dof mismatch")
    _, _, _, dq_max = chain.limits()
    rng = _q_range(chain, traj.q_offset)
    l = np.arange(1, traj.order + 1)
    amp = np.sqrt(traj.a ** 2 + traj.b ** 2)      # (dof, L)

    amp_q = amp @ (1.0 / l) - traj.omega_f * rng
    amp_dq = amp.sum(axis=1) - dq_max
    lower, upper = coefficient_box(chain, traj.omega_f, traj.order, traj.q_offset)
    coeff = np.stack([traj.a, traj.b], axis=2)    # (dof, L, 2)
    return ConstraintReport(
        boundary=boundary_residuals(traj, boundary_mode),
        amp_q=amp_q,
        amp_dq=amp_dq,
        box_upper=coeff - upper[:, :, None],
        box_lower=lower[:, :, None] - coeff,
    )


def traj_to_dict(traj: FourierTrajectory) -> dict:
    return {"omega_f": traj.omega_f, "L": traj.order,
            "q_offset": traj.q_offset.tolist(),
            "a": traj.a.tolist(), "b": traj.b.tolist()}


def traj_from_dict(data: dict) -> FourierTrajectory:
    traj = FourierTrajectory(a=np.array(data["a"], dtype=float),
                             b=np.array(data["b"], dtype=float),
                             omega_f=float(data["omega_f"]),
                             q_offset=np.array(data["q_offset"], dtype=float))
    if traj.order != int(data["L"]):
        raise ValueError("stored L does not match coefficient shape")
    return traj


def traj_to_json(traj: FourierTrajectory) -> str:
    return json.dumps(traj_to_dict(traj), indent=2)


def traj_from_json(text: str) -> FourierTrajectory:
    return traj_from_dict(json.loads(text))
