"""Bounded least-squares identification of base parameters.

The decision variable is theta_b (the identifiable set); bounds on the
standard parameters are mapped into theta_b space by interval arithmetic
through the grouping matrix K, which is conservative but never cuts off
the true value.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import base_params, dynamics
from .chain import KinematicChain
from .dataset import IdentDataset

logger = logging.getLogger(__name__)

DEFAULT_MU_MARGIN = 0.5
NOMINAL_FLOOR = 1e-3          # SI floor for zero-ish nominals
DEFAULT_FRICTION_CAP = 5.0    # upper bound for f_st (N*m) and f_v
KKT_TOL = 1e-8
ACTIVE_TOL = 1e-10
TIKHONOV = 1e-10


@dataclass(frozen=True)
class IdentProblem:
    yb_stack: np.ndarray   # (S*dof, rank)
    tau_stack: np.ndarray  # (S*dof,)
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        for name in ("yb_stack", "tau_stack", "lb", "ub"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if self.yb_stack.ndim != 2 or \
                self.yb_stack.shape[0] != self.tau_stack.shape[0]:
            raise ValueError("regressor rows and torque rows must match")
        r = self.yb_stack.shape[1]
        if self.lb.shape != (r,) or self.ub.shape != (r,):
            raise ValueError("bounds must match the parameter count")
        if np.any(self.lb >= self.ub):
            bad = np.where(self.lb >= self.ub)[0]
            raise ValueError(f"empty bound box in coordinates {bad.tolist()}")


@dataclass(frozen=True)
class IdentReport:
    theta_b_hat: np.ndarray
    torque_rms_per_joint: np.ndarray
    max_abs_error_per_joint: np.ndarray
    cond_scaled: float
    cond_raw: float
    active_bounds: tuple
    kkt_ok: bool
    regularized: bool = False

    def to_dict(self, labels=None) -> dict:
        d = {
            "torque_rms_per_joint": self.torque_rms_per_joint.tolist(),
            "max_abs_error_per_joint": self.max_abs_error_per_joint.tolist(),
            "cond_scaled": self.cond_scaled,
            "cond_raw": self.cond_raw,
            "active_bounds": list(self.active_bounds),
            "kkt_ok": self.kkt_ok,
            "regularized": self.regularized,
        }
        if labels is not None:
            d["theta_b_hat"] = dict(zip(labels,
                                        self.theta_b_hat.tolist()))
        else:
            d["theta_b_hat"] = self.theta_b_hat.tolist()
        return d

    def to_json(self, labels=None) -> str:
        return json.dumps(self.to_dict(labels), indent=2)


def nominal_params(chain: KinematicChain) -> np.ndarray:
    """Standard parameters as declared by the robot description.

    Friction nominals are zero: robot descriptions do not carry them.
    """
    return dynamics.std_params_from_chain(chain)


def standard_bounds(chain: KinematicChain, mu_margin: float = DEFAULT_MU_MARGIN,
                    floor: float = NOMINAL_FLOOR,
                    friction_cap: float = DEFAULT_FRICTION_CAP):
    """Interval box on the standard parameters around the nominals."""
    if mu_margin <= 0:
        raise ValueError("mu_margin must be positive")
    nominal = nominal_params(chain)
    spread = mu_margin * np.maximum(np.abs(nominal), floor)
    lb = nominal - spread
    ub = nominal + spread
    fric = dynamics.friction_indices(chain)
    lb[fric] = 0.0
    ub[fric] = friction_cap
    if np.any(lb >= ub):
        bad = np.where(lb >= ub)[0]
        raise ValueError(f"degenerate standard bounds at {bad.tolist()}")
    return lb, ub


def build_bounds(chain: KinematicChain, proj: base_params.BaseProjection,
                 mu_margin: float = DEFAULT_MU_MARGIN,
                 floor: float = NOMINAL_FLOOR,
                 friction_cap: float = DEFAULT_FRICTION_CAP):
    """Map the standard-parameter box to theta_b = K theta bounds.

    Row-wise interval arithmetic: each K_ij carries either endpoint of
    coordinate j depending on its sign, so the box is the tightest
    axis-aligned enclosure of K applied to the standard box.
    """
    lb_std, ub_std = standard_bounds(chain, mu_margin, floor, friction_cap)
    k = proj.k
    lo = np.minimum(k * lb_std, k * ub_std)
    hi = np.maximum(k * lb_std, k * ub_std)
    lb = lo.sum(axis=1)
    ub = hi.sum(axis=1)
    if np.any(lb >= ub):
        bad = np.where(lb >= ub)[0]
        raise ValueError(
            f"empty theta_b box in rows {bad.tolist()} "
            f"({[proj.base_labels[i] for i in bad]})")
    return lb, ub


def _kkt_check(yb, tau, theta, lb, ub) -> bool:
    """Stationarity of the bounded LS solution.

    grad = Yb^T(Yb theta - tau): zero for interior coordinates, >= 0 at a
    lower bound, <= 0 at an upper bound (all within KKT_TOL relative).
    """
    grad = yb.T @ (yb @ theta - tau)
    scale = KKT_TOL * max(1.0, float(np.linalg.norm(yb.T @ tau, np.inf)))
    at_lb = np.abs(theta - lb) <= ACTIVE_TOL * np.maximum(1.0, np.abs(lb))
    at_ub = np.abs(theta - ub) <= ACTIVE_TOL * np.maximum(1.0, np.abs(ub))
    free = ~(at_lb | at_ub)
    return bool(np.all(np.abs(grad[free]) <= scale)
                and np.all(grad[at_lb] >= -scale)
                and np.all(grad[at_ub] <= scale))


def solve_bounded_ls(prob: IdentProblem, dof: int) -> IdentReport:
    """Active-set bounded-variable least squares with KKT verification.

    The stack interleaves joints sample-major, so row i belongs to joint
    i % dof; per-joint residual statistics use that layout. Rank-deficient
    stacks get a Tikhonov floor and a loud warning.
    """
    yb, tau = prob.yb_stack, prob.tau_stack
    rank = np.linalg.matrix_rank(yb)
    regularized = False
    if rank < yb.shape[1]:
        logger.warning("regressor stack is rank deficient (%d < %d); "
                       "adding Tikhonov regularization", rank, yb.shape[1])
        yb = np.vstack([yb, np.sqrt(TIKHONOV) * np.eye(yb.shape[1])])
        tau = np.concatenate([tau, np.zeros(yb.shape[1])])
        regularized = True

    res = scipy.optimize.lsq_linear(yb, tau, bounds=(prob.lb, prob.ub),
                                    method="bvls", tol=1e-14)
    theta = res.x
    kkt_ok = _kkt_check(yb, tau, theta, prob.lb, prob.ub)
    if not kkt_ok:
        logger.warning("KKT conditions not satisfied to tolerance "
                       "(solver status %d)", res.status)

    resid = (prob.yb_stack @ theta - prob.tau_stack).reshape(-1, dof)
    at_lb = np.abs(theta - prob.lb) <= ACTIVE_TOL * np.maximum(1.0, np.abs(prob.lb))
    at_ub = np.abs(theta - prob.ub) <= ACTIVE_TOL * np.maximum(1.0, np.abs(prob.ub))
    scale_cols = np.linalg.norm(prob.yb_stack, axis=0)
    scale_cols = np.where(scale_cols > 0, scale_cols, 1.0)
    return IdentReport(
        theta_b_hat=theta,
        torque_rms_per_joint=np.sqrt(np.mean(resid ** 2, axis=0)),
        max_abs_error_per_joint=np.max(np.abs(resid), axis=0),
        cond_scaled=np.linalg.cond(prob.yb_stack / scale_cols),
        cond_raw=np.linalg.cond(prob.yb_stack),
        active_bounds=tuple(np.where(at_lb | at_ub)[0].tolist()),
        kkt_ok=kkt_ok,
        regularized=regularized,
    )


def assemble_problem(chain: KinematicChain, proj: base_params.BaseProjection,
                     ds: IdentDataset, lb, ub) -> IdentProblem:
    """Stack the base regressor and torques of the post-warm-up samples."""
    if ds.tau is None:
        raise ValueError("dataset has no torque measurements")
    act = ds.active()
    if np.any(~np.isfinite(act.ddq)):
        raise ValueError("dataset accelerations are not finite; "
                         "run the velocity filter first")
    stack = base_params.base_regressor_stack(chain, act.q, act.dq, act.ddq,
                                            proj)
    return IdentProblem(stack.reshape(-1, proj.rank), act.tau.ravel(), lb, ub)


def identify(chain: KinematicChain, proj: base_params.BaseProjection,
             ds: IdentDataset, mu_margin: float = DEFAULT_MU_MARGIN,
             floor: float = NOMINAL_FLOOR,
             friction_cap: float = DEFAULT_FRICTION_CAP) -> IdentReport:
    """Bounds from the description, assembly, and the bounded solve."""
    lb, ub = build_bounds(chain, proj, mu_margin, floor, friction_cap)
    prob = assemble_problem(chain, proj, ds, lb, ub)
    return solve_bounded_ls(prob, chain.dof)


def validate(chain: KinematicChain, proj: base_params.BaseProjection,
             theta_b_hat, ds: IdentDataset) -> IdentReport:
    """Prediction quality of theta_b_hat on an independent dataset."""
    if ds.tau is None:
        raise ValueError("validation dataset has no torque measurements")
    theta_b_hat = np.asarray(theta_b_hat, dtype=float)
    act = ds.active()
    stack = base_params.base_regressor_stack(chain, act.q, act.dq, act.ddq,
                                            proj)
    pred = stack @ theta_b_hat
    err = pred - act.tau
    flat = stack.reshape(-1, proj.rank)
    scale_cols = np.linalg.norm(flat, axis=0)
    scale_cols = np.where(scale_cols > 0, scale_cols, 1.0)
    return IdentReport(
        theta_b_hat=theta_b_hat,
        torque_rms_per_joint=np.sqrt(np.mean(err ** 2, axis=0)),
        max_abs_error_per_joint=np.max(np.abs(err), axis=0),
        cond_scaled=np.linalg.cond(flat / scale_cols),
        cond_raw=np.linalg.cond(flat),
        active_bounds=(),
        kkt_ok=True,
    )
