"""Base (minimal) parameter set via pivoted QR on a stacked regressor.

The standard parameters are rank-deficient: some columns of the stacked
regressor are identically zero or linearly dependent for every state. A
pivoted QR of a random-excitation stack splits the columns into an
independent set ``b_idx`` and a dependent set ``d_idx`` with

    Y[:, d_idx] == Y[:, b_idx] @ K_d        (numerically)
    theta_b = K theta,  K = E_b + K_d E_d   (selection matrices)

so that ``Y theta == Y[:, b_idx] theta_b`` for any parameter vector.

The friction columns (sgn(dq), dq) are structurally identifiable and are
forced into the independent set rather than left to pivoting noise: their
block is orthogonalized first and the remaining columns are pivoted on the
deflated matrix. Rank threshold: |R_jj| > tau_rank * |R_11| on the pivoted
factor of that deflated block.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import dynamics
from .chain import KinematicChain

logger = logging.getLogger(__name__)

DEFAULT_TAU_RANK = 1e-7
DEFAULT_N_SAMPLES = 200
DEFAULT_DDQ_RANGE = 5.0  # rad/s^2, random-stack acceleration range


@dataclass(frozen=True)
class BaseProjection:
    """Column split and dependency map produced by the pivoted QR."""

    b_idx: np.ndarray   # (rank,) independent columns, ascending
    d_idx: np.ndarray   # (n_p - rank,) dependent columns, ascending
    k_d: np.ndarray     # (rank, n_p - rank) dependency coefficients
    labels: tuple       # names of all n_p standard parameters
    tau_rank: float

    def __post_init__(self):
        object.__setattr__(self, "b_idx", np.asarray(self.b_idx, dtype=int))
        object.__setattr__(self, "d_idx", np.asarray(self.d_idx, dtype=int))
        object.__setattr__(self, "k_d", np.asarray(self.k_d, dtype=float))
        n_p = len(self.labels)
        combined = np.concatenate([self.b_idx, self.d_idx])
        if sorted(combined.tolist()) != list(range(n_p)):
            raise ValueError("b_idx and d_idx must partition the columns")
        if self.k_d.shape != (len(self.b_idx), len(self.d_idx)):
            raise ValueError("K_d shape inconsistent with index sets")

    @property
    def rank(self) -> int:
        return len(self.b_idx)

    @property
    def n_params(self) -> int:
        return len(self.labels)

    @property
    def base_labels(self) -> list:
        return [self.labels[i] for i in self.b_idx]

    @property
    def k(self) -> np.ndarray:
        """Dense (rank, n_params) map with theta_b = K @ theta."""
        out = np.zeros((self.rank, self.n_params))
        out[np.arange(self.rank), self.b_idx] = 1.0
        out[:, self.d_idx] = self.k_d
        return out


def random_states(chain: KinematicChain, n_samples: int, seed,
                  ddq_range: float = DEFAULT_DDQ_RANGE):
    """Excitation states for rank analysis: q in limits, dq in velocity
    limits, ddq uniform in +-ddq_range."""
    rng = np.random.default_rng(seed)
    q_min, q_max, dq_min, dq_max = chain.limits()
    q = rng.uniform(q_min, q_max, size=(n_samples, chain.dof))
    dq = rng.uniform(dq_min, dq_max, size=(n_samples, chain.dof))
    ddq = rng.uniform(-ddq_range, ddq_range, size=(n_samples, chain.dof))
    return q, dq, ddq


def projection_from_stack(stacked: np.ndarray, labels,
                          friction_idx=None,
                          tau_rank: float = DEFAULT_TAU_RANK) -> BaseProjection:
    """Base projection from an already-stacked regressor (rows x n_params)."""
    y = np.asarray(stacked, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("stacked regressor contains non-finite entries")
    n_p = y.shape[1]
    if len(labels) != n_p:
        raise ValueError("label count does not match column count")

    friction_idx = (np.array([], dtype=int) if friction_idx is None
                    else np.asarray(friction_idx, dtype=int))
    rest_idx = np.setdiff1d(np.arange(n_p), friction_idx)

    forced = []
    deflated = y[:, rest_idx]
    if len(friction_idx):
        qf, rf = scipy.linalg.qr(y[:, friction_idx], mode="economic")
        d = np.abs(np.diag(rf))
        if np.min(d) <= tau_rank * np.max(d):
            raise ValueError("friction columns are not independent; "
                             "velocity content of the random stack is degenerate")
        forced = list(friction_idx)
        deflated = deflated - qf @ (qf.T @ deflated)

    _, r_piv, _ = scipy.linalg.qr(deflated, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_piv))
    if diag[0] == 0.0:
        raise ValueError("rank collapse: regressor stack is zero")
    n_indep = int(np.sum(diag > tau_rank * diag[0]))

    # Canonical (seed-stable) independent set: sweep columns in ascending
    # order and keep those independent of their predecessors. The unpivoted
    # R diagonal is exactly that residual norm; the pivoted run above only
    # fixes the scale and the expected rank.
    _, r_nat = scipy.linalg.qr(deflated, mode="economic")
    keep = np.abs(np.diag(r_nat)) > tau_rank * diag[0]
    if int(keep.sum()) != n_indep:
        logger.warning("borderline rank decision: pivoted count %d vs "
                       "lowest-index sweep %d; keeping the sweep",
                       n_indep, int(keep.sum()))
    b_idx = np.sort(np.concatenate([forced, rest_idx[keep]]).astype(int))
    d_idx = np.setdiff1d(np.arange(n_p), b_idx)

    # dependency map from an unpivoted QR in canonical (sorted) column order
    _, r2 = scipy.linalg.qr(np.hstack([y[:, b_idx], y[:, d_idx]]),
                            mode="economic")
    rank = len(b_idx)
    r1 = r2[:rank, :rank]
    k_d = (scipy.linalg.solve_triangular(r1, r2[:rank, rank:])
           if len(d_idx) else np.zeros((rank, 0)))
    return BaseProjection(b_idx=b_idx, d_idx=d_idx, k_d=k_d,
                          labels=tuple(labels), tau_rank=tau_rank)


def compute_base_projection(chain: KinematicChain,
                            n_samples: int = DEFAULT_N_SAMPLES,
                            seed=0,
                            tau_rank: float = DEFAULT_TAU_RANK) -> BaseProjection:
    """Identify the base parameter set of `chain` from random excitation."""
    n_p = dynamics.n_params(chain)
    if n_samples * chain.dof < 2 * n_p:
        raise ValueError(f"need n_samples*dof >= {2 * n_p} rows for a stable rank")
    q, dq, ddq = random_states(chain, n_samples, seed)
    stacked = dynamics.regressor_stack(chain, q, dq, ddq).reshape(-1, n_p)
    return projection_from_stack(stacked, dynamics.param_labels(chain),
                                 friction_idx=dynamics.friction_indices(chain),
                                 tau_rank=tau_rank)


def project(proj: BaseProjection, theta) -> np.ndarray:
    """theta_b = K theta (length rank)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (proj.n_params,):
        raise ValueError(f"theta must have length {proj.n_params}")
    return theta[proj.b_idx] + proj.k_d @ theta[proj.d_idx]


def base_regressor(chain: KinematicChain, q, dq, ddq,
                   proj: BaseProjection) -> np.ndarray:
    """Base-column regressor for one state, shape (dof, rank)."""
    return dynamics.regressor_row_block(chain, q, dq, ddq)[:, proj.b_idx]


def base_regressor_stack(chain: KinematicChain, q, dq, ddq,
                         proj: BaseProjection) -> np.ndarray:
    """Batched base regressor, shape (B, dof, rank)."""
    return dynamics.regressor_stack(chain, q, dq, ddq)[..., proj.b_idx]


def projection_to_dict(proj: BaseProjection) -> dict:
    return {
        "rank": proj.rank,
        "tau_rank": proj.tau_rank,
        "labels": list(proj.labels),
        "b_idx": proj.b_idx.tolist(),
        "d_idx": proj.d_idx.tolist(),
        "base_labels": proj.base_labels,
        "K_d": proj.k_d.reshape(-1).tolist(),
        "K": proj.k.reshape(-1).tolist(),
    }


def projection_from_dict(data: dict) -> BaseProjection:
    rank = int(data["rank"])
    n_d = len(data["d_idx"])
    return BaseProjection(
        b_idx=np.array(data["b_idx"], dtype=int),
        d_idx=np.array(data["d_idx"], dtype=int),
        k_d=np.array(data["K_d"], dtype=float).reshape(rank, n_d),
        labels=tuple(data["labels"]),
        tau_rank=float(data["tau_rank"]),
    )


def projection_to_json(proj: BaseProjection) -> str:
    return json.dumps(projection_to_dict(proj), indent=2)


def projection_from_json(text: str) -> BaseProjection:
    return projection_from_dict(json.loads(text))
