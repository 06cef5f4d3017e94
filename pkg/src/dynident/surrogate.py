"""Condition-number surrogate of a stacked base regressor.

For a full-column-rank stack Yb (rows >> rank) with normal matrix
H = Yb^T Yb,

    r_c = (||H||_F + ||H^-1||_F) / 2

is an upper bound on cond(Yb) = s_max/s_min: with singular values s_i of
Yb, ||H||_F >= s_max^2 and ||H^-1||_F >= 1/s_min^2, and by AM >= GM

    r_c >= (s_max^2 + 1/s_min^2)/2 >= s_max/s_min.

Unlike cond, r_c is smooth in the matrix entries wherever H is
nonsingular, which is what the trajectory optimizer differentiates.

A singular (or numerically non-positive-definite) H maps to +inf: the
optimizer treats such iterates as infinitely bad instead of raising inside
a line search.
"""

import numpy as np
import scipy.linalg


def normal_matrix(yb: np.ndarray) -> np.ndarray:
    yb = np.asarray(yb, dtype=float)
    if yb.ndim != 2 or yb.shape[0] < yb.shape[1]:
        raise ValueError("stacked regressor must be a tall (rows >= cols) matrix")
    return yb.T @ yb


def _inverse_spd(h: np.ndarray):
    """Inverse via Cholesky; None if not numerically positive definite."""
    try:
        cho = scipy.linalg.cho_factor(h, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    return scipy.linalg.cho_solve(cho, np.eye(h.shape[0]), check_finite=False)


def surrogate_from_normal(h: np.ndarray) -> float:
    h_inv = _inverse_spd(h)
    if h_inv is None:
        return np.inf
    return 0.5 * (np.linalg.norm(h, "fro") + np.linalg.norm(h_inv, "fro"))


def surrogate_cost(yb: np.ndarray) -> float:
    """r_c of the stack; +inf when the columns are dependent."""
    return surrogate_from_normal(normal_matrix(yb))


def surrogate_weight(h: np.ndarray):
    """(r_c, W) with W = dr_c/dH for symmetric H.

    d||H||_F = <H/||H||_F, dH>; d||H^-1||_F = -<H^-3/||H^-1||_F, dH>,
    so W = (H/||H||_F - H^-3/||H^-1||_F) / 2. Returns (inf, None) on a
    singular normal matrix.
    """
    h_inv = _inverse_spd(h)
    if h_inv is None:
        return np.inf, None
    n_h = np.linalg.norm(h, "fro")
    n_i = np.linalg.norm(h_inv, "fro")
    w = 0.5 * (h / n_h - (h_inv @ h_inv @ h_inv) / n_i)
    return 0.5 * (n_h + n_i), w


def stack_entry_gradient(yb: np.ndarray, w: np.ndarray) -> np.ndarray:
    """dr_c/dYb element-wise: with dH = dYb^T Yb + Yb^T dYb and symmetric
    W, <W, dH> = <2 Yb W, dYb>."""
    return 2.0 * yb @ w


def condition_number(yb: np.ndarray) -> float:
    """cond = s_max/s_min via SVD; +inf for numerically rank-deficient."""
    s = np.linalg.svd(np.asarray(yb, dtype=float), compute_uv=False)
    if s[-1] <= s[0] * np.finfo(float).eps * max(yb.shape):
        return np.inf
    return float(s[0] / s[-1])
