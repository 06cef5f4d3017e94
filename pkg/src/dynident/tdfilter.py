"""Tracking-differentiator velocity filter.

A discrete second-order observer tracks each measured velocity channel:
x1 follows the signal, x2 its derivative, driven by the time-optimal
control function fhan. Feeding measured joint velocities through it gives
smoothed velocities plus acceleration estimates in one pass — downstream
regression always takes ddq from here, never from raw differencing.
"""

from dataclasses import dataclass, replace

import numpy as np

from .dataset import IdentDataset

DEFAULT_R = 100.0        # tracking aggressiveness, rad/s^3
DEFAULT_H0_MULT = 5.0    # filtering horizon as a multiple of the step
DEFAULT_WARMUP_S = 2.0   # leading seconds excluded from regression


def fhan(e1, e2, r, h0):
    """Han's discrete time-optimal control function.

    Steers the double integrator (e1, e2) to the origin at acceleration
    limit r with lookahead horizon h0. Vectorizes over leading dimensions;
    sign(0) = 0 keeps the rest state exactly at rest.
    """
    d = r * h0
    d0 = h0 * d
    y = e1 + h0 * e2
    a0 = np.sqrt(d * d + 8.0 * r * np.abs(y))
    a = np.where(np.abs(y) > d0,
                 e2 + 0.5 * (a0 - d) * np.sign(y),
                 e2 + y / h0)
    return np.where(np.abs(a) > d, -r * np.sign(a), -r * a / d)


@dataclass(frozen=True)
class TDState:
    """One tracking-differentiator channel."""

    x1: float       # tracked signal
    x2: float       # tracked derivative
    h: float        # discretization step, s
    r: float = DEFAULT_R
    h0: float = None

    def __post_init__(self):
        if self.h0 is None:
            object.__setattr__(self, "h0", DEFAULT_H0_MULT * self.h)
        if not (self.h > 0 and self.r > 0 and self.h0 >= self.h):
            raise ValueError("need h > 0, r > 0 and h0 >= h")


def td_step(state: TDState, v_meas: float) -> TDState:
    x1 = state.x1 + state.h * state.x2
    x2 = state.x2 + state.h * float(
        fhan(state.x1 - v_meas, state.x2, state.r, state.h0))
    return replace(state, x1=x1, x2=x2)


def filter_dataset(ds: IdentDataset, r=DEFAULT_R, h0_mult=DEFAULT_H0_MULT,
                   warmup_s: float = DEFAULT_WARMUP_S) -> IdentDataset:
    """Replace dq with the tracked velocity and ddq with its derivative.

    q and tau pass through untouched. `r` and `h0_mult` broadcast per
    joint. The first `warmup_s` seconds are flagged as warm-up on the
    returned dataset so the regression skips the observer transient.
    """
    if len(ds) == 0:
        return ds
    h = ds.sample_spacing()
    n = ds.n_joints
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    h0 = np.broadcast_to(np.asarray(h0_mult, dtype=float), (n,)) * h
    if np.any(r <= 0) or np.any(h0 < h):
        raise ValueError("need r > 0 and h0 >= h for every joint")

    x1 = ds.dq[0].copy()
    x2 = np.zeros(n)
    dq_f = np.empty_like(ds.dq)
    ddq_f = np.empty_like(ds.dq)
    for k in range(len(ds)):
        dq_f[k] = x1
        ddq_f[k] = x2
        x1 = x1 + h * x2
        x2 = x2 + h * fhan(dq_f[k] - ds.dq[k], ddq_f[k], r, h0)

    warmup = min(int(round(warmup_s / h)), len(ds))
    return IdentDataset(ds.t, ds.q, dq_f, ddq_f, ds.tau, warmup=warmup)


def filter_summary(raw: IdentDataset, filtered: IdentDataset) -> dict:
    """Per-joint RMS change introduced by the filter (post warm-up)."""
    w = filtered.warmup
    delta = filtered.dq[w:] - raw.dq[w:]
    rms = np.sqrt(np.mean(delta ** 2, axis=0)) if len(delta) else \
        np.zeros(raw.n_joints)
    return {
        "warmup_samples": int(w),
        "dq_rms_change": rms.tolist(),
        "ddq_rms": np.sqrt(np.mean(filtered.ddq[w:] ** 2, axis=0)).tolist()
        if len(delta) else np.zeros(raw.n_joints).tolist(),
    }
