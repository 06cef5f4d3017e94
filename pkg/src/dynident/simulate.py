"""Synthetic measurement generation.

Stands in for hardware data collection: samples a reference trajectory,
evaluates ground-truth inverse dynamics, and corrupts torque/velocity
channels with white Gaussian noise. Accelerations are withheld (NaN) on
purpose — the documented pipeline must reconstruct them with the velocity
filter, never consume them directly.
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics, fourier
from .chain import KinematicChain
from .dataset import IdentDataset


@dataclass(frozen=True)
class ExternalPulse:
    """Rectangular torque pulse injected on one joint (0-based)."""

    joint: int
    start: float      # s
    duration: float   # s
    amplitude: float  # N*m


@dataclass(frozen=True)
class NoiseSpec:
    sigma_tau: float = 0.0   # N*m
    sigma_dq: float = 0.0    # rad/s
    seed: int = 0
    external_pulse: ExternalPulse = None

    def __post_init__(self):
        if self.sigma_tau < 0 or self.sigma_dq < 0:
            raise ValueError("noise magnitudes must be >= 0")


def simulate_dataset(chain: KinematicChain, traj: fourier.FourierTrajectory,
                     theta_true, noise: NoiseSpec = NoiseSpec(),
                     f_s: float = 20.0) -> IdentDataset:
    """Sampled dataset with noisy torques/velocities and NaN accelerations.

    Deterministic per seed (counter-based generator), so datasets can be
    regenerated bit-identically from the config alone.
    """
    theta_true = np.asarray(theta_true, dtype=float)
    ref = fourier.sample_grid(traj, f_s)
    tau = dynamics.rnea_batch(chain, ref.q, ref.dq, ref.ddq, theta_true)

    rng = np.random.Generator(np.random.Philox(noise.seed))
    if noise.sigma_tau > 0:
        tau = tau + rng.normal(0.0, noise.sigma_tau, tau.shape)
    dq = ref.dq
    if noise.sigma_dq > 0:
        dq = dq + rng.normal(0.0, noise.sigma_dq, dq.shape)

    pulse = noise.external_pulse
    if pulse is not None:
        if not 0 <= pulse.joint < chain.dof:
            raise ValueError("pulse joint out of range")
        window = (ref.t >= pulse.start) & (ref.t < pulse.start + pulse.duration)
        tau = tau.copy()
        tau[window, pulse.joint] += pulse.amplitude

    ddq = np.full_like(ref.ddq, np.nan)
    return IdentDataset(ref.t, ref.q, dq, ddq, tau)
