"""Time-stamped identification samples and their CSV representation.

CSV format: header ``t,q1..qN,dq1..dqN,ddq1..ddqN,tau1..tauN``, decimal
text, one sample per line. Torque columns may be absent (sampled reference
trajectories). NaN is written as an empty field; unmeasured accelerations
therefore survive a round trip.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class IdentDataset:
    """Samples of (q, dq, ddq, tau) on a common time grid.

    ``warmup`` marks the number of leading samples that downstream
    regression must skip (set by the tracking-differentiator filter); it is
    carried in memory only, not in the CSV.
    """

    t: np.ndarray       # (B,)
    q: np.ndarray       # (B, n)
    dq: np.ndarray      # (B, n)
    ddq: np.ndarray     # (B, n)
    tau: np.ndarray = None  # (B, n) or None
    warmup: int = 0

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        for name in ("q", "dq", "ddq", "tau"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float))
        b = self.t.shape[0]
        if self.t.ndim != 1:
            raise ValueError("t must be one-dimensional")
        for name in ("q", "dq", "ddq", "tau"):
            val = getattr(self, name)
            if name == "tau" and val is None:
                continue
            if val.ndim != 2 or val.shape[0] != b:
                raise ValueError(f"{name} must have shape (len(t), n)")
            if val.shape[1] != self.q.shape[1]:
                raise ValueError("inconsistent joint counts")
        if not (0 <= self.warmup <= b):
            raise ValueError("warmup out of range")

    def __len__(self):
        return self.t.shape[0]

    @property
    def n_joints(self) -> int:
        return self.q.shape[1]

    def active(self) -> "IdentDataset":
        """Copy with the warm-up samples dropped."""
        if self.warmup == 0:
            return self
        w = self.warmup
        tau = None if self.tau is None else self.tau[w:]
        return IdentDataset(self.t[w:], self.q[w:], self.dq[w:],
                            self.ddq[w:], tau, warmup=0)

    def with_warmup(self, warmup: int) -> "IdentDataset":
        return replace(self, warmup=warmup)

    def sample_spacing(self) -> float:
        """Constant time step; raises if the grid is not uniform."""
        dt = np.diff(self.t)
        if len(dt) == 0:
            raise ValueError("dataset needs at least two samples")
        if np.max(np.abs(dt - dt[0])) > 1e-9:
            raise ValueError("non-uniform sampling")
        return float(dt[0])


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else format(x, ".17g")


def write_csv(ds: IdentDataset, path) -> None:
    n = ds.n_joints
    cols = ["t"]
    for stem in ("q", "dq", "ddq") + (("tau",) if ds.tau is not None else ()):
        cols.extend(f"{stem}{i + 1}" for i in range(n))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for k in range(len(ds)):
            row = [_fmt(ds.t[k])]
            row.extend(_fmt(v) for v in ds.q[k])
            row.extend(_fmt(v) for v in ds.dq[k])
            row.extend(_fmt(v) for v in ds.ddq[k])
            if ds.tau is not None:
                row.extend(_fmt(v) for v in ds.tau[k])
            writer.writerow(row)


def read_csv(path) -> IdentDataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    has_tau = header[-1].startswith("tau")
    n, rem = divmod(len(header) - 1, 4 if has_tau else 3)
    if header[0] != "t" or rem != 0 or n == 0:
        raise ValueError(f"unrecognized dataset header in {path}")
    expect = ["t"]
    for stem in ("q", "dq", "ddq") + (("tau",) if has_tau else ()):
        expect.extend(f"{stem}{i + 1}" for i in range(n))
    if header != expect:
        raise ValueError(f"unrecognized dataset header in {path}")

    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: row width does not match header")
    t = data[:, 0]
    q = data[:, 1:1 + n]
    dq = data[:, 1 + n:1 + 2 * n]
    ddq = data[:, 1 + 2 * n:1 + 3 * n]
    tau = data[:, 1 + 3 * n:1 + 4 * n] if has_tau else None
    return IdentDataset(t, q, dq, ddq, tau)
