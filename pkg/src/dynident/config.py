"""Pipeline configuration: one JSON file drives every subcommand.

Unknown keys are rejected everywhere (typo safety), every field has a
documented default, and all randomness flows from the single top-level
seed, fanned out to the stages by fixed labels. Any stage block may pin
its own seed explicitly to override the fan-out.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# fixed fan-out labels; appending stages is fine, renumbering is not
_STAGE_KEYS = {"base_params": 1, "mfpee": 2, "optimize": 3,
               "simulate": 4, "validate": 5}

OUTPUT_DIR_ENV = "DYNIDENT_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _take(data: dict, where: str, **fields):
    """Pop declared fields with defaults; reject leftovers."""
    out = {}
    for name, default in fields.items():
        out[name] = data.pop(name, default)
    if data:
        raise ConfigError(f"unknown keys in {where}: {sorted(data)}")
    return out


@dataclass(frozen=True)
class FourierConfig:
    order: int = 5
    f_f: float = 0.1
    f_s: float = 20.0
    boundary_mode: str = "rest-start"
    q_offset: object = "mid-range"   # or explicit per-joint list

    @classmethod
    def from_dict(cls, data: dict) -> "FourierConfig":
        got = _take(dict(data), "fourier", L=cls.order, f_f=cls.f_f,
                    f_s=cls.f_s, boundary_mode=cls.boundary_mode,
                    q_offset=cls.q_offset)
        got["order"] = got.pop("L")
        cfg = cls(**got)
        if cfg.order < 1 or cfg.f_f <= 0 or cfg.f_s <= 0:
            raise ConfigError("fourier: L >= 1 and positive frequencies")
        if not (cfg.q_offset == "mid-range"
                or isinstance(cfg.q_offset, (list, tuple))):
            raise ConfigError("fourier.q_offset: 'mid-range' or a list")
        return cfg

    def offset_for(self, chain):
        from . import fourier
        if self.q_offset == "mid-range":
            return fourier.mid_range_offset(chain)
        off = np.asarray(self.q_offset, dtype=float)
        if off.shape != (chain.dof,):
            raise ConfigError("fourier.q_offset length must equal dof")
        return off


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 3
    seed: int = None
    step1_max_iter: int = 2000
    step2_max_iter: int = 3000
    margin: float = 0.05

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        got = _take(dict(data), "optimizer", n_starts=cls.n_starts,
                    seed=None, step1_max_iter=cls.step1_max_iter,
                    step2_max_iter=cls.step2_max_iter, margin=cls.margin)
        cfg = cls(**got)
        if cfg.n_starts < 1 or cfg.margin < 0:
            raise ConfigError("optimizer: n_starts >= 1 and margin >= 0")
        return cfg


@dataclass(frozen=True)
class FilterConfig:
    r: float = 100.0
    h0_mult: float = 5.0
    warmup_s: float = 2.0

    @classmethod
    def from_dict(cls, data: dict) -> "FilterConfig":
        got = _take(dict(data), "filter", r=cls.r, h0_mult=cls.h0_mult,
                    warmup_s=cls.warmup_s)
        return cls(**got)


@dataclass(frozen=True)
class IdentifyConfig:
    mu_margin: float = 0.5
    floor: float = 1e-3
    friction_cap: float = 5.0

    @classmethod
    def from_dict(cls, data: dict) -> "IdentifyConfig":
        got = _take(dict(data), "identify", mu_margin=cls.mu_margin,
                    floor=cls.floor, friction_cap=cls.friction_cap)
        return cls(**got)


@dataclass(frozen=True)
class SimulateConfig:
    sigma_tau: float = 0.0
    sigma_dq: float = 0.0
    seed: int = None
    pulse: dict = None   # {joint, start, duration, amplitude}

    @classmethod
    def from_dict(cls, data: dict) -> "SimulateConfig":
        got = _take(dict(data), "simulate", sigma_tau=cls.sigma_tau,
                    sigma_dq=cls.sigma_dq, seed=None, pulse=None)
        if got["pulse"] is not None:
            got["pulse"] = _take(dict(got["pulse"]), "simulate.pulse",
                                 joint=None, start=None, duration=None,
                                 amplitude=None)
            if None in got["pulse"].values():
                raise ConfigError("simulate.pulse needs joint, start, "
                                  "duration, amplitude")
        return cls(**got)


@dataclass(frozen=True)
class BaseParamsConfig:
    n_samples: int = None   # None -> enough for the rank requirement
    seed: int = None

    @classmethod
    def from_dict(cls, data: dict) -> "BaseParamsConfig":
        got = _take(dict(data), "base_params", n_samples=None, seed=None)
        return cls(**got)


@dataclass(frozen=True)
class MfpeeConfig:
    k_max: int = 8
    seed: int = None

    @classmethod
    def from_dict(cls, data: dict) -> "MfpeeConfig":
        got = _take(dict(data), "mfpee", k_max=cls.k_max, seed=None)
        if got["k_max"] < 1:
            raise ConfigError("mfpee.k_max must be >= 1")
        return cls(**got)


@dataclass(frozen=True)
class PipelineConfig:
    urdf_path: str
    ee_cloud_path: str = None
    ellipsoids: str = None            # path to the ellipsoid JSON array
    output_dir: str = "out"
    seed: int = 0
    fourier: FourierConfig = field(default_factory=FourierConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    identify: IdentifyConfig = field(default_factory=IdentifyConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    base_params: BaseParamsConfig = field(default_factory=BaseParamsConfig)
    mfpee: MfpeeConfig = field(default_factory=MfpeeConfig)

    def stage_seed(self, stage: str) -> int:
        """Deterministic per-stage seed derived from the top-level seed.

        A stage block's explicit seed wins when present.
        """
        block = getattr(self, stage, None)
        if block is not None and getattr(block, "seed", None) is not None:
            return int(block.seed)
        key = _STAGE_KEYS[stage if stage in _STAGE_KEYS else stage]
        return int(np.random.SeedSequence([self.seed, key]).generate_state(1)[0])

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV, self.output_dir))


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")

    got = _take(data, "config",
                urdf_path=None, ee_cloud_path=None, ellipsoids=None,
                output_dir="out", seed=0, fourier={}, optimizer={},
                filter={}, identify={}, simulate={}, base_params={},
                mfpee={})
    if got["urdf_path"] is None:
        raise ConfigError("config requires urdf_path")

    base = path.parent
    for key in ("urdf_path", "ee_cloud_path", "ellipsoids"):
        if got[key] is not None:
            p = Path(got[key])
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ConfigError(f"{key} does not exist: {p}")
            got[key] = str(p)

    return PipelineConfig(
        urdf_path=got["urdf_path"],
        ee_cloud_path=got["ee_cloud_path"],
        ellipsoids=got["ellipsoids"],
        output_dir=got["output_dir"],
        seed=int(got["seed"]),
        fourier=FourierConfig.from_dict(got["fourier"]),
        optimizer=OptimizerConfig.from_dict(got["optimizer"]),
        filter=FilterConfig.from_dict(got["filter"]),
        identify=IdentifyConfig.from_dict(got["identify"]),
        simulate=SimulateConfig.from_dict(got["simulate"]),
        base_params=BaseParamsConfig.from_dict(got["base_params"]),
        mfpee=MfpeeConfig.from_dict(got["mfpee"]),
    )
