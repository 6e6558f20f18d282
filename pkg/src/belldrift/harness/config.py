"""Experiment configuration.

Configs are YAML (JSON is accepted as a subset). ``seed`` and
``shots_per_bin`` have no defaults; unknown keys are rejected.

Example::

    experiment_id: ramp-blocked
    seed: 11
    shots_per_bin: 1024
    num_bins: 12
    schedule: blocked
    null_trials: 1000
    source:
      type: lhv
      profile: linear_ramp
      p_lo: 0.0
      p_hi: 0.15
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import SchemaError
from ..lhv import PProfile
from ..mitigation import tensored_flip
from ..qsim import AXES_SETS, NoiseSpec, PhaseDriftProfile
from ..schedule import DriftIndexRule, ScheduleKind, parse_kind
from ..stats import DEFAULT_NULL_TRIALS


@dataclass(frozen=True)
class NoiseConfig:
    depolarizing_rate: float = 0.0
    readout_flip: tuple[float, float] | None = None
    readout_matrix: tuple[tuple[float, ...], ...] | None = None

    def spec(self) -> NoiseSpec:
        assignment = None
        if self.readout_matrix is not None:
            assignment = np.array(self.readout_matrix, dtype=float)
        elif self.readout_flip is not None:
            assignment = tensored_flip(*self.readout_flip).matrix
        return NoiseSpec(self.depolarizing_rate, assignment)


@dataclass(frozen=True)
class QuantumSource:
    theta_max: float = 0.0
    axes: str = "pauli"
    type: str = "quantum"

    def drift_profile(self, num_bins: int) -> PhaseDriftProfile:
        return PhaseDriftProfile.linear(self.theta_max, num_bins)


@dataclass(frozen=True)
class LhvSource:
    profile: str = "constant"
    p: float | None = None
    p_lo: float | None = None
    p_hi: float | None = None
    type: str = "lhv"

    def p_profile(self, num_bins: int) -> PProfile:
        if self.profile == "constant":
            return PProfile.constant(self.p, num_bins)
        return PProfile.linear_ramp(self.p_lo, self.p_hi, num_bins)


@dataclass(frozen=True)
class ExperimentConfig:
    source: QuantumSource | LhvSource
    seed: int
    shots_per_bin: int
    num_bins: int = 6
    schedule: ScheduleKind = ScheduleKind.ROUND_ROBIN
    drift_index_rule: DriftIndexRule | None = None
    null_trials: int = DEFAULT_NULL_TRIALS
    mitigation: bool = False
    calibration_shots: int | None = None
    kappa_max: float = 100.0
    bootstrap: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    experiment_id: str = "run"

    def __post_init__(self):
        try:
            object.__setattr__(self, "schedule", parse_kind(self.schedule))
            if self.drift_index_rule is not None:
                object.__setattr__(self, "drift_index_rule", DriftIndexRule(self.drift_index_rule))
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc
        if self.schedule is ScheduleKind.CUSTOM:
            raise SchemaError("experiments run round_robin or blocked schedules")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise SchemaError(f"seed must be an integer, got {self.seed!r}")
        for name in ("shots_per_bin", "num_bins", "null_trials"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise SchemaError(f"{name} must be a positive integer, got {v!r}")
        if self.calibration_shots is not None and self.calibration_shots < 1:
            raise SchemaError("calibration_shots must be positive when given")
        src = self.source
        if isinstance(src, QuantumSource):
            if src.axes not in AXES_SETS:
                raise SchemaError(f"axes must be one of {sorted(AXES_SETS)}, got {src.axes!r}")
        elif isinstance(src, LhvSource):
            if src.profile == "constant":
                if src.p is None:
                    raise SchemaError("constant LHV profile needs 'p'")
            elif src.profile == "linear_ramp":
                if src.p_lo is None or src.p_hi is None:
                    raise SchemaError("linear_ramp LHV profile needs 'p_lo' and 'p_hi'")
            else:
                raise SchemaError(f"unknown LHV profile {src.profile!r}")
        else:
            raise SchemaError(f"unknown source {src!r}")
        # surface invalid physics parameters at load time
        try:
            self.noise.spec()
            if isinstance(src, LhvSource):
                src.p_profile(self.num_bins)
            else:
                src.drift_profile(self.num_bins)
        except SchemaError:
            raise
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc

    @property
    def source_kind(self) -> str:
        return self.source.type

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schedule"] = self.schedule.value
        d["drift_index_rule"] = None if self.drift_index_rule is None else self.drift_index_rule.value
        d["noise"] = {k: _plain(v) for k, v in d["noise"].items() if v is not None and v != 0.0} or {}
        d["source"] = {k: v for k, v in d["source"].items() if v is not None}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise SchemaError("config must be a mapping")
        data = dict(data)
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "config")
        for key in ("seed", "shots_per_bin", "source"):
            if key not in data:
                raise SchemaError(f"config is missing required key '{key}'")
        src = dict(data.pop("source") or {})
        kind = src.get("type")
        if kind == "quantum":
            _reject_unknown(src, {f.name for f in dataclasses.fields(QuantumSource)}, "source")
            source = QuantumSource(**src)
        elif kind == "lhv":
            _reject_unknown(src, {f.name for f in dataclasses.fields(LhvSource)}, "source")
            source = LhvSource(**src)
        else:
            raise SchemaError(f"source.type must be 'quantum' or 'lhv', got {kind!r}")
        noise = dict(data.pop("noise", None) or {})
        _reject_unknown(noise, {f.name for f in dataclasses.fields(NoiseConfig)}, "noise")
        if noise.get("readout_flip") is not None:
            flip = noise["readout_flip"]
            flip = [flip, flip] if isinstance(flip, (int, float)) else list(flip)
            if len(flip) != 2:
                raise SchemaError("readout_flip must be one number or a pair")
            noise["readout_flip"] = (float(flip[0]), float(flip[1]))
        if noise.get("readout_matrix") is not None:
            noise["readout_matrix"] = tuple(tuple(float(x) for x in row) for row in noise["readout_matrix"])
        try:
            return cls(source=source, noise=NoiseConfig(**noise), **data)
        except TypeError as exc:
            raise SchemaError(str(exc)) from exc


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise SchemaError(f"unknown {where} key(s): {', '.join(unknown)}")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise SchemaError(f"cannot parse config {path}: {exc}", line=None if line is None else line + 1) from exc
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
