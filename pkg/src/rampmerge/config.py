"""Scenario configuration: nested dataclasses, YAML loading, presets and env overrides."""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .objectives import FuelModelParams, SafetyParams, ScalarizationBounds
from .traffic_models import IdmParams
from .world import RoadGeometry

ENV_PREFIX = "RAMPMERGE_"
CONTROLLERS = ("hcomc", "fifo")
OPTIMIZERS = ("nsga2", "pso", "sa")
PRESETS = tuple(f"condition{i}" for i in range(1, 6))


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class TrafficConfig:
    vehicles_per_lane: int = 8
    ramp_speed: float = 18.0
    vr_start_x: float = 60.0
    headway_jitter: float = 0.05  # uniform +/- fraction applied to each spacing
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0


@dataclass(frozen=True)
class HdvConfig:
    tau_gap: float = 0.5
    tau_speed: float = 0.3
    tau_dspeed: float = 0.5
    gap_error_factor: float = 1.0
    dspeed_error_factor: float = 1.0
    noise_std: float = 0.0  # >0 resamples both error factors every decision cadence


@dataclass(frozen=True)
class CavConfig:
    cooling_factor_c: float = 0.99


@dataclass(frozen=True)
class LaneChangeConfig:
    duration_hdv: float = 4.0
    duration_cav: float = 3.0


@dataclass(frozen=True)
class DecisionSpace:
    t_min: float = 6.0
    t_max: float = 16.0
    time_step: float = 0.1  # merge_end_time is evaluated on this grid
    n_gaps: int = 2


@dataclass(frozen=True)
class ObjectiveConfig:
    eta: float = 0.3
    safety_threshold: float = 4.0
    bounds: ScalarizationBounds = ScalarizationBounds()


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 60
    crossover_prob: float = 0.9
    mutation_prob: float = 1.0 / 3.0
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    seed: int = 0


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 40
    iterations: int = 60
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    seed: int = 0


@dataclass(frozen=True)
class SaConfig:
    iterations: int = 2439  # plus the initial state: the NSGA-II evaluation budget
    initial_temp: float = 1.0
    cooling: float = 0.998
    step_time: float = 1.0  # std of merge_end_time perturbation (s)
    seed: int = 0


@dataclass(frozen=True)
class GameConfig:
    enabled: bool = True
    cadence: float = 1.0
    intention_threshold: float = 0.3
    w_safe: float = 1.0
    w_eff: float = 0.5
    w_comf: float = 0.2
    collision_penalty: float = 1e4
    horizon: float = 5.0
    fv_aggressive: float = 0.2
    fv_normal: float = 0.6
    fv_conservative: float = 0.2


@dataclass(frozen=True)
class MetricsConfig:
    v_low: float = 15.0
    stab_accel: float = 0.05
    stab_window: float = 3.0
    post_merge_horizon: float = 60.0
    max_time: float = 120.0


@dataclass(frozen=True)
class ControlConfig:
    replan_cadence: float = 1.0
    fifo_safe_decel: float = 3.0
    decel_limit: float = 6.0
    plan_max_accel: float = 3.0  # bound on VR's planned acceleration, above the IDM comfort value


@dataclass(frozen=True)
class ScenarioConfig:
    condition: str = "custom"
    seed: int = 0
    dt: float = 0.1
    controller: str = "hcomc"
    optimizer: str = "nsga2"
    headway_main1: float = 5.0
    headway_main2: float = 5.0
    cav_penetration: float = 0.9
    grid_cap: int = 1000  # most cells one experiment grid may hold
    road: RoadGeometry = RoadGeometry()
    traffic: TrafficConfig = TrafficConfig()
    idm: IdmParams = IdmParams()
    hdv: HdvConfig = HdvConfig()
    cav: CavConfig = CavConfig()
    lane_change: LaneChangeConfig = LaneChangeConfig()
    safety: SafetyParams = SafetyParams()
    fuel: FuelModelParams = FuelModelParams()
    objectives: ObjectiveConfig = ObjectiveConfig()
    decision: DecisionSpace = DecisionSpace()
    ga: GaConfig = GaConfig()
    pso: PsoConfig = PsoConfig()
    sa: SaConfig = SaConfig()
    game: GameConfig = GameConfig()
    metrics: MetricsConfig = MetricsConfig()
    control: ControlConfig = ControlConfig()

    def with_(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(key, msg)

    need(cfg.headway_main1 > 0, "headway_main1", "must be > 0")
    need(cfg.headway_main2 > 0, "headway_main2", "must be > 0")
    need(0.0 <= cfg.cav_penetration <= 1.0, "cav_penetration", "must lie in [0, 1]")
    need(cfg.dt > 0, "dt", "must be > 0")
    need(cfg.grid_cap >= 1, "grid_cap", "must be >= 1")
    need(cfg.controller in CONTROLLERS, "controller", f"must be one of {CONTROLLERS}")
    need(cfg.optimizer in OPTIMIZERS, "optimizer", f"must be one of {OPTIMIZERS}")
    need(cfg.traffic.vehicles_per_lane >= 3, "traffic.vehicles_per_lane", "must be >= 3")
    need(cfg.traffic.ramp_speed >= 0, "traffic.ramp_speed", "must be >= 0")
    need(0 <= cfg.traffic.headway_jitter < 0.5, "traffic.headway_jitter", "must lie in [0, 0.5)")
    d = cfg.decision
    need(0 < d.t_min < d.t_max, "decision.t_min", "need 0 < t_min < t_max")
    need(d.time_step > 0, "decision.time_step", "must be > 0")
    need(d.n_gaps in (1, 2), "decision.n_gaps", "must be 1 or 2")
    ga = cfg.ga
    need(ga.population >= 4 and ga.population % 2 == 0, "ga.population", "must be even and >= 4")
    need(ga.generations >= 0, "ga.generations", "must be >= 0")
    need(0 <= ga.crossover_prob <= 1, "ga.crossover_prob", "must lie in [0, 1]")
    need(0 <= ga.mutation_prob <= 1, "ga.mutation_prob", "must lie in [0, 1]")
    need(cfg.pso.particles >= 1, "pso.particles", "must be >= 1")
    need(cfg.pso.iterations >= 0, "pso.iterations", "must be >= 0")
    need(cfg.sa.iterations >= 0, "sa.iterations", "must be >= 0")
    need(cfg.sa.initial_temp >= 0, "sa.initial_temp", "must be >= 0")
    need(0 < cfg.sa.cooling <= 1, "sa.cooling", "must lie in (0, 1]")
    g = cfg.game
    probs = (g.fv_aggressive, g.fv_normal, g.fv_conservative)
    need(all(p >= 0 for p in probs) and abs(sum(probs) - 1) < 1e-9, "game.fv_normal",
         "fv_* probabilities must be non-negative and sum to 1")
    need(cfg.metrics.v_low >= 0, "metrics.v_low", "must be >= 0")
    need(cfg.control.plan_max_accel > 0, "control.plan_max_accel", "must be > 0")
    need(cfg.control.decel_limit > 0, "control.decel_limit", "must be > 0")
    need(cfg.hdv.noise_std >= 0, "hdv.noise_std", "must be >= 0")
    for k in ("tau_gap", "tau_speed", "tau_dspeed"):
        need(getattr(cfg.hdv, k) >= 0, f"hdv.{k}", "must be >= 0")
    for k in ("gap_error_factor", "dspeed_error_factor"):
        need(0.5 < getattr(cfg.hdv, k) < 1.5, f"hdv.{k}", "must lie in (0.5, 1.5)")
    need(0 <= cfg.cav.cooling_factor_c <= 1, "cav.cooling_factor_c", "must lie in [0, 1]")
    return cfg


def _coerce(tp, value, key: str):
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(key, "expected a mapping")
        return _build(tp, value, f"{key}.")
    origin = typing.get_origin(tp)
    if tp is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, "expected a list")
        return tuple(float(x) for x in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        return value
    return value


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"{prefix}{k}", "unknown key")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = _coerce(hints[k], v, f"{prefix}{k}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(prefix.rstrip("."), str(exc)) from exc


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def preset_data(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError("condition", f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("rampmerge.presets").joinpath(f"{name}.yaml").read_text()
    return yaml.safe_load(text) or {}


def env_overrides(environ=None) -> dict:
    """``RAMPMERGE_GA__GENERATIONS=10`` -> ``{"ga": {"generations": 10}}``."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for k, raw in sorted(environ.items()):
        if not k.startswith(ENV_PREFIX):
            continue
        path = k[len(ENV_PREFIX):].lower().split("__")
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = yaml.safe_load(raw)
    return out


def from_dict(data: dict, use_env: bool = False) -> ScenarioConfig:
    data = dict(data or {})
    if "preset" in data:
        name = data.pop("preset")
        data = _merge(preset_data(name), data)
    if use_env:
        data = _merge(data, env_overrides())
    return validate(_build(ScenarioConfig, data))


def read_config_data(path) -> dict:
    """Raw mapping from a YAML file; an empty file is an empty mapping."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("", f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse {p}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    return data


def load_config(path, use_env: bool = False) -> ScenarioConfig:
    return from_dict(read_config_data(path), use_env=use_env)


def preset(name: str, **overrides) -> ScenarioConfig:
    cfg = from_dict({"preset": name})
    return cfg.with_(**overrides) if overrides else cfg
