"""Run configuration: JSON sections with full defaults and strict keys.

Every section falls back to built-in defaults; unknown sections or keys
are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from .controller import ControlGains
from .localization import LikelihoodConfig, MotionKernel
from .perception import FieldConfig
from .pipeline import InterventionConfig, PipelineConfig
from .relpose import OracleConfig
from .sim import SimWorld, route_fixture
from .topomap import SelectorConfig


class ConfigError(Exception):
    """Invalid run configuration."""


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "world": {
        "fixture": "standard-short",
        "waypoints": None,
        "obstacles": [],
        "corridor_halfwidth": None,
        "robot_radius": None,
        "teach_speed": 1.0,
        "teach_lookahead": 1.5,
    },
    "perception": {
        "dimension": 64,
        "correlation_length": 2.0,
        "heading_weight": 1.0,
        "scene_sigma": 0.0,
        "measurement_sigma": 0.0,
    },
    "selector": {
        "dt_min": 0.6,
        "dt_max": 3.0,
        "buffer_size": 5,
        "tau_base": 0.85,
        "tau_lo": 0.70,
        "tau_hi": 0.95,
        "gamma": 0.05,
        "target_rate": 1.0,
        "rate_window": 20.0,
    },
    "localization": {
        "kernel": [[-1, 0.1], [0, 0.2], [1, 0.5], [2, 0.2]],
        "temperature": 0.07,
        "floor": 1e-6,
        "lookahead": 1,
        "prior": "delta",
        "mode": "filtered",
    },
    "estimator": {
        "kind": "oracle",
        "sigma_t": 0.0,
        "sigma_psi": 0.0,
        "r_valid": 8.0,
        "p_fail": 0.0,
        "bridge_command": None,
        "timeout_s": 0.4,
    },
    "controller": {
        "k_rho": 1.0,
        "k_alpha": 2.0,
        "k_beta": -0.3,
        "v_max": 1.4,
        "w_max": 1.0,
        "rho_slow": 1.0,
        "rho_align": 0.05,
        "k_final": 2.5,
        "alpha_damp_exponent": 2.0,
    },
    "pipeline": {
        "rate": 5.0,
        "subgoal_reach_rho": 0.7,
        "goal_hold_cycles": 3,
        "failure_hold_speed_factor": 0.3,
        "max_consecutive_failures": 10,
        "max_sim_seconds": 1800.0,
        "intervention_threshold": 1.5,
        "max_interventions": 20,
    },
}


def _merge_strict(defaults: dict, overrides: dict, path: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_strict(defaults[key], value, f"{path}.{key}" if path else key)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def effective_config(overrides: dict | None = None) -> dict:
    """Defaults deep-merged with overrides; unknown keys rejected."""
    if overrides is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    if not isinstance(overrides, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge_strict(DEFAULT_CONFIG, overrides)


def load_config(path: str | None) -> dict:
    """Load a JSON config file (or just defaults when path is None)."""
    if path is None:
        return effective_config()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return effective_config(data)


def config_json(config: dict) -> str:
    return json.dumps(config, indent=2, sort_keys=True)


def _build(cls, section: dict, name: str, **extra):
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} config: {exc}") from exc


def world_from_config(config: dict) -> SimWorld:
    section = config["world"]
    kwargs = {}
    if section["obstacles"]:
        kwargs["obstacles"] = tuple(tuple(map(float, o)) for o in section["obstacles"])
    if section["corridor_halfwidth"] is not None:
        kwargs["corridor_halfwidth"] = float(section["corridor_halfwidth"])
    if section["robot_radius"] is not None:
        kwargs["robot_radius"] = float(section["robot_radius"])
    if section["waypoints"] is not None:
        try:
            route = np.asarray(section["waypoints"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid waypoints: {exc}") from exc
        base = SimWorld(route=route)
    else:
        try:
            base = route_fixture(section["fixture"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return SimWorld(
        route=base.route,
        obstacles=kwargs.get("obstacles", base.obstacles),
        corridor_halfwidth=kwargs.get("corridor_halfwidth", base.corridor_halfwidth),
        robot_radius=kwargs.get("robot_radius", base.robot_radius),
    )


def field_config_from_config(config: dict) -> FieldConfig:
    return _build(FieldConfig, config["perception"], "perception", seed=int(config["seed"]))


def selector_from_config(config: dict) -> SelectorConfig:
    return _build(SelectorConfig, config["selector"], "selector")


def kernel_from_config(config: dict) -> MotionKernel:
    raw = config["localization"]["kernel"]
    try:
        offsets = tuple((int(d), float(p)) for d, p in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid kernel: {exc}") from exc
    kernel = _build(MotionKernel, {}, "kernel", offsets=offsets)
    # Route following needs the filter to expect forward motion.
    if not kernel.has_forward_bias:
        raise ConfigError("kernel needs a strictly positive forward offset")
    return kernel


def likelihood_from_config(config: dict) -> LikelihoodConfig:
    loc = config["localization"]
    return _build(LikelihoodConfig, {}, "likelihood",
                  temperature=float(loc["temperature"]), floor=float(loc["floor"]))


def gains_from_config(config: dict) -> ControlGains:
    return _build(ControlGains, config["controller"], "controller")


def oracle_from_config(config: dict) -> OracleConfig:
    section = config["estimator"]
    return _build(
        OracleConfig, {}, "estimator",
        sigma_t=float(section["sigma_t"]), sigma_psi=float(section["sigma_psi"]),
        r_valid=float(section["r_valid"]), p_fail=float(section["p_fail"]),
    )


def pipeline_from_config(config: dict) -> PipelineConfig:
    section = dict(config["pipeline"])
    section.pop("intervention_threshold")
    section.pop("max_interventions")
    return _build(PipelineConfig, section, "pipeline")


def intervention_from_config(config: dict) -> InterventionConfig:
    section = config["pipeline"]
    return _build(
        InterventionConfig, {}, "pipeline",
        threshold=float(section["intervention_threshold"]),
        max_count=int(section["max_interventions"]),
    )
