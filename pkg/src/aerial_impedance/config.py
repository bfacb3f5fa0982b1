"""Experiment configuration: YAML defaults, dotted overrides and object builders."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .adaptive import AdaptiveImpedanceController
from .baselines import CscConfig, CscController, PscConfig, PscController
from .dynamics import Disturbance, Link, PlantParameters
from .impedance import ControllerGains, GainError
from .scenario import CatchEvent, NoiseSpec, ScenarioConfig

CONTROLLERS = ("proposed", "csc", "psc")


class ConfigError(ValueError):
    """Unreadable, malformed or inconsistent configuration."""


def default_config() -> dict:
    text = resources.files("aerial_impedance").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    for key, val in extra.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and isinstance(val, dict) and base[key]:
            _merge(base[key], val, where + ".")
        else:
            base[key] = val
    return base


def load_config(path=None) -> dict:
    """Defaults, overlaid with the file at ``path`` when given."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if data is None:
        return cfg
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _merge(cfg, data)


def apply_overrides(cfg: dict, overrides) -> dict:
    """Return a copy with ``section.key=value`` overrides applied (values parsed as YAML)."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {key!r} does not name an existing key")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override {key!r} does not name an existing key")
        try:
            node[parts[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {key!r}: {exc}") from exc
    return cfg


def _floats(values, name):
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc


def build_plant(cfg: dict, payload: float = 0.0) -> PlantParameters:
    p = cfg["plant"]
    try:
        links = tuple(Link(**{k: float(v) for k, v in link.items()}) for link in p["links"])
        d = p.get("disturbance") or {}
        dist = Disturbance(constant=_floats(d.get("constant") or (), "constant"),
                           amplitude=_floats(d.get("amplitude") or (), "amplitude"),
                           frequency=float(d.get("frequency", 0.0)),
                           phase=float(d.get("phase", 0.0)))
        return PlantParameters(base_mass=float(p["base_mass"]),
                               base_inertia=_floats(p["base_inertia"], "base_inertia"),
                               links=links, mount=_floats(p["mount"], "mount"),
                               gravity=float(p["gravity"]), payload_mass=payload,
                               disturbance=dist)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"plant section: {exc}") from exc


def nominal_plant(cfg: dict) -> PlantParameters:
    """What the model-based controllers believe: the vehicle without payload or disturbance."""
    return replace(build_plant(cfg), disturbance=Disturbance())


def build_gains(cfg: dict, with_trim: bool | None = None) -> ControllerGains:
    g = cfg["gains"]
    try:
        kwargs = {k: _floats(g[k], k) for k in ("Md", "Kd", "Kp", "Lambda")}
        if g.get("Phi") is not None:
            kwargs["Phi"] = _floats(g["Phi"], "Phi")
        kwargs.update(boundary_layer=float(g["boundary_layer"]), nu=_floats(g["nu"], "nu"),
                      epsilon=float(g["epsilon"]), H0=_floats(g["H0"], "H0"),
                      zeta0=float(g["zeta0"]))
    except KeyError as exc:
        raise ConfigError(f"gains section misses {exc}") from exc
    use_trim = g.get("hover_trim", False) if with_trim is None else with_trim
    if use_trim:
        nom = build_plant(cfg)
        trim = np.zeros(nom.dof)
        trim[2] = nom.total_mass * nom.gravity
        kwargs["trim"] = trim
    try:
        return ControllerGains(**kwargs)
    except GainError:
        raise
    except ValueError as exc:
        raise ConfigError(f"gains: {exc}") from exc


def build_scenario(cfg: dict) -> ScenarioConfig:
    s, c = cfg["scenario"], cfg["catch"]
    try:
        catch = CatchEvent(time=float(c["time"]), mass=float(c["mass"]),
                           velocity=_floats(c["velocity"], "catch.velocity"),
                           window=float(c["window"]))
        noise = NoiseSpec(**{k: (int(v) if k == "seed" else float(v))
                             for k, v in (s.get("noise") or {}).items()})
        pw, aw = s["position_waypoints"], s["arm_waypoints"]
        return ScenarioConfig(
            horizon=float(s["horizon"]), plant_dt=float(s["plant_dt"]),
            control_dt=float(s["control_dt"]), start=_floats(s["start"], "start"),
            arm_initial_deg=_floats(s["arm_initial_deg"], "arm_initial_deg"),
            position_times=_floats(pw["times"], "position times"),
            position_points=tuple(_floats(p, "position point") for p in pw["points"]),
            arm_times=_floats(aw["times"], "arm times"),
            arm_points_deg=tuple(_floats(p, "arm point") for p in aw["points_deg"]),
            catch=catch, actuation=str(s["actuation"]), plant=build_plant(cfg),
            desired_force=_floats(s["desired_force"], "desired_force"),
            sensor_time_constant=float(s["sensor_time_constant"]),
            acceleration_time_constant=float(s["acceleration_time_constant"]),
            tilt_bandwidth=float(s["tilt_bandwidth"]),
            divergence_bound=float(s["divergence_bound"]), noise=noise)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"scenario section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_controller(name: str, cfg: dict):
    nominal = nominal_plant(cfg)
    if name == "proposed":
        return AdaptiveImpedanceController(build_gains(cfg))
    if name == "csc":
        return CscController(CscConfig(nominal, build_gains(cfg, with_trim=False)))
    if name == "psc":
        p = dict(cfg["controllers"]["psc"])
        kw = {k: _floats(v, k) for k, v in p.items()
              if k.startswith(("kp_", "kd_")) and v is not None}
        kw["filter_constant"] = float(p.get("filter_constant", 0.004))
        if p.get("gravity_axis") is not None:
            kw["gravity_axis"] = _floats(p["gravity_axis"], "gravity_axis")
        try:
            return PscController(PscConfig.from_gains(nominal, build_gains(cfg, with_trim=False), **kw))
        except ValueError as exc:
            raise ConfigError(f"psc: {exc}") from exc
    raise ConfigError(f"unknown controller {name!r}; choose from {CONTROLLERS}")


@dataclass
class RunManifest:
    config_path: str | None = None
    controllers: tuple[str, ...] = ("proposed",)
    out_dir: str = "runs"
    overrides: tuple[str, ...] = ()
    seed: int | None = None
    dt: float | None = None
    mode: str | None = None
    payloads: tuple[float, ...] = field(default_factory=tuple)

    def resolve(self) -> dict:
        """Fully resolved configuration dictionary."""
        cfg = apply_overrides(load_config(self.config_path), self.overrides)
        if self.dt is not None:
            cfg["scenario"]["plant_dt"] = cfg["scenario"]["control_dt"] = float(self.dt)
        if self.mode is not None:
            cfg["scenario"]["actuation"] = self.mode
        if self.seed is not None:
            cfg["scenario"]["noise"]["seed"] = int(self.seed)
        return cfg
