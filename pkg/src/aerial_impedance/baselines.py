"""Comparison controllers: complete- and partitioned-system compliance archetypes.

Neither reproduces a specific published controller. CSC is computed-torque
impedance control on a nominal (payload-free) full model; PSC runs a decoupled
quadrotor PD loop next to an arm-only impedance law and estimates the payload
mass from the force sensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .adaptive import Measurement, ReferenceSignal
from .dynamics import PlantParameters
from .impedance import ControllerGains


@dataclass(frozen=True)
class CscConfig:
    nominal: PlantParameters
    gains: ControllerGains

    def __post_init__(self):
        if self.nominal.dof != self.gains.dof:
            raise ValueError("nominal model and gains disagree on the number of channels")


def _nominal_terms(params: PlantParameters, chi, payload=None):
    payload = params.payload_mass if payload is None else payload
    return K.plant_terms(chi, *params.packed, payload, params.gravity)


def csc_control(meas: Measurement, ref: ReferenceSignal, config: CscConfig) -> np.ndarray:
    """tau = M a + C chi_dot + g - tau_ext on the nominal model, with
    a = chi_ddot_d - Md^-1 (Kd e_dot + Kp e - e_tau)."""
    g = config.gains
    e = meas.chi - ref.chi
    e_dot = meas.chi_dot - ref.chi_dot
    a = ref.chi_ddot - (g.Kd * e_dot + g.Kp * e - meas.e_tau) / g.Md
    M, D, grav = _nominal_terms(config.nominal, meas.chi)
    h = K.coriolis_vector(D, meas.chi_dot)
    return M @ a + h + grav - meas.tau_ext


class CscController:
    name = "csc"

    def __init__(self, config: CscConfig):
        self.config = config

    def initial_state(self, meas=None):
        return None

    def step(self, state, meas: Measurement, ref: ReferenceSignal, dt: float):
        if not meas.is_finite():
            raise ValueError(f"non-finite measurement at t={meas.t}")
        return csc_control(meas, ref, self.config), None, {}


@dataclass(frozen=True)
class PscConfig:
    """Quadrotor PD gains are in acceleration units (1/s^2, 1/s) and get scaled
    by the estimated mass / nominal inertia."""

    nominal: PlantParameters
    kp_position: tuple[float, float, float]
    kd_position: tuple[float, float, float]
    kp_attitude: tuple[float, float, float]
    kd_attitude: tuple[float, float, float]
    arm_Md: np.ndarray
    arm_Kd: np.ndarray
    arm_Kp: np.ndarray
    filter_constant: float = 0.004
    gravity_axis: tuple[float, float, float] = (0.0, 0.0, -1.0)
    _arrays: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name in ("kp_position", "kd_position", "kp_attitude", "kd_attitude"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or np.any(v <= 0):
                raise ValueError(f"{name} must be three positive gains")
            self._arrays[name] = v
        n = self.nominal.n_links
        for name in ("arm_Md", "arm_Kd", "arm_Kp"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (n,) or np.any(v <= 0):
                raise ValueError(f"{name} must hold {n} positive gains")
            object.__setattr__(self, name, v)
        if not 0.0 < self.filter_constant <= 1.0:
            raise ValueError("filter_constant must lie in (0, 1]")
        axis = np.asarray(self.gravity_axis, dtype=float)
        self._arrays["gravity_axis"] = axis / np.linalg.norm(axis)

    @classmethod
    def from_gains(cls, nominal: PlantParameters, gains: ControllerGains, **kw) -> PscConfig:
        """PD gains matching the target impedance (Kp/Md, Kd/Md) channel by channel."""
        wn2 = gains.Kp / gains.Md
        zeta2 = gains.Kd / gains.Md
        kw.setdefault("kp_position", tuple(wn2[:3]))
        kw.setdefault("kd_position", tuple(zeta2[:3]))
        kw.setdefault("kp_attitude", tuple(wn2[3:6]))
        kw.setdefault("kd_attitude", tuple(zeta2[3:6]))
        return cls(nominal=nominal, arm_Md=gains.Md[6:], arm_Kd=gains.Kd[6:],
                   arm_Kp=gains.Kp[6:], **kw)


def update_mass_estimate(estimate: float, f_ext, config: PscConfig) -> float:
    """First-order filter of the sensed force along gravity divided by g."""
    g = config.nominal.gravity
    along = float(np.dot(f_ext, config._arrays["gravity_axis"]))
    return (1.0 - config.filter_constant) * estimate + config.filter_constant * along / g


def psc_control(meas: Measurement, ref: ReferenceSignal, config: PscConfig,
                estimate: float) -> tuple[np.ndarray, float]:
    nom = config.nominal
    A = config._arrays
    e = meas.chi - ref.chi
    e_dot = meas.chi_dot - ref.chi_dot
    tau = np.zeros(nom.dof)

    mass = nom.total_mass + estimate
    acc = ref.chi_ddot[:3] - A["kd_position"] * e_dot[:3] - A["kp_position"] * e[:3]
    tau[:3] = mass * acc - mass * nom.gravity * A["gravity_axis"]

    inertia = np.asarray(nom.base_inertia, dtype=float)
    tau[3:6] = inertia * (ref.chi_ddot[3:6] - A["kd_attitude"] * e_dot[3:6]
                          - A["kp_attitude"] * e[3:6])

    M, _, grav = _nominal_terms(nom, meas.chi, payload=max(estimate, 0.0))
    e_tau = meas.e_tau[6:]
    a = ref.chi_ddot[6:] - (config.arm_Kd * e_dot[6:] + config.arm_Kp * e[6:] - e_tau) / config.arm_Md
    tau[6:] = M[6:, 6:] @ a + grav[6:]
    return tau, update_mass_estimate(estimate, meas.f_ext, config)


class PscController:
    name = "psc"

    def __init__(self, config: PscConfig):
        self.config = config

    def initial_state(self, meas=None) -> float:
        return 0.0

    def step(self, state: float, meas: Measurement, ref: ReferenceSignal, dt: float):
        if not meas.is_finite():
            raise ValueError(f"non-finite measurement at t={meas.t}")
        tau, nxt = psc_control(meas, ref, self.config, state)
        return tau, nxt, {"mass_estimate": state}
