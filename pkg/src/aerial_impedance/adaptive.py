"""Adaptive impedance controller for the aerial manipulator.

With e = chi - chi_d and the auxiliary error s = e_dot + Phi e - gamma:

    gamma_dot = Md^-1 (e_tau - (Kd - Md Phi) gamma)
    tau       = -Lambda s - tau_d + dtau + Md (chi_ddot_d - Phi e_dot) - (Kd - Md Phi) gamma
    dtau      = -rho s / max(||s||, width)
    rho       = H0 + H1 ||xi|| + H2 ||xi||^2 + H3 ||chi_ddot|| + zeta

so that Md s_dot = -Lambda s + dtau - E for the lumped model uncertainty E, and
Md s_dot + (Kd - Md Phi) s equals the impedance error. The estimates H_i and the
auxiliary gain zeta follow leaky adaptation laws; none of them needs M, C or g.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import external_torque
from .impedance import ControllerGains


@dataclass(frozen=True)
class ReferenceSignal:
    chi: np.ndarray
    chi_dot: np.ndarray
    chi_ddot: np.ndarray


@dataclass(frozen=True)
class Measurement:
    """Everything a controller may read at one control instant.

    ``f_ext``/``f_d`` are end-effector forces in world axes and ``jacobian`` the
    known arm kinematics, so e_tau = [0; 0; J^T (f_ext - f_d)].
    """

    t: float
    chi: np.ndarray
    chi_dot: np.ndarray
    chi_ddot: np.ndarray
    f_ext: np.ndarray
    jacobian: np.ndarray
    f_d: np.ndarray | None = None

    @property
    def tau_ext(self) -> np.ndarray:
        return external_torque(self.jacobian, self.f_ext)

    @property
    def tau_d(self) -> np.ndarray:
        if self.f_d is None:
            return np.zeros(6 + self.jacobian.shape[1])
        return external_torque(self.jacobian, self.f_d)

    @property
    def e_tau(self) -> np.ndarray:
        return self.tau_ext - self.tau_d

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in
                   (self.chi, self.chi_dot, self.chi_ddot, self.f_ext, self.jacobian))


@dataclass(frozen=True)
class AdaptiveState:
    gamma: np.ndarray
    H: np.ndarray                 # (H0, H1, H2, H3)
    zeta: float
    e_tau_prev: np.ndarray | None = None
    s: np.ndarray | None = None
    rho: float = 0.0

    def check(self) -> None:
        if np.any(self.H < 0):
            raise AssertionError(f"negative adaptive estimate: {self.H}")
        if not self.zeta > 0:
            raise AssertionError(f"auxiliary gain left (0, inf): {self.zeta}")


def auxiliary_error(e, e_dot, gamma, Phi) -> np.ndarray:
    return np.asarray(e_dot) + np.asarray(Phi) * e - gamma


def gamma_derivative(gamma, e_tau, gains: ControllerGains) -> np.ndarray:
    return (e_tau - gains.damping_margin * gamma) / gains.Md


def robust_gain_rho(adaptive: AdaptiveState, xi, chi_ddot) -> float:
    xn = float(np.linalg.norm(xi))
    an = float(np.linalg.norm(chi_ddot))
    H = adaptive.H
    return float(H[0] + H[1] * xn + H[2] * xn * xn + H[3] * an + adaptive.zeta)


def robust_term(s, rho: float, width: float) -> np.ndarray:
    """-rho s/||s|| outside the boundary layer, -rho s/width inside it."""
    s = np.asarray(s, dtype=float)
    return -rho * s / max(float(np.linalg.norm(s)), width)


def _adaptation_rates(H, zeta, s_norm, xi_norm, acc_norm, gains: ControllerGains):
    nu = gains.nu
    powers = (1.0, xi_norm, xi_norm * xi_norm)
    Hdot = np.empty(4)
    for i in range(3):
        Hdot[i] = s_norm * powers[i] - nu[i] * H[i]
    Hdot[3] = s_norm * acc_norm - nu[3] * H[3]
    if s_norm >= gains.boundary_layer:
        zdot = 0.0
    else:
        weight = H[3] * acc_norm + H[0] + H[1] * xi_norm + H[2] * xi_norm * xi_norm
        zdot = -(1.0 + weight * s_norm) * zeta + gains.epsilon
    return Hdot, zdot


def adaptive_derivatives(adaptive: AdaptiveState, s, xi, chi_ddot,
                         gains: ControllerGains) -> tuple[np.ndarray, float]:
    """(dH/dt, dzeta/dt) of the leaky adaptation laws."""
    return _adaptation_rates(adaptive.H, adaptive.zeta, float(np.linalg.norm(s)),
                             float(np.linalg.norm(xi)), float(np.linalg.norm(chi_ddot)),
                             gains)


def control_torque(meas: Measurement, ref: ReferenceSignal, adaptive: AdaptiveState,
                   gains: ControllerGains) -> tuple[np.ndarray, dict]:
    """Control input at one instant and the intermediate quantities."""
    e = meas.chi - ref.chi
    e_dot = meas.chi_dot - ref.chi_dot
    s = auxiliary_error(e, e_dot, adaptive.gamma, gains.Phi)
    xi = np.concatenate([e, e_dot])
    rho = robust_gain_rho(adaptive, xi, meas.chi_ddot)
    dtau = robust_term(s, rho, gains.boundary_layer)
    tau = (-gains.Lambda * s - meas.tau_d + dtau
           + gains.Md * (ref.chi_ddot - gains.Phi * e_dot)
           - gains.damping_margin * adaptive.gamma)
    if gains.trim is not None:
        tau = tau + gains.trim
    return tau, {"e": e, "e_dot": e_dot, "s": s, "xi": xi, "rho": rho, "dtau": dtau}


def _rk4(f, y, dt):
    k1 = f(0.0, y)
    k2 = f(0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance_adaptive(adaptive: AdaptiveState, s, xi, chi_ddot, e_tau,
                     gains: ControllerGains, dt: float) -> AdaptiveState:
    """One RK4 step of gamma, H_i and zeta over [t, t + dt].

    ||s||, ||xi||, ||chi_ddot|| are held over the step. e_tau is extrapolated
    linearly from the previous sample so gamma sees a first-order hold.
    """
    prev = adaptive.e_tau_prev if adaptive.e_tau_prev is not None else e_tau
    slope = (e_tau - prev) / dt
    damping = gains.damping_margin
    Md = gains.Md

    def fgamma(tau, g):
        return (e_tau + tau * slope - damping * g) / Md

    gamma = _rk4(fgamma, adaptive.gamma, dt)

    sn = float(np.linalg.norm(s))
    xn = float(np.linalg.norm(xi))
    an = float(np.linalg.norm(chi_ddot))

    def fadapt(tau, y):
        Hdot, zdot = _adaptation_rates(y[:4], y[4], sn, xn, an, gains)
        return np.append(Hdot, zdot)

    y0 = np.append(adaptive.H, adaptive.zeta)
    y = _rk4(fadapt, y0, dt)
    # stiff zeta decay (huge ||chi_ddot|| inside the layer): split the step
    pieces = 1
    while (y[4] <= 0.0 or np.any(y[:4] < 0.0)) and pieces < 1024:
        pieces *= 2
        h = dt / pieces
        y = y0
        for _ in range(pieces):
            y = _rk4(fadapt, y, h)
    return replace(adaptive, gamma=gamma, H=y[:4], zeta=float(y[4]), e_tau_prev=e_tau,
                   s=s, rho=adaptive.rho)


class AdaptiveImpedanceController:
    """Stateless stepping wrapper; the state is an :class:`AdaptiveState` value."""

    name = "proposed"

    def __init__(self, gains: ControllerGains):
        self.gains = gains

    def initial_state(self, meas: Measurement | None = None) -> AdaptiveState:
        g = self.gains
        return AdaptiveState(gamma=np.array(g.gamma0, dtype=float),
                             H=np.array(g.H0, dtype=float), zeta=float(g.zeta0))

    def step(self, state: AdaptiveState, meas: Measurement, ref: ReferenceSignal,
             dt: float) -> tuple[np.ndarray, AdaptiveState, dict]:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if not meas.is_finite():
            raise ValueError(f"non-finite measurement at t={meas.t}")
        tau, info = control_torque(meas, ref, state, self.gains)
        e_tau = meas.e_tau
        nxt = advance_adaptive(state, info["s"], info["xi"], meas.chi_ddot, e_tau,
                               self.gains, dt)
        nxt = replace(nxt, rho=info["rho"])
        nxt.check()
        info.update(gamma=state.gamma, H=state.H, zeta=state.zeta, e_tau=e_tau)
        return tau, nxt, info
