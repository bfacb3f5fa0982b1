"""Target impedance dynamics, gain conditions and the impedance error.

All gain matrices are diagonal and stored as 1-D arrays of their diagonals.
The target behavior per channel is

    Md e_ddot + Kd e_dot + Kp e = e_tau

and the controller additionally needs Phi with (Kd - Md Phi) Phi = Kp and
Md^-1 Kd - Phi > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Reference values of the hardware design (3 position, 3 attitude, 2 joint channels).
DESIGN_MD = (1.0, 1.0, 1.0, 0.015, 0.015, 0.015, 0.1, 0.1)
DESIGN_LAMBDA = (1.5, 1.5, 2.0, 3.5, 3.5, 2.5, 1.0, 1.0)
DESIGN_PHI = (4.0, 4.0, 4.0, 3.0, 3.0, 3.0, 3.5, 3.5)
DESIGN_KD = (40.0, 40.0, 40.0, 0.75, 0.75, 0.75, 0.7, 0.7)
DESIGN_KP = (144.0, 144.0, 144.0, 2.115, 2.115, 2.115, 1.225, 1.225)


class GainError(ValueError):
    """Gains admit no real Phi on some channel."""

    def __init__(self, message: str, channel: int):
        super().__init__(message)
        self.channel = channel


def _diag(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        if np.any(arr - np.diag(np.diag(arr))):
            raise ValueError(f"{name} must be diagonal")
        arr = np.diag(arr).copy()
    return np.atleast_1d(arr)


@dataclass(frozen=True)
class ControllerGains:
    """Impedance and adaptation parameters (diagonals as arrays)."""

    Md: np.ndarray
    Kd: np.ndarray
    Kp: np.ndarray
    Lambda: np.ndarray
    Phi: np.ndarray | None = None
    boundary_layer: float = 0.1
    nu: tuple[float, float, float, float] = (10.0, 10.0, 10.0, 10.0)
    epsilon: float = 1e-4
    H0: tuple[float, float, float, float] = (0.01, 0.01, 0.01, 0.01)
    zeta0: float = 0.1
    gamma0: np.ndarray | None = None
    trim: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("Md", "Kd", "Kp", "Lambda"):
            object.__setattr__(self, name, _diag(getattr(self, name), name))
        n = self.Md.size
        if any(getattr(self, k).size != n for k in ("Kd", "Kp", "Lambda")):
            raise ValueError("gain diagonals must all have the same length")
        phi = derive_phi(self.Md, self.Kd, self.Kp) if self.Phi is None else _diag(self.Phi, "Phi")
        object.__setattr__(self, "Phi", phi)
        g0 = np.zeros(n) if self.gamma0 is None else np.asarray(self.gamma0, dtype=float)
        object.__setattr__(self, "gamma0", g0)
        if self.trim is not None:
            object.__setattr__(self, "trim", np.asarray(self.trim, dtype=float))
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        object.__setattr__(self, "H0", tuple(float(v) for v in self.H0))

    @property
    def dof(self) -> int:
        return self.Md.size

    @property
    def damping_margin(self) -> np.ndarray:
        """Kd - Md Phi per channel (multiplies s in the closed loop)."""
        return self.Kd - self.Md * self.Phi


def table_gains(**overrides) -> ControllerGains:
    """The hardware design values (8 channels: 2-link arm)."""
    base = dict(Md=DESIGN_MD, Kd=DESIGN_KD, Kp=DESIGN_KP, Lambda=DESIGN_LAMBDA, Phi=DESIGN_PHI)
    base.update(overrides)
    return ControllerGains(**base)


def derive_phi(Md, Kd, Kp) -> np.ndarray:
    """Smaller root of Md Phi^2 - Kd Phi + Kp = 0, per channel."""
    Md, Kd, Kp = (_diag(v, n) for v, n in ((Md, "Md"), (Kd, "Kd"), (Kp, "Kp")))
    disc = Kd * Kd - 4.0 * Md * Kp
    # critically damped channels can round to a tiny negative discriminant
    disc = np.where((disc < 0) & (disc > -1e-12 * Kd * Kd), 0.0, disc)
    phi = np.empty_like(Md)
    for i in range(Md.size):
        if Md[i] <= 0:
            raise GainError(f"channel {i}: Md must be positive", i)
        if disc[i] < 0:
            raise GainError(
                f"channel {i}: Kd^2 - 4 Md Kp = {disc[i]:.6g} < 0, no real Phi", i)
        # rationalized form avoids cancellation when Kp << Kd^2
        root = math.sqrt(disc[i])
        phi[i] = 2.0 * Kp[i] / (Kd[i] + root) if Kd[i] + root > 0 else 0.0
    return phi


@dataclass
class GainReport:
    passed: bool
    residual: np.ndarray        # |(Kd - Md Phi) Phi - Kp|
    margin: np.ndarray          # Kd/Md - Phi
    canonical: np.ndarray       # Phi is the smaller root
    failures: list[str]
    warnings: list[str]

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))

    def records(self) -> list[dict]:
        return [
            {"channel": i, "residual": float(r), "margin": float(m), "canonical": bool(c)}
            for i, (r, m, c) in enumerate(zip(self.residual, self.margin, self.canonical))
        ]

    def text(self) -> str:
        lines = [f"{'ch':>3} {'residual':>12} {'margin':>10} root"]
        for rec in self.records():
            lines.append(f"{rec['channel']:>3} {rec['residual']:12.3e} {rec['margin']:10.4f} "
                         f"{'smaller' if rec['canonical'] else 'LARGER'}")
        lines.extend(f"FAIL: {f}" for f in self.failures)
        lines.extend(f"warning: {w}" for w in self.warnings)
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def validate_gains(gains: ControllerGains, tol: float = 1e-9) -> GainReport:
    Md, Kd, Kp, Phi = gains.Md, gains.Kd, gains.Kp, gains.Phi
    failures, warnings = [], []
    residual = np.abs((Kd - Md * Phi) * Phi - Kp)
    margin = Kd / Md - Phi
    disc = np.maximum(Kd * Kd - 4.0 * Md * Kp, 0.0)
    small_root = (Kd - np.sqrt(disc)) / (2.0 * Md)
    canonical = Phi <= small_root + 1e-9 * np.maximum(1.0, np.abs(small_root))
    for name in ("Md", "Kd", "Lambda"):
        bad = np.flatnonzero(getattr(gains, name) <= 0)
        failures.extend(f"channel {i}: {name} must be > 0" for i in bad)
    for i in np.flatnonzero(Kp < 0):
        failures.append(f"channel {i}: Kp must be >= 0")
    for i in np.flatnonzero(Phi < 0):
        failures.append(f"channel {i}: Phi must be >= 0")
    for i in np.flatnonzero(residual > tol * np.maximum(1.0, np.abs(Kp))):
        failures.append(f"channel {i}: (Kd - Md Phi) Phi - Kp = {residual[i]:.3e}")
    for i in np.flatnonzero(margin <= 0):
        failures.append(f"channel {i}: Kd/Md - Phi = {margin[i]:.4g} is not positive")
    for i in np.flatnonzero(~canonical):
        warnings.append(f"channel {i}: Phi = {Phi[i]:.6g} is the larger root")
    for i in np.flatnonzero(Kp == 0):
        warnings.append(f"channel {i}: zero stiffness")
    if gains.boundary_layer <= 0:
        failures.append("boundary layer width must be > 0")
    if min(gains.nu) <= 0 or gains.epsilon <= 0:
        failures.append("leakage rates and epsilon must be > 0")
    if min(gains.H0) <= 0 or gains.zeta0 <= 0:
        failures.append("initial adaptive gains must be > 0")
    return GainReport(not failures, residual, margin, canonical, failures, warnings)


@dataclass
class TrackingErrors:
    """e = chi - chi_d, e_dot and optionally e_ddot."""

    e: np.ndarray
    e_dot: np.ndarray
    e_ddot: np.ndarray | None = None

    @classmethod
    def from_states(cls, chi, chi_dot, chi_d, chi_dot_d, chi_ddot=None, chi_ddot_d=None):
        e = np.asarray(chi, dtype=float) - chi_d
        ed = np.asarray(chi_dot, dtype=float) - chi_dot_d
        edd = None
        if chi_ddot is not None:
            edd = np.asarray(chi_ddot, dtype=float) - chi_ddot_d
        return cls(e, ed, edd)

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.e, self.e_dot])


def impedance_error(errors: TrackingErrors, e_tau, gains: ControllerGains) -> np.ndarray:
    """Md e_ddot + Kd e_dot + Kp e - e_tau."""
    if errors.e_ddot is None:
        raise ValueError("impedance error needs e_ddot")
    return gains.Md * errors.e_ddot + gains.Kd * errors.e_dot + gains.Kp * errors.e - e_tau


@dataclass
class TargetResponse:
    t: np.ndarray
    e: np.ndarray
    e_dot: np.ndarray
    e_ddot: np.ndarray


def target_response(e0, e_dot0, e_tau, gains: ControllerGains, horizon: float,
                    dt: float) -> TargetResponse:
    """RK4 integration of the target impedance dynamics.

    ``e_tau`` is either a constant vector or a callable ``e_tau(t)``.
    """
    Md, Kd, Kp = gains.Md, gains.Kd, gains.Kp
    force = e_tau if callable(e_tau) else (lambda t, c=np.asarray(e_tau, float): c)

    def f(t, e, ed):
        return (force(t) - Kd * ed - Kp * e) / Md

    steps = int(round(horizon / dt))
    n = Md.size
    ts = np.arange(steps + 1) * dt
    E = np.empty((steps + 1, n))
    Ed = np.empty_like(E)
    Edd = np.empty_like(E)
    e = np.array(e0, dtype=float) * np.ones(n)
    ed = np.array(e_dot0, dtype=float) * np.ones(n)
    for k in range(steps + 1):
        t = ts[k]
        E[k], Ed[k], Edd[k] = e, ed, f(t, e, ed)
        if k == steps:
            break
        k1v, k1a = ed, Edd[k]
        k2v = ed + 0.5 * dt * k1a
        k2a = f(t + 0.5 * dt, e + 0.5 * dt * k1v, k2v)
        k3v = ed + 0.5 * dt * k2a
        k3a = f(t + 0.5 * dt, e + 0.5 * dt * k2v, k3v)
        k4v = ed + dt * k3a
        k4a = f(t + dt, e + dt * k3v, k4v)
        e = e + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        ed = ed + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    return TargetResponse(ts, E, Ed, Edd)
