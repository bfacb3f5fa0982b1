"""Euler-Lagrange model of a quadrotor carrying a planar n-link arm.

Generalized coordinates are chi = [x, y, z, phi, theta, psi, alpha_1..alpha_n]
with z pointing up, Z-Y-X Euler angles and Euler rates used directly as
generalized velocities. The dynamics are

    M(chi) chi_ddot + C(chi, chi_dot) chi_dot + g(chi) + d(t) = tau + tau_ext

with C built from the Christoffel symbols of M, so M_dot - 2C is skew-symmetric.
The arm hangs from ``mount`` (body frame) and moves in the body x-z plane; the
joint angle is measured from the body +x axis, positive towards body -z, so
alpha = (pi/2, 0) is the arm hanging straight down.

Everything here is ground truth. Controllers only get the kinematics
(:func:`manipulator_jacobian`); the baselines may build their own nominal
:class:`PlantParameters`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels as K

PITCH_MARGIN = 1e-3


class SingularityError(ValueError):
    """Pitch too close to +-pi/2 for the Z-Y-X parametrization."""


@dataclass(frozen=True)
class Link:
    """One rigid link: mass (kg), length (m), COM distance from its joint (m),
    isotropic rotational inertia about the COM (kg m^2) and the reflected rotor
    inertia of the joint drive (kg m^2)."""

    mass: float
    length: float
    com_offset: float
    inertia: float
    armature: float = 0.0


@dataclass(frozen=True)
class Disturbance:
    """d(t) = constant + amplitude * sin(2 pi frequency t + phase)."""

    constant: tuple[float, ...] = ()
    amplitude: tuple[float, ...] = ()
    frequency: float = 0.0
    phase: float = 0.0

    def __call__(self, t: float, dof: int) -> np.ndarray:
        d = np.zeros(dof)
        if self.constant:
            d += np.asarray(self.constant, dtype=float)
        if self.amplitude:
            d += np.asarray(self.amplitude, dtype=float) * math.sin(
                2.0 * math.pi * self.frequency * t + self.phase)
        return d

    @property
    def bound(self) -> float:
        """Upper bound on ||d(t)|| (triangle inequality)."""
        c = np.linalg.norm(self.constant) if self.constant else 0.0
        a = np.linalg.norm(self.amplitude) if self.amplitude else 0.0
        return float(c + a)

    @property
    def is_zero(self) -> bool:
        return not any(self.constant) and not any(self.amplitude)


# Stand-in vehicle: ~3.0 kg total like the hardware, 2R arm of 0.2 m links.
DEFAULT_LINKS = (
    Link(mass=0.30, length=0.20, com_offset=0.10, inertia=1.0e-3, armature=0.03),
    Link(mass=0.20, length=0.20, com_offset=0.14, inertia=6.0e-4, armature=0.03),
)


@dataclass(frozen=True)
class PlantParameters:
    base_mass: float = 2.5
    base_inertia: tuple[float, float, float] = (0.035, 0.035, 0.06)
    links: tuple[Link, ...] = DEFAULT_LINKS
    mount: tuple[float, float, float] = (0.0, 0.0, -0.08)
    gravity: float = 9.81
    payload_mass: float = 0.0
    disturbance: Disturbance = field(default_factory=Disturbance)

    def __post_init__(self):
        if self.base_mass <= 0 or min(self.base_inertia) <= 0:
            raise ValueError("base mass and inertia must be strictly positive")
        if not self.links:
            raise ValueError("at least one link is required")
        for i, link in enumerate(self.links):
            if link.mass <= 0 or link.inertia <= 0 or link.length <= 0:
                raise ValueError(f"link {i}: mass, inertia and length must be > 0")
            if link.armature < 0:
                raise ValueError(f"link {i}: armature must be >= 0")
        if self.payload_mass < 0:
            raise ValueError("payload_mass must be >= 0")
        if self.gravity < 0:
            raise ValueError("gravity must be >= 0")
        for name in ("constant", "amplitude"):
            v = getattr(self.disturbance, name)
            if v and len(v) != self.dof:
                raise ValueError(f"disturbance.{name} must have {self.dof} entries")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def dof(self) -> int:
        return 6 + len(self.links)

    @property
    def total_mass(self) -> float:
        return self.base_mass + sum(l.mass for l in self.links) + self.payload_mass

    def with_payload(self, mass: float) -> PlantParameters:
        return replace(self, payload_mass=float(mass))

    @cached_property
    def packed(self) -> tuple:
        """Argument tuple for the compiled kernels, minus the payload and gravity."""
        return (
            float(self.base_mass),
            np.asarray(self.base_inertia, dtype=float),
            np.array([l.mass for l in self.links], dtype=float),
            np.array([l.length for l in self.links], dtype=float),
            np.array([l.com_offset for l in self.links], dtype=float),
            np.array([l.inertia for l in self.links], dtype=float),
            np.asarray(self.mount, dtype=float),
            np.array([l.armature for l in self.links], dtype=float),
        )


@dataclass
class GeneralizedState:
    """Configuration chi = [p; q; alpha] with velocities and optional accelerations."""

    p: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.q = np.asarray(self.q, dtype=float).reshape(3)
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.velocity.shape != (6 + self.alpha.size,):
            raise ValueError("velocity must have 6 + n entries")
        if self.acceleration is not None:
            self.acceleration = np.asarray(self.acceleration, dtype=float)
            if self.acceleration.shape != self.velocity.shape:
                raise ValueError("acceleration must match velocity shape")
        vals = [self.p, self.q, self.alpha, self.velocity]
        if self.acceleration is not None:
            vals.append(self.acceleration)
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise ValueError("state contains non-finite entries")
        check_pitch(self.q[1])

    @classmethod
    def from_vectors(cls, chi, chi_dot, chi_ddot=None) -> GeneralizedState:
        chi = np.asarray(chi, dtype=float)
        return cls(chi[:3], chi[3:6], chi[6:], chi_dot, chi_ddot)

    @property
    def chi(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.alpha])

    @property
    def n_links(self) -> int:
        return self.alpha.size


def check_pitch(theta: float) -> None:
    if abs(theta) >= math.pi / 2 - PITCH_MARGIN:
        raise SingularityError(f"pitch {theta:.6f} rad is at the Z-Y-X singularity")


def _chi(state, params: PlantParameters | None = None) -> np.ndarray:
    if isinstance(state, GeneralizedState):
        chi = state.chi
    else:
        chi = np.asarray(state, dtype=float)
    if chi.ndim != 1 or chi.size < 7:
        raise ValueError(f"state must be a (6 + n)-vector, got shape {chi.shape}")
    if params is not None and chi.size != params.dof:
        raise ValueError(f"state has {chi.size} entries, plant has {params.dof}")
    if not np.all(np.isfinite(chi)):
        raise ValueError("state contains non-finite entries")
    check_pitch(chi[4])
    return chi


def rotation_matrix(q) -> np.ndarray:
    """Body-to-world rotation R = Rz(psi) Ry(theta) Rx(phi) for q = (phi, theta, psi)."""
    phi, theta, psi = (float(v) for v in q)
    check_pitch(theta)
    R, _ = K.rotation_partials(phi, theta, psi)
    return R


def mass_matrix(state, params: PlantParameters) -> np.ndarray:
    chi = _chi(state, params)
    M, _, _ = K.plant_terms(chi, *params.packed, params.payload_mass, params.gravity)
    return M


def mass_matrix_partials(state, params: PlantParameters) -> np.ndarray:
    """Array D with D[k] = dM/dchi_k."""
    chi = _chi(state, params)
    _, D, _ = K.plant_terms(chi, *params.packed, params.payload_mass, params.gravity)
    return D


def coriolis_matrix(state, velocities, params: PlantParameters) -> np.ndarray:
    """Christoffel-symbol Coriolis matrix; M_dot - 2C is skew-symmetric."""
    D = mass_matrix_partials(state, params)
    return K.coriolis_from_partials(D, np.asarray(velocities, dtype=float))


def gravity_vector(state, params: PlantParameters) -> np.ndarray:
    """Gradient of the potential energy; appears on the left of the dynamics."""
    chi = _chi(state, params)
    _, _, g = K.plant_terms(chi, *params.packed, params.payload_mass, params.gravity)
    return g


def manipulator_jacobian(state, params: PlantParameters) -> np.ndarray:
    """3 x n map from joint rates to end-effector linear velocity, world axes."""
    chi = _chi(state, params)
    _, J = K.end_effector(chi, params.packed[3], params.packed[6])
    return J


def end_effector_position(state, params: PlantParameters) -> np.ndarray:
    chi = _chi(state, params)
    pos, _ = K.end_effector(chi, params.packed[3], params.packed[6])
    return pos


def external_torque(jacobian: np.ndarray, force) -> np.ndarray:
    """[0_3; 0_3; J^T F] for an end-effector force F in world axes."""
    jacobian = np.asarray(jacobian, dtype=float)
    out = np.zeros(6 + jacobian.shape[1])
    out[6:] = jacobian.T @ np.asarray(force, dtype=float)
    return out


@dataclass(frozen=True)
class Wrench:
    """Sensed external force and desired force at the end effector (N, world axes)."""

    f_ext: tuple[float, float, float] = (0.0, 0.0, 0.0)
    f_d: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def tau_ext(self, jacobian) -> np.ndarray:
        return external_torque(jacobian, self.f_ext)

    def tau_d(self, jacobian) -> np.ndarray:
        return external_torque(jacobian, self.f_d)

    def e_tau(self, jacobian) -> np.ndarray:
        return external_torque(jacobian, np.subtract(self.f_ext, self.f_d))


def forward_dynamics(state, tau, params: PlantParameters, *, velocities=None,
                     tau_ext=None, t: float = 0.0) -> np.ndarray:
    """chi_ddot = M^-1 (tau + tau_ext - C chi_dot - g - d(t))."""
    chi = _chi(state, params)
    if isinstance(state, GeneralizedState):
        v = state.velocity
    else:
        v = np.asarray(velocities, dtype=float)
    if v.shape != chi.shape:
        raise ValueError("velocities must match the state dimension")
    force = np.array(tau, dtype=float)
    if tau_ext is not None:
        force = force + tau_ext
    if not params.disturbance.is_zero:
        force = force - params.disturbance(t, params.dof)
    qdd = K.accelerations(chi, v, force, *params.packed, params.payload_mass,
                          params.gravity)
    if not np.all(np.isfinite(qdd)):
        raise FloatingPointError("forward dynamics produced non-finite accelerations")
    return qdd


def unforced_response(chi, chi_dot, params: PlantParameters, horizon: float,
                      dt: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 rollout with zero input and no disturbance; gravity follows ``params``."""
    if dt <= 0 or horizon < 0:
        raise ValueError("dt must be > 0 and horizon >= 0")
    steps = int(round(horizon / dt))
    return K.unforced_rollout(np.asarray(chi, dtype=float), np.asarray(chi_dot, dtype=float),
                              steps, float(dt), *params.packed, params.payload_mass,
                              params.gravity)


def kinetic_energy(chi, chi_dot, params: PlantParameters) -> float:
    v = np.asarray(chi_dot, dtype=float)
    return 0.5 * float(v @ mass_matrix(chi, params) @ v)


def potential_energy(chi, params: PlantParameters) -> float:
    chi = np.asarray(chi, dtype=float)
    ee = end_effector_position(chi, params)
    R = rotation_matrix(chi[3:6])
    r, _, _ = K.arm_points(chi[6:], params.packed[3], params.packed[4], params.packed[6])
    height = params.base_mass * chi[2]
    for i, link in enumerate(params.links):
        height += link.mass * (chi[2] + R[2] @ r[i])
    height += params.payload_mass * ee[2]
    return params.gravity * float(height)


def estimate_inertia_bounds(params: PlantParameters, samples: int = 1000,
                            max_tilt: float = 0.6, seed: int = 0) -> tuple[float, float]:
    """Sampled (m_min, m_max) with m_min I <= M(chi) <= m_max I.

    Roll/pitch are drawn in [-max_tilt, max_tilt]; yaw and joints over a full turn.
    """
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, 0.0
    for chi in sample_configurations(params.n_links, samples, rng, max_tilt):
        eig = np.linalg.eigvalsh(mass_matrix(chi, params))
        lo, hi = min(lo, eig[0]), max(hi, eig[-1])
    return float(lo), float(hi)


def sample_configurations(n_links: int, samples: int, rng, max_tilt: float = 0.6):
    chi = np.empty((samples, 6 + n_links))
    chi[:, :3] = rng.uniform(-2.0, 2.0, (samples, 3))
    chi[:, 3:5] = rng.uniform(-max_tilt, max_tilt, (samples, 2))
    chi[:, 5] = rng.uniform(-math.pi, math.pi, samples)
    chi[:, 6:] = rng.uniform(-math.pi, math.pi, (samples, n_links))
    return chi
