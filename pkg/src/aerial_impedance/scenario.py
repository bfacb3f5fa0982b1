"""Closed-loop simulation of the aerial manipulator with a payload catch.

The plant is integrated with fixed-step RK4 at ``plant_dt``; the controller is
stepped every ``control_dt`` and its command is held in between. The catch is a
smooth payload-mass blend plus a half-sine impact force over a short window, and
the force sensor is a first-order lag on the contact force.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels as K
from .adaptive import Measurement, ReferenceSignal
from .dynamics import PlantParameters, SingularityError, check_pitch
from .trajectory import QuinticTrajectory

MODES = ("ideal", "underactuated")
MAX_TILT = 0.5


@dataclass(frozen=True)
class CatchEvent:
    time: float = 6.5
    mass: float = 0.1
    velocity: tuple[float, float, float] = (0.0, 0.0, -2.0)
    window: float = 0.05

    def __post_init__(self):
        if self.mass < 0:
            raise ValueError("payload mass must be >= 0")
        if self.window <= 0:
            raise ValueError("impact window must be positive")

    @property
    def active(self) -> bool:
        return self.mass > 0

    def _phase(self, t: float) -> float:
        return (t - self.time) / self.window

    def fraction(self, t: float) -> float:
        """Share of the payload carried at t: C2 smoothstep across the window."""
        if not self.active:
            return 0.0
        x = self._phase(t)
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)

    def impact_force(self, t: float) -> np.ndarray:
        """Half-sine force on the end effector; integrates to mass * velocity."""
        x = self._phase(t)
        if not self.active or x <= 0.0 or x >= 1.0:
            return np.zeros(3)
        peak = 0.5 * math.pi * self.mass / self.window
        return peak * math.sin(math.pi * x) * np.asarray(self.velocity, dtype=float)

    def contact_force(self, t: float, gravity: float) -> np.ndarray:
        """Force the sensor sees: impact plus the weight carried so far."""
        f = self.impact_force(t)
        f[2] -= self.fraction(t) * self.mass * gravity
        return f


def apply_catch_event(params: PlantParameters, event: CatchEvent, t: float):
    """Plant with the payload share carried at ``t`` and the impact force profile."""
    carried = event.mass * event.fraction(t)
    if carried == 0.0:
        updated = params
    else:
        updated = params.with_payload(params.payload_mass + carried)
    return updated, event.impact_force


def attitude_for_force(force, yaw: float, max_tilt: float = MAX_TILT) -> tuple[float, float]:
    """Roll and pitch that point the body z-axis along ``force`` at the given yaw."""
    c, s = math.cos(yaw), math.sin(yaw)
    fx = c * force[0] + s * force[1]
    fy = -s * force[0] + c * force[1]
    fz = force[2]
    if fz <= 0:
        return 0.0, 0.0
    pitch = math.atan2(fx, fz)
    roll = math.atan2(-fy, math.hypot(fx, fz))
    return float(np.clip(roll, -max_tilt, max_tilt)), float(np.clip(pitch, -max_tilt, max_tilt))


def actuation_map(tau_desired, q, mode: str = "ideal") -> tuple[np.ndarray, float]:
    """Generalized force the vehicle can actually produce and the translational deficit."""
    tau = np.asarray(tau_desired, dtype=float)
    if mode == "ideal":
        return tau.copy(), 0.0
    if mode != "underactuated":
        raise ValueError(f"unknown actuation mode {mode!r}")
    R, _ = K.rotation_partials(float(q[0]), float(q[1]), float(q[2]))
    axis = R[:, 2]
    thrust = float(axis @ tau[:3])
    out = tau.copy()
    out[:3] = thrust * axis
    return out, float(np.linalg.norm(tau[:3] - out[:3]))


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian measurement noise, off unless a standard deviation is positive."""

    position: float = 0.0
    velocity: float = 0.0
    force: float = 0.0
    seed: int = 0

    @property
    def enabled(self) -> bool:
        return self.position > 0 or self.velocity > 0 or self.force > 0


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: float = 20.0
    plant_dt: float = 1e-3
    control_dt: float = 1e-3
    start: tuple[float, float, float, float] = (-1.0, 0.0, 0.0, 0.0)
    arm_initial_deg: tuple[float, ...] = (165.0, 140.0)
    position_times: tuple[float, ...] = (0.0, 2.0, 11.0, 12.0, 18.0)
    position_points: tuple[tuple[float, ...], ...] = (
        (-1.0, 0.0, 0.0), (-1.0, 0.0, 1.0), (1.0, 0.0, 1.0), (1.0, 0.0, 1.0), (-1.0, 0.0, 1.0))
    arm_times: tuple[float, ...] = (0.0, 3.0, 5.5)
    arm_points_deg: tuple[tuple[float, ...], ...] = ((165.0, 140.0), (165.0, 140.0), (30.0, 60.0))
    catch: CatchEvent = field(default_factory=CatchEvent)
    actuation: str = "ideal"
    plant: PlantParameters = field(default_factory=PlantParameters)
    desired_force: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sensor_time_constant: float = 0.005
    acceleration_time_constant: float = 0.01
    tilt_bandwidth: float = 10.0
    divergence_bound: float = 50.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.horizon <= 0 or self.plant_dt <= 0 or self.control_dt <= 0:
            raise ValueError("horizon and time steps must be positive")
        ratio = self.control_dt / self.plant_dt
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control_dt must be an integer multiple of plant_dt")
        if not 0.0 <= self.catch.time <= self.horizon:
            raise ValueError("catch time must lie within the horizon")
        if self.actuation not in MODES:
            raise ValueError(f"actuation must be one of {MODES}")
        if len(self.arm_initial_deg) != self.plant.n_links:
            raise ValueError("one initial angle per link is required")
        if self.sensor_time_constant < 0 or self.acceleration_time_constant < 0:
            raise ValueError("sensor time constants must be >= 0")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.plant_dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.control_dt))

    def initial_chi(self) -> np.ndarray:
        x, y, z, yaw = self.start
        arm = np.radians(self.arm_initial_deg)
        return np.concatenate([[x, y, z, 0.0, 0.0, yaw], arm])

    def reference(self) -> Reference:
        pos = QuinticTrajectory(self.position_points, self.position_times)
        arm = QuinticTrajectory(np.radians(np.asarray(self.arm_points_deg, dtype=float)),
                                self.arm_times)
        return Reference(pos, arm, yaw=self.start[3])


class Reference:
    """chi_d(t) from position and joint trajectories; roll and pitch default to level."""

    def __init__(self, position: QuinticTrajectory, arm: QuinticTrajectory, yaw: float = 0.0):
        self.position = position
        self.arm = arm
        self.yaw = yaw

    def __call__(self, t: float, tilt: TiltShaper | None = None) -> ReferenceSignal:
        p, pd, pdd = self.position(t)
        a, ad, add = self.arm(t)
        att, att_d, att_dd = np.array([0.0, 0.0, self.yaw]), np.zeros(3), np.zeros(3)
        if tilt is not None:
            att[:2], att_d[:2], att_dd[:2] = tilt.angle, tilt.rate, tilt.accel
        return ReferenceSignal(np.concatenate([p, att, a]), np.concatenate([pd, att_d, ad]),
                               np.concatenate([pdd, att_dd, add]))


class TiltShaper:
    """Critically damped second-order filter turning raw roll/pitch targets into a
    smooth attitude reference with consistent rates and accelerations."""

    def __init__(self, bandwidth: float):
        self.w = bandwidth
        self.angle = np.zeros(2)
        self.rate = np.zeros(2)
        self.accel = np.zeros(2)

    def update(self, target, dt: float) -> None:
        w = self.w
        self.accel = w * w * (np.asarray(target) - self.angle) - 2.0 * w * self.rate
        self.rate = self.rate + dt * self.accel
        self.angle = self.angle + dt * self.rate


CHANNEL_NAMES = ("x", "y", "z", "roll", "pitch", "yaw")


def channel_names(n_links: int) -> list[str]:
    return list(CHANNEL_NAMES) + [f"alpha{i + 1}" for i in range(n_links)]


# Trace fields: name -> per-sample width (None means one column per channel).
VECTOR_FIELDS = ("chi", "chi_dot", "chi_ddot", "chi_d", "chi_dot_d", "chi_ddot_d",
                 "e", "e_dot", "s", "gamma", "tau", "tau_applied", "e_tau", "delta_I")
SCALAR_FIELDS = ("zeta", "rho", "deficit", "work", "mass_estimate")


@dataclass
class SimTrace:
    """Uniformly sampled closed-loop record, one row per control period."""

    t: np.ndarray
    data: dict[str, np.ndarray]
    caught: np.ndarray
    diverged: bool
    controller: str
    n_links: int
    config: dict = field(default_factory=dict)
    diverged_at: float | None = None

    def __getattr__(self, name):
        data = self.__dict__.get("data")
        if data is not None and name in data:
            return data[name]
        raise AttributeError(name)

    def __len__(self) -> int:
        return self.t.size

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def f_ext(self) -> np.ndarray:
        return self.data["f_ext"]

    @property
    def H(self) -> np.ndarray:
        return self.data["H"]

    def columns(self) -> list[str]:
        names = channel_names(self.n_links)
        cols = ["t"]
        for f in VECTOR_FIELDS:
            cols += [f"{f}.{c}" for c in names]
        cols += [f"H{i}" for i in range(4)]
        cols += list(SCALAR_FIELDS)
        cols += ["f_ext.x", "f_ext.y", "f_ext.z", "caught", "diverged"]
        return cols

    def matrix(self) -> np.ndarray:
        n = self.t.size
        blocks = [self.t[:, None]]
        blocks += [self.data[f] for f in VECTOR_FIELDS]
        blocks.append(self.data["H"])
        blocks += [self.data[f][:, None] for f in SCALAR_FIELDS]
        blocks.append(self.data["f_ext"])
        blocks.append(self.caught[:, None].astype(float))
        flag = np.zeros((n, 1))
        if self.diverged and n:
            flag[-1, 0] = 1.0
        blocks.append(flag)
        return np.hstack(blocks)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns())
            for row in self.matrix():
                writer.writerow([repr(float(v)) for v in row])
        return path

    def metadata(self) -> dict:
        return {
            "controller": self.controller,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "version": version_string(),
            "samples": int(self.t.size),
            "diverged": bool(self.diverged),
            "diverged_at": self.diverged_at,
            "columns": self.columns(),
        }

    def write(self, directory, stem: str | None = None) -> tuple[Path, Path]:
        """CSV trace plus JSON sidecar, each written atomically."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.controller
        csv_path = directory / f"{stem}.csv"
        meta_path = directory / f"{stem}.json"
        tmp = csv_path.with_suffix(".csv.tmp")
        self.to_csv(tmp)
        tmp.replace(csv_path)
        tmp = meta_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))
        tmp.replace(meta_path)
        return csv_path, meta_path

    def identical(self, other: SimTrace) -> bool:
        if self.t.shape != other.t.shape or self.diverged != other.diverged:
            return False
        a, b = self.matrix(), other.matrix()
        return a.shape == b.shape and bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def version_string() -> str:
    from . import __version__
    return __version__


def read_trace_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows)


class _Plant:
    """Right-hand side of plant + sensor filter for a fixed held command."""

    def __init__(self, scenario: ScenarioConfig):
        self.params = scenario.plant
        self.packed = scenario.plant.packed
        self.catch = scenario.catch
        self.n = scenario.plant.dof
        self.tsens = scenario.sensor_time_constant

    def payload(self, t: float) -> float:
        return self.params.payload_mass + self.catch.mass * self.catch.fraction(t)

    def acceleration(self, t, chi, v, tau):
        p = self.params
        force = tau.copy()
        impact = self.catch.impact_force(t)
        if impact.any():
            _, J = K.end_effector(chi, self.packed[3], self.packed[6])
            force[6:] += J.T @ impact
        if not p.disturbance.is_zero:
            force -= p.disturbance(t, self.n)
        return K.accelerations(chi, v, force, *self.packed, self.payload(t), p.gravity)

    def rhs(self, t, y, tau):
        n = self.n
        chi, v = y[:n], y[n:2 * n]
        acc = self.acceleration(t, chi, v, tau)
        if self.tsens > 0:
            fdot = (self.catch.contact_force(t, self.params.gravity) - y[2 * n:]) / self.tsens
        else:
            fdot = np.zeros(3)
        return np.concatenate([v, acc, fdot]), acc

    def step(self, t, y, tau, h, k1=None):
        if k1 is None:
            k1, acc = self.rhs(t, y, tau)
        else:
            acc = k1[self.n:2 * self.n]
        k2, _ = self.rhs(t + 0.5 * h, y + 0.5 * h * k1, tau)
        k3, _ = self.rhs(t + 0.5 * h, y + 0.5 * h * k2, tau)
        k4, _ = self.rhs(t + h, y + h * k3, tau)
        return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), acc

    def sensed(self, t, y) -> np.ndarray:
        if self.tsens > 0:
            return y[2 * self.n:].copy()
        return self.catch.contact_force(t, self.params.gravity)


def _allocate(steps: int, dof: int) -> dict[str, np.ndarray]:
    data = {f: np.full((steps, dof), np.nan) for f in VECTOR_FIELDS}
    data["H"] = np.full((steps, 4), np.nan)
    for f in SCALAR_FIELDS:
        data[f] = np.full(steps, np.nan)
    data["f_ext"] = np.full((steps, 3), np.nan)
    return data


def simulate(scenario: ScenarioConfig, controller, gains=None, config: dict | None = None) -> SimTrace:
    """Run one closed-loop scenario.

    ``controller`` follows the stepping protocol ``initial_state(meas)`` /
    ``step(state, meas, ref, dt) -> (tau, next_state, info)``. ``gains`` supplies
    Md, Kd, Kp, Phi for the logged impedance error (taken from the controller
    when omitted). Divergence stops the run and is flagged on the trace.
    """
    gains = gains if gains is not None else getattr(controller, "gains", None)
    if gains is None:
        gains = getattr(getattr(controller, "config", None), "gains", None)
    plant = _Plant(scenario)
    n = plant.n
    reference = scenario.reference()
    h = scenario.plant_dt
    dt = scenario.control_dt
    steps = scenario.n_steps + 1
    data = _allocate(steps, n)
    caught = np.zeros(steps, dtype=bool)
    times = np.arange(steps) * dt
    f_d = np.asarray(scenario.desired_force, dtype=float)
    noise = scenario.noise
    rng = np.random.default_rng(noise.seed) if noise.enabled else None

    y = np.concatenate([scenario.initial_chi(), np.zeros(n), np.zeros(3)])
    acc_fb = np.zeros(n)
    tilt = TiltShaper(scenario.tilt_bandwidth) if scenario.actuation == "underactuated" else None
    work = 0.0
    cstate = None
    diverged, diverged_at, last = False, None, steps - 1

    for k in range(steps):
        t = float(times[k])
        chi, v = y[:n].copy(), y[n:2 * n].copy()
        f_sensed = plant.sensed(t, y)
        meas_chi, meas_v, meas_f = chi, v, f_sensed
        if rng is not None:
            meas_chi = chi + rng.normal(0.0, noise.position, n) if noise.position else chi
            meas_v = v + rng.normal(0.0, noise.velocity, n) if noise.velocity else v
            meas_f = f_sensed + rng.normal(0.0, noise.force, 3) if noise.force else f_sensed
        _, J = K.end_effector(meas_chi, plant.packed[3], plant.packed[6])
        meas = Measurement(t, meas_chi, meas_v, acc_fb, meas_f, J, f_d)
        ref = reference(t, tilt)
        if cstate is None:
            cstate = controller.initial_state(meas)
        try:
            tau, nxt, info = controller.step(cstate, meas, ref, dt)
            applied, deficit = actuation_map(tau, chi[3:6], scenario.actuation)
            check_pitch(chi[4])
            k1, acc_now = plant.rhs(t, y, applied)
        except (ValueError, FloatingPointError, SingularityError, np.linalg.LinAlgError):
            diverged, diverged_at, last = True, t, k - 1
            break

        e_tau = meas.e_tau
        e = chi - ref.chi
        e_dot = v - ref.chi_dot
        row = {
            "chi": chi, "chi_dot": v, "chi_ddot": acc_now, "chi_d": ref.chi,
            "chi_dot_d": ref.chi_dot, "chi_ddot_d": ref.chi_ddot, "e": e, "e_dot": e_dot,
            "tau": tau, "tau_applied": applied, "e_tau": e_tau,
        }
        adaptive = info.get("H") is not None
        if gains is not None:
            gamma = info["gamma"] if adaptive else np.zeros(n)
            row["gamma"] = gamma
            row["s"] = e_dot + gains.Phi * e - gamma
            row["delta_I"] = (gains.Md * (acc_now - ref.chi_ddot) + gains.Kd * e_dot
                              + gains.Kp * e - e_tau)
        for key, val in row.items():
            data[key][k] = val
        if adaptive:
            data["H"][k] = info["H"]
            data["zeta"][k] = info["zeta"]
            data["rho"][k] = info["rho"]
        if "mass_estimate" in info:
            data["mass_estimate"][k] = info["mass_estimate"]
        data["deficit"][k] = deficit
        data["f_ext"][k] = meas_f
        data["work"][k] = work
        caught[k] = scenario.catch.active and t >= scenario.catch.time

        if not np.all(np.isfinite(y)) or np.linalg.norm(v) > scenario.divergence_bound:
            diverged, diverged_at, last = True, t, k
            break
        if k == steps - 1:
            break

        cstate = nxt
        if scenario.actuation == "underactuated":
            tilt.update(attitude_for_force(tau[:3], reference.yaw), dt)
        try:
            for j in range(scenario.substeps):
                tj = t + j * h
                y_next, _ = plant.step(tj, y, applied, h, k1 if j == 0 else None)
                work += h * float(applied @ (0.5 * (y[n:2 * n] + y_next[n:2 * n])))
                y = y_next
            if scenario.acceleration_time_constant > 0:
                # finite-difference velocity through a first-order low-pass
                fd = (y[n:2 * n] - v) / dt
                acc_fb = acc_fb + dt / (scenario.acceleration_time_constant + dt) * (fd - acc_fb)
            else:
                acc_fb = plant.acceleration(t + dt, y[:n], y[n:2 * n], applied)
        except (FloatingPointError, np.linalg.LinAlgError):
            diverged, diverged_at, last = True, t + dt, k
            break

    keep = last + 1
    data = {key: val[:keep] for key, val in data.items()}
    return SimTrace(times[:keep], data, caught[:keep], diverged,
                    getattr(controller, "name", type(controller).__name__),
                    scenario.plant.n_links, dict(config or {}), diverged_at)
