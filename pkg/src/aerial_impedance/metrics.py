"""Post-run analysis of simulation traces.

RMS tracking tables split at the catch, the impedance-error identity residual,
a Lyapunov monitor driven by ground-truth bounds, and controller rankings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (PlantParameters, coriolis_matrix, gravity_vector, mass_matrix,
                       sample_configurations)
from .impedance import ControllerGains
from .scenario import SimTrace

# Hardware RMS values for reference annotation only (m, deg); None marks a crash.
REFERENCE_RMS = {
    ("csc", 0.1): (0.0998, 3.2985, 0.2300, 3.7644),
    ("csc", 0.2): (0.0989, 3.0888, 0.2927, 3.8446),
    ("csc", 0.3): (0.0932, 2.8178, None, None),
    ("psc", 0.1): (0.0837, 3.2516, 0.1497, 3.1340),
    ("psc", 0.2): (0.0928, 2.5393, 0.2236, 3.2612),
    ("psc", 0.3): (0.0990, 2.4189, 0.2865, 3.5753),
    ("proposed", 0.1): (0.0858, 2.8543, 0.0984, 3.0710),
    ("proposed", 0.2): (0.0906, 2.6097, 0.1654, 3.1190),
    ("proposed", 0.3): (0.0726, 2.6866, 0.1728, 3.2031),
}

EXPECTED_ORDER = ("proposed", "psc", "csc")


def _rms(x: np.ndarray) -> float:
    if x.size == 0:
        raise ValueError("empty RMS window")
    return float(np.sqrt(np.mean(np.square(x))))


@dataclass
class RmsRow:
    controller: str
    payload: float
    pre_position: float
    pre_attitude_deg: float
    post_position: float | None
    post_attitude_deg: float | None
    diverged: bool
    scenario_hash: str = ""

    @property
    def reference(self):
        return REFERENCE_RMS.get((self.controller, round(self.payload, 3)))


@dataclass
class RmsReport:
    rows: list[RmsRow] = field(default_factory=list)

    def add(self, row: RmsRow) -> None:
        self.rows.append(row)

    def controllers(self) -> list[str]:
        return list(dict.fromkeys(r.controller for r in self.rows))

    def payloads(self) -> list[float]:
        return list(dict.fromkeys(r.payload for r in self.rows))

    def get(self, controller: str, payload: float) -> RmsRow | None:
        for r in self.rows:
            if r.controller == controller and math.isclose(r.payload, payload):
                return r
        return None

    def text(self, annotate: bool = True) -> str:
        """Aligned table, one row per payload, pre/post columns per controller."""
        ctrls = self.controllers()
        head = f"{'payload':>8} |" + "|".join(
            f" {c:^41} " for c in ctrls)
        sub = f"{'kg':>8} |" + "|".join(
            f" {'pre ep':>9} {'pre eq':>9} {'post ep':>9} {'post eq':>9} " for _ in ctrls)
        lines = [head, sub, "-" * len(sub)]

        def fmt(v):
            return f"{v:9.4f}" if v is not None else f"{'--':>9}"

        for p in self.payloads():
            cells = []
            for c in ctrls:
                r = self.get(c, p)
                if r is None:
                    cells.append(" " * 41)
                    continue
                post = (f"{'diverged':>19}" if r.post_position is None
                        else f"{fmt(r.post_position)} {fmt(r.post_attitude_deg)}")
                if r.diverged and r.post_position is not None:
                    post += "*"
                cells.append(f" {fmt(r.pre_position)} {fmt(r.pre_attitude_deg)} {post} ")
            lines.append(f"{p:8.3f} |" + "|".join(cells))
            if annotate:
                refs = []
                for c in ctrls:
                    ref = REFERENCE_RMS.get((c, round(p, 3)))
                    if ref is None:
                        refs.append(" " * 41)
                    else:
                        post = (f"{'crashed':>19}" if ref[2] is None
                                else f"{fmt(ref[2])} {fmt(ref[3])}")
                        refs.append(f" {fmt(ref[0])} {fmt(ref[1])} {post} ")
                lines.append(f"{'(hw)':>8} |" + "|".join(refs))
        lines.append("position RMS in m, attitude RMS in deg; (hw) rows are hardware "
                     "reference values, not targets; * diverged after the catch")
        return "\n".join(lines)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["controller", "payload", "pre_position", "pre_attitude_deg",
                        "post_position", "post_attitude_deg", "diverged", "scenario_hash"])
            for r in self.rows:
                w.writerow([r.controller, repr(r.payload), repr(r.pre_position),
                            repr(r.pre_attitude_deg),
                            "" if r.post_position is None else repr(r.post_position),
                            "" if r.post_attitude_deg is None else repr(r.post_attitude_deg),
                            int(r.diverged), r.scenario_hash])
        return path


def rms_errors(trace: SimTrace, t_catch: float, catch_end: float | None = None,
               payload: float = 0.0, scenario_hash: str = "") -> RmsRow:
    """Pre-/post-catch RMS of ||e_p|| (m) and ||e_q|| (deg).

    Post-catch values are omitted when the run diverged before ``catch_end``.
    """
    if trace.t.size == 0:
        raise ValueError("empty trace")
    catch_end = t_catch if catch_end is None else catch_end
    ep = np.linalg.norm(trace.e[:, :3], axis=1)
    eq = np.degrees(np.linalg.norm(trace.e[:, 3:6], axis=1))
    pre = trace.t < t_catch
    post = ~pre
    early_crash = trace.diverged and (trace.diverged_at is None or trace.diverged_at < catch_end)
    pre_p = _rms(ep[pre])
    pre_q = _rms(eq[pre])
    if early_crash or not post.any():
        post_p = post_q = None
    else:
        post_p, post_q = _rms(ep[post]), _rms(eq[post])
    return RmsRow(trace.controller, float(payload), pre_p, pre_q, post_p, post_q,
                  bool(trace.diverged), scenario_hash)


@dataclass
class ResidualSeries:
    t: np.ndarray
    residual: np.ndarray        # norm of the identity residual per interior sample
    lhs: np.ndarray             # Md e_ddot + Kd e_dot + Kp e - e_tau
    rhs: np.ndarray             # Md s_dot + (Kd - Md Phi) s

    @property
    def max(self) -> float:
        return float(np.max(self.residual))

    @property
    def mean(self) -> float:
        return float(np.mean(self.residual))


def impedance_residual(trace: SimTrace, gains: ControllerGains) -> ResidualSeries:
    """Both sides of the impedance-error identity with central differences."""
    if trace.t.size < 3:
        raise ValueError("need at least three samples for central differences")
    h = trace.dt
    s = trace.s
    e, e_dot, e_tau = trace.e, trace.e_dot, trace.e_tau
    s_dot = (s[2:] - s[:-2]) / (2.0 * h)
    e_ddot = (e_dot[2:] - e_dot[:-2]) / (2.0 * h)
    mid = slice(1, -1)
    lhs = gains.Md * e_ddot + gains.Kd * e_dot[mid] + gains.Kp * e[mid] - e_tau[mid]
    rhs = gains.Md * s_dot + gains.damping_margin * s[mid]
    res = np.linalg.norm(lhs - rhs, axis=1)
    return ResidualSeries(trace.t[mid], res, lhs, rhs)


def control_increment_ratio(trace: SimTrace, field: str = "tau") -> float:
    """max over median of the per-step command jump ||tau_{k+1} - tau_k||.

    Large values mean a few steps carry most of the switching (chattering)."""
    tau = trace.data[field]
    if tau.shape[0] < 3:
        raise ValueError("need at least three samples")
    jumps = np.linalg.norm(np.diff(tau, axis=0), axis=1)
    median = float(np.median(jumps))
    if median == 0.0:
        return math.inf if jumps.max() > 0 else 1.0
    return float(jumps.max() / median)


@dataclass
class OracleBounds:
    """Ground-truth bound constants; test/analysis use only."""

    m_min: float
    m_max: float
    c_bar: float
    g_bar: float
    d_bar: float
    ref_speed: float
    H_star: tuple[float, float, float, float]

    def __post_init__(self):
        vals = (self.m_min, self.m_max, self.c_bar, self.g_bar, *self.H_star)
        if not all(v > 0 for v in vals) or self.d_bar < 0:
            raise ValueError("oracle bounds must be positive")


def oracle_bounds(params: PlantParameters, gains: ControllerGains, trace: SimTrace | None = None,
                  samples: int = 300, seed: int = 0, max_tilt: float = 0.6) -> OracleBounds:
    """Sample the true plant (with its payload) for the bound constants.

    States come from random configurations plus, when given, the trace itself;
    the reference-speed bound comes from the trace's chi_dot_d.
    """
    rng = np.random.default_rng(seed)
    configs = list(sample_configurations(params.n_links, samples, rng, max_tilt))
    speeds = []
    if trace is not None and trace.t.size:
        stride = max(1, trace.t.size // samples)
        configs += list(trace.chi[::stride])
        speeds = list(np.linalg.norm(trace.chi_dot[::stride], axis=1))
    vmax = max([1.0] + speeds)
    lo, hi, c_bar, g_bar, h3 = np.inf, 0.0, 0.0, 0.0, 0.0
    Md = np.diag(gains.Md)
    for chi in configs:
        M = mass_matrix(chi, params)
        eig = np.linalg.eigvalsh(M)
        lo, hi = min(lo, eig[0]), max(hi, eig[-1])
        h3 = max(h3, float(np.linalg.norm(M - Md, 2)))
        g_bar = max(g_bar, float(np.linalg.norm(gravity_vector(chi, params))))
        v = rng.normal(size=params.dof)
        v *= vmax / np.linalg.norm(v)
        C = coriolis_matrix(chi, v, params)
        c_bar = max(c_bar, float(np.linalg.norm(C, 2)) / vmax)
    d_bar = params.disturbance.bound
    ref_speed = 0.0
    if trace is not None and trace.t.size:
        ref_speed = float(np.max(np.linalg.norm(trace.chi_dot_d, axis=1)))
    H = (g_bar + d_bar + c_bar * ref_speed ** 2, 2.0 * c_bar * ref_speed, c_bar, h3)
    return OracleBounds(float(lo), float(hi), c_bar, g_bar, d_bar, ref_speed,
                        tuple(max(x, 1e-12) for x in H))


@dataclass
class LyapunovReport:
    t: np.ndarray
    V: np.ndarray
    sliding_energy: np.ndarray
    sup_final_quarter: float
    decrease_fraction: float
    threshold: float
    rate: float                 # exponential rate of the analytic bound
    offset: float               # constant term of the analytic bound
    bound: float                # offset / rate
    bounded: bool
    violation: bool

    def summary(self) -> dict:
        d = asdict(self)
        for k in ("t", "V", "sliding_energy"):
            d.pop(k)
        return d


def lyapunov_series(trace: SimTrace, oracle: OracleBounds | None, gains: ControllerGains,
                    threshold: float | None = None) -> LyapunovReport:
    """V = 1/2 s^T Md s + sum 1/2 (H_i - H*_i)^2 + zeta / min(zeta).

    ``threshold`` (default 2 x boundary layer) selects the samples on which the
    decrease of 1/2 s^T Md s is counted.
    """
    if oracle is None:
        raise ValueError("the Lyapunov monitor needs oracle bounds")
    if trace.t.size < 2:
        raise ValueError("trace too short")
    s = trace.s
    sliding = 0.5 * np.einsum("ij,j,ij->i", s, gains.Md, s)
    H = trace.H
    zeta = trace.zeta
    V = sliding.copy()
    adaptive = np.all(np.isfinite(H)) and np.all(np.isfinite(zeta))
    if adaptive:
        zmin, zmax = float(np.min(zeta)), float(np.max(zeta))
        V += 0.5 * np.sum((H - np.asarray(oracle.H_star)) ** 2, axis=1) + zeta / zmin
    else:
        zmin = zmax = 1.0
    threshold = 2.0 * gains.boundary_layer if threshold is None else threshold
    above = np.linalg.norm(s[:-1], axis=1) > threshold
    dec = sliding[1:] < sliding[:-1]
    frac = float(np.mean(dec[above])) if above.any() else 1.0
    tail = trace.t >= trace.t[0] + 0.75 * (trace.t[-1] - trace.t[0])
    sup_tail = float(np.max(V[tail]))

    nu = np.asarray(gains.nu)
    rate = min(float(np.min(gains.Lambda)), float(np.min(nu)) / 2.0) / max(
        float(np.max(gains.Md)), 0.5)
    offset = (rate * zmax / zmin + 0.5 * float(np.sum(nu * np.square(oracle.H_star)))
              + gains.epsilon / zmin)
    bound = offset / rate
    finite = bool(np.all(np.isfinite(V)))
    bounded = finite and bool(np.all(V <= max(V[0], bound) * (1 + 1e-9)))
    return LyapunovReport(trace.t, V, sliding, sup_tail, frac, threshold, rate, offset,
                          bound, bounded, violation=trace.diverged or not bounded)


@dataclass
class Verdict:
    payload: float
    ranking: list[str]
    values: dict[str, float | None]
    margins: dict[str, float]
    expected: tuple[str, ...]
    matches: bool
    tie: bool

    def text(self) -> str:
        parts = []
        for name in self.ranking:
            v = self.values[name]
            parts.append(f"{name}={'diverged' if v is None else f'{v:.4f}'}")
        rel = " = " if self.tie else " < "
        status = "matches" if self.matches else "differs from"
        return (f"{self.payload:.3f} kg: " + rel.join(self.ranking) + "  ("
                + ", ".join(parts) + f"); {status} expected "
                + " < ".join(self.expected))


def compare(report: RmsReport, expected: tuple[str, ...] = EXPECTED_ORDER,
            tol: float = 1e-12) -> list[Verdict]:
    """Rank controllers by post-catch position RMS per payload; diverged runs rank last."""
    out = []
    for p in report.payloads():
        rows = [r for r in report.rows if math.isclose(r.payload, p)]
        if len(rows) < 2:
            raise ValueError(f"payload {p}: need at least two controllers to compare")
        hashes = {r.scenario_hash for r in rows}
        if len(hashes) > 1:
            raise ValueError(f"payload {p}: rows come from different scenarios")

        def key(r):
            bad = r.diverged or r.post_position is None
            return (1 if bad else 0, math.inf if r.post_position is None else r.post_position)

        rows.sort(key=key)
        ranking = [r.controller for r in rows]
        values = {r.controller: (None if r.diverged and r.post_position is None
                                 else r.post_position) for r in rows}
        margins = {}
        for a, b in zip(rows, rows[1:]):
            if a.post_position is not None and b.post_position is not None:
                margins[f"{b.controller}-{a.controller}"] = b.post_position - a.post_position
        tie = all(not r.diverged for r in rows) and all(
            r.post_position is not None for r in rows) and (
            max(r.post_position for r in rows) - min(r.post_position for r in rows) <= tol)
        present = [c for c in expected if c in ranking]
        matches = not tie and [c for c in ranking if c in present] == present
        out.append(Verdict(p, ranking, values, margins, tuple(present), matches, tie))
    return out


def write_series(directory, name: str, t, values) -> Path:
    """Two-column (t, value) file for external plotting."""
    path = Path(directory) / f"{name}.csv"
    np.savetxt(path, np.column_stack([t, values]), delimiter=",", header="t,value",
               comments="", fmt="%.17g")
    return path
