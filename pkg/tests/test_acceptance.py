"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (also collected into the pytest
terminal summary) before asserting. Run on its own with

    pytest tests/test_acceptance.py -v
"""

import statistics
import time

import numpy as np
import pytest

from aerial_impedance.config import (apply_overrides, build_controller, build_gains,
                                     build_plant, load_config)
from aerial_impedance.dynamics import (PlantParameters, coriolis_matrix, kinetic_energy,
                                       mass_matrix, sample_configurations, unforced_response)
from aerial_impedance.experiment import rerun_from_sidecar, run_controller, summarize, sweep
from aerial_impedance.impedance import derive_phi, table_gains, validate_gains
from aerial_impedance.metrics import (compare, control_increment_ratio, impedance_residual,
                                      lyapunov_series, oracle_bounds)
from aerial_impedance.scenario import read_trace_csv

from conftest import hover_catch_config, record_acceptance

PAYLOADS = (0.1, 0.2, 0.3)
CONTROLLERS = ("proposed", "csc", "psc")


# -- 1. gain solver ---------------------------------------------------------

def test_c1_gain_solver_reproduces_design_table():
    triples = [(1.0, 40.0, 144.0, 4.0), (0.015, 0.75, 2.115, 3.0), (0.1, 0.7, 1.225, 3.5)]
    gains = table_gains()
    validate_gains(gains)

    def work():
        phis = [derive_phi([md], [kd], [kp])[0] for md, kd, kp, _ in triples]
        return phis, validate_gains(gains)

    timings = []
    for _ in range(7):
        t0 = time.perf_counter()
        phis, report = work()
        timings.append(time.perf_counter() - t0)
    runtime = statistics.median(timings)
    err = max(abs(p - want) for p, (*_, want) in zip(phis, triples))
    ok = err < 1e-12 and report.passed and report.max_residual < 1e-9 and runtime < 1e-3
    record_acceptance("C1", ok, f"max |Phi err| = {err:.1e}, max residual = "
                      f"{report.max_residual:.1e}, runtime = {runtime * 1e3:.3f} ms")
    assert ok


# -- 2. plant correctness -----------------------------------------------------

def test_c2_plant_properties():
    rng = np.random.default_rng(2024)
    plant = PlantParameters()
    free = PlantParameters(gravity=0.0)
    unforced_response(np.zeros(8), np.zeros(8), free, 1e-3, 1e-4)      # compile outside the clock
    t0 = time.perf_counter()
    sym, min_eig, skew = 0.0, np.inf, 0.0
    h = 1e-6
    for chi in sample_configurations(2, 1000, rng, max_tilt=1.2):
        v = rng.normal(size=8)
        M = mass_matrix(chi, plant)
        sym = max(sym, float(np.max(np.abs(M - M.T))))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(M)[0]))
        Mdot = (mass_matrix(chi + h * v, plant) - mass_matrix(chi - h * v, plant)) / (2 * h)
        x = rng.normal(size=8)
        x /= np.linalg.norm(x)
        skew = max(skew, abs(float(x @ (Mdot - 2 * coriolis_matrix(chi, v, plant)) @ x)))
    chi0 = sample_configurations(2, 1, rng)[0]
    v0 = rng.normal(size=8)
    q, w = unforced_response(chi0, v0, free, horizon=10.0, dt=1e-4)
    E0 = kinetic_energy(chi0, v0, free)
    drift = abs(kinetic_energy(q, w, free) - E0) / E0
    runtime = time.perf_counter() - t0
    ok = sym < 1e-12 and min_eig > 0 and skew < 1e-5 and drift < 1e-6 and runtime < 30
    record_acceptance("C2", ok, f"symmetry {sym:.1e}, min eig {min_eig:.3e}, skew {skew:.1e}, "
                      f"energy drift {drift:.1e}, runtime {runtime:.1f} s")
    assert ok


# -- 3. closed-loop identity ------------------------------------------------------

def test_c3_closed_loop_identity_converges():
    t0 = time.perf_counter()
    residuals = []
    for dt in (1e-4, 5e-5):
        cfg = hover_catch_config(horizon=1.0, catch_time=0.5, mass=0.2,
                                 extra=[f"scenario.plant_dt={dt}", f"scenario.control_dt={dt}"])
        trace = run_controller(cfg, "proposed")
        assert not trace.diverged and trace.caught.any()
        residuals.append(impedance_residual(trace, build_gains(cfg)).max)
    runtime = time.perf_counter() - t0
    ratio = residuals[0] / residuals[1]
    ok = residuals[0] < 1e-3 and ratio >= 3.0 and runtime < 60
    record_acceptance("C3", ok, f"max residual {residuals[0]:.2e} at dt=1e-4, "
                      f"{residuals[1]:.2e} at dt=5e-5, ratio {ratio:.2f}, "
                      f"runtime {runtime:.1f} s")
    assert ok


# -- 4 and 5 share the standard payload sweep ------------------------------------

@pytest.fixture(scope="module")
def payload_sweep():
    cfg = load_config()
    t0 = time.perf_counter()
    report, traces = sweep(cfg, CONTROLLERS, PAYLOADS, keep_traces=True)
    runtime = time.perf_counter() - t0
    keyed = {(tr.controller, row.payload): tr for row, tr in zip(report.rows, traces)}
    return cfg, report, keyed, runtime


def _theorem_surrogate(cfg, trace, payload):
    gains = build_gains(cfg)
    final = trace.t >= trace.t[-1] - 5.0
    ep = float(np.max(np.linalg.norm(trace.e[final, :3], axis=1)))
    sn = float(np.max(np.linalg.norm(trace.s[final], axis=1)))
    oracle = oracle_bounds(build_plant(cfg, payload), gains, trace, samples=200)
    lyap = lyapunov_series(trace, oracle, gains, threshold=2 * gains.boundary_layer)
    checks = {
        "no divergence": not trace.diverged,
        "e_p < 0.05": ep < 0.05,
        "s < 5 w": sn < 5 * gains.boundary_layer,
        "H >= 0": bool(np.all(trace.H >= 0)),
        "zeta > 0": bool(np.all(trace.zeta > 0)),
        "decrease >= 99%": lyap.decrease_fraction >= 0.99,
    }
    summary = (f"{payload:.1f} kg: sup|e_p| {ep:.3f} m, sup|s| {sn:.3f}, "
               f"decrease {lyap.decrease_fraction:.3f}, failed "
               f"[{', '.join(k for k, v in checks.items() if not v) or 'none'}]")
    return all(checks.values()), summary


def test_c4_theorem_surrogate(payload_sweep):
    cfg, _, traces, runtime = payload_sweep
    results = []
    for p in PAYLOADS:
        pcfg = apply_overrides(cfg, [f"catch.mass={p}"])
        results.append(_theorem_surrogate(pcfg, traces[("proposed", p)], p))
    ok = all(r[0] for r in results)
    record_acceptance("C4", ok, "; ".join(r[1] for r in results))
    assert ok


def test_c5_payload_ordering(payload_sweep):
    _, report, _, runtime = payload_sweep
    verdicts = {round(v.payload, 3): v for v in compare(report)}
    parts = [verdicts[p].text() for p in (0.2, 0.3)]
    ok = all(verdicts[p].matches for p in (0.2, 0.3)) and runtime < 600
    record_acceptance("C5", ok, " | ".join(parts) + f" | sweep runtime {runtime:.0f} s")
    print(report.text())
    assert ok


# -- 6. boundary layer ----------------------------------------------------------------

CHATTER_SCENARIO = [
    "scenario.start=[0, 0, 1, 0]",
    "scenario.arm_initial_deg=[90, 0]",
    "scenario.position_waypoints={times: [0, 1], points: [[0, 0, 1], [0, 0, 1]]}",
    "scenario.arm_waypoints={times: [0, 1], points_deg: [[90, 0], [90, 0]]}",
    "scenario.horizon=5.0",
    "catch.time=0.0",
    "catch.mass=0.0",
    "plant.disturbance.amplitude=[0.2, 0.2, 0.2, 0, 0, 0, 0, 0]",
    "plant.disturbance.frequency=0.5",
]


def test_c6_boundary_layer_suppresses_chattering(payload_sweep):
    t0 = time.perf_counter()
    ratios = {}
    for width in (0.1, 1e-6):
        cfg = apply_overrides(load_config(), [*CHATTER_SCENARIO, f"gains.boundary_layer={width}"])
        trace = run_controller(cfg, "proposed")
        assert not trace.diverged
        ratios[width] = control_increment_ratio(trace)
    runtime = time.perf_counter() - t0
    _, _, traces, _ = payload_sweep
    catch_ratio = control_increment_ratio(traces[("proposed", 0.2)])
    ok = ratios[0.1] < 10 and ratios[1e-6] > 10 and runtime < 120
    record_acceptance("C6", ok, f"disturbed hover: ratio {ratios[0.1]:.1f} with layer 0.1, "
                      f"{ratios[1e-6]:.1f} with layer 1e-6; runtime {runtime:.1f} s "
                      f"(catch run, layer 0.1: {catch_ratio:.0f}, impact-dominated)")
    assert ok


# -- 7. reproducibility ----------------------------------------------------------------

def test_c7_rerun_from_sidecar_is_bit_identical(tmp_path):
    t0 = time.perf_counter()
    same = []
    for name in CONTROLLERS:
        cfg = hover_catch_config(horizon=1.0, catch_time=0.5, mass=0.2)
        trace = run_controller(cfg, name)
        csv_path, meta_path = trace.write(tmp_path, name)
        again = rerun_from_sidecar(meta_path)
        _, stored = read_trace_csv(csv_path)
        a, b = again.matrix(), stored
        same.append(trace.identical(again) and a.shape == b.shape
                    and bool(np.all((a == b) | (np.isnan(a) & np.isnan(b)))))
        assert summarize(again, cfg) == summarize(trace, cfg)
    runtime = time.perf_counter() - t0
    ok = all(same) and runtime < 120
    record_acceptance("C7", ok, f"bit-identical reruns {sum(same)}/{len(same)}, "
                      f"runtime {runtime:.1f} s")
    assert ok
