"""Running configured scenarios, sweeps and the standard per-run analysis."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import (CONTROLLERS, apply_overrides, build_controller, build_gains, build_plant,
                     build_scenario)
from .impedance import GainReport, validate_gains
from .metrics import (RmsReport, RmsRow, compare, impedance_residual, lyapunov_series,
                      oracle_bounds, rms_errors, write_series)
from .scenario import SimTrace, config_hash, simulate


class GainValidationError(ValueError):
    def __init__(self, report: GainReport):
        super().__init__("; ".join(report.failures))
        self.report = report


def run_controller(cfg: dict, name: str) -> SimTrace:
    """Simulate ``cfg`` with one controller; the trace carries the resolved config."""
    if name not in CONTROLLERS:
        raise ValueError(f"unknown controller {name!r}")
    report = validate_gains(build_gains(cfg))
    if not report.passed:
        raise GainValidationError(report)
    scenario = build_scenario(cfg)
    controller = build_controller(name, cfg)
    return simulate(scenario, controller, gains=build_gains(cfg, with_trim=False), config=cfg)


def rerun_from_sidecar(path) -> SimTrace:
    meta = json.loads(Path(path).read_text())
    return run_controller(meta["config"], meta["controller"])


def summarize(trace: SimTrace, cfg: dict) -> RmsRow:
    c = cfg["catch"]
    return rms_errors(trace, float(c["time"]), float(c["time"]) + float(c["window"]),
                      payload=float(c["mass"]), scenario_hash=config_hash(cfg))


def summary_line(trace: SimTrace, row: RmsRow) -> str:
    post = ("n/a" if row.post_position is None
            else f"{row.post_position:.4f} m / {row.post_attitude_deg:.2f} deg")
    state = f"diverged at {trace.diverged_at:.3f} s" if trace.diverged else "completed"
    return (f"{trace.controller:>8}  payload {row.payload:.3f} kg  {state}  "
            f"caught={bool(trace.caught.any())}  pre {row.pre_position:.4f} m / "
            f"{row.pre_attitude_deg:.2f} deg  post {post}")


@dataclass
class RunOutputs:
    trace: SimTrace
    row: RmsRow
    files: list[Path]


def analyze_and_write(trace: SimTrace, cfg: dict, out_dir, stem: str | None = None,
                      oracle_samples: int = 200) -> RunOutputs:
    """Trace CSV + sidecar, RMS row, identity residual and Lyapunov series."""
    out_dir = Path(out_dir)
    stem = stem or trace.controller
    files = list(trace.write(out_dir, stem))
    row = summarize(trace, cfg)
    report = RmsReport([row])
    files.append(report.to_csv(out_dir / f"{stem}_rms.csv"))
    (out_dir / f"{stem}_rms.txt").write_text(report.text() + "\n")
    files.append(out_dir / f"{stem}_rms.txt")
    gains = build_gains(cfg, with_trim=False)
    if trace.t.size >= 3:
        res = impedance_residual(trace, gains)
        files.append(write_series(out_dir, f"{stem}_impedance_residual", res.t, res.residual))
    if trace.t.size >= 2:
        plant = build_plant(cfg, payload=float(cfg["catch"]["mass"]))
        oracle = oracle_bounds(plant, gains, trace, samples=oracle_samples)
        lyap = lyapunov_series(trace, oracle, gains)
        files.append(write_series(out_dir, f"{stem}_lyapunov", lyap.t, lyap.V))
        summary = lyap.summary()
        (out_dir / f"{stem}_lyapunov.json").write_text(json.dumps(summary, indent=2))
        files.append(out_dir / f"{stem}_lyapunov.json")
    return RunOutputs(trace, row, files)


def _sweep_job(args):
    cfg, name, payload, keep = args
    cfg = apply_overrides(cfg, [f"catch.mass={payload!r}"])
    trace = run_controller(cfg, name)
    return summarize(trace, cfg), (trace if keep else None)


def sweep(cfg: dict, controllers, payloads, jobs: int = 1, keep_traces: bool = False):
    """RMS matrix over controllers x payloads (rows ordered payload-major)."""
    tasks = [(cfg, name, float(p), keep_traces) for p in payloads for name in controllers]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, tasks))
    else:
        results = [_sweep_job(t) for t in tasks]
    report = RmsReport([row for row, _ in results])
    traces = [tr for _, tr in results] if keep_traces else []
    return report, traces


def verdicts(report: RmsReport):
    if len(report.controllers()) < 2:
        return []
    return compare(report)
