"""Command-line entry point: ``validate``, ``run`` and ``sweep``.

Exit codes: 0 success (a diverged run is a result, not a failure), 1 usage or
configuration error, 2 gain validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import CONTROLLERS, ConfigError, RunManifest, build_gains
from .experiment import (GainValidationError, analyze_and_write, run_controller, summary_line,
                         sweep, verdicts)
from .impedance import GainError, validate_gains
from .metrics import RmsReport

EXIT_OK, EXIT_USAGE, EXIT_GAINS = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _payload_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid payload list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aerial-impedance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="YAML file layered over the shipped defaults")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, repeatable (e.g. catch.mass=0.2)")

    p = sub.add_parser("validate", help="check the impedance gain conditions")
    common(p)

    for name, help_text in (("run", "simulate one scenario"),
                            ("sweep", "controllers x payloads RMS matrix")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--controller", default="proposed" if name == "run" else "all",
                       choices=(*CONTROLLERS, "all"))
        p.add_argument("--dt", type=float, help="plant and control step (s)")
        p.add_argument("--mode", choices=("ideal", "underactuated"))
        p.add_argument("--seed", type=int, help="seed for the optional sensor noise")
        if name == "sweep":
            p.add_argument("--payloads", type=_payload_list, default=[0.1, 0.2, 0.3],
                           help="comma or space separated payload masses (kg)")
            p.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    return parser


def _manifest(args) -> RunManifest:
    choice = getattr(args, "controller", "proposed")
    controllers = CONTROLLERS if choice == "all" else (choice,)
    return RunManifest(config_path=args.config, controllers=tuple(controllers),
                       out_dir=getattr(args, "out", "runs"), overrides=tuple(args.override),
                       seed=getattr(args, "seed", None), dt=getattr(args, "dt", None),
                       mode=getattr(args, "mode", None),
                       payloads=tuple(getattr(args, "payloads", ()) or ()))


def cmd_validate(args) -> int:
    cfg = _manifest(args).resolve()
    try:
        gains = build_gains(cfg, with_trim=False)
    except GainError as exc:
        print(f"FAIL: {exc}")
        return EXIT_GAINS
    report = validate_gains(gains)
    print(report.text())
    return EXIT_OK if report.passed else EXIT_GAINS


def cmd_run(args) -> int:
    manifest = _manifest(args)
    cfg = manifest.resolve()
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in manifest.controllers:
        trace = run_controller(cfg, name)
        result = analyze_and_write(trace, cfg, out, stem=name)
        rows.append(result.row)
        print(summary_line(trace, result.row))
    if len(rows) > 1:
        report = RmsReport(rows)
        found = verdicts(report)
        (out / "comparison.json").write_text(json.dumps(
            [{**v.__dict__, "text": v.text()} for v in found], indent=2, default=list))
        (out / "comparison.txt").write_text(report.text() + "\n\n"
                                            + "\n".join(v.text() for v in found) + "\n")
        for v in found:
            print(v.text())
    return EXIT_OK


def cmd_sweep(args) -> int:
    manifest = _manifest(args)
    cfg = manifest.resolve()
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report, _ = sweep(cfg, manifest.controllers, manifest.payloads, jobs=max(1, args.jobs))
    text = report.text()
    found = verdicts(report)
    if found:
        text += "\n\n" + "\n".join(v.text() for v in found)
        (out / "verdicts.json").write_text(json.dumps(
            [{**v.__dict__, "text": v.text()} for v in found], indent=2, default=list))
    report.to_csv(out / "sweep_rms.csv")
    (out / "sweep_rms.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except GainValidationError as exc:
        print(exc.report.text(), file=sys.stderr)
        return EXIT_GAINS
    except GainError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_GAINS
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
