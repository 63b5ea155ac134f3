"""Command-line front end: simulate, calibrate, analyze, predict, report.

Exit codes: 0 success, 2 configuration/validation error, 3 I/O failure,
4 unreachable calibration target.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .analysis import write_all_reports
from .config import (
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    config_to_text,
    load_config_file,
    load_preset,
    preset_names,
)
from .protocol import FidelityClass, predict_fidelity
from .simrun import (
    CalibrationError,
    calibrate_sigma_omega,
    load_log,
    run_campaign,
    run_metadata,
    write_log,
)
from .bsm import EventLogError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CALIBRATION = 4

LOG_NAME = "events.ndjson"
METADATA_NAME = "run_metadata.json"


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", help="named built-in configuration")
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable, dotted keys)",
    )
    parser.add_argument("--seed", type=int, help="override the RNG seed")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--windows", help="comma list of coincidence windows in ns")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"trials={args.trials}")
    if args.out is not None:
        overrides.append(f"out_dir={args.out}")
    if args.windows is not None:
        overrides.append(f"windows_ns={args.windows}")
    if args.preset and args.config:
        raise ConfigError(["give either --preset or --config, not both"])
    if args.preset:
        return load_preset(args.preset, overrides)
    if args.config:
        return load_config_file(args.config, overrides)
    from .config import apply_overrides

    return config_from_mapping(apply_overrides({}, overrides))


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    result = run_campaign(config)
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / LOG_NAME
        write_log(result, log_path)
        loaded = load_log(log_path)
        summary = write_all_reports(loaded, out, windows_ns=list(config.windows_ns))
        meta = run_metadata(result)
        meta["report_summary"] = summary
        with open(out / METADATA_NAME, "w") as handle:
            json.dump(meta, handle, indent=2, sort_keys=True)
            handle.write("\n")
        with open(out / "config.cfg", "w") as handle:
            handle.write(config_to_text(config))
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        c = result.counters
        print(f"trials: {c['attempts']}  two-click: {c['two_click']}  psi-: {c['psi_minus']}")
        rates = result.rate_summary()
        print(
            f"heralding rate: {rates['psi_minus_rate_per_attempt']:.3e} per attempt"
            f"  ({rates['seconds_per_event_trapped']:.3g} s per event while trapped)"
        )
        if "f_avg_unwindowed" in summary and not math.isnan(summary["f_avg_unwindowed"]):
            print(f"unwindowed average fidelity: {summary['f_avg_unwindowed']:.4f}")
        if "contrast_unwindowed" in summary and not math.isnan(summary["contrast_unwindowed"]):
            print(f"unwindowed contrast: {summary['contrast_unwindowed']:.4f}")
        print(f"outputs written to {out}")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    env_a = config.envelope_a.build()
    env_c = env_a if config.envelope_c == config.envelope_a else config.envelope_c.build()
    result = calibrate_sigma_omega(
        args.target,
        env_a,
        env_c,
        trials=args.calibration_trials,
        seed=config.seed,
        tol=args.tol,
    )
    payload = result.to_json()
    out_path = Path(args.calibration_out)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        print(f"error: cannot write calibration: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(
            f"sigma_omega = {result.sigma_omega:.6g} rad/s"
            f"  (contrast {result.achieved_contrast:.4f} +- {result.achieved_stderr:.4f},"
            f" target {result.target})"
        )
        print(f"calibration written to {out_path}")
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    values = {
        klass.value: predict_fidelity(args.contrast, args.f_ent, args.f_a, klass)
        for klass in (FidelityClass.PERP, FidelityClass.PARALLEL, FidelityClass.AVERAGE)
    }
    for name, value in values.items():
        print(f"{name} {value:.4f}")
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    windows = None
    if args.windows:
        windows = [float(tok) for tok in args.windows.split(",") if tok.strip()]
    loaded = load_log(args.log)
    if len(loaded.events) == 0:
        raise EventLogError("log contains no events")
    out = Path(args.out or Path(args.log).parent)
    try:
        write_all_reports(loaded, out, windows_ns=windows)
    except OSError as exc:
        print(f"error: cannot write reports: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"reports written to {out}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    log_path = run_dir / LOG_NAME
    if not log_path.is_file():
        print(f"error: no {LOG_NAME} in {run_dir}", file=sys.stderr)
        return EXIT_IO
    args.log = str(log_path)
    args.out = args.out or str(run_dir)
    return _cmd_analyze(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleportsim",
        description="Simulate and analyze heralded teleportation between two single-atom memories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo campaign and write reports")
    _add_config_options(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="find the jitter width for a target contrast")
    _add_config_options(p_cal)
    p_cal.add_argument("--target", type=float, required=True, help="target unwindowed contrast")
    p_cal.add_argument("--tol", type=float, default=0.005, help="acceptance window on the contrast")
    p_cal.add_argument(
        "--calibration-trials", type=int, default=400_000, help="trials per bisection probe"
    )
    p_cal.add_argument(
        "--calibration-out", default="calibration.json", help="output JSON path"
    )
    p_cal.set_defaults(func=_cmd_calibrate)

    p_pred = sub.add_parser("predict", help="closed-form fidelity from (C, F_ent, F_A)")
    p_pred.add_argument("contrast", type=float)
    p_pred.add_argument("f_ent", type=float)
    p_pred.add_argument("f_a", type=float)
    p_pred.set_defaults(func=_cmd_predict)

    p_ana = sub.add_parser("analyze", help="recompute reports from an event log")
    p_ana.add_argument("log", help="path to an events.ndjson log")
    p_ana.add_argument("--out", help="output directory (default: beside the log)")
    p_ana.add_argument("--windows", help="comma list of coincidence windows in ns")
    p_ana.add_argument("--quiet", action="store_true")
    p_ana.set_defaults(func=_cmd_analyze)

    p_rep = sub.add_parser("report", help="regenerate reports inside a run directory")
    p_rep.add_argument("run_dir", help="directory containing events.ndjson")
    p_rep.add_argument("--out", help="output directory (default: the run directory)")
    p_rep.add_argument("--windows", help="comma list of coincidence windows in ns")
    p_rep.add_argument("--quiet", action="store_true")
    p_rep.set_defaults(func=_cmd_report)

    p_presets = sub.add_parser("presets", help="list built-in presets")
    p_presets.set_defaults(func=lambda args: (print("\n".join(preset_names())), EXIT_OK)[1])

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except EventLogError as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"bracketing: {exc.diagnostics}", file=sys.stderr)
        return EXIT_CALIBRATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
