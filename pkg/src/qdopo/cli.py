"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 all trajectories rejected.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import (
    AllTrajectoriesRejectedError,
    CheckpointFormatError,
    ConfigParseError,
    InvalidParameterError,
    NonFiniteFieldError,
    UnknownPresetError,
)
from .runner import PRESETS, RunConfig, analyze_checkpoints, parse_config, preset, run, to_text

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_REJECTED = 0, 1, 2, 3

CALIBRATION_TOLERANCE = 0.02


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--trajectories", type=int, help="number of trajectories per ensemble")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip matplotlib figures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qdopo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run the ensemble described by --config")
    _common(p)

    p = sub.add_parser("preset", help="run (or print) a figure-reproduction preset")
    p.add_argument("name", help=f"one of: {', '.join(PRESETS)}")
    p.add_argument("--print-config", action="store_true",
                   help="print the preset configuration and exit")
    _common(p)

    p = sub.add_parser("analyze", help="recompute spectra from checkpoint files")
    p.add_argument("directory", type=Path, help="run directory holding checkpoints/")
    p.add_argument("--out", type=Path, help="output directory (default: the run directory)")
    p.add_argument("--block-len", type=int, default=100)

    p = sub.add_parser("calibrate", help="E = 0 vacuum calibration run")
    _common(p)
    return parser


def _load(args, base: RunConfig) -> RunConfig:
    cfg = base
    if getattr(args, "config", None):
        text = args.config.read_text()
        if base.preset:
            text = f"preset = {base.preset}\n" + text
        cfg = parse_config(text)
    return _apply_flags(args, cfg)


def _apply_flags(args, cfg: RunConfig) -> RunConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trajectories is not None:
        changes["n_trajectories"] = args.trajectories
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    return cfg.with_(**changes) if changes else cfg


def _report_line(result) -> str:
    rep = result.report
    return (f"wrote {result.out_dir}: {rep.n_trajectories} trajectories, "
            f"{rep.rejected} rejected, {rep.n_samples} samples, {result.wall_time:.1f} s")


def _cmd_run(args, base):
    cfg = _load(args, base)
    out = run(cfg, plots=not args.no_plots)
    if isinstance(out, list):
        for label, res in out:
            print(f"{label}: {_report_line(res)}")
        print(f"summary: {Path(cfg.out_dir) / 'summary.csv'}")
    else:
        print(_report_line(out))
    return EXIT_OK


def _cmd_preset(args):
    base = preset(args.name)
    if args.print_config:
        sys.stdout.write(to_text(_load(args, base)))
        return EXIT_OK
    return _cmd_run(args, base)


def _cmd_analyze(args):
    report = analyze_checkpoints(args.directory, args.block_len)
    out = args.out or args.directory
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "spectra_from_checkpoints.csv")
    report.write_json(out / "spectra_from_checkpoints.json")
    print(f"wrote {out / 'spectra_from_checkpoints.csv'} ({report.n_samples} samples)")
    return EXIT_OK


def calibration_config(base: RunConfig | None = None) -> RunConfig:
    """Vacuum run: E = 0, noise on, T = 1e4, 8 trajectories, 100 time units discarded."""
    base = base or RunConfig()
    return base.with_(pump_E=0.0, noise_on=True, t_total=1.0e4, t_transient=100.0,
                      sample_every=0.5, dt=0.01, variants=(), out_dir="qdopo-calibrate")


def _cmd_calibrate(args):
    cfg = parse_config(args.config.read_text()) if args.config else RunConfig()
    cfg = _apply_flags(args, calibration_config(cfg))
    result = run(cfg, plots=not args.no_plots)
    n1 = result.report["mean_N1"] + 1.0  # Q-moment <|beta_k|^2>
    dev = np.max(np.abs(n1 - 1.0))
    print(f"<|beta_k|^2> over {len(n1)} modes: min {n1.min():.4f} max {n1.max():.4f} "
          f"(tolerance 1 +/- {CALIBRATION_TOLERANCE})")
    if dev > CALIBRATION_TOLERANCE:
        print("calibration FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print("calibration ok")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if not args.config:
                parser.error("run requires --config")
            return _cmd_run(args, RunConfig())
        if args.command == "preset":
            return _cmd_preset(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_calibrate(args)
    except (ConfigParseError, InvalidParameterError, UnknownPresetError,
            CheckpointFormatError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"qdopo: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteFieldError as exc:
        print(f"qdopo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AllTrajectoriesRejectedError as exc:
        print(f"qdopo: {exc}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
