"""Command-line entry point: ``rcgate run | export-chi | verify``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .config import load_config
from .experiment import PRESET_NAMES, ConfigError, ExperimentConfig, export_bar_chart_data, run_experiment, write_chi_csv
from .noise import NOISE_PRESETS, noise_preset
from .tomography import ChiMatrix, TomographyError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcgate", description="Simulated controlled-unitary and remote-controlled gate tomography.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a tomography experiment")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="key = value configuration file")
    src.add_argument("--preset", choices=[n for n in PRESET_NAMES if n != "custom"])
    run.add_argument("--shots", type=int, help="mean counts per (preparation, setting)")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int, dest="n_trials", help="bootstrap trials")
    run.add_argument("--noise", choices=sorted(NOISE_PRESETS), help="named noise preset")
    run.add_argument("--noise-seed", type=int)
    run.add_argument("--workers", type=int, help="threads for bootstrap refits")
    run.add_argument("--out", help="write the JSON report here instead of stdout")

    ex = sub.add_parser("export-chi", help="export a chi matrix from a report as bar-chart data")
    ex.add_argument("--in", dest="inp", required=True, help="JSON report written by 'run'")
    ex.add_argument("--format", choices=["csv"], default="csv")
    ex.add_argument("--which", choices=["exp", "ideal"], default="exp")
    ex.add_argument("--out", help="output file (default: stdout)")

    sub.add_parser("verify", help="run the randomized invariant self-test")
    return p


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig(args.preset)
    kw = {k: getattr(args, k) for k in ("shots", "seed", "n_trials", "workers") if getattr(args, k) is not None}
    noise = cfg.noise
    if args.noise is not None:
        noise = noise_preset(args.noise, seed=noise.seed)
    if args.noise_seed is not None:
        noise = replace(noise, seed=args.noise_seed)
    if args.out is not None:
        kw["output_path"] = args.out
    try:
        return replace(cfg, noise=noise, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    report = run_experiment(cfg)
    if not cfg.output_path:
        sys.stdout.write(report.to_json())
    print(f"{cfg.preset}: F = {report.fidelity_text}", file=sys.stderr)
    return EXIT_OK


def _cmd_export(args) -> int:
    try:
        with open(args.inp, encoding="utf-8") as fh:
            data = json.load(fh)
        chi = ChiMatrix.from_dict(data["chi_" + args.which])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read report {args.inp}: {exc}") from None
    if args.out:
        export_bar_chart_data(chi, args.out)
    else:
        write_chi_csv(chi, sys.stdout)
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .selftest import run_all

    results = run_all()
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}: {r.violations} violations ({r.seconds:.2f} s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "export-chi": _cmd_export, "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TomographyError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
