"""Command-line entry point: ``hmmfrontier <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .density import coefficient_estimates, rough_from_coefficients, smooth_from_coefficients
from .harness import (ConfigError, ExperimentConfig, SweepContext, fit_rate, load_config,
                      oracle_check, run_sweep)
from .model import DegenerateWarning, grid_record, resolve_model
from .moments import estimate_q
from .separation import psi_tilde_from_path
from .simulate import sample_path, write_path_csv


def _n_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(float(v)) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key: value experiment file")
    p.add_argument("--model", help="preset name or saved model file")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--reps", type=int)
    p.add_argument("--n", type=_n_list, help="comma list of sample sizes")
    p.add_argument("--gamma", type=float, help="threshold constant Gamma")
    p.add_argument("--tau", type=float, help="truncation level of the separating direction")
    p.add_argument("--M", type=int, help="finest level of the Gram basis")
    p.add_argument("--t-check", dest="t_check", type=float, help="clamp level of the densities")
    p.add_argument("--direction", help="oracle, split3n or file:<path>")
    p.add_argument("--estimator", type=lambda s: tuple(s.split(",")))
    p.add_argument("--out", help="output path")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall times (breaks byte identity)")
    p.add_argument("--input", help="observations CSV (columns t, x, y) instead of simulating")


def _config(args) -> ExperimentConfig:
    base = load_config(args.config) if args.config else ExperimentConfig()
    return base.replace(model=args.model, seed=args.seed, reps=args.reps, n=args.n,
                        gamma=args.gamma, tau=args.tau, M=args.M, t_check=args.t_check,
                        direction=args.direction, estimator=args.estimator)


def _observations(args, cfg: ExperimentConfig, theta) -> np.ndarray:
    if args.input:
        with open(args.input, newline="") as fh:
            return np.array([float(row["y"]) for row in csv.DictReader(fh)])
    n = cfg.n[0]
    return sample_path(theta, n, cfg.seed, (n, 0)).observed


def _psi_tilde(ctx: SweepContext, y: np.ndarray):
    """Direction for a standalone estimate; split3n uses the first third of the sample."""
    cfg = ctx.config
    if cfg.direction == "split3n":
        n = y.size // 3
        d = psi_tilde_from_path(y[:n], cfg.M, cfg.tau, cfg.J, cfg.wavelet)
        return d.grid, y[2 * n:]
    if ctx.file_direction is not None:
        return ctx.file_direction, y
    if ctx.psi2 is None:
        raise ConfigError("oracle direction is undefined when f0 == f1", "direction")
    return ctx.psi2, y


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    theta = resolve_model(cfg.model)
    n = cfg.n[0]
    path = sample_path(theta, n, cfg.seed, (n, 0))
    write_path_csv(path, args.out or sys.stdout)
    return 0


def cmd_direction(args) -> int:
    cfg = _config(args)
    y = _observations(args, cfg, resolve_model(cfg.model))
    d = psi_tilde_from_path(y, cfg.M, cfg.tau, cfg.J, cfg.wavelet)
    _emit(d.record(), args.out)
    return 0


def cmd_estimate_q(args) -> int:
    cfg = _config(args)
    ctx = SweepContext.build(cfg)
    psi_tilde, y = _psi_tilde(ctx, _observations(args, cfg, ctx.theta))
    qe = estimate_q(y, psi_tilde)
    _emit(json.dumps({"Q_hat": qe.Q_hat.tolist(), "Q_raw": qe.Q_raw.tolist(),
                      "phi1_hat": qe.phi1_hat, "phi2_hat": qe.phi2_hat,
                      "diagnostics": qe.diagnostics}, indent=2), args.out)
    return 0


def cmd_estimate_densities(args) -> int:
    cfg = _config(args)
    ctx = SweepContext.build(cfg)
    psi_tilde, y = _psi_tilde(ctx, _observations(args, cfg, ctx.theta))
    ce = coefficient_estimates(y, psi_tilde, n=y.size, tau=cfg.tau, J=cfg.J, wavelet=cfg.wavelet)
    smooth = smooth_from_coefficients(ce, ctx.gamma, ctx.t_check)
    rough = rough_from_coefficients(ce, ctx.gamma, ctx.t_check)
    lines = [grid_record(e.grid, estimator=e.estimator_kind, label=e.label)
             for e in (*smooth, *rough)]
    _emit("\n".join(lines), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if not args.out:
        raise ConfigError("sweep needs --out", "out")
    records = run_sweep(cfg, args.out, threads=args.threads, timing=args.timing)
    print(f"wrote {len(records)} rows to {args.out}", file=sys.stderr)
    return 0


def cmd_fit_rate(args) -> int:
    fit = fit_rate(args.csv, args.estimator, args.statistic, args.column)
    print(json.dumps({"estimator": args.estimator, "statistic": args.statistic,
                      "slope": fit.slope, "intercept": fit.intercept, "stderr": fit.stderr,
                      "n": list(fit.n), "risk": list(fit.risk)}, indent=2))
    return 0


def cmd_oracle_check(args) -> int:
    theta = resolve_model(args.theta)
    report = oracle_check(theta, M=args.M)
    print(report.render())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmmfrontier")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("direction", cmd_direction),
                     ("estimate-q", cmd_estimate_q), ("estimate-densities", cmd_estimate_densities),
                     ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        _common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("fit-rate")
    p.add_argument("csv")
    p.add_argument("--estimator", default="q")
    p.add_argument("--statistic", choices=("mean", "rmse"), default="mean")
    p.add_argument("--column", choices=("loss_raw", "loss_clamped_or_truncated"),
                   default="loss_clamped_or_truncated")
    p.set_defaults(func=cmd_fit_rate)
    p = sub.add_parser("oracle-check")
    p.add_argument("theta", help="preset name or saved model file")
    p.add_argument("--M", type=int, default=3)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWarning)
            return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
