"""Run a sweep from a config file and fit log-log slopes for every estimator in it.

    python scripts/rate_sweep.py configs/q_rate.yaml --out results/q_rate.csv --tail 4
"""

import argparse
from pathlib import Path

from hmmfrontier.harness import fit_rate, load_config, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", help="CSV path (default: results/<config stem>.csv)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--tail", type=int, default=0, help="also fit over the largest TAIL n values")
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out or Path("results") / (Path(args.config).stem + ".csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    records = run_sweep(cfg, out, threads=args.threads)
    print(f"{len(records)} rows -> {out}")

    for est in cfg.estimator:
        for stat in ("mean", "rmse"):
            fit = fit_rate(records, est, stat)
            line = f"{est:>10} {stat:>4}  slope {fit.slope:+.3f} +- {fit.stderr:.3f}"
            if args.tail >= 2:
                keep = set(fit.n[-args.tail:])
                tail = fit_rate([r for r in records if r.n in keep], est, stat)
                line += f"   tail({args.tail}) {tail.slope:+.3f}"
            print(line)
        fit = fit_rate(records, est)
        for n, risk in zip(fit.n, fit.risk):
            print(f"{'':>10} n={n:<8d} mean loss {risk:.4e}")


if __name__ == "__main__":
    main()
