"""Smooth-estimator risk slope as the threshold constant Gamma varies (diagnostic only)."""

import argparse

from hmmfrontier.harness import ExperimentConfig, SweepContext, fit_rate, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="rate")
    ap.add_argument("--gammas", default="0.25,0.5,1,2,default")
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--log2n", default="12,13,14,15,16,17")
    args = ap.parse_args()

    base = ExperimentConfig(model=args.model, n=tuple(2 ** int(k) for k in args.log2n.split(",")),
                            reps=args.reps, seed=args.seed, estimator=("smooth",),
                            direction="oracle")
    for g in args.gammas.split(","):
        cfg = base if g == "default" else base.replace(gamma=float(g))
        gamma = SweepContext.build(cfg).gamma
        fit = fit_rate(run_sweep(cfg), "smooth")
        risks = " ".join(f"{r:.2e}" for r in fit.risk)
        print(f"Gamma {gamma:6.3f}  slope {fit.slope:+.3f} +- {fit.stderr:.3f}  risk {risks}")


if __name__ == "__main__":
    main()
