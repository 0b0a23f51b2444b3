"""End-to-end acceptance checks at full Monte-Carlo size.

Each prints one PASS/FAIL line with its runtime; the runtime limit is part of the check.
"""

import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from hmmfrontier.harness import ExperimentConfig, fit_rate, oracle_check, run_sweep
from hmmfrontier.model import GridFunction, reparametrize
from hmmfrontier.moments import moment_oracle, moment_oracle_quadrature
from hmmfrontier.separation import gram_oracle, lambda_coefficients, leading_eigenvector

from conftest import random_theta

HERE = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail, seconds, limit):
        status = "PASS" if passed and seconds < limit else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] criterion {number} {title}: {detail} "
                  f"({seconds:.1f} s, limit {limit:g} s)")
    return emit


def unit_direction(rng, D):
    v = rng.standard_normal(2**D)
    return GridFunction(v / np.sqrt(np.mean(v**2)))


def test_moment_oracle_agreement(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    dev = 0.0
    for _ in range(20):
        th = random_theta(rng, 6)
        for _ in range(5):
            t = unit_direction(rng, 6)
            closed = np.array(moment_oracle(th, t).as_tuple())
            dev = max(dev, np.abs(closed - moment_oracle_quadrature(th, t).as_tuple()).max())
    took = time.perf_counter() - start
    ok = dev <= 1e-10
    report(1, "moment oracle agreement", ok, f"max deviation {dev:.2e} (tol 1e-10)", took, 10)
    assert ok and took < 10


def test_inversion_exactness(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    names = ("inversion round trip", "phi plug-in", "Q plug-in", "density plug-in")
    dev = 0.0
    for _ in range(20):
        rep = oracle_check(random_theta(rng, 5), n_directions=3, seed=int(rng.integers(2**31)))
        dev = max([dev] + [c.deviation for c in rep.checks if c.name in names])
    took = time.perf_counter() - start
    ok = dev <= 1e-12
    report(2, "inversion exactness", ok, f"max deviation {dev:.2e} (tol 1e-12)", took, 5)
    assert ok and took < 5


def test_q_rate(report):
    start = time.perf_counter()
    cfg = ExperimentConfig(model="theta_star", n=tuple(2**k for k in range(10, 17)), reps=200,
                           seed=1, estimator=("q",), direction="oracle")
    fit = fit_rate(run_sweep(cfg), "q", statistic="rmse")
    took = time.perf_counter() - start
    ok = -0.65 <= fit.slope <= -0.35
    tail = np.polyfit(np.log(fit.n[-4:]), np.log(fit.risk[-4:]), 1)[0]
    report(3, "Q-hat RMSE slope", ok,
           f"slope {fit.slope:.3f} +- {fit.stderr:.3f}, target [-0.65, -0.35]; "
           f"slope over the four largest n {tail:.3f}", took, 180)
    assert ok and took < 180


def test_density_rate(report):
    start = time.perf_counter()
    cfg = ExperimentConfig(model="rate", n=tuple(2**k for k in range(12, 18)), reps=100,
                           seed=2, estimator=("smooth",), direction="oracle")
    fit = fit_rate(run_sweep(cfg), "smooth")
    took = time.perf_counter() - start
    ok = -0.70 <= fit.slope <= -0.30
    report(4, "smooth density risk slope", ok,
           f"slope {fit.slope:.3f} +- {fit.stderr:.3f}, target [-0.70, -0.30]", took, 600)
    assert ok and took < 600


def test_separation_success(report):
    start = time.perf_counter()
    cfg = ExperimentConfig(model="theta_star", n=(2**14,), reps=100, seed=3, M=3, tau=4.0,
                           estimator=("direction",), direction="split3n")
    rows = run_sweep(cfg)
    success = float(np.mean([r.loss_clamped_or_truncated <= 1 / 8 for r in rows]))
    took = time.perf_counter() - start
    ok = success >= 0.90
    report(5, "separation success", ok, f"frequency {success:.3f}, target >= 0.90", took, 120)
    assert ok and took < 120


def test_rank_one_recovery(report):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    M, dev = 3, 0.0
    for _ in range(20):
        th = random_theta(rng, M + 1)
        coeffs = lambda_coefficients(reparametrize(th).psi2, M)
        v = leading_eigenvector(gram_oracle(th, M)).vector
        dev = max(dev, min(np.abs(v - coeffs).max(), np.abs(v + coeffs).max()))
    took = time.perf_counter() - start
    ok = dev <= 1e-10
    report(6, "rank-one recovery", ok, f"max deviation {dev:.2e} (tol 1e-10)", took, 1)
    assert ok and took < 1


def test_rough_vs_smooth(report):
    start = time.perf_counter()
    cfg = ExperimentConfig(model="rough_smooth", n=(2**15,), reps=100, seed=4,
                           estimator=("rough-f0", "smooth-f0"), direction="oracle")
    rows = run_sweep(cfg)
    risk = {e: np.mean([r.loss_clamped_or_truncated for r in rows if r.estimator == e])
            for e in cfg.estimator}
    ratio = risk["rough-f0"] / risk["smooth-f0"]
    took = time.perf_counter() - start
    ok = ratio <= 1.1
    report(7, "rough vs smooth on f0 (report only)", ok,
           f"rough {risk['rough-f0']:.3e}, smooth {risk['smooth-f0']:.3e}, ratio {ratio:.3f}, "
           "target <= 1.1", took, 300)
    if not ok:
        warnings.warn(f"rough estimator risk is {ratio:.2f}x the smooth one on f0")
    assert took < 300


PROPERTY_SUITES = [
    "test_wavelets.py::test_parseval_and_reconstruction",
    "test_wavelets.py::test_parseval_random_D6",
    "test_density.py::TestSmooth::test_threshold_monotone_in_gamma",
    "test_density.py::TestSmooth::test_truncation_never_hurts",
    "test_harness.py::TestSweep::test_threads_do_not_change_bytes",
]


def test_property_suites(report):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *(str(HERE / s) for s in PROPERTY_SUITES)],
                          cwd=HERE, capture_output=True, text=True)
    took = time.perf_counter() - start
    ok = proc.returncode == 0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(8, "property suites", ok, summary, took, 30)
    assert ok and took < 30, proc.stdout[-2000:]
