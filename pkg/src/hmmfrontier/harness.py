"""Monte-Carlo sweeps, rate fits and closed-form oracle checks."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import yaml
from scipy.stats import linregress

from .density import (default_gamma, l2_loss_min_perm, plug_in_densities, population_estimates,
                      rough_from_coefficients, smooth_from_coefficients, coefficient_estimates)
from .model import (DegenerateWarning, GridFunction, ModelParams, haar_step, invert_reparam,
                    reparametrize, resolve_model, spectral_gap)
from .moments import (estimate_q, frobenius_loss_min_perm, moment_oracle,
                      moment_oracle_hidden_path, moment_oracle_quadrature, phi_hat, q_hat)
from .separation import (gram_oracle, lambda_coefficients, leading_eigenvector, load_direction,
                         psi_tilde_from_path)
from .simulate import sample_path, split_3n
from .wavelets import block_layout

ESTIMATORS = ("q", "smooth", "rough", "direction",
              "smooth-f0", "smooth-f1", "rough-f0", "rough-f1")
FIELDS = ("n", "delta", "eps", "zeta", "rep", "seed", "estimator", "loss_raw",
          "loss_clamped_or_truncated", "degeneracy_flags", "wall_time")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key, self.line, self.message = key, line, message
        where = "".join([f"line {line}: " if line else "", f"{key}: " if key else ""])
        super().__init__(where + message)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "theta_star"
    n: tuple[int, ...] = (1024,)
    reps: int = 1
    seed: int = 0
    estimator: tuple[str, ...] = ("q",)
    M: int = 3
    tau: float = 1.0
    gamma: float | None = None
    t_check: float | None = None
    J: int = 0
    L: float = 2.0
    gamma_star: float | None = None
    direction: str = "split3n"
    wavelet: str = "haar"

    def __post_init__(self):
        checks = [
            ("n", len(self.n) > 0 and all(b > a for a, b in zip(self.n, self.n[1:])),
             "n values must be strictly ascending"),
            ("n", all(v >= 3 for v in self.n), "every n must be >= 3"),
            ("reps", self.reps >= 1, "replication count must be >= 1"),
            ("seed", 0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer"),
            ("estimator", len(self.estimator) > 0 and set(self.estimator) <= set(ESTIMATORS),
             f"estimators must be among {', '.join(ESTIMATORS)}"),
            ("M", self.M >= self.J, "M must be >= J"),
            ("tau", self.tau >= 1, "tau must be >= 1"),
            ("gamma", self.gamma is None or self.gamma > 0, "gamma must be positive"),
            ("t_check", self.t_check is None or self.t_check > 0, "t_check must be positive"),
            ("J", self.J >= 0, "J must be >= 0"),
            ("L", self.L >= 1, "L must be >= 1"),
            ("gamma_star", self.gamma_star is None or 0 < self.gamma_star <= 1,
             "gamma_star must lie in (0, 1]"),
            ("direction", self.direction in ("oracle", "split3n")
             or self.direction.startswith("file:"), "direction must be oracle, split3n or file:<path>"),
            ("wavelet", self.wavelet in ("haar", "db4"), "wavelet must be haar or db4"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(msg, key)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n"], d["estimator"] = list(self.n), list(self.estimator)
        return d


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _listish(value, cast) -> tuple:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    elif not isinstance(value, list):
        value = [value]
    return tuple(cast(v) for v in value)


def _int(v) -> int:
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _coerce(key: str, value):
    if key == "n":
        return _listish(value, _int)
    if key == "estimator":
        return _listish(value, str)
    if key in ("reps", "seed", "M", "J"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if key in ("tau", "gamma", "t_check", "L", "gamma_star"):
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise TypeError(f"expected a string, got {value!r}")
    return value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Flat ``key: value`` YAML; unknown keys and bad values report their line."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: not valid key-value text ({exc})",
                          line=mark.line + 1 if mark else None) from None
    if root is None:
        return ExperimentConfig()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}: expected key: value pairs", line=root.start_mark.line + 1)
    values, lines = {}, {}
    loader_data = yaml.safe_load(text)
    for key_node, _ in root.value:
        key, line = key_node.value, key_node.start_mark.line + 1
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown key (allowed: {', '.join(_CONFIG_FIELDS)})", key, line)
        if key in values:
            raise ConfigError("duplicate key", key, line)
        try:
            values[key] = _coerce(key, loader_data[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key, line) from None
        lines[key] = line
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.key, lines.get(exc.key)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), str(path))


# -- risk records -------------------------------------------------------------

@dataclass(frozen=True)
class RiskRecord:
    n: int
    delta: float
    eps: float
    zeta: float
    rep: int
    seed: int
    estimator: str
    loss_raw: float
    loss_clamped_or_truncated: float
    degeneracy_flags: str = ""
    wall_time: float = 0.0

    def __post_init__(self):
        if not (self.loss_raw >= 0 and self.loss_clamped_or_truncated >= 0):
            raise ValueError(f"losses must be >= 0: {self}")

    def row(self) -> list[str]:
        out = []
        for name in FIELDS:
            v = getattr(self, name)
            out.append(format(v, ".17g") if isinstance(v, float) else str(v))
        return out


def write_csv(records: Iterable[RiskRecord], dest: str | Path | io.TextIOBase) -> None:
    own = not hasattr(dest, "write")
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for rec in records:
            w.writerow(rec.row())
    finally:
        if own:
            fh.close()


def read_csv(src: str | Path) -> list[RiskRecord]:
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"{src}: header must be {','.join(FIELDS)}")
        types = {f.name: f.type for f in dataclasses.fields(RiskRecord)}
        cast = {"int": int, "float": float, "str": str}
        return [RiskRecord(**{k: cast[types[k]](v) for k, v in row.items()}) for row in reader]


# -- one replication ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepContext:
    config: ExperimentConfig
    theta: ModelParams
    psi2: GridFunction | None
    gamma: float
    t_check: float
    file_direction: GridFunction | None = None

    @classmethod
    def build(cls, config: ExperimentConfig, theta: ModelParams | None = None) -> "SweepContext":
        theta = theta if theta is not None else resolve_model(config.model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWarning)
            psi2 = reparametrize(theta).psi2
        gstar = config.gamma_star if config.gamma_star is not None else spectral_gap(theta)
        gamma = config.gamma if config.gamma is not None else default_gamma(config.L, gstar)
        t_check = config.t_check if config.t_check is not None else config.L
        if any(e not in ("q", "direction") for e in config.estimator):
            for n in config.n:
                layout = block_layout(n, config.tau, config.J)
                if not layout.valid:
                    raise ConfigError(f"n={n} leaves no thresholded level (J_n={layout.J_n}, "
                                      f"j_tilde_n={layout.j_tilde_n}); raise n or lower tau", "n")
        file_dir = None
        if config.direction.startswith("file:"):
            file_dir = load_direction(config.direction[5:]).grid
        return cls(config, theta, psi2, gamma, t_check, file_dir)

    @property
    def class_params(self) -> tuple[float, float, float]:
        th = self.theta
        return (min(th.p, th.q), abs(1 - th.p - th.q), (th.f0 - th.f1).l2_norm())


def _direction_for(ctx: SweepContext, n: int, rep: int):
    """(sample for estimation, psi_tilde, direction record or None, flags)."""
    cfg, seed = ctx.config, ctx.config.seed
    flags = set()
    if cfg.direction == "split3n":
        first, third = split_3n(ctx.theta, n, seed, (n, rep))
        d = psi_tilde_from_path(first, cfg.M, cfg.tau, cfg.J, cfg.wavelet)
        if d.degenerate:
            flags.add("direction_degenerate")
        return third, d.grid, d, flags
    path = sample_path(ctx.theta, n, seed, (n, rep))
    if ctx.file_direction is not None:
        return path, ctx.file_direction, None, flags
    if ctx.psi2 is None:
        flags.add("psi2_undefined")
        return path, GridFunction(np.ones(1)), None, flags
    return path, ctx.psi2, None, flags


def replicate(ctx: SweepContext, n: int, rep: int, timing: bool = False) -> list[RiskRecord]:
    """All requested estimators on one sample; every row can be rebuilt from (seed, n, rep)."""
    cfg = ctx.config
    delta, eps, zeta = ctx.class_params
    start = time.perf_counter()
    path, psi_tilde, direction, base_flags = _direction_for(ctx, n, rep)
    rows = []
    cache = {}

    def density_pair(kind):
        if "ce" not in cache:
            cache["ce"] = coefficient_estimates(path, psi_tilde, n=n, tau=cfg.tau, J=cfg.J,
                                                wavelet=cfg.wavelet)
        ce = cache["ce"]
        fn = smooth_from_coefficients if kind == "smooth" else rough_from_coefficients
        return ce, fn(ce, ctx.gamma, ctx.t_check)

    for est in cfg.estimator:
        flags = set(base_flags)
        if est == "q":
            qe = estimate_q(path, psi_tilde)
            flags.update(qe.diagnostics["flags"])
            raw = frobenius_loss_min_perm(qe.Q_raw, ctx.theta.Q)
            clamped = frobenius_loss_min_perm(qe.Q_hat, ctx.theta.Q)
        elif est == "direction":
            if direction is None:
                raise ConfigError("estimator 'direction' needs direction: split3n", "estimator")
            if ctx.psi2 is None:
                flags.add("psi2_undefined")
                raw = clamped = 1.0
            else:
                raw = 1 - abs(direction.untruncated.inner(ctx.psi2))
                clamped = 1 - abs(direction.grid.inner(ctx.psi2))
        else:
            kind, _, which = est.partition("-")
            ce, pair = density_pair(kind)
            flags.update(ce.flags)
            l0r, l1r, _ = l2_loss_min_perm([e.raw for e in pair], ctx.theta.f0, ctx.theta.f1)
            l0, l1, _ = l2_loss_min_perm(pair, ctx.theta.f0, ctx.theta.f1)
            pick = {"": lambda a, b: a + b, "f0": lambda a, b: a, "f1": lambda a, b: b}[which]
            raw, clamped = pick(l0r, l1r), pick(l0, l1)
        wall = time.perf_counter() - start if timing else 0.0
        rows.append(RiskRecord(n, delta, eps, zeta, rep, cfg.seed, est, max(float(raw), 0.0),
                               max(float(clamped), 0.0), ";".join(sorted(flags)), wall))
    return rows


def run_sweep(config: ExperimentConfig, out: str | Path | None = None, threads: int = 1,
              timing: bool = False, theta: ModelParams | None = None) -> list[RiskRecord]:
    """One row per (n, rep, estimator), ordered by n, then rep, then estimator."""
    ctx = SweepContext.build(config, theta)
    tasks = [(n, rep) for n in config.n for rep in range(config.reps)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        if threads <= 1:
            chunks = [replicate(ctx, n, rep, timing) for n, rep in tasks]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                # map yields in submission order: the sink stays keyed by (n, rep)
                chunks = list(pool.map(lambda t: replicate(ctx, *t, timing), tasks))
    records = [r for chunk in chunks for r in chunk]
    if out is not None:
        write_csv(records, out)
        meta = {"config": config.to_dict(), "gamma_used": ctx.gamma, "t_check_used": ctx.t_check,
                "stream_key": "(seed, n, rep)", "numpy": np.__version__,
                "rows": len(records)}
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return records


# -- rate fits -----------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    n: tuple[int, ...]
    risk: tuple[float, ...]


def fit_rate(records: Sequence[RiskRecord] | str | Path, estimator: str,
             statistic: str = "mean", column: str = "loss_clamped_or_truncated") -> RateFit:
    """OLS of log(statistic of the loss) against log n.

    ``statistic`` is ``mean`` (mean loss) or ``rmse`` (square root of the mean loss).
    """
    if isinstance(records, (str, Path)):
        records = read_csv(records)
    by_n: dict[int, list[float]] = {}
    for r in records:
        if r.estimator == estimator:
            by_n.setdefault(r.n, []).append(getattr(r, column))
    if len(by_n) < 2:
        raise ValueError(f"need at least two n values for estimator {estimator!r}")
    ns = sorted(by_n)
    means = [float(np.mean(by_n[n])) for n in ns]
    if statistic == "rmse":
        stat = [math.sqrt(m) for m in means]
    elif statistic == "mean":
        stat = means
    else:
        raise ValueError("statistic must be 'mean' or 'rmse'")
    if min(stat) <= 0:
        raise ValueError("cannot take the log of a zero risk")
    fit = linregress(np.log(ns), np.log(stat))
    stderr = float(fit.stderr) if len(ns) > 2 else math.nan
    return RateFit(float(fit.slope), float(fit.intercept), stderr, tuple(ns), tuple(stat))


# -- oracle checks -------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


@dataclass
class OracleReport:
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> float:
        return max((c.deviation for c in self.checks), default=0.0)

    def add(self, name: str, deviation: float, tolerance: float) -> None:
        self.checks.append(Check(name, float(deviation), tolerance))

    def render(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.deviation:.3e} (tol {c.tolerance:g})"
                 for c in self.checks]
        lines += [f"note: {s}" for s in self.notes]
        lines.append(f"{'PASS' if self.passed else 'FAIL'} max deviation {self.max_deviation:.3e}")
        return "\n".join(lines)


def _test_directions(theta: ModelParams, count: int, seed: int) -> list[GridFunction]:
    rng = np.random.default_rng(seed)
    D = theta.D
    dirs = [haar_step(D), GridFunction(np.ones(2**D))]
    for _ in range(count):
        v = rng.standard_normal(2**D)
        dirs.append(GridFunction(v / math.sqrt(np.mean(v**2))))
    return dirs


def oracle_check(theta: ModelParams, closed_form: Callable = moment_oracle, M: int = 3,
                 n_directions: int = 5, seed: int = 0, tol: float = 1e-10) -> OracleReport:
    """Closed-form moments against quadrature and brute force, plus plug-in exactness."""
    report = OracleReport()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        rp = reparametrize(theta)
        if rp.degenerate:
            report.notes.append("f0 == f1: psi2 undefined, moments vanish, inversion skipped")
        dirs = _test_directions(theta, n_directions, seed)
        if not rp.degenerate:
            dirs.insert(0, rp.psi2)
        dev_q = dev_h = 0.0
        for pt in dirs:
            cf = np.array(closed_form(theta, pt).as_tuple())
            dev_q = max(dev_q, np.abs(cf - moment_oracle_quadrature(theta, pt).as_tuple()).max())
            dev_h = max(dev_h, np.abs(cf - moment_oracle_hidden_path(theta, pt).as_tuple()).max())
        report.add("moments closed form vs quadrature", dev_q, tol)
        report.add("moments closed form vs hidden-path sum", dev_h, tol)
        if rp.degenerate:
            return report

        back = invert_reparam(rp.phi1, rp.phi2, rp.phi3, rp.psi1, rp.psi2)
        report.add("inversion round trip", max(abs(back.p - theta.p), abs(back.q - theta.q),
                                               (back.f0 - theta.f0).sup(),
                                               (back.f1 - theta.f1).sup()), 1e-12)
        dev_phi = dev_Q = dev_f = 0.0
        for pt in dirs:
            m = closed_form(theta, pt)
            if not m.I_tilde:
                continue
            s = 1.0 if m.I_tilde > 0 else -1.0
            ph = phi_hat(m)
            dev_phi = max(dev_phi, abs(ph.phi1 - s * rp.phi1), abs(ph.phi2 - rp.phi2))
            Q = q_hat(ph.phi1, ph.phi2).Q_hat
            target = theta.Q if s > 0 else theta.Q[::-1, ::-1]
            dev_Q = max(dev_Q, np.abs(Q - target).max())
            f_plus, f_minus = plug_in_densities(population_estimates(theta, pt))
            want = (theta.f0, theta.f1) if s > 0 else (theta.f1, theta.f0)
            dev_f = max(dev_f, (f_plus - want[0]).sup(), (f_minus - want[1]).sup())
        report.add("phi plug-in", dev_phi, 1e-12)
        report.add("Q plug-in", dev_Q, 1e-12)
        report.add("density plug-in", dev_f, 1e-12)

        # rank-one recovery only applies when psi2 lives in Lambda(M)
        coeffs = lambda_coefficients(rp.psi2, M)
        if abs(float(coeffs @ coeffs) - 1.0) < 1e-12:
            v = leading_eigenvector(gram_oracle(theta, M)).vector
            report.add("Gram leading eigenvector", min(np.abs(v - coeffs).max(),
                                                       np.abs(v + coeffs).max()), tol)
        else:
            report.notes.append(f"psi2 has detail beyond level {M}: eigenvector check skipped")
    return report
