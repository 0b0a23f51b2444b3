"""Method-of-moments estimation of the transition matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import (GridFunction, ModelParams, hidden_path_expect, joint_density_3,
                    reparametrize, r_of_phi)


def _observations(path) -> np.ndarray:
    return np.asarray(getattr(path, "observed", path), dtype=float)


def empirical_moment(path, h: Callable[..., np.ndarray], s: int) -> float:
    """P_n^(s)(h): average of h over the n-s+1 windows of s consecutive observations."""
    y = _observations(path)
    n = y.size
    if s not in (1, 2, 3):
        raise ValueError("s must be 1, 2 or 3")
    if n < s:
        raise ValueError(f"path of length {n} is shorter than the window s={s}")
    windows = [y[i:n - s + 1 + i] for i in range(s)]
    vals = np.broadcast_to(h(*windows), (n - s + 1,))
    return float(vals.mean())


@dataclass(frozen=True)
class Expectations:
    """The four expectations the moment map is built from."""

    e1: float   # E psi(Y1)
    e2: float   # E psi(Y1) psi(Y2)
    e13: float  # E psi(Y1) psi(Y3)
    e3: float   # E psi(Y1) psi(Y2) psi(Y3)


@dataclass(frozen=True, eq=False)
class MomentTriple:
    m1: float
    m2: float
    m3: float
    psi_tilde: GridFunction | None = None
    I_tilde: float | None = None

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m1, self.m2, self.m3)


def moments_from_expectations(e: Expectations, psi_tilde=None, I_tilde=None) -> MomentTriple:
    m1 = e.e2 - e.e1**2
    m2 = e.e13 - e.e1**2
    m3 = -e.e3 + e.e1**3 + (2 * m1 + m2) * e.e1
    return MomentTriple(m1, m2, m3, psi_tilde, I_tilde)


def empirical_expectations(path, psi_tilde: GridFunction) -> Expectations:
    w = psi_tilde.evaluate(_observations(path))
    if w.size < 3:
        raise ValueError("need at least three observations")
    return Expectations(float(w.mean()), float(np.mean(w[:-1] * w[1:])),
                        float(np.mean(w[:-2] * w[2:])),
                        float(np.mean(w[:-2] * w[1:-1] * w[2:])))


def m_hat(path, psi_tilde: GridFunction) -> MomentTriple:
    return moments_from_expectations(empirical_expectations(path, psi_tilde), psi_tilde)


def population_expectations(theta: ModelParams, psi_tilde: GridFunction) -> Expectations:
    """The four expectations by exact quadrature against the law of (Y1, Y2, Y3)."""
    p3 = joint_density_3(theta)
    one = GridFunction(np.ones(1))
    t = psi_tilde
    return Expectations(p3.expect(t, one, one), p3.expect(t, t, one),
                        p3.expect(t, one, t), p3.expect(t, t, t))


def moment_oracle(theta: ModelParams, psi_tilde: GridFunction) -> MomentTriple:
    """Closed form m = (r I^2, r phi2 I^2, r phi1 phi2 phi3 I^3), I = <psi2, psi_tilde>."""
    rp = reparametrize(theta)
    if rp.degenerate:
        return MomentTriple(0.0, 0.0, 0.0, psi_tilde, 0.0)
    I = rp.psi2.inner(psi_tilde)
    r = r_of_phi(*rp.phi)
    return MomentTriple(r * I**2, r * rp.phi2 * I**2, r * rp.phi1 * rp.phi2 * rp.phi3 * I**3,
                        psi_tilde, I)


def moment_oracle_quadrature(theta: ModelParams, psi_tilde: GridFunction) -> MomentTriple:
    return moments_from_expectations(population_expectations(theta, psi_tilde), psi_tilde)


def moment_oracle_hidden_path(theta: ModelParams, psi_tilde: GridFunction) -> MomentTriple:
    one = GridFunction(np.ones(1))
    t = psi_tilde
    e = Expectations(hidden_path_expect(theta, [t]), hidden_path_expect(theta, [t, t]),
                     hidden_path_expect(theta, [t, one, t]), hidden_path_expect(theta, [t, t, t]))
    return moments_from_expectations(e, psi_tilde)


@dataclass(frozen=True)
class PhiEstimate:
    phi1: float
    phi2: float
    v: float
    flags: frozenset = frozenset()


def phi_hat(m: MomentTriple) -> PhiEstimate:
    v = 4 * m.m1**2 * max(m.m2, 0.0) + m.m3**2
    flags = set()
    if v > 0:
        phi1 = m.m3 / math.sqrt(v)
    else:
        phi1 = 0.0
        flags.add("v_zero")
    if m.m1 != 0:
        phi2 = max(-1.0, min(m.m2 / m.m1, 1.0))
    else:
        phi2 = 0.0
        flags.add("m1_zero")
    if m.m2 <= 0:
        flags.add("m2_nonpositive")
    return PhiEstimate(max(-1.0, min(phi1, 1.0)), phi2, v, frozenset(flags))


@dataclass(frozen=True, eq=False)
class QEstimate:
    phi1_hat: float
    phi2_hat: float
    Q_hat: np.ndarray
    Q_raw: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def q_hat(phi1_hat: float, phi2_hat: float, diagnostics: dict | None = None) -> QEstimate:
    q01 = 0.5 * (1 - phi1_hat) * (1 - phi2_hat)
    q10 = 0.5 * (1 + phi1_hat) * (1 - phi2_hat)
    raw = np.array([[1 - q01, q01], [q10, 1 - q10]])
    c01, c10 = min(max(q01, 0.0), 1.0), min(max(q10, 0.0), 1.0)
    clamped = np.array([[1 - c01, c01], [c10, 1 - c10]])
    return QEstimate(phi1_hat, phi2_hat, clamped, raw, dict(diagnostics or {}))


def estimate_q(path, psi_tilde: GridFunction) -> QEstimate:
    m = m_hat(path, psi_tilde)
    ph = phi_hat(m)
    return q_hat(ph.phi1, ph.phi2, {"m1": m.m1, "m2": m.m2, "m3": m.m3, "v": ph.v,
                                    "flags": sorted(ph.flags)})


_PERMS = ((0, 1), (1, 0))


def frobenius_loss_min_perm(Q_hat: np.ndarray, Q_true: np.ndarray) -> float:
    """min over relabelings sigma of sum_ij (Q_hat[sigma i, sigma j] - Q_ij)^2."""
    Q_hat, Q_true = np.asarray(Q_hat), np.asarray(Q_true)
    return min(float(((Q_hat[np.ix_(s, s)] - Q_true) ** 2).sum()) for s in _PERMS)


def batch_means_se(x: np.ndarray, n_batches: int = 32) -> float:
    """Standard error of the mean of a serially dependent sequence."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    if size < 1:
        raise ValueError("sequence shorter than the batch count")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
