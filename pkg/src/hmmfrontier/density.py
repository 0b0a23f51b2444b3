"""Block-thresholded wavelet estimators of the two emission densities.

Two estimators share the coefficient machinery below:

* the smooth estimator thresholds each block of the recovered coefficients of
  ``f_+`` / ``f_-`` against ``Gamma * S_n``;
* the rough estimator writes ``f_+- = alpha_+- + beta_+-``, where ``alpha`` is a
  rescaled stationary density and ``beta`` is proportional to the *other*
  emission density, and thresholds the two parts separately.

Labels ``plus``/``minus`` follow the sign of <psi2, psi_tilde>: with a
positively aligned direction ``plus`` estimates f0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import GridFunction, ModelParams, r_of_phi, reparametrize
from .moments import MomentTriple, PhiEstimate, m_hat, moment_oracle, phi_hat
from .wavelets import BlockLayout, CoeffTree, analyze, block_layout, synthesize

LABELS = ("plus", "minus")


@dataclass(frozen=True, eq=False)
class CoefficientEstimates:
    psi1_hat: CoeffTree
    G_hat: CoeffTree
    m: MomentTriple
    phi: PhiEstimate
    g_hat: float
    omega_plus: float
    omega_minus: float
    S_n_hat: float
    T_n_hat: float
    n: int
    layout: BlockLayout
    flags: frozenset = frozenset()

    @property
    def phi1_hat(self) -> float:
        return self.phi.phi1

    @property
    def resolution(self) -> int:
        return self.psi1_hat.resolution

    def omega(self, label: str) -> float:
        return self.omega_plus if label == "plus" else self.omega_minus


def working_resolution(layout: BlockLayout) -> int:
    return max(layout.j_tilde_n, layout.J_n, layout.J) + 1


def _empirical_tree(cells: np.ndarray, weights: np.ndarray | None, denom: int, K: int,
                    J: int, wavelet: str) -> CoeffTree:
    """Coefficients of the (weighted) empirical measure at resolution K."""
    hist = np.bincount(cells, weights=weights, minlength=2**K) / denom
    return analyze(hist * 2**K, J=J, wavelet=wavelet)


def g_hat(m: MomentTriple) -> float:
    """sqrt(4 m1^2 (m2)_+ + m3^2) / m2 on {m2 > 0}, else 0; estimates phi3 |I|."""
    if m.m2 <= 0:
        return 0.0
    return math.sqrt(4 * m.m1**2 * m.m2 + m.m3**2) / m.m2


def estimates_from_parts(psi1: CoeffTree, G: CoeffTree, m: MomentTriple, n: float,
                         layout: BlockLayout) -> CoefficientEstimates:
    """Assemble the estimator inputs from coefficient trees of psi1 and G and the moments."""
    ph = phi_hat(m)
    flags = set(ph.flags)
    g = g_hat(m)
    rate = math.sqrt(math.log(n) / n)
    if m.m1 != 0:
        ratio = g / abs(m.m1)
        om_plus = g * (1 - ph.phi1) / m.m1
        om_minus = -g * (1 + ph.phi1) / m.m1
    else:
        ratio, om_plus, om_minus = 0.0, 0.0, 0.0
    S_n = rate * max(1.0, ratio) if m.m1 != 0 else 0.0
    if ph.phi1**2 == 1:
        flags.add("phi1_unit")
        inv = 0.0
    else:
        inv = 1 / (1 - ph.phi1**2)
    T_n = rate * max(1.0, ratio, inv)
    return CoefficientEstimates(psi1, G, m, ph, g, om_plus, om_minus, S_n, T_n, n, layout,
                                frozenset(flags))


def coefficient_estimates(path, psi_tilde: GridFunction, layout: BlockLayout | None = None,
                          n: int | None = None, tau: float = 1.0, J: int = 0,
                          wavelet: str = "haar") -> CoefficientEstimates:
    y = np.asarray(getattr(path, "observed", path), dtype=float)
    if n is None:
        n = y.size
    if layout is None:
        layout = block_layout(n, tau, J)
    K = working_resolution(layout)
    cells = np.minimum((y * 2**K).astype(np.int64), 2**K - 1)
    w = psi_tilde.evaluate(y)
    psi1 = _empirical_tree(cells, None, y.size, K, layout.J, wavelet)
    lag = _empirical_tree(cells[1:], w[:-1], y.size - 1, K, layout.J, wavelet)
    G = lag.combine(psi1, 1.0, -float(w.mean()))
    return estimates_from_parts(psi1, G, m_hat(y, psi_tilde), n, layout)


def population_estimates(theta: ModelParams, psi_tilde: GridFunction, n: float = 2**16,
                         tau: float = 1.0, J: int = 0, wavelet: str = "haar"
                         ) -> CoefficientEstimates:
    """Inputs with every empirical quantity replaced by its population value.

    G(e) = r <psi2, psi_tilde> <psi2, e>, so its coefficients are those of
    ``r I psi2``. ``n`` only sets the layout and thresholds.
    """
    layout = block_layout(n, tau, J)
    K = max(working_resolution(layout), theta.D, psi_tilde.D)
    rp = reparametrize(theta)
    psi1 = analyze(rp.psi1.refine(K), J=layout.J, wavelet=wavelet)
    m = moment_oracle(theta, psi_tilde)
    if rp.degenerate:
        G = psi1.map(np.zeros_like)
    else:
        G = analyze((r_of_phi(*rp.phi) * m.I_tilde * rp.psi2).refine(K), J=layout.J,
                    wavelet=wavelet)
    return estimates_from_parts(psi1, G, m, n, layout)


def plug_in_densities(ce: CoefficientEstimates) -> tuple[GridFunction, GridFunction]:
    """Untruncated, unthresholded f_+ and f_- recovered from the inputs."""
    return tuple(GridFunction(synthesize(recovered_tree(ce, lab), ce.resolution))
                 for lab in LABELS)


def recovered_tree(ce: CoefficientEstimates, label: str) -> CoeffTree:
    """Pre-threshold coefficients of f_+- = psi1 + (omega_+- / 2) G."""
    return ce.psi1_hat.combine(ce.G_hat, 1.0, 0.5 * ce.omega(label))


def father_coefficients(ce: CoefficientEstimates) -> tuple[np.ndarray, np.ndarray]:
    return tuple(recovered_tree(ce, lab).father for lab in LABELS)


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    estimator_kind: str
    label: str
    grid: GridFunction
    raw: GridFunction
    coeff_trace: dict = field(default_factory=dict)


def _finish(kind: str, label: str, tree: CoeffTree, K: int, T_check: float,
            trace: dict) -> DensityEstimate:
    raw = synthesize(tree, K)
    return DensityEstimate(kind, label, GridFunction(np.clip(raw, 0.0, T_check)),
                           GridFunction(raw), trace)


def _low_part(full: CoeffTree, layout: BlockLayout) -> list[np.ndarray]:
    """Mother levels J..j_tilde_n with the blocked levels zeroed."""
    return [full.level(j).copy() if j < layout.J_n else np.zeros(2**j)
            for j in range(full.J, layout.j_tilde_n + 1)]


def smooth_from_coefficients(ce: CoefficientEstimates, Gamma: float, T_check: float
                             ) -> tuple[DensityEstimate, DensityEstimate]:
    layout = ce.layout.require_valid()
    thr = Gamma * ce.S_n_hat
    out = []
    for label in LABELS:
        full = recovered_tree(ce, label)
        mother = _low_part(full, layout)
        trace = {}
        for j in layout.levels:
            blocks = full.level(j).reshape(-1, layout.N)
            keep = np.sqrt((blocks**2).sum(axis=1)) > thr
            mother[j - full.J] = (blocks * keep[:, None]).ravel()
            trace[j] = keep.tolist()
        tree = CoeffTree(full.J, full.father, tuple(mother), full.wavelet, full.resolution)
        out.append(_finish("smooth", label, tree, ce.resolution, T_check, trace))
    return tuple(out)


def rough_parts(ce: CoefficientEstimates, label: str) -> tuple[CoeffTree, CoeffTree]:
    """Unthresholded alpha and beta trees; alpha + beta equals ``recovered_tree``.

    alpha = 2 psi1 / (1 +- phi1) is a rescaled stationary density and beta
    is proportional to the other emission density.
    """
    sign = 1.0 if label == "plus" else -1.0
    denom = 1 + sign * ce.phi1_hat
    alpha_scale = 2 / denom if denom != 0 else 0.0
    beta_scale = (1 - sign * ce.phi1_hat) / denom if denom != 0 else 0.0
    alpha = ce.psi1_hat.map(lambda c: alpha_scale * c)
    beta = ce.psi1_hat.combine(ce.G_hat, -beta_scale, 0.5 * ce.omega(label))
    return alpha, beta


def rough_from_coefficients(ce: CoefficientEstimates, Gamma: float, T_check: float
                            ) -> tuple[DensityEstimate, DensityEstimate]:
    layout = ce.layout.require_valid()
    alpha_thr = Gamma * math.sqrt(math.log(ce.n) / ce.n)
    beta_thr = Gamma * ce.T_n_hat
    out = []
    for label in LABELS:
        full = recovered_tree(ce, label)
        alpha, beta = rough_parts(ce, label)
        mother = _low_part(full, layout)
        trace = {}
        for j in layout.levels:
            a = alpha.level(j).reshape(-1, layout.N)
            b = beta.level(j).reshape(-1, layout.N)
            psi1 = ce.psi1_hat.level(j).reshape(-1, layout.N)
            keep_a = np.sqrt((psi1**2).sum(axis=1)) > alpha_thr
            keep_b = np.sqrt((b**2).sum(axis=1)) > beta_thr
            mother[j - full.J] = (a * keep_a[:, None] + b * keep_b[:, None]).ravel()
            trace[j] = {"alpha": keep_a.tolist(), "beta": keep_b.tolist()}
        tree = CoeffTree(full.J, full.father, tuple(mother), full.wavelet, full.resolution)
        out.append(_finish("rough", label, tree, ce.resolution, T_check, trace))
    return tuple(out)


def smooth_estimate(path, psi_tilde: GridFunction, Gamma: float, tau: float, T_check: float,
                    n: int | None = None, J: int = 0, wavelet: str = "haar"):
    ce = coefficient_estimates(path, psi_tilde, n=n, tau=tau, J=J, wavelet=wavelet)
    return smooth_from_coefficients(ce, Gamma, T_check)


def rough_estimate(path, psi_tilde: GridFunction, Gamma: float, tau: float, T_check: float,
                   n: int | None = None, J: int = 0, wavelet: str = "haar"):
    ce = coefficient_estimates(path, psi_tilde, n=n, tau=tau, J=J, wavelet=wavelet)
    return rough_from_coefficients(ce, Gamma, T_check)


def _sq_dist(a: GridFunction, b: GridFunction) -> float:
    return (a - b).l2_norm() ** 2


def l2_loss_min_perm(est_pair, f0_true: GridFunction, f1_true: GridFunction
                     ) -> tuple[float, float, str]:
    """Squared L2 losses under the relabeling that minimizes their sum.

    ``est_pair`` holds grids (or DensityEstimates) labelled (plus, minus);
    "identity" pairs plus with f0.
    """
    a, b = (getattr(e, "grid", e) for e in est_pair)
    ident = (_sq_dist(a, f0_true), _sq_dist(b, f1_true))
    swap = (_sq_dist(b, f0_true), _sq_dist(a, f1_true))
    if sum(swap) < sum(ident):
        return swap[0], swap[1], "swap"
    return ident[0], ident[1], "identity"


def l2_loss_best_label(est_pair, f_true: GridFunction) -> float:
    """min over labels i' of ||f_check_i' - f||^2 for a single target density."""
    return min(_sq_dist(getattr(e, "grid", e), f_true) for e in est_pair)


def default_gamma(L: float, gamma_star: float, beta: float = 1.0) -> float:
    """beta * L^{1/2} * max((L / gamma*)^{1/2}, 1 / gamma*)."""
    return beta * math.sqrt(L) * max(math.sqrt(L / gamma_star), 1 / gamma_star)
