"""Two-state HMM with piecewise-constant emission densities on [0, 1].

Densities live on the dyadic grid of ``2**D`` cells ``[k 2^-D, (k+1) 2^-D)``,
which makes every inner product, norm and wavelet coefficient used downstream
an exact finite sum.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

GRID_ATOL = 1e-12
QUAD_ATOL = 1e-10
DEGENERATE_PHI3 = 1e-14
# Tabulating p^(3) needs 2**(3D) cells.
MAX_TABULATE_D = 8


class DegenerateWarning(UserWarning):
    """Raised (as a warning) when a computation lands on the i.i.d. frontier."""


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A signed function constant on each dyadic cell of resolution ``D``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0 or v.size & (v.size - 1):
            raise ValueError(f"grid needs 2**D values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def D(self) -> int:
        return self.values.size.bit_length() - 1

    def refine(self, D: int) -> np.ndarray:
        """Cell values at a finer resolution ``D`` (exact repetition)."""
        if D < self.D:
            raise ValueError(f"cannot refine D={self.D} grid down to D={D}")
        return np.repeat(self.values, 2 ** (D - self.D))

    def integral(self) -> float:
        return float(self.values.mean())

    def inner(self, other: "GridFunction") -> float:
        D = max(self.D, other.D)
        return float(np.dot(self.refine(D), other.refine(D))) / 2**D

    def l2_norm(self) -> float:
        return math.sqrt(float(np.dot(self.values, self.values)) / self.values.size)

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def evaluate(self, y) -> np.ndarray:
        cells = np.floor(np.asarray(y, dtype=float) * self.values.size).astype(np.int64)
        np.clip(cells, 0, self.values.size - 1, out=cells)
        return self.values[cells]

    def __add__(self, other):
        if isinstance(other, GridFunction):
            D = max(self.D, other.D)
            return GridFunction(self.refine(D) + other.refine(D))
        return GridFunction(self.values + other)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, a: float):
        return GridFunction(self.values * a)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(-self.values)


class DensityGrid(GridFunction):
    """A probability density on [0, 1]: nonnegative cells with mean one."""

    def __post_init__(self):
        super().__post_init__()
        if self.values.min() < 0:
            raise ValueError(f"density has negative cell value {self.values.min():.3g}")
        if abs(self.values.mean() - 1.0) > GRID_ATOL:
            raise ValueError(f"density integrates to {self.values.mean():.17g}, not 1")

    @classmethod
    def uniform(cls, D: int = 0) -> "DensityGrid":
        return cls(np.ones(2**D))


def haar_step(D: int = 1) -> GridFunction:
    """The function ``h``: +1 on [0, 1/2), -1 on [1/2, 1)."""
    D = max(D, 1)
    half = 2 ** (D - 1)
    return GridFunction(np.concatenate([np.ones(half), -np.ones(half)]))


@dataclass(frozen=True)
class ModelParams:
    """theta = (p, q, f0, f1); Q = [[1-p, p], [q, 1-q]]."""

    p: float
    q: float
    f0: DensityGrid
    f1: DensityGrid

    def __post_init__(self):
        if not (0.0 < self.p < 1.0 and 0.0 < self.q < 1.0):
            raise ValueError(f"need 0 < p, q < 1, got p={self.p}, q={self.q}")
        if self.f0.D != self.f1.D:
            raise ValueError("f0 and f1 must share a grid resolution")

    @property
    def D(self) -> int:
        return self.f0.D

    @property
    def Q(self) -> np.ndarray:
        return np.array([[1 - self.p, self.p], [self.q, 1 - self.q]])

    def emission(self, i: int) -> DensityGrid:
        return self.f0 if i == 0 else self.f1


@dataclass(frozen=True)
class ReparamPoint:
    phi1: float
    phi2: float
    phi3: float
    psi1: GridFunction
    psi2: GridFunction | None

    @property
    def degenerate(self) -> bool:
        return self.psi2 is None

    @property
    def phi(self) -> tuple[float, float, float]:
        return (self.phi1, self.phi2, self.phi3)


@dataclass(frozen=True)
class ClassSpec:
    delta: float
    epsilon: float
    zeta: float
    s0: float = 0.5
    s1: float = 0.5
    R: float = 10.0
    gamma_star: float = 0.1
    L: float = 2.0

    def __post_init__(self):
        for name in ("delta", "epsilon", "zeta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if min(self.s0, self.s1, self.R) <= 0:
            raise ValueError("s0, s1, R must be positive")
        if not 0 < self.gamma_star <= 1:
            raise ValueError("gamma_star must lie in (0, 1]")
        if self.L < 1:
            raise ValueError("L must be >= 1")


def stationary_distribution(theta: ModelParams) -> tuple[float, float]:
    s = theta.p + theta.q
    return theta.q / s, theta.p / s


def spectral_gap(theta: ModelParams) -> float:
    return 1.0 - abs(1.0 - theta.p - theta.q)


def r_of_phi(phi1: float, phi2: float, phi3: float) -> float:
    return 0.25 * (1.0 - phi1**2) * phi2 * phi3**2


def reparametrize(theta: ModelParams) -> ReparamPoint:
    p, q = theta.p, theta.q
    diff = theta.f0 - theta.f1
    phi3 = diff.l2_norm()
    psi1 = GridFunction((q * theta.f0.values + p * theta.f1.values) / (p + q))
    if phi3 < DEGENERATE_PHI3:
        warnings.warn("f0 == f1: psi2 is undefined", DegenerateWarning, stacklevel=2)
        psi2 = None
    else:
        psi2 = diff * (1.0 / phi3)
    return ReparamPoint((q - p) / (p + q), 1.0 - p - q, phi3, psi1, psi2)


def invert_reparam(phi1: float, phi2: float, phi3: float,
                   psi1: GridFunction, psi2: GridFunction | None) -> ModelParams:
    if abs(phi1) >= 1 or abs(phi2) >= 1:
        raise ValueError(f"need |phi1|, |phi2| < 1, got ({phi1}, {phi2})")
    p = 0.5 * (1 - phi2) * (1 - phi1)
    q = 0.5 * (1 - phi2) * (1 + phi1)
    if psi2 is None or phi3 == 0:
        f0 = f1 = psi1.values.copy()
    else:
        D = max(psi1.D, psi2.D)
        a, b = psi1.refine(D), psi2.refine(D)
        f0 = a - 0.5 * phi1 * phi3 * b + 0.5 * phi3 * b
        f1 = a - 0.5 * phi1 * phi3 * b - 0.5 * phi3 * b
    for name, f in (("f0", f0), ("f1", f1)):
        if f.min() < -QUAD_ATOL:
            raise ValueError(f"reconstructed {name} is negative ({f.min():.3g}); inconsistent inputs")
    return ModelParams(p, q, DensityGrid(np.maximum(f0, 0.0)), DensityGrid(np.maximum(f1, 0.0)))


def _outer3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return a[:, None, None] * b[None, :, None] * c[None, None, :]


@dataclass(frozen=True)
class JointDensity3:
    """Law of (Y1, Y2, Y3) as a sum of separable terms ``coef * u x v x w``."""

    terms: tuple[tuple[float, GridFunction, GridFunction, GridFunction], ...]
    psi1: GridFunction

    @property
    def D(self) -> int:
        return max(g.D for t in self.terms for g in t[1:])

    def expect(self, a: GridFunction, b: GridFunction, c: GridFunction) -> float:
        """E[a(Y1) b(Y2) c(Y3)] by exact quadrature of each separable term."""
        return sum(coef * u.inner(a) * v.inner(b) * w.inner(c) for coef, u, v, w in self.terms)

    def tabulate(self) -> np.ndarray:
        D = self.D
        if D > MAX_TABULATE_D:
            raise ValueError(f"tabulating p3 at D={D} needs 2**{3 * D} cells")
        out = np.zeros((2**D,) * 3)
        for coef, u, v, w in self.terms:
            out += coef * _outer3(u.refine(D), v.refine(D), w.refine(D))
        return out

    def p2(self) -> np.ndarray:
        return self.tabulate().mean(axis=2)

    def p1(self) -> np.ndarray:
        return self.tabulate().mean(axis=(1, 2))


def joint_density_3(theta: ModelParams) -> JointDensity3:
    rp = reparametrize(theta)
    psi1 = rp.psi1
    terms = [(1.0, psi1, psi1, psi1)]
    if not rp.degenerate:
        psi2 = rp.psi2
        r = r_of_phi(*rp.phi)
        terms += [
            (r, psi2, psi2, psi1),
            (r, psi1, psi2, psi2),
            (rp.phi2 * r, psi2, psi1, psi2),
            (-rp.phi1 * rp.phi2 * rp.phi3 * r, psi2, psi2, psi2),
        ]
    return JointDensity3(tuple(terms), psi1)


def hidden_path_law(theta: ModelParams, m: int) -> dict[tuple[int, ...], float]:
    """P(X_1..X_m = x) for every hidden path, from the stationary start."""
    pi = stationary_distribution(theta)
    Q = theta.Q
    law = {}
    for path in itertools.product((0, 1), repeat=m):
        prob = pi[path[0]]
        for a, b in zip(path, path[1:]):
            prob *= Q[a, b]
        law[path] = prob
    return law


def hidden_path_density(theta: ModelParams, m: int = 3) -> np.ndarray:
    """p^(m) tabulated by summing over the 2**m hidden paths (brute force)."""
    if m * theta.D > 3 * MAX_TABULATE_D:
        raise ValueError("grid too fine to tabulate")
    out = np.zeros((2**theta.D,) * m)
    for path, prob in hidden_path_law(theta, m).items():
        term = np.array(prob)
        for x in path:
            term = np.multiply.outer(term, theta.emission(x).values)
        out += term
    return out


def hidden_path_expect(theta: ModelParams, fns: Sequence[GridFunction]) -> float:
    """E[prod_i fns[i](Y_i)] by summing over hidden paths."""
    ips = [[theta.emission(x).inner(h) for x in (0, 1)] for h in fns]
    return sum(prob * math.prod(ips[i][x] for i, x in enumerate(path))
               for path, prob in hidden_path_law(theta, len(fns)).items())


def _sign(x: float) -> float:
    # sgn(0) taken as +1 so that orthogonal directions stay comparable
    return -1.0 if x < 0 else 1.0


def rho_pseudo_distance(a: ReparamPoint, b: ReparamPoint) -> float:
    ra, rb = r_of_phi(*a.phi), r_of_phi(*b.phi)
    degenerate = a.degenerate or b.degenerate
    s = 1.0 if degenerate else _sign(a.psi2.inner(b.psi2))
    terms = [
        abs(ra - rb),
        abs(a.phi2 * ra - b.phi2 * rb),
        abs(a.phi1 * a.phi2 * a.phi3 * ra - s * b.phi1 * b.phi2 * b.phi3 * rb),
        (a.psi1 - b.psi1).l2_norm(),
    ]
    if degenerate:
        warnings.warn("psi2 undefined; rho drops the psi2 term", DegenerateWarning, stacklevel=2)
    else:
        terms.append(max(abs(ra), abs(rb)) * (a.psi2 - s * b.psi2).l2_norm())
    return max(terms)


@dataclass(frozen=True)
class Condition:
    passed: bool
    margin: float


@dataclass
class MembershipReport:
    conditions: dict[str, Condition] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.passed]


def class_membership(theta: ModelParams, spec: ClassSpec) -> MembershipReport:
    from .wavelets import analyze, besov_norm

    eps = 1.0 - theta.p - theta.q
    zeta = (theta.f0 - theta.f1).l2_norm()
    checks = {
        "p>=delta": theta.p - spec.delta,
        "q>=delta": theta.q - spec.delta,
        "|1-p-q|>=epsilon": abs(eps) - spec.epsilon,
        "||f0-f1||>=zeta": zeta - spec.zeta,
        "besov(f0)<=R": spec.R - besov_norm(analyze(theta.f0), spec.s0),
        "besov(f1)<=R": spec.R - besov_norm(analyze(theta.f1), spec.s1),
        "sup(f0)<=L": spec.L - theta.f0.sup(),
        "sup(f1)<=L": spec.L - theta.f1.sup(),
        "gap>=gamma_star": spectral_gap(theta) - spec.gamma_star,
    }
    report = MembershipReport()
    for name, margin in checks.items():
        report.conditions[name] = Condition(margin >= -GRID_ATOL, margin)
    return report


# -- text records -----------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def grid_record(g: GridFunction, **extra) -> str:
    """Serialize as ``{"D": .., "values": [..]}`` with 17 significant digits."""
    head = "".join(f'"{k}": {_fmt(v) if isinstance(v, float) else json.dumps(v)}, '
                   for k, v in extra.items())
    vals = ", ".join(_fmt(v) for v in g.values)
    return f'{{{head}"D": {g.D}, "values": [{vals}]}}'


def grid_from_record(rec: dict | str, density: bool = True) -> GridFunction:
    if isinstance(rec, str):
        rec = json.loads(rec)
    values = np.asarray(rec["values"], dtype=float)
    if values.size != 2 ** int(rec["D"]):
        raise ValueError(f"record declares D={rec['D']} but holds {values.size} values")
    return (DensityGrid if density else GridFunction)(values)


def model_record(theta: ModelParams) -> str:
    return (f'{{"p": {_fmt(theta.p)}, "q": {_fmt(theta.q)},\n'
            f' "f0": {grid_record(theta.f0)},\n "f1": {grid_record(theta.f1)}}}\n')


def save_model(theta: ModelParams, path: str | Path) -> None:
    Path(path).write_text(model_record(theta))


def load_model(path: str | Path) -> ModelParams:
    return model_from_record(json.loads(Path(path).read_text()))


def model_from_record(rec: dict) -> ModelParams:
    return ModelParams(float(rec["p"]), float(rec["q"]),
                       grid_from_record(rec["f0"]), grid_from_record(rec["f1"]))


# -- reference models -------------------------------------------------------

def theta_star(D: int = 10) -> ModelParams:
    """p=0.2, q=0.3, f0 = 1, f1 = 1 + h/2."""
    f0 = DensityGrid.uniform(D)
    f1 = DensityGrid(1.0 + 0.5 * haar_step(D).refine(D))
    return ModelParams(0.2, 0.3, f0, f1)


def besov_shape(D: int, s: float, start_level: int = 0) -> np.ndarray:
    """Cell values of ``sum_{j >= start_level} sum_k (-1)^k 2^{-j(s+1/2)} Psi_jk``.

    Each level carries energy ``2^{-2js}``, so the B^s_{2,inf} norm is attained
    at every level.
    """
    from .wavelets import CoeffTree, synthesize

    mother = []
    for j in range(D):
        k = np.arange(2**j)
        scale = 0.0 if j < start_level else 2.0 ** (-j * (s + 0.5))
        mother.append((-1.0) ** k * scale)
    return synthesize(CoeffTree(0, np.zeros(1), tuple(mother)), D)


def synthetic_besov_density(D: int, s: float, amplitude: float | None = None,
                            floor: float = 0.2, start_level: int = 0) -> DensityGrid:
    """Density ``1 + c * besov_shape``; without ``amplitude``, ``c`` is the largest
    value keeping the density >= ``floor``."""
    shape = besov_shape(D, s, start_level)
    if amplitude is None:
        amplitude = (1.0 - floor) / max(-shape.min(), 1e-300)
    return DensityGrid(1.0 + amplitude * shape)


def rate_model(D: int = 14) -> ModelParams:
    """Chain of theta_star, f0 of exact regularity 1/2 (floor 0.7), f1 = f0 + h/2."""
    f0 = synthetic_besov_density(D, 0.5, floor=0.7)
    return ModelParams(0.2, 0.3, f0, DensityGrid(f0.values + 0.5 * haar_step(D).values))


def rough_smooth_model(D: int = 14) -> ModelParams:
    """delta = epsilon = zeta = 0.15: rough f0 of regularity 1/2, constant f1."""
    shape = besov_shape(D, 0.5)
    f0 = DensityGrid(1.0 + 0.15 * shape / math.sqrt(float(np.mean(shape**2))))
    return ModelParams(0.15, 0.7, f0, DensityGrid.uniform(D))


def iid_model(D: int = 4) -> ModelParams:
    """On the i.i.d. frontier: f0 = f1."""
    return ModelParams(0.2, 0.3, DensityGrid.uniform(D), DensityGrid.uniform(D))


PRESETS: dict[str, Callable[[], ModelParams]] = {
    "theta_star": theta_star,
    "rate": rate_model,
    "rough_smooth": rough_smooth_model,
    "iid": iid_model,
}


def resolve_model(spec: str) -> ModelParams:
    """A preset name, an inline JSON model record, or the path of a saved one."""
    if spec in PRESETS:
        return PRESETS[spec]()
    if spec.lstrip().startswith("{"):
        return model_from_record(json.loads(spec))
    if Path(spec).is_file():
        return load_model(spec)
    raise ValueError(f"unknown model {spec!r}: not a preset ({', '.join(PRESETS)}) or a file")
