"""Orthonormal dyadic wavelets on piecewise-constant grid functions.

A grid function of resolution ``K`` has scaling coefficients
``f(cell) * 2^{-K/2}`` at level ``K``; the pyramid then splits down to the
coarse level ``J``. With the Haar filter this gives the exact L2 coefficients
of the step function. The periodized Daubechies-4 filter defines another
orthonormal basis of the same step-function space, so all identities used by
the estimators (Parseval, plug-in exactness) hold for it too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import GridFunction

_SQRT3 = math.sqrt(3.0)
FILTERS = {
    "haar": np.array([1.0, 1.0]) / math.sqrt(2.0),
    "db4": np.array([1 + _SQRT3, 3 + _SQRT3, 3 - _SQRT3, 1 - _SQRT3]) / (4 * math.sqrt(2.0)),
}


def _highpass(h: np.ndarray) -> np.ndarray:
    L = h.size
    return np.array([(-1) ** i * h[L - 1 - i] for i in range(L)])


def _split(a: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = _highpass(h)
    n = a.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.size)[None, :]) % n
    return a[idx] @ h, a[idx] @ g


def _merge(lo: np.ndarray, hi: np.ndarray, h: np.ndarray) -> np.ndarray:
    g = _highpass(h)
    n = 2 * lo.size
    out = np.zeros(n)
    idx = (2 * np.arange(lo.size)[:, None] + np.arange(h.size)[None, :]) % n
    np.add.at(out, idx, lo[:, None] * h[None, :] + hi[:, None] * g[None, :])
    return out


@dataclass(frozen=True, eq=False)
class CoeffTree:
    """Father coefficients at level J and mother coefficients for levels J..max_level.

    ``mother[i]`` holds the 2**(J+i) coefficients of level ``J + i``.
    ``resolution`` is the grid resolution the basis was built on; it only
    matters for non-Haar filters.
    """

    J: int
    father: np.ndarray
    mother: tuple[np.ndarray, ...]
    wavelet: str = "haar"
    resolution: int | None = None

    def __post_init__(self):
        if self.father.size != 2**self.J:
            raise ValueError("father vector must hold 2**J coefficients")
        for i, m in enumerate(self.mother):
            if m.size != 2 ** (self.J + i):
                raise ValueError(f"level {self.J + i} must hold {2 ** (self.J + i)} coefficients")

    @property
    def max_level(self) -> int:
        return self.J + len(self.mother) - 1

    def level(self, j: int) -> np.ndarray:
        if j < self.J:
            raise IndexError(f"level {j} below J={self.J}")
        if j > self.max_level:
            return np.zeros(2**j)
        return self.mother[j - self.J]

    def levels(self) -> Iterator[tuple[int, np.ndarray]]:
        for i, m in enumerate(self.mother):
            yield self.J + i, m

    def flat(self) -> np.ndarray:
        return np.concatenate([self.father, *self.mother])

    def energy(self) -> float:
        return float(sum(np.dot(c, c) for c in (self.father, *self.mother)))

    def map(self, fn) -> "CoeffTree":
        return CoeffTree(self.J, fn(self.father), tuple(fn(m) for m in self.mother),
                         self.wavelet, self.resolution)

    def combine(self, other: "CoeffTree", a: float = 1.0, b: float = 1.0) -> "CoeffTree":
        """``a * self + b * other`` coefficientwise."""
        if (other.J, other.max_level, other.wavelet) != (self.J, self.max_level, self.wavelet):
            raise ValueError("trees differ in shape or basis")
        return CoeffTree(self.J, a * self.father + b * other.father,
                         tuple(a * x + b * y for x, y in zip(self.mother, other.mother)),
                         self.wavelet, self.resolution)

    def dump(self) -> str:
        lines = [f"father J={self.J}: " + " ".join(f"{c:.6g}" for c in self.father)]
        lines += [f"mother j={j}: " + " ".join(f"{c:.6g}" for c in m) for j, m in self.levels()]
        return "\n".join(lines)


def analyze(f: GridFunction | np.ndarray, max_level: int | None = None, J: int = 0,
            wavelet: str = "haar") -> CoeffTree:
    values = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)
    K = values.size.bit_length() - 1
    if values.size != 2**K:
        raise ValueError("grid length must be a power of two")
    if max_level is None:
        max_level = K - 1
    if max_level > K - 1:
        raise ValueError(f"max_level={max_level} exceeds D-1={K - 1}")
    if not 0 <= J <= max_level + 1:
        raise ValueError(f"need 0 <= J <= max_level + 1, got J={J}")
    h = FILTERS[wavelet]
    a = values * 2.0 ** (-K / 2)
    details = {}
    for j in range(K - 1, J - 1, -1):
        a, details[j] = _split(a, h)
    mother = tuple(details[j] for j in range(J, max_level + 1))
    return CoeffTree(J, a, mother, wavelet, K)


def synthesize(c: CoeffTree, D: int | None = None) -> np.ndarray:
    """Cell values at resolution ``D`` of the function with coefficients ``c``.

    Levels absent from the tree count as zero, so a truncated tree returns the
    projection onto levels ``< c.max_level + 1``.
    """
    h = FILTERS[c.wavelet]
    if D is None:
        D = c.resolution if c.resolution is not None else c.max_level + 1
    if c.wavelet != "haar" and c.resolution is not None and D != c.resolution:
        raise ValueError(f"{c.wavelet} tree lives on resolution {c.resolution}, not {D}")
    if D < c.max_level + 1:
        raise ValueError(f"resolution {D} too coarse for level {c.max_level}")
    a = np.asarray(c.father, dtype=float)
    for j in range(c.J, D):
        a = _merge(a, c.level(j), h)
    return a * 2.0 ** (D / 2)


def truncate(c: CoeffTree, level: int) -> CoeffTree:
    """Keep mother levels ``<= level``."""
    keep = max(level - c.J + 1, 0)
    return CoeffTree(c.J, c.father, c.mother[:keep], c.wavelet, c.resolution)


def besov_norm(c: CoeffTree, s: float) -> float:
    sup = max((2.0 ** (2 * j * s) * float(np.dot(m, m)) for j, m in c.levels()), default=0.0)
    return math.sqrt(float(np.dot(c.father, c.father)) + sup)


class InvalidLayoutError(ValueError):
    def __init__(self, layout: "BlockLayout"):
        self.layout = layout
        super().__init__(f"block layout needs j_tilde_n > J_n, got J_n={layout.J_n}, "
                         f"j_tilde_n={layout.j_tilde_n} (n={layout.n})")


@dataclass(frozen=True)
class BlockLayout:
    n: float
    tau: float
    J: int
    J_n: int
    N: int
    j_tilde_n: int

    @property
    def valid(self) -> bool:
        return self.j_tilde_n > self.J_n

    @property
    def levels(self) -> range:
        return range(self.J_n, self.j_tilde_n + 1)

    def blocks(self, j: int) -> list[range]:
        if j < self.J_n:
            raise ValueError(f"level {j} is below J_n={self.J_n} and is not blocked")
        return [range(l * self.N, (l + 1) * self.N) for l in range(2**j // self.N)]

    def require_valid(self) -> "BlockLayout":
        if not self.valid:
            raise InvalidLayoutError(self)
        return self


def block_layout(n: float, tau: float = 1.0, J: int = 0) -> BlockLayout:
    if n <= 1:
        raise ValueError("need n > 1")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    log_n = math.log(n)
    J_n = J
    while 2**J_n < log_n:
        J_n += 1
    bound = n / (log_n * tau**2)
    j_tilde = math.floor(math.log2(bound))
    # guard the floor against rounding in log2
    while 2 ** (j_tilde + 1) <= bound:
        j_tilde += 1
    while 2**j_tilde > bound:
        j_tilde -= 1
    return BlockLayout(n, tau, J, J_n, 2**J_n, j_tilde)


def block_norms(c: CoeffTree, layout: BlockLayout) -> dict[int, np.ndarray]:
    out = {}
    for j in layout.levels:
        coeffs = c.level(j).reshape(-1, layout.N)
        out[j] = np.sqrt((coeffs**2).sum(axis=1))
    return out
