"""Data-driven separating direction from the leading eigenvector of a lag-one Gram matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .model import GridFunction, ModelParams, grid_record, reparametrize, r_of_phi
from .wavelets import CoeffTree, synthesize


@dataclass(frozen=True)
class WaveletIndex:
    kind: str  # "father" | "mother"
    j: int
    k: int


def index_set(M: int, J: int = 0) -> list[WaveletIndex]:
    """Lambda(M): every father index at level J, then mother indices J <= j <= M."""
    if M < J:
        raise ValueError(f"need M >= J, got M={M}, J={J}")
    out = [WaveletIndex("father", J, k) for k in range(2**J)]
    out += [WaveletIndex("mother", j, k) for j in range(J, M + 1) for k in range(2**j)]
    return out


@lru_cache(maxsize=32)
def _basis_matrix(M: int, J: int, wavelet: str) -> np.ndarray:
    K = M + 1
    sizes = [2**J] + [2**j for j in range(J, M + 1)]
    dim = sum(sizes)
    W = np.empty((2**K, dim))
    for col in range(dim):
        flat = np.zeros(dim)
        flat[col] = 1.0
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        W[:, col] = synthesize(CoeffTree(J, parts[0], tuple(parts[1:]), wavelet, K), K)
    W.setflags(write=False)
    return W


def basis_matrix(M: int, J: int = 0, wavelet: str = "haar") -> np.ndarray:
    """Cell values (resolution M+1) of every e_lambda, one column per index of Lambda(M).

    Lambda(M) spans exactly the step functions on 2**(M+1) cells, for any of
    the supported filters.
    """
    return _basis_matrix(M, J, wavelet)


def lambda_coefficients(f: GridFunction, M: int, J: int = 0, wavelet: str = "haar") -> np.ndarray:
    """<f, e_lambda> for lambda in Lambda(M)."""
    W = basis_matrix(M, J, wavelet)
    K = M + 1
    R = max(K, f.D)
    Wr = np.repeat(W, 2 ** (R - K), axis=0)
    return Wr.T @ f.refine(R) / 2**R


@dataclass(frozen=True, eq=False)
class GramMatrix:
    M: int
    J: int
    wavelet: str
    index_set: tuple[WaveletIndex, ...]
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def empirical_gram(path, M: int, J: int = 0, wavelet: str = "haar") -> GramMatrix:
    y = np.asarray(getattr(path, "observed", path), dtype=float)
    n = y.size
    if n < 2:
        raise ValueError("need at least two observations")
    K = 2 ** (M + 1)
    cells = np.minimum((y * K).astype(np.int64), K - 1)
    joint = np.bincount(cells[:-1] * K + cells[1:], minlength=K * K).reshape(K, K) / (n - 1)
    marginal = np.bincount(cells, minlength=K) / n
    W = basis_matrix(M, J, wavelet)
    lag1 = W.T @ (0.5 * (joint + joint.T)) @ W
    mean = W.T @ marginal
    G = lag1 - np.outer(mean, mean)
    G = 0.5 * (G + G.T)
    return GramMatrix(M, J, wavelet, tuple(index_set(M, J)), G)


def gram_oracle(theta: ModelParams, M: int, J: int = 0, wavelet: str = "haar") -> GramMatrix:
    """Population Gram matrix r(phi) <psi2, e_l> <psi2, e_l'>."""
    rp = reparametrize(theta)
    dim = len(index_set(M, J))
    if rp.degenerate:
        G = np.zeros((dim, dim))
    else:
        v = lambda_coefficients(rp.psi2, M, J, wavelet)
        G = r_of_phi(*rp.phi) * np.outer(v, v)
    return GramMatrix(M, J, wavelet, tuple(index_set(M, J)), G)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            P, Q = map(np.array, zip(*pairs))
            rounds.append((P, Q))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _rotate_rows(X: np.ndarray, P: np.ndarray, Q: np.ndarray, c: np.ndarray, s: np.ndarray):
    XP, XQ = X[P], X[Q]
    c, s = c[:, None], s[:, None]
    X[P], X[Q] = c * XP - s * XQ, s * XP + c * XQ


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60
                ) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, grouped into rounds of
    disjoint pairs so that a round's rotations commute and can be applied
    together. Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as
    columns, unsorted.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    V = np.eye(n)
    if n < 2:
        return np.diag(A).copy(), V
    scale = np.linalg.norm(A)
    if scale == 0:
        return np.zeros(n), V
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        if np.linalg.norm(A - np.diag(np.diag(A))) <= tol * scale:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (A[Q, Q] - A[P, P]) / (2 * apq)
            big = np.abs(theta) > 1e150
            safe = np.where(big, 0.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0),
                         np.where(safe >= 0, 1.0, -1.0) / (np.abs(safe) + np.sqrt(safe**2 + 1)))
            c = 1 / np.sqrt(t**2 + 1)
            s = t * c
            # J^T A J = J^T (J^T A)^T for symmetric A: two contiguous row rotations
            _rotate_rows(A, P, Q, c, s)
            A = np.ascontiguousarray(A.T)
            _rotate_rows(A, P, Q, c, s)
            A[P, Q] = A[Q, P] = 0.0
            _rotate_rows(V, P, Q, c, s)
    return np.diag(A).copy(), V.T.copy()


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    degenerate: bool = False


def leading_eigenvector(G: GramMatrix | np.ndarray) -> EigenPair:
    """Eigenpair of largest |eigenvalue|; sign makes the largest-magnitude entry positive."""
    A = np.asarray(getattr(G, "entries", G), dtype=float)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0))):
        raise ValueError("matrix is not symmetric")
    n = A.shape[0]
    if not np.any(A):
        e1 = np.zeros(n)
        e1[0] = 1.0
        return EigenPair(0.0, e1, True)
    vals, vecs = jacobi_eigh(A)
    i = int(np.argmax(np.abs(vals)))
    v = vecs[:, i] / np.linalg.norm(vecs[:, i])
    big = int(np.argmax(np.abs(v)))
    if v[big] < 0:
        v = -v
    return EigenPair(float(vals[i]), v)


@dataclass(frozen=True, eq=False)
class SeparatingDirection:
    grid: GridFunction
    tau: float
    leading_eigenvalue: float
    degenerate: bool = False
    untruncated: GridFunction | None = None

    def record(self) -> str:
        return grid_record(self.grid, tau=float(self.tau),
                           leading_eigenvalue=float(self.leading_eigenvalue))


def direction_from_gram(G: GramMatrix, tau: float) -> SeparatingDirection:
    if tau < 1:
        raise ValueError("tau must be >= 1")
    eig = leading_eigenvector(G)
    W = basis_matrix(G.M, G.J, G.wavelet)
    raw = W @ eig.vector
    clipped = np.clip(raw, -tau, tau)
    norm = math.sqrt(float(np.mean(clipped**2)))
    if eig.degenerate or norm == 0:
        flat = GridFunction(np.ones(W.shape[0]))
        return SeparatingDirection(flat, tau, eig.value, True, flat)
    return SeparatingDirection(GridFunction(clipped / norm), tau, eig.value, eig.degenerate,
                               GridFunction(raw / math.sqrt(float(np.mean(raw**2)))))


def psi_tilde_from_path(path, M: int, tau: float, J: int = 0,
                        wavelet: str = "haar") -> SeparatingDirection:
    return direction_from_gram(empirical_gram(path, M, J, wavelet), tau)


def load_direction(path: str | Path) -> SeparatingDirection:
    rec = json.loads(Path(path).read_text())
    values = np.asarray(rec["values"], dtype=float)
    if values.size != 2 ** int(rec["D"]):
        raise ValueError(f"{path}: D={rec['D']} does not match {values.size} values")
    return SeparatingDirection(GridFunction(values), float(rec.get("tau", math.inf)),
                               float(rec.get("leading_eigenvalue", math.nan)))


def m_sufficiency(M: int, s_star: float, zeta: float, R: float) -> tuple[bool, float]:
    """Check 2^{-M s*} <= zeta sqrt(2^{2 s*} - 1) / (4R); returns (ok, rhs - lhs)."""
    lhs = 2.0 ** (-M * s_star)
    rhs = zeta * math.sqrt(2.0 ** (2 * s_star) - 1) / (4 * R)
    return lhs <= rhs, rhs - lhs
