"""Stationary sample paths of the two-state HMM."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import DensityGrid, ModelParams


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one replication.

    The key words are hashed together with the master seed by ``SeedSequence``,
    so replications never share or depend on each other's draws.
    """
    ss = np.random.SeedSequence([int(master_seed), *map(int, key)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class SamplePath:
    hidden: np.ndarray
    observed: np.ndarray
    seed_record: tuple[int, ...]

    def __post_init__(self):
        if self.hidden.shape != self.observed.shape:
            raise ValueError("hidden and observed lengths differ")

    def __len__(self) -> int:
        return self.observed.size

    def segment(self, start: int, stop: int) -> "SamplePath":
        return SamplePath(self.hidden[start:stop], self.observed[start:stop], self.seed_record)


def sample_hidden(p: float, q: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary two-state chain built from alternating geometric sojourns."""
    state = 0 if rng.random() < q / (p + q) else 1
    leave = (p, q)
    out = np.empty(n, dtype=np.int8)
    filled = 0
    while filled < n:
        # memorylessness makes the first sojourn geometric too; every batch
        # ends on a completed sojourn, so the next one restarts in `state`
        batch = max(16, int(2 * (n - filled) * min(p, q)) + 16)
        a = rng.geometric(leave[state], size=batch)
        b = rng.geometric(leave[1 - state], size=batch)
        runs = np.empty(2 * batch, dtype=np.int64)
        runs[0::2], runs[1::2] = a, b
        states = np.empty(2 * batch, dtype=np.int8)
        states[0::2], states[1::2] = state, 1 - state
        seq = np.repeat(states, runs)
        take = min(seq.size, n - filled)
        out[filled:filled + take] = seq[:take]
        filled += take
    return out


def sample_emissions(densities: tuple[DensityGrid, DensityGrid], hidden: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of a cell by its mass, then uniform within the cell."""
    D = densities[0].D
    size = 2**D
    cells = np.empty(hidden.size, dtype=np.int64)
    u = rng.random(hidden.size)
    for i, f in enumerate(densities):
        mask = hidden == i
        cdf = np.cumsum(f.values)
        cdf /= cdf[-1]
        cells[mask] = np.minimum(np.searchsorted(cdf, u[mask], side="right"), size - 1)
    y = (cells + rng.random(hidden.size)) / size
    upper = (cells + 1) / size
    # (c + v) / 2^D may round up onto the next cell edge
    return np.where(y >= upper, np.nextafter(upper, 0.0), y)


def sample_path(theta: ModelParams, n: int, seed: int,
                stream_id: int | tuple[int, ...] = 0) -> SamplePath:
    if n < 1:
        raise ValueError("n must be >= 1")
    key = tuple(map(int, stream_id)) if isinstance(stream_id, tuple) else (int(stream_id),)
    rng = stream(seed, *key)
    hidden = sample_hidden(theta.p, theta.q, n, rng)
    observed = sample_emissions((theta.f0, theta.f1), hidden, rng)
    return SamplePath(hidden, observed, (int(seed), *key))


def split_3n(theta: ModelParams, n: int, seed: int, stream_id: int | tuple[int, ...] = 0
             ) -> tuple[SamplePath, SamplePath]:
    """Segments Y_1..Y_n and Y_{2n+1}..Y_{3n} of one stationary 3n-path."""
    path = sample_path(theta, 3 * n, seed, stream_id)
    return path.segment(0, n), path.segment(2 * n, 3 * n)


def empirical_transitions(hidden: np.ndarray) -> np.ndarray:
    counts = np.zeros((2, 2))
    np.add.at(counts, (hidden[:-1], hidden[1:]), 1)
    return counts / counts.sum(axis=1, keepdims=True)


def write_path_csv(path: SamplePath, dest) -> None:
    """Columns t, x, y; ``dest`` is a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(path, dest)
    else:
        with open(dest, "w", newline="") as fh:
            _write_rows(path, fh)


def _write_rows(path: SamplePath, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "y"])
    for t, (x, y) in enumerate(zip(path.hidden, path.observed), start=1):
        w.writerow([t, int(x), format(float(y), ".17g")])
