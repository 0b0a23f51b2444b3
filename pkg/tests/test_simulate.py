import math

import numpy as np
import pytest
from scipy import stats

from hmmfrontier.model import DensityGrid, ModelParams, theta_star
from hmmfrontier.moments import batch_means_se
from hmmfrontier.simulate import (empirical_transitions, sample_emissions, sample_hidden,
                                  sample_path, split_3n, stream, write_path_csv)

from conftest import random_density


def fair_chain(D=3):
    return ModelParams(0.5, 0.5, DensityGrid.uniform(D), DensityGrid.uniform(D))


def test_fair_chain_transitions():
    path = sample_path(fair_chain(), 10**5, seed=1)
    Q = empirical_transitions(path.hidden)
    sigma = math.sqrt(0.25 / (10**5 / 2))
    assert np.abs(Q - 0.5).max() <= 3 * sigma


def test_theta_star_stationary_share():
    path = sample_path(theta_star(), 10**5, seed=2)
    x = (path.hidden == 0).astype(float)
    assert abs(x.mean() - 0.6) <= 3 * batch_means_se(x)


def test_uniform_emission_ks():
    th = ModelParams(0.2, 0.3, DensityGrid.uniform(4), theta_star(4).f1)
    path = sample_path(th, 10**4 * 2, seed=3)
    y0 = path.observed[path.hidden == 0][:10**4]
    assert stats.kstest(y0, "uniform").statistic < 1.63 / math.sqrt(y0.size)


def test_cell_masses_chi_square():
    rng = np.random.default_rng(9)
    f = random_density(rng, 5)
    hidden = np.zeros(10**5, dtype=np.int8)
    y = sample_emissions((f, f), hidden, stream(4, 0))
    counts = np.bincount((y * 32).astype(int), minlength=32)
    assert stats.chisquare(counts, f.values / 32 * y.size).pvalue > 0.001


def test_observations_stay_in_cells():
    f = DensityGrid(np.array([0.0, 2.0, 0.0, 2.0]))
    y = sample_emissions((f, f), np.zeros(10**4, dtype=np.int8), stream(0, 0))
    cells = np.floor(y * 4).astype(int)
    assert set(np.unique(cells)) <= {1, 3}
    assert y.min() >= 0 and y.max() < 1


def test_stationarity_first_vs_last():
    th = theta_star(3)
    reps = [sample_path(th, 50, 11, r) for r in range(4000)]
    first = np.bincount([int(p.observed[0] * 8) for p in reps], minlength=8)
    last = np.bincount([int(p.observed[-1] * 8) for p in reps], minlength=8)
    assert stats.chi2_contingency(np.vstack([first, last])).pvalue > 0.001


def test_hidden_chain_has_geometric_sojourns():
    x = sample_hidden(0.2, 0.3, 2 * 10**5, stream(5, 0))
    changes = np.flatnonzero(np.diff(x)) + 1
    runs = np.diff(changes)
    states = x[changes[:-1]]
    assert runs[states == 0].mean() == pytest.approx(1 / 0.2, rel=0.05)
    assert runs[states == 1].mean() == pytest.approx(1 / 0.3, rel=0.05)


class TestSplit3n:
    def test_segments(self):
        whole = sample_path(theta_star(3), 15, 7)
        first, third = split_3n(theta_star(3), 5, 7)
        assert np.array_equal(first.observed, whole.observed[:5])
        assert np.array_equal(third.observed, whole.observed[10:15])

    def test_deterministic(self):
        a = split_3n(theta_star(3), 100, 42, 3)
        b = split_3n(theta_star(3), 100, 42, 3)
        assert all(np.array_equal(x.observed, y.observed) for x, y in zip(a, b))

    def test_segment_means_uncorrelated_for_fair_chain(self):
        th = ModelParams(0.5, 0.5, DensityGrid.uniform(1), theta_star(1).f1)
        means = np.array([[s.observed.mean() for s in split_3n(th, 50, 8, r)]
                          for r in range(2000)])
        assert abs(np.corrcoef(means.T)[0, 1]) < 0.05


def test_streams_are_distinct_and_reproducible():
    a = stream(1, 1024, 0).random(4)
    assert np.array_equal(a, stream(1, 1024, 0).random(4))
    assert not np.array_equal(a, stream(1, 1024, 1).random(4))
    assert not np.array_equal(a, stream(2, 1024, 0).random(4))


def test_csv_round_trip(tmp_path):
    path = sample_path(theta_star(3), 20, 1)
    write_path_csv(path, tmp_path / "p.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "t,x,y" and len(rows) == 21
    y = np.array([float(r.split(",")[2]) for r in rows[1:]])
    assert np.array_equal(y, path.observed)
