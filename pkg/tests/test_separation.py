import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hmmfrontier.model import DensityGrid, ModelParams, reparametrize, theta_star
from hmmfrontier.separation import (basis_matrix, direction_from_gram, empirical_gram, gram_oracle,
                                    index_set, jacobi_eigh, lambda_coefficients,
                                    leading_eigenvector, load_direction, m_sufficiency,
                                    psi_tilde_from_path, GramMatrix)
from hmmfrontier.simulate import sample_path

from conftest import random_theta

seeds = st.integers(0, 2**32 - 1)


def sym(rng, n):
    A = rng.standard_normal((n, n))
    return A + A.T


@pytest.mark.parametrize("wavelet", ["haar", "db4"])
@pytest.mark.parametrize("M", [0, 2, 4])
def test_basis_is_orthonormal_and_complete(M, wavelet):
    if wavelet == "db4" and M < 1:
        pytest.skip("db4 needs at least four cells")
    W = basis_matrix(M, 0, wavelet)
    assert W.shape == (2 ** (M + 1), len(index_set(M)))
    assert np.abs(W.T @ W / W.shape[0] - np.eye(W.shape[1])).max() <= 1e-12


class TestEmpiricalGram:
    def test_constant_path(self):
        assert not np.any(empirical_gram(np.full(100, 0.4), 3).entries)

    def test_iid_data_is_centered(self):
        th = ModelParams(0.5, 0.5, DensityGrid.uniform(4), DensityGrid.uniform(4))
        reps = np.array([empirical_gram(sample_path(th, 10**4, 3, r), 2).entries
                         for r in range(30)])
        big = empirical_gram(sample_path(th, 10**5, 4), 2).entries
        sd = reps.std(axis=0, ddof=1) / np.sqrt(10)
        assert np.all(np.abs(big) <= 5 * sd)

    def test_theta_star_matches_oracle(self):
        th = theta_star()
        reps = np.array([empirical_gram(sample_path(th, 2**16, 5, r), 3).entries
                         for r in range(30)])
        target = gram_oracle(th, 3).entries
        sd = reps.std(axis=0, ddof=1)
        assert np.all(np.abs(reps[0] - target) <= 4 * sd + 1e-15)

    def test_symmetric(self):
        G = empirical_gram(sample_path(theta_star(), 5000, 1), 3).entries
        assert np.array_equal(G, G.T)


class TestGramOracle:
    def test_theta_star_level_zero(self):
        G = gram_oracle(theta_star(), 0)
        eig = leading_eigenvector(G)
        assert eig.value == pytest.approx(0.03, abs=1e-15)
        assert np.abs(np.abs(eig.vector) - [0.0, 1.0]).max() <= 1e-15

    def test_equal_emissions(self, no_degenerate_warnings):
        th = ModelParams(0.2, 0.3, DensityGrid.uniform(3), DensityGrid.uniform(3))
        assert not np.any(gram_oracle(th, 2).entries)

    @given(seeds)
    def test_rank_one(self, seed):
        th = random_theta(np.random.default_rng(seed), 4)
        G = gram_oracle(th, 3).entries
        vals = np.sort(np.abs(jacobi_eigh(G)[0]))
        assert vals[-2] <= 1e-12 * vals[-1]
        assert np.trace(G) == pytest.approx(leading_eigenvector(G).value, abs=1e-14)


class TestLeadingEigenvector:
    def test_diagonal(self):
        eig = leading_eigenvector(np.diag([3.0, -5.0]))
        assert eig.value == -5.0 and np.array_equal(eig.vector, [0.0, 1.0])

    def test_rank_one(self):
        u = np.array([1.0, -2.0, 0.5, 3.0])
        eig = leading_eigenvector(0.7 * np.outer(u, u))
        assert eig.value == pytest.approx(0.7 * u @ u, rel=1e-14)
        assert np.abs(eig.vector - u / np.linalg.norm(u)).max() <= 1e-14

    def test_random_residual_against_dense_solver(self):
        A = sym(np.random.default_rng(20), 20)
        eig = leading_eigenvector(A)
        assert np.abs(A @ eig.vector - eig.value * eig.vector).max() <= 1e-10
        ref = np.linalg.eigvalsh(A)
        assert abs(eig.value) == pytest.approx(np.abs(ref).max(), rel=1e-12)

    def test_zero_matrix_is_degenerate(self):
        assert leading_eigenvector(np.zeros((3, 3))).degenerate

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            leading_eigenvector(np.array([[1.0, 2.0], [0.0, 1.0]]))

    @given(seeds, st.integers(1, 6))
    def test_residual(self, seed, M):
        n = 2 ** (M + 1)
        A = sym(np.random.default_rng(seed), n)
        vals, vecs = jacobi_eigh(A)
        assert np.abs(A @ vecs - vecs * vals).max() <= 1e-10
        assert np.abs(vecs.T @ vecs - np.eye(n)).max() <= 1e-12

    def test_residual_largest_dimension(self):
        A = empirical_gram(sample_path(theta_star(), 2**14, 3), 8).entries
        eig = leading_eigenvector(A)
        assert A.shape == (512, 512)
        assert np.abs(A @ eig.vector - eig.value * eig.vector).max() <= 1e-10


class TestDirection:
    def test_oracle_recovers_psi2(self):
        th = theta_star()
        d = direction_from_gram(gram_oracle(th, 3), tau=1)
        psi2 = reparametrize(th).psi2
        assert abs(abs(d.grid.inner(psi2)) - 1) <= 1e-12
        assert min((d.grid - psi2).sup(), (d.grid + psi2).sup()) <= 1e-12

    @given(seeds)
    def test_recovery_when_tail_vanishes(self, seed):
        th = random_theta(np.random.default_rng(seed), 3)
        M = 2
        psi2 = reparametrize(th).psi2
        d = direction_from_gram(gram_oracle(th, M), tau=1e6)
        coeffs = lambda_coefficients(psi2, M)
        v = lambda_coefficients(d.grid, M)
        assert min(np.abs(v - coeffs).max(), np.abs(v + coeffs).max()) <= 1e-10

    def test_truncation(self):
        u = np.zeros(len(index_set(3)))
        u[-1] = 1.0
        G = GramMatrix(3, 0, "haar", tuple(index_set(3)), np.outer(u, u))
        d = direction_from_gram(G, tau=2.0)
        raw = basis_matrix(3) @ u
        assert np.abs(raw).max() > 2.0
        clipped = np.clip(raw, -2.0, 2.0)
        scale = np.sqrt(np.mean(clipped**2))
        assert np.abs(d.grid.values * scale).max() == pytest.approx(2.0, abs=1e-14)
        assert d.grid.l2_norm() == pytest.approx(1.0, abs=1e-14)

    def test_tau_below_one_rejected(self):
        with pytest.raises(ValueError):
            direction_from_gram(gram_oracle(theta_star(), 1), 0.5)

    def test_empirical_direction_aligns_at_large_n(self):
        th = theta_star()
        d = psi_tilde_from_path(sample_path(th, 2**17, 6), 3, 4)
        assert abs(d.grid.inner(reparametrize(th).psi2)) >= 7 / 8

    def test_record_round_trip(self, tmp_path):
        d = psi_tilde_from_path(sample_path(theta_star(), 4000, 1), 2, 4)
        (tmp_path / "d.json").write_text(d.record())
        back = load_direction(tmp_path / "d.json")
        assert np.array_equal(back.grid.values, d.grid.values)
        assert back.tau == 4 and json.loads(d.record())["D"] == 3


def test_m_sufficiency():
    ok, margin = m_sufficiency(10, 1.0, 0.5, 1.0)
    assert ok and margin == pytest.approx(0.5 * np.sqrt(3) / 4 - 2.0**-10)
    assert not m_sufficiency(1, 0.5, 0.1, 10.0)[0]
