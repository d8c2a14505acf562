"""Photon-counting instrument: Kraus algebra, record reduction, the evolved
jump-count distribution, POVM structure, Born statistics, and samplers."""

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from kodsim import fock, photodetector as pd, records
from kodsim.exceptions import (
    DomainError,
    InvalidDimensionError,
    InvalidRecordError,
    NumericError,
)
from kodsim.params import InstrumentParams

LN2 = math.log(2.0)


def params(kappa_T=1.0, dim=40, dt=1e-3):
    return InstrumentParams.fit_steps(kappa_o=1.0, T=kappa_T, dt=dt, dim=dim)


class TestStepOperators:
    def test_jump_operator_small_matrix(self):
        p = InstrumentParams(kappa_o=10.0, dt=1e-3, T=0.1, dim=2)
        assert_allclose(pd.kraus_jump(p), [[0.0, 0.1], [0.0, 0.0]], atol=1e-16)

    def test_jump_rate_on_one_photon(self):
        p = params(dim=8)
        k1 = pd.kraus_jump(p)
        rho1 = fock.projector(8, 1)
        rate = np.trace(k1.conj().T @ k1 @ rho1).real
        assert abs(rate - p.kappa_dt) < 1e-18

    def test_no_jump_matrix_element(self):
        p = params(dim=6)
        k0 = pd.kraus_no_jump(p)
        assert abs(k0[1, 1] - np.exp(-0.5 * p.kappa_dt)) < 1e-16

    def test_step_pair_completeness_defect(self):
        # K0^dag K0 + K1^dag K1 = 1 + (n kappa dt)^2/2 + ...: the defect on a
        # sub_dim block is bounded by half (kappa dt (sub_dim-1))^2
        p = params(dim=40)
        k0, k1 = pd.kraus_no_jump(p), pd.kraus_jump(p)
        total = k0.conj().T @ k0 + k1.conj().T @ k1
        defect = fock.subblock_norm_diff(total, np.eye(40), 25)
        assert defect < 0.55 * (p.kappa_dt * 24) ** 2
        # shrinking dt by 10x shrinks the defect by 100x
        p_fine = InstrumentParams(kappa_o=0.1, dt=1e-3, T=1.0, dim=40)
        k0, k1 = pd.kraus_no_jump(p_fine), pd.kraus_jump(p_fine)
        fine = fock.subblock_norm_diff(
            k0.conj().T @ k0 + k1.conj().T @ k1, np.eye(40), 25
        )
        assert fine < 0.011 * defect


class TestRecordReduction:
    def test_empty_record(self):
        p = params()
        n, weight = pd.reduce_record(pd.PhotoRecord(np.array([]), p.T), p)
        assert (n, weight) == (0, 1.0)

    def test_single_jump_at_origin(self):
        p = params()
        n, weight = pd.reduce_record(pd.PhotoRecord(np.array([0.0]), p.T), p)
        assert n == 1
        assert abs(weight - p.kappa_dt) < 1e-18

    def test_rejects_jump_past_horizon(self):
        p = params()
        with pytest.raises(InvalidRecordError):
            pd.PhotoRecord(np.array([p.T]), p.T)

    def test_rejects_off_grid_jump(self):
        p = params()
        rec = pd.PhotoRecord(np.array([0.5 * p.dt]), p.T)
        with pytest.raises(InvalidRecordError):
            pd.reduce_record(rec, p)

    @settings(max_examples=30, deadline=None)
    @given(st.sets(st.integers(min_value=0, max_value=49), max_size=6))
    def test_any_record_reduces_exactly(self, jump_steps):
        # the standard-order form holds for every record on the grid, not
        # just sparse ones
        p = InstrumentParams(kappa_o=1.0, dt=1e-3, T=0.05, dim=20)
        times = np.array(sorted(jump_steps), dtype=float) * p.dt
        rec = pd.PhotoRecord(jump_times=times, T=p.T)
        product = np.eye(p.dim, dtype=complex)
        k0, kj = pd.kraus_no_jump(p), pd.jump_step_operator(p)
        for k in range(p.n_steps):
            product = (kj if k in jump_steps else k0) @ product
        target = pd.standard_form_kraus(rec, p)
        assert fock.subblock_norm_diff(product, target, 20) < 1e-13

    def test_three_jump_product_oracle(self):
        # brute-force product of the per-step operators against the
        # standard-order form, built independently here
        p = params(kappa_T=1.0, dim=40)
        rng = records.stream(17, 0)
        steps = np.sort(rng.choice(p.n_steps, size=3, replace=False))
        rec = pd.PhotoRecord(jump_times=steps * p.dt, T=p.T)
        k0 = pd.kraus_no_jump(p)
        kj = pd.jump_step_operator(p)
        product = np.eye(p.dim, dtype=complex)
        jumps = set(steps.tolist())
        for k in range(p.n_steps):
            product = (kj if k in jumps else k0) @ product
        n, weight = pd.reduce_record(rec, p)
        target = math.sqrt(weight) * (
            fock.number_exp(p.dim, 0.5 * p.T) @ fock.lowering_power(p.dim, n)
        )
        scale = np.linalg.norm(target[:25, :25], 2)
        assert fock.subblock_norm_diff(product, target, 25) / scale < 1e-8


class TestEffectiveMean:
    def test_zero_horizon(self):
        assert pd.effective_mean(0.0, 1.0) == 0.0

    def test_half_life(self):
        assert abs(pd.effective_mean(LN2, 1.0) - 0.5) < 1e-15

    def test_saturates(self):
        assert abs(pd.effective_mean(1e6, 1.0) - 1.0) < 1e-15

    def test_rejects_negative_horizon(self):
        with pytest.raises(DomainError):
            pd.effective_mean(-1.0, 1.0)


class TestPoissonKOD:
    def test_zero_horizon_is_delta(self):
        kod = pd.kod_poisson(0.0, 1.0)
        assert_allclose(kod.pmf_array(5), [1.0, 0, 0, 0, 0, 0], atol=0)

    def test_values_at_half(self):
        kod = pd.kod_poisson(LN2, 1.0)
        assert abs(kod.pmf(0) - math.exp(-0.5)) < 1e-15
        assert abs(kod.pmf(1) - 0.5 * math.exp(-0.5)) < 1e-15

    def test_mean_by_summation(self):
        kod = pd.kod_poisson(1.0, 1.0)
        n = np.arange(60)
        assert abs(np.sum(n * kod.pmf(n)) - kod.lam) < 1e-12

    def test_evolved_zero_horizon(self):
        kod = pd.evolve_kod_poisson(0.0, 1.0, n_max=30, steps=100)
        assert_allclose(kod.weights, np.eye(31)[0], atol=0)

    @pytest.mark.parametrize("kappa_T", [LN2, 1.5, 3.0])
    def test_evolved_matches_analytic(self, kappa_T):
        kod = pd.evolve_kod_poisson(kappa_T, 1.0, n_max=40, steps=1000)
        err = np.max(np.abs(kod.weights - kod.pmf_array(40)))
        assert err < 1e-8

    def test_evolved_conserves_mass(self):
        kod = pd.evolve_kod_poisson(3.0, 1.0, n_max=40, steps=500)
        assert abs(float(np.sum(kod.weights)) - 1.0) < 1e-12
        assert float(np.min(kod.weights)) > -1e-12

    def test_fourth_order_step_halving(self):
        ref = pd.kod_poisson(LN2, 1.0).pmf_array(40)
        errs = [
            np.max(np.abs(pd.evolve_kod_poisson(LN2, 1.0, 40, steps).weights - ref))
            for steps in (100, 200)
        ]
        assert errs[0] / errs[1] >= 8.0

    def test_generator_is_conservative(self):
        w = records.stream(1, 0).random(41)
        assert abs(float(np.sum(pd._kod_generator(0.3, w, 1.0)))) < 1e-14

    def test_preconditions(self):
        with pytest.raises(DomainError):
            pd.evolve_kod_poisson(1.0, 1.0, n_max=40, steps=50)
        with pytest.raises(DomainError):
            pd.evolve_kod_poisson(1.0, 1.0, n_max=20, steps=200)


class TestPOVM:
    def test_class_kraus_trivial(self):
        p = params(dim=10)
        assert_allclose(pd.kraus_class(0, 0.0, p), np.eye(10), atol=0)

    def test_class_kraus_lowers(self):
        p = params(dim=12)
        k = pd.kraus_class(3, 1.0, p)
        vec = k @ fock.fock_state(12, 7)
        assert np.count_nonzero(np.abs(vec) > 1e-15) == 1
        assert abs(vec[4]) > 0
        assert np.max(np.abs(k @ fock.fock_state(12, 2))) == 0.0

    def test_rejects_class_beyond_truncation(self):
        p = params(dim=10)
        with pytest.raises(InvalidDimensionError):
            pd.kraus_class(10, 1.0, p)

    def test_weighted_class_identity(self):
        # D_T(n) K^dag K = (lam^n/n!) a^dag^n e^{-n kappa T} a^n, built directly
        p = params(kappa_T=0.8, dim=30)
        n, lam = 3, pd.effective_mean(0.8, 1.0)
        lhs = pd.povm_element(n, 0.8, p)
        an = fock.lowering_power(30, n)
        rhs = (lam**n / math.factorial(n)) * (
            an.conj().T @ fock.number_exp(30, 0.8) @ an
        )
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_povm_element_binomial_diagonal(self):
        p = params(kappa_T=LN2, dim=30)
        element = pd.povm_element(2, LN2, p)
        for m in range(2, 10):
            expected = scipy.stats.binom.pmf(2, m, 0.5)
            assert abs(element[m, m].real - expected) < 1e-13

    def test_vacuum_element_long_time(self):
        p = params(kappa_T=12.0, dim=20)
        defect = fock.subblock_norm_diff(
            pd.povm_element(0, 12.0, p), fock.projector(20, 0), 15
        )
        assert defect < 3e-5  # O(e^{-kappa T})

    def test_completeness(self):
        p = params(kappa_T=1.0, dim=40)
        assert pd.povm_completeness(1.0, p, sub_dim=20, n_max=39) < 1e-8

    def test_projector_convergence_limit(self):
        p = params(kappa_T=30.0, dim=40)
        assert pd.projector_convergence(1, 30.0, p, 20) < 1e-10

    def test_projector_convergence_prefactor(self):
        p = params(kappa_T=5.0, dim=40)
        defect = pd.projector_convergence(0, 5.0, p, 20)
        assert defect / math.exp(-5.0) < 10.0

    def test_projector_scaling(self):
        defects = []
        for kappa_T in (2.0, 3.0, 4.0):
            p = params(kappa_T=kappa_T, dim=40)
            defects.append(pd.projector_convergence(1, kappa_T, p, 20))
        for a, b in zip(defects[:-1], defects[1:]):
            assert 0.5 * math.exp(-1.0) <= b / a <= 2.0 * math.exp(-1.0)


class TestBornStatistics:
    def test_vacuum_never_fires(self):
        p = params(dim=10)
        pmf = pd.born_pmf(fock.projector(10, 0), 1.0, p)
        assert pmf[0] == pytest.approx(1.0, abs=1e-14)
        assert np.max(pmf[1:]) == 0.0

    def test_five_photon_binomial(self):
        p = params(kappa_T=LN2, dim=40)
        pmf = pd.born_pmf(fock.projector(40, 5), LN2, p)
        expected = scipy.stats.binom.pmf(np.arange(40), 5, 0.5)
        assert np.max(np.abs(pmf - expected)) < 1e-10
        assert pmf[5] == pytest.approx(1.0 / 32.0, abs=1e-12)

    def test_coherent_input_poisson_counts(self):
        p = params(kappa_T=LN2, dim=40)
        rho = fock.pure_density(fock.coherent_state(40, 1.0))
        pmf = pd.born_pmf(rho, LN2, p)
        expected = scipy.stats.poisson.pmf(np.arange(40), 0.5)
        assert np.max(np.abs(pmf - expected)) < 1e-8

    def test_ostensible_weight_factorization(self):
        # P(n) = D_T(n) * weight(n) bin by bin
        p = params(kappa_T=LN2, dim=20)
        rho = fock.pure_density(fock.coherent_state(20, 0.7))
        pmf = pd.born_pmf(rho, LN2, p, n_max=12)
        kod = pd.kod_poisson(LN2, 1.0)
        weights = pd.ostensible_weights(rho, LN2, p, n_max=12)
        assert_allclose(pmf, kod.pmf_array(12) * weights, rtol=1e-12, atol=1e-15)


class TestSamplers:
    def test_vacuum_gives_empty_record(self):
        p = params(kappa_T=0.05, dim=6)
        rec = pd.sample_trajectory(fock.projector(6, 0), p, records.stream(0, 0))
        assert rec.n_jumps == 0

    def test_trajectory_deterministic(self):
        p = params(kappa_T=0.3, dim=10)
        rho = fock.projector(10, 4)
        r1 = pd.sample_trajectory(rho, p, records.stream(8, 3))
        r2 = pd.sample_trajectory(rho, p, records.stream(8, 3))
        assert np.array_equal(r1.jump_times, r2.jump_times)

    def test_jump_count_bounded_by_photon_number(self):
        p = params(kappa_T=LN2, dim=16)
        counts = pd.run_photo_ensemble(fock.fock_state(16, 5), p, 3000, seed=5)
        assert counts.max() <= 5

    def test_ensemble_matches_binomial(self):
        p = params(kappa_T=LN2, dim=16)
        counts = pd.run_photo_ensemble(fock.fock_state(16, 5), p, 10**4, seed=5)
        emp = np.bincount(counts, minlength=6) / counts.size
        tv = 0.5 * np.sum(np.abs(emp - scipy.stats.binom.pmf(np.arange(6), 5, 0.5)))
        assert tv < 0.03

    def test_ensemble_thread_invariance(self):
        p = params(kappa_T=0.2, dim=12)
        base = pd.run_photo_ensemble(fock.fock_state(12, 3), p, 500, seed=4)
        for threads in (2, 5):
            other = pd.run_photo_ensemble(
                fock.fock_state(12, 3), p, 500, seed=4, n_threads=threads
            )
            assert np.array_equal(base, other)

    def test_mixed_state_path(self):
        p = params(kappa_T=0.1, dim=8)
        rho = 0.5 * fock.projector(8, 0) + 0.5 * fock.projector(8, 2)
        counts = pd.run_photo_ensemble(rho, p, 50, seed=6)
        assert counts.shape == (50,)
        assert counts.max() <= 2

    def test_zero_trajectories(self):
        p = params(dim=8)
        counts = pd.run_photo_ensemble(fock.fock_state(8, 1), p, 0, seed=1)
        assert counts.size == 0

    def test_ostensible_zero_horizon(self):
        rng = records.stream(2, 0)
        assert all(pd.sample_ostensible(0.0, 1.0, rng) == 0 for _ in range(50))

    def test_ostensible_mean(self):
        rng = records.stream(2, 1)
        draws = np.array([pd.sample_ostensible(LN2, 1.0, rng) for _ in range(10**4)])
        assert abs(draws.mean() - 0.5) < 3.0 * np.sqrt(0.5 / 10**4)

    def test_method_a_chi_square_against_born(self):
        p = params(kappa_T=LN2, dim=16)
        counts = pd.run_photo_ensemble(fock.fock_state(16, 5), p, 10**4, seed=12)
        hist = records.Histogram.from_samples(counts, records.integer_edges(8))
        pmf = pd.born_pmf(fock.projector(16, 5), LN2, p, n_max=8)
        assert records.chi_square_gof(hist, pmf) > 0.001
