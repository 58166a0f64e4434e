import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnd_povm.dynamics import (HybridState, LightState, analytic_photon_mean, analytic_photon_variance,
                               atom_matrix_at, coefficient_log_factor, evolve_closed_form,
                               evolve_ordered_product, expm1_over, photon_amplitude, reduce_atoms,
                               reduce_light, spin_trajectory)
from qnd_povm.errors import InvalidInputError
from qnd_povm.oracle import FockConfig, fock_operators, hybrid_to_fock, lindblad_rk4, master_rhs
from qnd_povm.spin_algebra import (AtomState, dicke_state, m_values, observable_mean, spin_coherent_state,
                                   thermal_state)

ALPHA50 = math.sqrt(50)
# reduced atom matrix entries from the Fock-space oracle: J=2, alpha0=2, R=0.05, tau=1
FROZEN_04 = -0.0001408647831182459 - 5.1527607269304175e-05j
FROZEN_12 = -0.045697428516709895 - 0.006495112509707482j


class TestPhotonAmplitude:
    @given(st.floats(0, 1), st.floats(0, 10))
    def test_m_zero_unchanged(self, R, tau):
        assert photon_amplitude(1.5 + 0.5j, 0, R, tau) == 1.5 + 0.5j

    def test_half_turn(self):
        assert photon_amplitude(2.0, 1, 0, math.pi) == pytest.approx(-2.0)

    def test_direct_value(self):
        expected = ALPHA50 * np.exp(-2j) * math.exp(-0.002)
        assert photon_amplitude(ALPHA50, 2, 0.001, 1) == pytest.approx(expected, rel=1e-15)

    def test_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            photon_amplitude(1, 1, -0.1, 1)


class TestSeries:
    def test_small_argument_matches_exact(self):
        x = np.array([1e-7, -3e-7j, 2e-7 + 1e-7j, 1e-3, -0.5 + 2j])
        exact = np.array([complex(np.expm1(v) / v) for v in x])
        assert np.allclose(expm1_over(x), exact, rtol=1e-12, atol=0)

    def test_zero(self):
        assert expm1_over(0.0) == 1


class TestClosedForm:
    def test_identity_at_zero_time(self):
        rho = spin_coherent_state(3, 1.0, 0.4)
        h = evolve_closed_form(rho, 2.0, 0.3, 0.0)
        assert np.array_equal(h.coefficients[3.0], rho.matrix)
        assert np.all(h.alphas[3.0] == 2.0)
        assert np.array_equal(reduce_atoms(h).matrix, rho.matrix)

    @given(st.floats(0, 0.5), st.floats(0, 6))
    def test_diagonal_multiplier_is_one(self, R, tau):
        m = m_values(5)
        f = coefficient_log_factor(m, m, ALPHA50, R, tau)
        assert np.max(np.abs(f)) < 1e-10

    def test_hermitian_coefficients(self):
        h = evolve_closed_form(spin_coherent_state(4, 1.2, 0.3), 1.7, 0.1, 1.3)
        c = h.coefficients[4.0]
        assert np.max(np.abs(c - c.conj().T)) < 1e-12

    def test_matches_fock_oracle(self):
        rho = spin_coherent_state(2, math.pi / 2, 0)
        fock = lindblad_rk4(rho, 2.0, 0.05, 1.0, FockConfig(cutoff=20, dt=1e-3)).reduced_atom()
        exact = reduce_atoms(evolve_closed_form(rho, 2.0, 0.05, 1.0)).matrix
        assert np.max(np.abs(fock - exact)) < 1e-6

    def test_frozen_entries(self):
        # values produced by the truncated-Fock Lindblad integrator (cutoff 20, dt 1e-3)
        rho = spin_coherent_state(2, math.pi / 2, 0)
        got = reduce_atoms(evolve_closed_form(rho, 2.0, 0.05, 1.0)).matrix
        assert got[0, 4] == pytest.approx(FROZEN_04, abs=1e-8)
        assert got[1, 2] == pytest.approx(FROZEN_12, abs=1e-8)

    def test_one_step_reduction_matches_two_step(self):
        rho = thermal_state(4, 0.3)
        coh = spin_coherent_state(3, 0.8, 1.1)
        for r in (rho, coh):
            a = atom_matrix_at(r, 1.9, 0.07, 2.2)
            b = reduce_atoms(evolve_closed_form(r, 1.9, 0.07, 2.2))
            for J in r.sectors:
                assert np.max(np.abs(a.sectors[J] - b.sectors[J])) < 1e-13

    def test_ordered_product_equivalence(self):
        rho = spin_coherent_state(2, 1.0, 0.5)
        for R in (0.0, 0.05, 0.3):
            a = evolve_closed_form(rho, 2.0, R, 1.7)
            b = evolve_ordered_product(rho, 2.0, R, 1.7)
            assert np.max(np.abs(a.coefficients[2.0] - b.coefficients[2.0])) < 1e-10

    def test_master_equation_residual(self):
        """Central differences of the closed form satisfy the master equation to O(h^2)."""
        rho = spin_coherent_state(1, 1.1, 0.2)
        R, alpha0, tau, cutoff = 0.2, 1.2, 0.8, 30
        h_op, jump = fock_operators(1.0, R, cutoff)

        def joint(t):
            return hybrid_to_fock(evolve_closed_form(rho, alpha0, R, t), cutoff)

        rhs = master_rhs(joint(tau), h_op, jump, R)
        errs = []
        for h in (0.02, 0.01):
            fd = (joint(tau + h) - joint(tau - h)) / (2 * h)
            errs.append(np.max(np.abs(fd - rhs)))
        assert errs[1] < 1e-4
        assert 3.5 < errs[0] / errs[1] < 4.5


class TestReductions:
    def test_populations_constant(self):
        rho = spin_coherent_state(20, math.pi / 2, 0)
        d0 = np.real(np.diag(rho.matrix))
        for tau in np.linspace(0, 2 * math.pi, 50):
            for R in (0.0, 0.001, 0.1):
                d = np.real(np.diag(atom_matrix_at(rho, ALPHA50, R, tau).matrix))
                assert np.max(np.abs(d - d0)) < 1e-10

    def test_physicality(self):
        rho = spin_coherent_state(5, 1.0, 0.0)
        for tau in (0.3, 1.0, 4.0):
            out = atom_matrix_at(rho, 2.5, 0.05, tau)
            assert out.hermiticity_error() < 1e-12
            assert out.min_eigenvalue() > -1e-9

    @pytest.mark.parametrize("R", [0.01, 0.05, 0.2, 0.5, 1.0])
    def test_purity_non_increasing_during_collapse(self, R):
        rho = spin_coherent_state(4, math.pi / 2, 0)
        pur = [atom_matrix_at(rho, 2.0, R, t).purity() for t in np.linspace(0, 1.1, 120)]
        assert np.all(np.diff(pur) <= 1e-12)

    def test_purity_partially_revives(self):
        # atom-light entanglement is reversible, so purity is not monotone over long times
        rho = spin_coherent_state(4, math.pi / 2, 0)
        pur = np.array([atom_matrix_at(rho, 2.0, 0.05, t).purity() for t in np.linspace(0, 2 * math.pi, 200)])
        assert np.diff(pur).max() > 1e-3
        assert pur[-1] < 0.5

    def test_fig2_revival_eroded(self):
        rho = spin_coherent_state(20, math.pi / 2, 0)
        taus = np.linspace(0, 2 * math.pi, 401)
        clean = spin_trajectory(rho, ALPHA50, 0.0, taus)["jx"]
        noisy = spin_trajectory(rho, ALPHA50, 0.001, taus)["jx"]
        assert clean[0] == pytest.approx(20)
        assert np.max(np.abs(clean[100:300])) < 1e-6  # collapsed
        late = taus > 1.8 * math.pi
        assert clean[late].max() > 10 and noisy[late].max() < clean[late].max()

    def test_single_dicke_light(self):
        light = reduce_light(evolve_closed_form(dicke_state(3, 1), 2.0, 0.1, 1.0))
        assert len(light.weights) == 7
        nz = light.weights > 0
        assert nz.sum() == 1 and light.weights[nz][0] == pytest.approx(1)
        assert light.amplitudes[nz][0] == pytest.approx(photon_amplitude(2.0, 1, 0.1, 1.0))

    def test_no_decay_without_emission(self):
        rho = spin_coherent_state(5, 1.0, 0.0)
        for t in (0.5, 3.0):
            light = reduce_light(evolve_closed_form(rho, ALPHA50, 0.0, t))
            assert light.mean_photon_number() == pytest.approx(50, abs=1e-10)
            assert light.photon_number_variance() == pytest.approx(50, abs=1e-9)

    def test_light_moments_against_fock_sum(self):
        light = reduce_light(evolve_closed_form(spin_coherent_state(2, 1.0, 0.0), 2.0, 0.2, 1.5))
        rho = light.fock_density_matrix(60)
        n = np.arange(61)
        p = np.real(np.diag(rho))
        mean = np.sum(n * p)
        var = np.sum(n * n * p) - mean ** 2
        assert light.mean_photon_number() == pytest.approx(mean, abs=1e-12)
        assert light.photon_number_variance() == pytest.approx(var, abs=1e-11)

    def test_non_unit_trace_warns(self):
        sub = AtomState({1.0: np.diag([0.2, 0.2, 0.2])}, 2)
        with pytest.warns(RuntimeWarning):
            light = reduce_light(evolve_closed_form(sub, 1.0, 0.1, 1.0))
        assert light.weights.sum() == pytest.approx(1)

    def test_sectors_merge(self):
        light = reduce_light(evolve_closed_form(thermal_state(2, 0.0), 1.0, 0.1, 1.0))
        assert len(light.weights) == 3
        assert light.weights[1] == pytest.approx(0.5 + 1 / 6)


class TestAnalyticPhotons:
    def test_limits(self):
        assert analytic_photon_mean(ALPHA50, 20, 0.0, 2.0, 1.0) == pytest.approx(50)
        assert analytic_photon_variance(ALPHA50, 20, 0.0, 2.0, 1.0) == pytest.approx(50)
        assert analytic_photon_mean(ALPHA50, 20, 0.01, 2.0, math.pi / 2) == pytest.approx(50 / math.sqrt(1.4))
        assert analytic_photon_mean(ALPHA50, 20, 0.01, 2.0, 0.0) == pytest.approx(50 * math.exp(-8))

    def test_small_time_excess_variance(self):
        J, R, n0 = 20, 0.001, 50
        for tau in (1e-3, 2e-3):
            excess = analytic_photon_variance(ALPHA50, J, R, tau, math.pi / 2) - analytic_photon_mean(
                ALPHA50, J, R, tau, math.pi / 2)
            assert excess == pytest.approx(n0 ** 2 * J * J * R * R * tau * tau / 2, rel=0.01)

    def test_fig3_agreement(self):
        rho = spin_coherent_state(20, math.pi / 2, 0)
        for tau in np.linspace(0, 2 * math.pi, 41):
            light = reduce_light(evolve_closed_form(rho, ALPHA50, 0.001, tau))
            assert light.mean_photon_number() == pytest.approx(
                analytic_photon_mean(ALPHA50, 20, 0.001, tau, math.pi / 2), rel=0.05)

    def test_variance_at_tau3(self):
        light = reduce_light(evolve_closed_form(spin_coherent_state(20, math.pi / 2, 0), ALPHA50, 0.001, 3.0))
        assert light.photon_number_variance() == pytest.approx(
            analytic_photon_variance(ALPHA50, 20, 0.001, 3.0, math.pi / 2), rel=0.05)
