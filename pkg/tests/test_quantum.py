"""Quantum layer: QFI against closed forms, measurement bound, POVM checks."""

import math

import numpy as np
import pytest

from clocklab import quantum
from helpers import (
    haar_projective_povm,
    mixed_ghz_family,
    mixed_qubit_family,
    random_psd_povm,
)


class TestStates:
    def test_plus_state_uniform(self):
        psi = quantum.plus_state(3)
        assert psi.shape == (8,)
        assert np.allclose(psi, 1.0 / math.sqrt(8.0))

    def test_ghz_state_two_components(self):
        psi = quantum.ghz_state(2)
        expected = np.zeros(4)
        expected[0] = expected[3] = 1.0 / math.sqrt(2.0)
        assert np.allclose(psi, expected)

    def test_collective_sz_spectrum(self):
        h = quantum.collective_sz(3)
        assert np.allclose(np.sort(np.diag(h).real), [-3, -1, -1, -1, 1, 1, 1, 3])

    def test_projector_normalizes(self):
        p = quantum.projector(np.array([2.0, 0.0], dtype=complex))
        assert np.allclose(p, [[1, 0], [0, 0]])


class TestQfiPureStates:
    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_ghz_collective_rotation(self, n):
        family = quantum.hamiltonian_family(
            quantum.collective_sz(n), quantum.ghz_state(n)
        )
        assert quantum.qfi(family) == pytest.approx(4.0 * n**2, rel=1e-10)
        assert quantum.qfi_hamiltonian(family) == pytest.approx(
            4.0 * n**2, rel=1e-12
        )

    @pytest.mark.parametrize("n", [1, 3])
    def test_product_state_linear_scaling(self, n):
        family = quantum.hamiltonian_family(
            quantum.collective_sz(n), quantum.plus_state(n)
        )
        assert quantum.qfi(family) == pytest.approx(4.0 * n, rel=1e-10)

    def test_qfi_constant_along_orbit(self):
        family = quantum.hamiltonian_family(
            quantum.collective_sz(2), quantum.ghz_state(2)
        )
        for phi in (0.0, 0.3, -1.1):
            assert quantum.qfi(family, phi) == pytest.approx(16.0, rel=1e-9)


class TestQfiMixedStates:
    def test_bloch_vector_closed_form(self):
        # Bloch length r in the rotation plane gives QFI r^2
        for r in (0.25, 0.6, 0.95):
            assert quantum.qfi(mixed_qubit_family(r)) == pytest.approx(
                r**2, rel=1e-9
            )

    def test_qfi_hamiltonian_requires_purity(self):
        with pytest.raises(ValueError):
            quantum.qfi_hamiltonian(mixed_qubit_family(0.6))

    def test_commuting_hamiltonian_gives_zero(self):
        rho0 = np.diag([0.7, 0.3]).astype(complex)
        family = quantum.hamiltonian_family(0.5 * quantum.SIGMA_Z, rho0)
        assert quantum.qfi(family) == pytest.approx(0.0, abs=1e-12)

    def test_rank_changing_derivative_is_singular(self):
        rho = np.diag([1.0, 0.0]).astype(complex)
        drho = np.diag([-1.0, 1.0]).astype(complex)
        family = quantum.QuantumFamily(
            dimension=2,
            state=lambda phi: rho,
            state_derivative=lambda phi: drho,
        )
        with pytest.raises(RuntimeError):
            quantum.qfi(family)


class TestScaling:
    def test_interrogation_time_rescaling(self):
        family = mixed_qubit_family(0.6)
        tau = 2.5
        for phi in (0.0, 0.2):
            assert quantum.qfi_scaled(family, tau, phi) == pytest.approx(
                tau**2 * quantum.qfi(family, tau * phi), rel=1e-9
            )

    def test_continuous_family_rescaling(self):
        family = quantum.GaussianWavefunctionFamily(4.0)
        assert quantum.qfi_scaled(family, 3.0) == pytest.approx(36.0, rel=1e-9)


class TestContinuousFamily:
    def test_qfi_equals_declared_fisher(self):
        family = quantum.GaussianWavefunctionFamily(4.0)
        assert quantum.qfi(family) == pytest.approx(4.0, rel=1e-12)

    def test_position_readout_saturates(self):
        family = quantum.GaussianWavefunctionFamily(4.0)
        value = quantum.classical_fisher_of_povm(
            family, quantum.PositionMeasurement(), phi=0.1
        )
        assert value == pytest.approx(4.0, rel=1e-6)

    def test_wavefunction_is_normalized(self):
        family = quantum.GaussianWavefunctionFamily(2.0)
        x = np.linspace(-20, 20, 20001)
        density = np.abs(family.wavefunction(x, 0.3)) ** 2
        assert np.trapezoid(density, x) == pytest.approx(1.0, rel=1e-8)


class TestRamsey:
    def test_excited_probability(self):
        assert quantum.ramsey_excited_probability(2.0, 1.5, 0.0) == 1.0
        u = math.pi / (2.0 * 1.5 * 2.0)
        assert quantum.ramsey_excited_probability(2.0, 1.5, u) == pytest.approx(0.5)

    def test_family_matches_probability_rule(self):
        family, povm = quantum.ramsey_family(2.0, 1.5)
        for phi in (0.0, 0.3, 0.9):
            rho = family.state(phi)
            p_excited = float(np.real(np.trace(povm.effects[0] @ rho)))
            assert p_excited == pytest.approx(
                quantum.ramsey_excited_probability(2.0, 1.5, phi), abs=1e-12
            )

    def test_qfi_matches_quadratic_fringe(self):
        family, povm = quantum.ramsey_family(2.0, 1.5)
        assert quantum.qfi(family) == pytest.approx(9.0, rel=1e-10)
        # away from the fringe center the projective readout is optimal
        value = quantum.classical_fisher_of_povm(family, povm, phi=0.2)
        assert value == pytest.approx(9.0, rel=1e-7)

    def test_fringe_center_is_uninformative(self):
        family, povm = quantum.ramsey_family(2.0, 1.5)
        assert quantum.classical_fisher_of_povm(family, povm, phi=0.0) == pytest.approx(
            0.0, abs=1e-9
        )


class TestMeasurementBound:
    @pytest.mark.parametrize(
        "family", [mixed_qubit_family(0.6), mixed_ghz_family(2, 0.85)]
    )
    def test_random_povms_never_beat_qfi(self, family):
        rng = np.random.default_rng(17)
        target = quantum.qfi(family, 0.1)
        for _ in range(10):
            povm = haar_projective_povm(family.dimension, rng)
            assert (
                quantum.classical_fisher_of_povm(family, povm, 0.1)
                <= target + 1e-9
            )
        for _ in range(10):
            povm = random_psd_povm(family.dimension, 5, rng)
            assert (
                quantum.classical_fisher_of_povm(family, povm, 0.1)
                <= target + 1e-9
            )

    @pytest.mark.parametrize(
        "family", [mixed_qubit_family(0.6), mixed_ghz_family(2, 0.85)]
    )
    def test_sld_basis_achieves_qfi(self, family):
        povm = quantum.sld_spectral_povm(family, 0.1)
        assert quantum.classical_fisher_of_povm(
            family, povm, 0.1
        ) == pytest.approx(quantum.qfi(family, 0.1), rel=1e-9)


class TestPovmValidation:
    def test_non_hermitian_rejected(self):
        bad = np.array([[0.5, 0.5], [0.0, 0.5]], dtype=complex)
        with pytest.raises(ValueError):
            quantum.Povm((bad, np.eye(2, dtype=complex) - bad))

    def test_incomplete_rejected(self):
        half = 0.5 * np.eye(2, dtype=complex)
        with pytest.raises(ValueError):
            quantum.Povm((half, 0.25 * np.eye(2, dtype=complex)))

    def test_negative_effect_rejected(self):
        up = np.diag([1.5, 0.0]).astype(complex)
        down = np.eye(2, dtype=complex) - up
        with pytest.raises(ValueError):
            quantum.Povm((up, down))

    def test_label_mismatch_rejected(self):
        eye = np.eye(2, dtype=complex)
        with pytest.raises(ValueError):
            quantum.Povm((0.5 * eye, 0.5 * eye), labels=(1.0,))


class TestSampling:
    def test_binary_outcome_frequencies(self):
        family, povm = quantum.ramsey_family(2.0, 1.5)
        rng = np.random.default_rng(29)
        phi = 0.3
        draws = quantum.sample_outcome(family, povm, phi, rng, size=40_000)
        p = quantum.ramsey_excited_probability(2.0, 1.5, phi)
        se = math.sqrt(p * (1.0 - p) / draws.size)
        assert abs(draws.mean() - p) < 5.0 * se
        assert set(np.unique(draws)) <= {0.0, 1.0}

    def test_scalar_draw(self):
        family, povm = quantum.ramsey_family(2.0, 1.5)
        out = quantum.sample_outcome(family, povm, 0.3, np.random.default_rng(1))
        assert out in (0.0, 1.0)

    def test_position_samples(self):
        family = quantum.GaussianWavefunctionFamily(4.0)
        rng = np.random.default_rng(31)
        draws = quantum.sample_outcome(
            family, quantum.PositionMeasurement(), 0.7, rng, size=40_000
        )
        assert abs(draws.mean() - 0.7) < 5.0 * math.sqrt(0.25 / draws.size)
        assert abs(draws.var() - 0.25) < 5.0 * 0.25 * math.sqrt(2.0 / draws.size)
