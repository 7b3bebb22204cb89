import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cascade_populations
from tweezerlab.atoms import (
    IDX,
    LEVELS,
    AtomSpecies,
    Beam,
    LaserSet,
    QubitChannel,
    ReadoutPOVM,
    basis_state,
    calibrate_beam3,
    calibrate_pi_time,
    collapse_operators,
    extract_rotation_channel,
    hamiltonian_rwa,
    level_projector,
    light_shift_stability,
    lindblad_propagate,
    liouvillian,
    min_fidelity,
    population_series,
    rabi_frequency,
    rempi_readout,
    rotation_unitary,
    scan_rotation,
)
from tweezerlab.errors import ConfigurationError, ContractViolation

angles = st.floats(-10.0, 10.0, allow_nan=False)


def _decay_free(species: AtomSpecies) -> AtomSpecies:
    return dataclasses.replace(
        species, decay_rates={k: 0.0 for k in species.decay_rates})


class TestSpecies:
    def test_builtin_species_load(self, sr, yb):
        assert sr.name == "Sr" and yb.name == "Yb"
        for species in (sr, yb):
            for level in LEVELS:
                assert np.isfinite(species.energy_cm(level))

    def test_unknown_builtin(self):
        with pytest.raises(ConfigurationError):
            AtomSpecies.builtin("Cs")

    def test_missing_level_rejected(self, sr):
        bad = dict(sr.level_energies)
        del bad["3S1"]
        with pytest.raises(ConfigurationError):
            dataclasses.replace(sr, level_energies=bad)

    def test_negative_decay_rejected(self, sr):
        bad = dict(sr.decay_rates)
        bad["3S1->3P0"] = -1.0
        with pytest.raises(ConfigurationError):
            dataclasses.replace(sr, decay_rates=bad)

    def test_intercombination_wavelength(self, sr):
        # the 1S0-3P1 intercombination line sits in the red
        lam = sr.transition_wavelength_nm("1S0", "3P1")
        assert 680.0 < lam < 700.0

    def test_total_upper_decay(self, sr):
        total = sum(sr.decay_rate("3S1", lo) for lo in ("3P0", "3P1", "3P2"))
        assert sr.total_upper_decay == pytest.approx(total)


class TestLasers:
    def test_beam_validation(self):
        with pytest.raises(ConfigurationError):
            Beam(-1.0, 1e6)
        with pytest.raises(ConfigurationError):
            Beam(689.0, -1e6)

    def test_resonant_closes_three_photon_condition(self, sr, sr_lasers):
        assert sr_lasers.three_photon_detuning_cm(sr) == pytest.approx(0.0, abs=1e-9)

    def test_resonant_single_laser_trick(self, sr):
        ls = LaserSet.resonant(sr, 1e9, lambda1_nm=688.7)
        assert ls.beam2.wavelength_nm == pytest.approx(688.7)
        assert ls.three_photon_detuning_cm(sr) == pytest.approx(0.0, abs=1e-9)

    def test_resonant_requires_other_beams(self, sr):
        with pytest.raises(ConfigurationError):
            LaserSet.resonant(sr, 1e9, lambda3_nm=700.0, auto="lambda2")

    def test_bad_pulse_shape(self):
        b = Beam(689.0, 1e6)
        with pytest.raises(ConfigurationError):
            LaserSet(b, b, b, pulse_shape="triangle")
        with pytest.raises(ConfigurationError):
            LaserSet(b, b, b, pulse_shape="smoothed-square", rise_time_s=0.0)

    def test_rabi_scaling(self):
        w1 = rabi_frequency(1.0, 1e6)
        w4 = rabi_frequency(1.0, 4e6)
        assert w4 == pytest.approx(2.0 * w1, rel=1e-12)
        assert rabi_frequency(2.0, 1e6) == pytest.approx(2.0 * w1, rel=1e-12)
        with pytest.raises(ConfigurationError):
            rabi_frequency(1.0, -1.0)


class TestMasterEquation:
    def test_hamiltonian_hermitian(self, sr, sr_lasers):
        h = hamiltonian_rwa(sr, sr_lasers)
        np.testing.assert_allclose(h, h.conj().T, atol=1e-6)

    def test_detuning_offset_shifts_3p0(self, sr, sr_lasers):
        h0 = hamiltonian_rwa(sr, sr_lasers)
        h1 = hamiltonian_rwa(
            sr, dataclasses.replace(sr_lasers, detuning_offset_rad_s=123.0))
        diff = h1 - h0
        assert diff[IDX["3P0"], IDX["3P0"]] == pytest.approx(123.0)
        diff[IDX["3P0"], IDX["3P0"]] = 0.0
        np.testing.assert_allclose(diff, 0.0, atol=1e-9)

    def test_liouvillian_preserves_trace_row(self, sr, sr_lasers):
        L = liouvillian(hamiltonian_rwa(sr, sr_lasers), collapse_operators(sr))
        tau = np.eye(5).reshape(-1, order="F")
        np.testing.assert_allclose(tau @ L, 0.0, atol=1e-3)  # rad/s entries ~1e12

    def test_propagation_keeps_state_physical(self, sr, sr_lasers, rng):
        v = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        rho0 = v @ v.conj().T
        rho0 /= np.trace(rho0).real
        rho = lindblad_propagate(sr, sr_lasers, rho0, 5e-9)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-8)
        assert np.min(np.linalg.eigvalsh(rho)) > -1e-6

    def test_input_validation(self, sr, sr_lasers):
        with pytest.raises(ConfigurationError):
            lindblad_propagate(sr, sr_lasers, basis_state("1S0"), 0.0)
        with pytest.raises(ContractViolation):
            lindblad_propagate(sr, sr_lasers, 2.0 * basis_state("1S0"), 1e-9)

    def test_dark_cascade_matches_closed_form(self, sr):
        dark = LaserSet(Beam(689.0, 0.0), Beam(689.0, 0.0), Beam(688.0, 0.0))
        t = 40e-9
        rho = lindblad_propagate(sr, dark, basis_state("3S1"), t)
        expected = cascade_populations(sr, t)
        for level, p in expected.items():
            assert rho[IDX[level], IDX[level]].real == pytest.approx(p, abs=1e-6)

    def test_population_series_shape_and_start(self, sr, sr_lasers):
        times, pops = population_series(sr, sr_lasers, basis_state("1S0"),
                                        20e-9, 50)
        assert times.shape == pops.shape == (51,)
        assert pops[0] == pytest.approx(0.0, abs=1e-12)
        assert np.all((pops > -1e-9) & (pops < 1.0 + 1e-9))


class TestRotationChannel:
    def test_theta_zero_is_identity(self, sr, sr_lasers):
        channel, duration = extract_rotation_channel(sr, sr_lasers, 0.0)
        assert duration == 0.0
        np.testing.assert_allclose(channel.pauli_transfer(), np.eye(4),
                                   atol=1e-10)
        np.testing.assert_allclose(channel.leakage_vector(), 0.0, atol=1e-10)

    def test_decay_free_pi_pulse_has_high_fidelity(self, sr):
        species = _decay_free(sr)
        lasers = LaserSet.resonant(species, 3e2, lambda1_nm=688.7)
        channel, t_pi = extract_rotation_channel(species, lasers, np.pi)
        assert t_pi > 0.0
        psi = channel.apply_qubit(np.diag([1.0, 0.0]).astype(complex))
        assert psi[1, 1].real > 0.999
        np.testing.assert_allclose(channel.leakage_vector(), 0.0, atol=1e-6)

    def test_pi_pulse_transfers_population(self, sr, sr_lasers):
        # the drive's light shifts push the bare three-photon condition off
        # the dressed resonance; retune beam 3 before calibrating the pulse
        lasers = calibrate_beam3(sr, sr_lasers)
        t_pi = calibrate_pi_time(sr, lasers)
        rho = lindblad_propagate(sr, lasers, basis_state("1S0"), t_pi)
        assert rho[IDX["3P0"], IDX["3P0"]].real > 0.9

    def test_scan_rotation_reports_gaps_not_raises(self, sr):
        pts = scan_rotation(sr, "wavelength", [688.7, -1.0],
                            irradiance_w_cm2=1e9)
        assert pts[0].error is None and pts[0].f_min > 0.9
        assert pts[1].error is not None and pts[1].f_min is None

    def test_unknown_scan_axis(self, sr):
        with pytest.raises(ConfigurationError):
            scan_rotation(sr, "phase", [0.0])


class TestQubitChannel:
    def test_identity_channel(self):
        ch = QubitChannel.identity()
        ch.check_physical()
        np.testing.assert_allclose(ch.pauli_transfer(), np.eye(4), atol=1e-12)
        np.testing.assert_allclose(ch.leakage_vector(), 0.0, atol=1e-12)

    def test_from_unitary_consistency(self, rng):
        u = rotation_unitary(0.77, axis_phase=0.3)
        ch = QubitChannel.from_unitary(u)
        ch.check_physical()
        psi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        psi /= np.linalg.norm(psi)
        rho = np.outer(psi, psi.conj())
        np.testing.assert_allclose(ch.apply_qubit(rho), u @ rho @ u.conj().T,
                                   atol=1e-12)

    def test_compose_matches_unitary_product(self):
        u1 = rotation_unitary(0.5)
        u2 = rotation_unitary(1.1, axis_phase=0.4)
        composed = QubitChannel.from_unitary(u2).compose(
            QubitChannel.from_unitary(u1))
        direct = QubitChannel.from_unitary(u2 @ u1)
        rho = 0.5 * np.array([[1, 1], [1, 1]], dtype=complex)
        np.testing.assert_allclose(composed.apply_qubit(rho),
                                   direct.apply_qubit(rho), atol=1e-12)

    def test_effect_operator_consistency(self, rng):
        ch = QubitChannel.from_unitary(rotation_unitary(1.3, 0.2))
        effect = ReadoutPOVM(efficiency=0.95, p_loss=0.1).effect_ion
        etilde = ch.effect_operator(effect)
        for _ in range(5):
            psi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            psi /= np.linalg.norm(psi)
            rho = np.outer(psi, psi.conj())
            lhs = np.trace(etilde @ rho).real
            rhs = np.trace(effect @ ch.apply_full(rho)).real
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_check_physical_catches_trace_loss(self):
        ch = QubitChannel.identity()
        bad = QubitChannel(0.5 * ch.basis_outputs)
        with pytest.raises(ContractViolation):
            bad.check_physical()


class TestRotationUnitary:
    @given(t1=angles, t2=angles, phi=st.floats(0.0, 2 * np.pi))
    @settings(max_examples=50, deadline=None)
    def test_same_axis_composition(self, t1, t2, phi):
        u = rotation_unitary(t1, phi) @ rotation_unitary(t2, phi)
        np.testing.assert_allclose(u, rotation_unitary(t1 + t2, phi),
                                   atol=1e-10)

    def test_zero_angle_identity(self):
        np.testing.assert_allclose(rotation_unitary(0.0), np.eye(2), atol=0)

    def test_pi_about_x_is_minus_i_x(self):
        np.testing.assert_allclose(
            rotation_unitary(np.pi),
            -1j * np.array([[0, 1], [1, 0]]), atol=1e-15)


class TestReadout:
    def test_povm_validation(self):
        with pytest.raises(ConfigurationError):
            ReadoutPOVM(efficiency=1.5)
        with pytest.raises(ConfigurationError):
            ReadoutPOVM(p_loss=-0.1)

    def test_effects_sum_to_identity(self):
        povm = ReadoutPOVM(efficiency=0.99, p_loss=0.02)
        np.testing.assert_allclose(povm.effect_ion + povm.effect_no_ion,
                                   np.eye(5), atol=1e-15)

    def test_ionizing_levels(self):
        povm = ReadoutPOVM(efficiency=0.99, p_loss=0.0)
        assert rempi_readout(basis_state("3P0"), povm) == pytest.approx(0.99)
        assert rempi_readout(basis_state("3S1"), povm) == pytest.approx(0.99)
        for dark in ("1S0", "3P1", "3P2"):
            assert rempi_readout(basis_state(dark), povm) == pytest.approx(0.0)

    def test_loss_scales_ion_probability(self):
        povm = ReadoutPOVM(efficiency=1.0, p_loss=0.25)
        assert rempi_readout(basis_state("3P0"), povm) == pytest.approx(0.75)

    def test_projector_shape(self):
        p = level_projector("3P2")
        assert p.shape == (5, 5) and p[IDX["3P2"], IDX["3P2"]] == 1.0
        assert np.sum(p) == 1.0


class TestLightShift:
    def test_slope_times_linewidth(self, sr):
        assert light_shift_stability(sr, 1e8) == \
            pytest.approx(sr.light_shift_slope * 1e8)

    def test_missing_slope(self, yb):
        with pytest.raises(ConfigurationError):
            light_shift_stability(yb, 1e8)

    def test_negative_linewidth(self, sr):
        with pytest.raises(ConfigurationError):
            light_shift_stability(sr, -1.0)
