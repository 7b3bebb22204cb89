"""Acceptance suite: one test class per release criterion.

Every tolerance here is pinned; loosening one is a release decision, not a
test fix.  The slow-marked classes run minutes of imaginary-time relaxation
and split-operator propagation; everything else finishes in seconds.
"""

import dataclasses
import json
import textwrap

import numpy as np
import pytest

from oracles import (
    CZ_INVARIANTS,
    cascade_populations,
    dense_spectrum_2d,
    makhlin_invariants,
)
from tweezerlab.atoms import (
    IDX,
    Beam,
    LaserSet,
    ReadoutPOVM,
    basis_state,
    extract_rotation_channel,
    fit_frame_phases,
    lindblad_propagate,
    min_fidelity,
    rotation_unitary,
    scan_rotation,
)
from tweezerlab.bell import (
    CHSH_PAIRS,
    NoisyStation,
    bell_value,
    check_spacelike,
    joint_probabilities,
    psi_plus,
)
from tweezerlab.cli import EXIT_OK, main
from tweezerlab.double_well import (
    ScatteringLengths,
    TrapConfig,
    adiabatic_spectrum,
    default_grid_2d,
    interaction_coupling,
    two_atom_potential,
)
from tweezerlab.gate import (
    GatePhases,
    Schedule,
    accumulate_phases,
    assemble_exchange_unitary,
    compose_controlled_phase,
    is_unitary,
    local_invariants,
    sector_ground_curves,
    tune_hold_for_combination,
)
from tweezerlab.grids import Grid1D
from tweezerlab.spectral import RelaxationOptions, relax_eigenstates


class TestCriterion1SpectralOracle:
    """relax_eigenstates against dense diagonalization of the identical
    discretized two-atom Hamiltonian: lowest 6 states within 1e-6."""

    @pytest.mark.slow
    def test_relaxation_matches_dense_64x64(self):
        cfg = TrapConfig(d=3.0)
        a = ScatteringLengths(a00=0.1, a01=0.12, a11=0.1)
        g = interaction_coupling(a.a01, cfg.omega_perp)
        grid = Grid1D.centered(64, 3.0 / 2 + 10.0)
        V = two_atom_potential(grid, cfg, g)
        dense = dense_spectrum_2d(grid, V.values, cfg.mass, 6)
        relaxed = np.array([
            e for e, _ in relax_eigenstates(
                V, 6, mass=cfg.mass,
                options=RelaxationOptions(boundary_tol=1e-4))
        ])
        np.testing.assert_allclose(relaxed, dense, atol=1e-6)


@pytest.mark.slow
class TestCriterion2SpectrumStructure:
    """Adiabatic level-curve structure of the lowest six states.

    The sixth level at d = 12 sits above the double well's bound spectrum,
    so the box state's boundary check is disabled for this scan; all three
    claims below compare levels between runs on the identical grid, so the
    box state's absolute energy cancels.
    """

    DS = [12.0, 10.0, 8.0, 6.0, 4.0, 2.5, 1.0]
    A01S = (0.0, 0.1, 1.0)

    @pytest.fixture(scope="class")
    def curves(self):
        cfg = TrapConfig()
        grid = Grid1D.centered(128, 20.0)
        opts = RelaxationOptions(check_boundary=False)
        configs = [cfg.with_separation(d) for d in self.DS]
        out = {}
        for a01 in self.A01S:
            a = ScatteringLengths(a00=0.1, a01=a01, a11=0.1)
            for sector in ("psi_plus", "psi_minus"):
                out[(a01, sector)] = adiabatic_spectrum(
                    configs, a, sector, k=6, grid=grid, options=opts)
        return out

    def _energies(self, curves, a01, sector):
        return np.array([[p.energy for p in pts]
                         for pts in curves[(a01, sector)].levels])

    def test_antisymmetric_levels_invariant_in_a01(self, curves):
        base = self._energies(curves, 0.0, "psi_minus")
        for a01 in self.A01S[1:]:
            np.testing.assert_allclose(
                self._energies(curves, a01, "psi_minus"), base, atol=1e-8)

    def test_symmetric_ground_strictly_increasing_in_a01(self, curves):
        grounds = {a01: self._energies(curves, a01, "psi_plus")[:, 0]
                   for a01 in self.A01S}
        # repulsion costs energy wherever the orbitals overlap; at d >= 8
        # the overlap is below solver resolution, so strictness is asserted
        # where the interaction is resolvable and non-decrease elsewhere
        for lo, hi in ((0.0, 0.1), (0.1, 1.0)):
            diff = grounds[hi] - grounds[lo]
            assert np.all(diff > -1e-8)
            resolvable = np.array(self.DS) <= 6.0
            assert np.all(diff[resolvable] > 1e-6)

    def test_sector_degeneracy_at_large_separation(self, curves):
        for a01 in self.A01S:
            gp = curves[(a01, "psi_plus")].levels[0][0].energy
            gm = curves[(a01, "psi_minus")].levels[0][0].energy
            assert abs(gp - gm) < 1e-4

    def test_fermionization_closes_the_gap(self):
        # d = 0: a small coupling leaves a finite exchange gap; g = 50
        # drives the symmetric ground onto the antisymmetric one
        cfg = [TrapConfig(d=0.0)]
        grid = default_grid_2d(0.0, n=128)
        opts = RelaxationOptions(check_boundary=False)
        gaps = {}
        for a01 in (0.1, 2.5):
            a = ScatteringLengths(a01=a01)
            ep = adiabatic_spectrum(cfg, a, "psi_plus", k=1, grid=grid,
                                    options=opts).levels[0][0].energy
            em = adiabatic_spectrum(cfg, a, "psi_minus", k=1, grid=grid,
                                    options=opts).levels[0][0].energy
            gaps[a01] = em - ep
        assert gaps[0.1] > 0.1
        assert 0.0 < gaps[2.5] < 0.05


@pytest.mark.slow
class TestCriterion3GateIdentitySuite:
    """Non-interacting gate: sector phases coincide, the assembled unitary
    is an exchange-form identity on the qubit sector, and the two phase
    methods agree at small leakage."""

    @pytest.fixture(scope="class")
    def setup(self):
        schedule = Schedule.trapezoid(d_max=10.0, d_min=8.5, speed=0.02,
                                      hold=2.0)
        a = ScatteringLengths()
        cfg = TrapConfig()
        grid = default_grid_2d(10.0, n=64)
        opts = RelaxationOptions(boundary_tol=1e-4)
        curves = sector_ground_curves(schedule, a, cfg, k=4, n_points=9,
                                      grid=grid, options=opts)
        integral = accumulate_phases(schedule, a, cfg,
                                     method="energy-integral", curves=curves,
                                     grid=grid, options=opts)
        full = accumulate_phases(schedule, a, cfg, method="full-propagation",
                                 curves=curves, grid=grid, options=opts,
                                 dt=4e-3)
        return integral, full

    def test_noninteracting_phases_coincide(self, setup):
        integral, _ = setup
        assert abs(integral.phi_00 - integral.phi_plus) < 1e-6
        assert abs(integral.phi_11 - integral.phi_plus) < 1e-6

    def test_unitary_and_exchange_identity(self, setup):
        integral, _ = setup
        U = assemble_exchange_unitary(integral)
        assert is_unitary(U, 1e-10)
        expected = abs(np.sin((integral.phi_plus - integral.phi_minus) / 2))
        assert abs(abs(U[1, 2]) - expected) < 1e-10

    def test_combination_offset_invariant(self):
        rng = np.random.default_rng(11)
        p = rng.uniform(-5, 5, 4)
        base = GatePhases(*p, method="energy-integral")
        for offset in rng.uniform(-20, 20, 8):
            shifted = GatePhases(*(p + offset), method="energy-integral")
            assert abs(shifted.combination - base.combination) < 1e-8

    def test_methods_agree_at_small_leakage(self, setup):
        integral, full = setup
        leak = max(full.leakage.values())
        assert leak < 1e-3
        worst = max(abs(integral.phase(s) - full.phase(s))
                    for s in ("00", "11", "psi_plus", "psi_minus"))
        assert worst <= 0.05


@pytest.mark.slow
class TestCriterion4ControlledPhase:
    """Hold tuned so the phase combination reaches pi/2 (mod 2pi): the
    composed gate's local invariants land in the CZ class."""

    def test_tuned_gate_is_cz_class(self):
        a = ScatteringLengths(a00=0.1, a01=0.0, a11=0.1)
        cfg = TrapConfig()
        grid = default_grid_2d(10.0, n=64)
        opts = RelaxationOptions(boundary_tol=1e-4)

        def factory(hold):
            return Schedule.trapezoid(d_max=10.0, d_min=1.5, speed=0.05,
                                      hold=hold)

        curves = sector_ground_curves(factory(0.0), a, cfg, k=1, n_points=9,
                                      grid=grid, options=opts)
        # pick the pi/2 (mod 2pi) representative inside the reachable
        # combination range of the hold bracket
        target = np.pi / 2.0 + 4.0 * np.pi
        hold = tune_hold_for_combination(factory, target, a, cfg,
                                         lambda sched: curves)
        phases = accumulate_phases(factory(hold), a, cfg,
                                   method="energy-integral", curves=curves,
                                   grid=grid, options=opts)
        assert phases.combination == pytest.approx(target, abs=1e-6)

        U = assemble_exchange_unitary(phases)
        G, gamma, report = compose_controlled_phase(
            U, combination=phases.combination)
        assert gamma == pytest.approx(np.pi, abs=1e-6)
        assert report.residual < 1e-6
        np.testing.assert_allclose(local_invariants(G), CZ_INVARIANTS,
                                   atol=1e-6)
        np.testing.assert_allclose(makhlin_invariants(G), CZ_INVARIANTS,
                                   atol=1e-6)


class TestCriterion5MasterEquation:
    def test_trace_drift_below_1e8_over_pi_pulse(self, sr, sr_lasers):
        from tweezerlab.atoms import calibrate_beam3, calibrate_pi_time

        lasers = calibrate_beam3(sr, sr_lasers)
        t_pi = calibrate_pi_time(sr, lasers)
        rho = lindblad_propagate(sr, lasers, basis_state("1S0"), t_pi)
        assert abs(np.trace(rho).real - 1.0) < 1e-8

    def test_dark_decay_matches_branching_rate_equations(self, sr):
        dark = LaserSet(Beam(689.0, 0.0), Beam(689.0, 0.0), Beam(688.0, 0.0))
        for t in (5e-9, 40e-9, 200e-9):
            rho = lindblad_propagate(sr, dark, basis_state("3S1"), t)
            expected = cascade_populations(sr, t)
            for level, p in expected.items():
                assert rho[IDX[level], IDX[level]].real == pytest.approx(
                    p, abs=1e-6)

    def test_decay_free_limit_is_lossless(self, sr):
        species = dataclasses.replace(
            sr, decay_rates={k: 0.0 for k in sr.decay_rates})
        lasers = LaserSet.resonant(species, 3e2, lambda1_nm=688.7)
        channel, _ = extract_rotation_channel(species, lasers, np.pi)
        target = fit_frame_phases(channel, rotation_unitary(np.pi))
        assert min_fidelity(channel, target) > 1.0 - 1e-8


class TestCriterion6RotationNumbers:
    @pytest.mark.slow
    def test_pi_time_minimized_near_line_center(self, sr):
        lams = np.linspace(688.0, 689.5, 13)
        points = scan_rotation(sr, "wavelength", lams,
                               irradiance_w_cm2=1e9)
        assert all(p.error is None for p in points)
        t_pis = np.array([p.t_pi for p in points])
        lam_min = lams[int(np.argmin(t_pis))]
        assert abs(lam_min - 688.7) <= 0.25

    def test_high_irradiance_fast_gate(self, sr):
        pts = scan_rotation(sr, "irradiance", [1e9], lambda1_nm=688.7)
        (p,) = pts
        assert p.error is None
        assert p.f_min > 0.90
        assert 1e-9 < p.t_pi < 1e-8  # a few nanoseconds

    def test_low_irradiance_high_fidelity(self, sr):
        pts = scan_rotation(sr, "irradiance", [1e6], lambda1_nm=688.7)
        (p,) = pts
        assert p.error is None
        assert p.f_min >= 0.999


class TestCriterion7BellSuite:
    def test_tsirelson_saturated_on_psi_plus(self):
        res = bell_value(psi_plus(), NoisyStation.ideal())
        assert abs(res.bell_value - 2 * np.sqrt(2)) < 1e-12

    def test_thousand_product_states_respect_classical_bound(self, rng):
        station = NoisyStation.ideal()
        for _ in range(1000):
            qa = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            qb = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            v = np.kron(qa / np.linalg.norm(qa), qb / np.linalg.norm(qb))
            rho = np.outer(v, v.conj())
            b = bell_value(rho, station).bell_value
            assert abs(b) <= 2.0 + 1e-9

    def test_no_signaling_marginals(self, rng):
        station = NoisyStation.ideal(efficiency=0.95, p_loss=0.03)
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        rho = np.outer(v, v.conj()) / (v.conj() @ v).real
        for sa in ("Q", "R"):
            marginals = []
            for sb in ("S", "T"):
                probs = joint_probabilities(rho, sa, sb, station, station)
                marginals.append({
                    oa: sum(p for (a, _), p in probs.items() if a == oa)
                    for oa in ("ion", "no_ion")})
            for oa in ("ion", "no_ion"):
                assert marginals[0][oa] == pytest.approx(marginals[1][oa],
                                                         abs=1e-12)

    @pytest.mark.slow
    def test_realistic_station_violates_at_few_ns(self, sr):
        lasers = LaserSet.resonant(sr, 1e9, lambda1_nm=688.7)
        station = NoisyStation.from_species(
            sr, lasers, readout=ReadoutPOVM(efficiency=0.99),
            detection_duration_s=1e-9)
        res = bell_value(psi_plus(), station)
        assert res.bell_value > 2.0
        assert res.violation
        assert station.total_time_s < 10e-9


class TestCriterion8Utilities:
    def test_light_shift_stability_sr(self, sr):
        from tweezerlab.atoms import light_shift_stability

        shift = light_shift_stability(sr, 1e8)
        assert shift == pytest.approx(0.023, abs=1e-6)
        assert shift < 0.1

    def test_spacelike_pass_and_fail(self):
        assert check_spacelike(3.0, 9e-9).ok
        assert not check_spacelike(3.0, 12e-9).ok


class TestCriterion9Determinism:
    @pytest.mark.slow
    def test_bell_scan_rerun_is_byte_identical(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text(textwrap.dedent("""
            bell_scan:
              irradiances_w_cm2: [1.0e9]
              efficiency: 0.99
              shots: 500
            """))
        outputs = {}
        for name in ("first", "second"):
            out = tmp_path / name
            code = main(["bell-scan", "--config", str(cfg),
                         "--out", str(out), "--seed", "123"])
            assert code == EXIT_OK
            outputs[name] = {
                p.name: p.read_bytes()
                for p in out.iterdir() if p.suffix == ".csv"
            }
            manifest = json.loads((out / "manifest.json").read_text())
            assert manifest["seed"] == 123
        assert outputs["first"] == outputs["second"]
        assert set(outputs["first"]) == {"bell_scan.csv", "bell_counts.csv"}
