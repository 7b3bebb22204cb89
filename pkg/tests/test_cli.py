import json
import textwrap

import pytest

from tweezerlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main


def _run(tmp_path, command, config_text, extra=()):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(textwrap.dedent(config_text))
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


class TestSpacelikeCommand:
    def test_ok_run_writes_report_and_manifest(self, tmp_path):
        code, out = _run(tmp_path, "spacelike-check", """
            spacelike_check:
              separation_m: 3.0
              total_measurement_time_s: 9e-9
            """)
        assert code == EXIT_OK
        report = json.loads((out / "spacelike_check.json").read_text())
        assert report["ok"] is True
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"] == "tweezerlab"
        assert "spacelike_check.json" in manifest["outputs"]
        assert len(manifest["config_sha256"]) == 64

    def test_slow_measurement_reported_not_ok(self, tmp_path):
        code, out = _run(tmp_path, "spacelike-check", """
            spacelike_check:
              separation_m: 3.0
              total_measurement_time_s: 12e-9
            """)
        assert code == EXIT_OK  # the check ran; "not spacelike" is a result
        assert json.loads((out / "spacelike_check.json").read_text())["ok"] is False


class TestLightShiftCommand:
    def test_reports_shift(self, tmp_path):
        code, out = _run(tmp_path, "light-shift", """
            light_shift: {species: Sr, linewidth_hz: 1.0e8}
            """)
        assert code == EXIT_OK
        report = json.loads((out / "light_shift.json").read_text())
        assert report["differential_shift_hz"] == pytest.approx(2.3e-10 * 1e8)

    def test_species_without_slope_is_config_error(self, tmp_path):
        code, _ = _run(tmp_path, "light-shift", """
            light_shift: {species: Yb, linewidth_hz: 1.0e8}
            """)
        assert code == EXIT_CONFIG


class TestConfigErrors:
    def test_unknown_key(self, tmp_path):
        code, _ = _run(tmp_path, "light-shift", """
            light_shift: {species: Sr, line_width_hz: 1.0e8}
            """)
        assert code == EXIT_CONFIG

    def test_missing_section_for_command(self, tmp_path):
        code, _ = _run(tmp_path, "spacelike-check", """
            light_shift: {species: Sr, linewidth_hz: 1.0e8}
            """)
        assert code == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        code = main(["light-shift", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG

    def test_bad_workers(self, tmp_path):
        code, _ = _run(tmp_path, "light-shift", """
            light_shift: {species: Sr, linewidth_hz: 1.0e8}
            """, extra=("--workers", "0"))
        assert code == EXIT_CONFIG

    def test_shots_without_seed(self, tmp_path):
        code, _ = _run(tmp_path, "bell-scan", """
            bell_scan:
              irradiances_w_cm2: [1.0e9]
              shots: 100
            """)
        assert code == EXIT_CONFIG


class TestBellScanCommand:
    def test_scan_with_shots_is_deterministic(self, tmp_path):
        config = """
            bell_scan:
              irradiances_w_cm2: [1.0e9]
              efficiency: 0.99
              shots: 200
            """
        code1, out1 = _run(tmp_path, "bell-scan", config,
                           extra=("--seed", "7"))
        assert code1 == EXIT_OK
        scan1 = (out1 / "bell_scan.csv").read_bytes()
        counts1 = (out1 / "bell_counts.csv").read_bytes()

        tmp2 = tmp_path / "rerun"
        tmp2.mkdir()
        code2, out2 = _run(tmp2, "bell-scan", config, extra=("--seed", "7"))
        assert code2 == EXIT_OK
        assert (out2 / "bell_scan.csv").read_bytes() == scan1
        assert (out2 / "bell_counts.csv").read_bytes() == counts1

        sampled = json.loads((out1 / "bell_sampled.json").read_text())
        assert sampled["seed"] == 7
        assert 1.5 < sampled["bell_estimate"] < 2.9

    def test_bell_value_exceeds_threshold(self, tmp_path):
        code, out = _run(tmp_path, "bell-scan", """
            bell_scan:
              irradiances_w_cm2: [1.0e9]
              efficiency: 0.99
            """)
        assert code == EXIT_OK
        lines = (out / "bell_scan.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        row = dict(zip(header, lines[1].split(",")))
        assert float(row["bell_value"]) > float(row["threshold"])
        assert float(row["time_ns"]) > 0


class TestSpectraCommand:
    def test_writes_one_csv_per_sector(self, tmp_path):
        code, out = _run(tmp_path, "spectra", """
            spectra:
              separations_sigma: {start: 12.0, stop: 8.0, count: 2}
              sectors: [psi_minus]
              levels_per_sector: 2
              grid: {n: 64, margin_sigma: 10.0}
            """)
        assert code == EXIT_OK
        lines = (out / "spectrum_psi_minus.csv").read_text().strip().splitlines()
        assert lines[0] == "d_sigma,level,energy_hbar_omega0,symmetry"
        assert len(lines) == 5  # 2 separations x 2 levels
        first = lines[1].split(",")
        assert float(first[0]) == 12.0 and int(first[3]) == -1


class TestGateCommand:
    @pytest.mark.slow
    def test_gate_report(self, tmp_path):
        code, out = _run(tmp_path, "gate", """
            gate:
              schedule:
                d_max_sigma: 10.0
                d_min_sigma: 8.5
                speed_sigma_per_tau: 0.05
                hold_tau: 1.0
              method: energy-integral
              spectrum_points: 5
              grid: {n: 64, margin_sigma: 10.0}
            """)
        assert code == EXIT_OK
        report = json.loads((out / "gate_report.json").read_text())
        entry = report["energy-integral"]
        # non-interacting schedule: the combination vanishes and the gate
        # sits in the identity class
        assert abs(entry["combination"]) < 1e-6
        assert entry["gamma"] == pytest.approx(0.0, abs=1e-6)
        # flagged schedules surface as warnings, never as failures
        adiabaticity = report["adiabaticity"]
        assert adiabaticity["worst_ratio"] > 0
        assert adiabaticity["flagged"] == ("warnings" in report)

    @pytest.mark.slow
    def test_unreachable_gamma_target_is_config_error(self, tmp_path):
        # with no interaction the combination is pinned at zero, so no
        # 2 pi representative of the target is reachable
        code, _ = _run(tmp_path, "gate", """
            gate:
              schedule:
                d_max_sigma: 10.0
                d_min_sigma: 8.5
                speed_sigma_per_tau: 0.05
              method: energy-integral
              gamma_target_rad: 3.141592653589793
              spectrum_points: 5
              grid: {n: 64, margin_sigma: 10.0}
            """)
        assert code == EXIT_CONFIG


class TestRotationScanCommand:
    def test_gaps_give_partial_exit(self, tmp_path):
        # second wavelength is unphysical; the scan keeps going and flags it
        code, out = _run(tmp_path, "rotation-scan", """
            rotation_scan:
              axis: wavelength
              values: [688.7, -1.0]
            """)
        assert code == EXIT_PARTIAL
        lines = (out / "rotation_scan.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        good = lines[1].split(",")
        assert float(good[1]) > 0.9          # f_min at the line center
        assert lines[2].split(",")[1] == ""  # gap row has empty f_min

    def test_clean_scan_exit_ok(self, tmp_path):
        code, out = _run(tmp_path, "rotation-scan", """
            rotation_scan:
              axis: wavelength
              values: [688.7]
            """)
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert "rotation_scan.csv" in manifest["outputs"]
