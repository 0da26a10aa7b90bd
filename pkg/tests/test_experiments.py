import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from nmrgeo.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    GateSynthesisError,
    SweepRecord,
    emit_results,
    gate_programs,
    load_results,
    run_fig3_sweep,
    run_gate_suite,
    run_interferometer,
    run_prep_check,
    run_tomography,
    with_noise,
)
from nmrgeo.phases import DegenerateSweepError, closed_form_phases, wrap_phase
from nmrgeo.quantum import ket, partial_trace, tensor
from nmrgeo.sequence import PREP_SEQUENCE, run_program
from nmrgeo.spins import T2_ONLY, NoiseConfig, SpinSystem

DEFAULT = ExperimentConfig()


@pytest.fixture(scope="module")
def sweep():
    return run_fig3_sweep(DEFAULT)


class TestConfig:
    @pytest.mark.parametrize("grid", [(0, 9, 0), (5, 4, 18), (0, 19, 18), (-1, 3, 18)])
    def test_invalid_grids(self, grid):
        with pytest.raises(ValueError):
            ExperimentConfig(sweep=grid)

    def test_invalid_format(self):
        with pytest.raises(ValueError):
            ExperimentConfig(fmt="xml")

    def test_from_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("j_hz = 100.0\n[sweep]\nn_start = 0\nn_end = 4\ndenom = 8\n")
        cfg = ExperimentConfig.from_file(path, seed=5)
        assert cfg.system.j_coupling == 100.0 and cfg.grid() == [0, 1, 2, 3, 4] and cfg.seed == 5


class TestInterferometer:
    def test_theta_zero_is_pure_dynamic(self):
        rec = run_interferometer(0.0, "up", DEFAULT)
        assert abs(rec.phase_measured + math.pi / 2) < 1e-8
        assert abs(rec.gamma_dynamic + math.pi / 2) < 1e-8
        assert abs(rec.gamma_geometric) < 1e-8

    def test_rejects_theta_out_of_range(self):
        with pytest.raises(ValueError):
            run_interferometer(4.0, "up", DEFAULT)
        with pytest.raises(ValueError):
            run_interferometer(1.0, "sideways", DEFAULT)

    @pytest.mark.parametrize("theta", [0.4, 1.2, 2.5])
    def test_auxiliary_populations_unchanged(self, theta):
        from nmrgeo.experiments import interferometer_program

        sys = DEFAULT.system
        for b in ("0", "1"):
            rho0 = tensor(ket("+"), ket(b)).projector()
            rho = run_program(rho0, interferometer_program(sys, theta), sys)
            before, after = partial_trace(rho0, "a").matrix, partial_trace(rho, "a").matrix
            assert np.max(np.abs(np.diag(after) - np.diag(before))) < 1e-10
            assert abs(abs(after[0, 1]) - abs(before[0, 1])) < 1e-10


class TestSweep:
    def test_shape_and_order(self, sweep):
        records, _ = sweep
        assert len(records) == 20
        assert [r.loop_variant for r in records] == ["up"] * 10 + ["mirror"] * 10
        up = [r.theta for r in records[:10]]
        mirror = [r.theta for r in records[10:]]
        assert up == sorted(up) and mirror == sorted(mirror)
        assert mirror[0] == pytest.approx(math.pi / 2) and mirror[-1] == pytest.approx(math.pi)

    def test_phases(self, sweep):
        records, fit = sweep
        for r in records:
            target = -math.pi / 2 if r.loop_variant == "up" else math.pi / 2
            assert abs(r.phase_measured - target) < 1e-8
            assert -math.pi < r.phase_measured <= math.pi
            assert abs(wrap_phase(r.phase_measured - r.gamma_dynamic - r.gamma_geometric)) < 1e-8
            gd, gg = closed_form_phases(r.theta, r.loop_variant)
            assert abs(r.gamma_dynamic - gd) < 1e-6
            assert abs(wrap_phase(r.gamma_geometric - gg)) < 1e-6
        assert abs(fit.alpha_g + math.pi / 2) < 1e-6 and abs(fit.eta + 1) < 1e-6
        assert fit.max_residual < 1e-6

    def test_single_point_grid_is_degenerate(self):
        with pytest.raises(DegenerateSweepError):
            run_fig3_sweep(ExperimentConfig(sweep=(3, 3, 18)))

    def test_noisy_grid_reports_residual(self):
        noise = NoiseConfig(enabled=True, pulse_amplitude_error=0.02, dephasing_enabled=True)
        records, fit = run_fig3_sweep(with_noise(DEFAULT, noise))
        assert fit.max_residual > 0
        assert len(records) == 20
        assert any(abs(r.phase_measured + math.pi / 2) > 1e-6 for r in records if r.loop_variant == "up")

    def test_parallel_matches_serial(self, sweep):
        records, fit = run_fig3_sweep(replace(DEFAULT, workers=4))
        assert records == sweep[0]
        assert fit.alpha_g == sweep[1].alpha_g

    def test_emits_when_configured(self, tmp_path):
        out = tmp_path / "sweep.json"
        run_fig3_sweep(replace(DEFAULT, output=out, fmt="json"))
        assert len(json.loads(out.read_text())) == 20


class TestPrep:
    def test_reference_constants(self):
        rep = run_prep_check(DEFAULT)
        assert rep.passed and rep.residual < 1e-8
        assert rep.mu == pytest.approx(2 * DEFAULT.epsilon, rel=1e-6)
        assert rep.lam == pytest.approx(1 - 2 * DEFAULT.epsilon, rel=1e-9)
        expected = rep.lam * np.eye(4) / 4
        expected[0, 0] += rep.mu
        assert np.max(np.abs(rep.rho - expected)) < 1e-15

    def test_zero_epsilon(self):
        rep = run_prep_check(replace(DEFAULT, epsilon=0.0))
        assert rep.passed and abs(rep.mu) < 1e-15

    def test_without_final_crusher(self):
        seq = PREP_SEQUENCE.rsplit("-", 1)[0]
        rep = run_prep_check(DEFAULT, seq)
        assert not rep.passed and rep.residual > 1e-3

    @pytest.mark.parametrize("eps", [1e-6, 1e-3, 0.05])
    def test_scale_invariance(self, eps):
        rep = run_prep_check(replace(DEFAULT, epsilon=eps))
        assert rep.passed and rep.mu == pytest.approx(2 * eps, rel=1e-6)


class TestGateSuite:
    def test_noiseless(self):
        res = run_gate_suite(DEFAULT)
        assert set(res) == {"U1", "U2", "Uc"}
        for r in res.values():
            assert r.fidelity.haar >= 1 - 1e-9 and r.fidelity.process >= 1 - 1e-9
            assert r.unitary_error < 1e-8
        assert all(v >= 1 - 1e-9 for v in res["U1"].fidelity.per_state.values())
        assert res["U1"].duration == pytest.approx(1 / (4 * 214.5))

    def test_t2_ordering(self):
        res = run_gate_suite(with_noise(DEFAULT, T2_ONLY))
        f = {k: v.fidelity.haar for k, v in res.items()}
        assert all(v < 1 for v in f.values())
        assert f["U1"] > f["Uc"]
        assert res["Uc"].duration > res["U1"].duration

    def test_monte_carlo_column(self):
        res = run_gate_suite(with_noise(DEFAULT, T2_ONLY), monte_carlo=500)
        for r in res.values():
            assert r.mc_fidelity == pytest.approx(r.fidelity.haar, abs=0.01)

    def test_bad_synthesis_detected(self, monkeypatch):
        import nmrgeo.experiments as ex

        real = ex.gate_programs

        def swapped(sys, uc_theta=math.pi / 4):
            progs = real(sys, uc_theta)
            progs["U1"], progs["U2"] = progs["U2"], progs["U1"]
            return progs

        monkeypatch.setattr(ex, "gate_programs", swapped)
        with pytest.raises(GateSynthesisError):
            run_gate_suite(DEFAULT)

    @pytest.mark.parametrize("theta", [0.1, math.pi / 4, 2.0])
    def test_uc_independent_of_loop_angle(self, theta):
        res = run_gate_suite(replace(DEFAULT, uc_theta=theta))
        assert res["Uc"].unitary_error < 1e-8

    def test_tomography(self):
        result, f = run_tomography(DEFAULT, "uc")
        assert f >= 1 - 1e-8 and result.dim == 4
        result, f = run_tomography(DEFAULT, "U1")
        assert f >= 1 - 1e-8 and result.dim == 2

    def test_programs_use_expected_frames(self):
        sys = SpinSystem()
        progs = gate_programs(sys)
        assert progs["U1"].frame.carrier_a == pytest.approx(sys.omega_a - 4 * math.pi * sys.j_coupling)
        assert progs["Uc"].frame.carrier_b == pytest.approx(sys.omega_b - math.pi * sys.j_coupling)


class TestEmit:
    def test_empty_csv(self, tmp_path):
        path = emit_results([], tmp_path / "e.csv")
        assert path.read_text() == ",".join(CSV_HEADER) + "\n"
        assert load_results(path) == []

    def test_empty_json(self, tmp_path):
        path = emit_results([], tmp_path / "e.json", "json")
        assert json.loads(path.read_text()) == []

    def test_csv_rows(self, sweep, tmp_path):
        path = emit_results(sweep[0], tmp_path / "s.csv")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 21
        for row in rows[1:]:
            for cell in (row[0], row[2], row[3], row[4]):
                assert cell == f"{float(cell):.12g}"

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, sweep, tmp_path, fmt):
        path = emit_results(sweep[0], tmp_path / f"s.{fmt}", fmt)
        back = load_results(path)
        assert [r.loop_variant for r in back] == [r.loop_variant for r in sweep[0]]
        for a, b in zip(back, sweep[0]):
            for x, y in ((a.theta, b.theta), (a.phase_measured, b.phase_measured),
                         (a.gamma_dynamic, b.gamma_dynamic), (a.gamma_geometric, b.gamma_geometric)):
                assert x == pytest.approx(y, rel=1e-11, abs=1e-12)

    def test_deterministic_bytes(self, tmp_path):
        a = emit_results(run_fig3_sweep(DEFAULT)[0], tmp_path / "a.json", "json").read_bytes()
        b = emit_results(run_fig3_sweep(DEFAULT)[0], tmp_path / "b.json", "json").read_bytes()
        assert a == b

    def test_order_is_canonical(self, tmp_path):
        recs = [SweepRecord(1.0, 0, 0, 0, "mirror"), SweepRecord(0.5, 0, 0, 0, "up"), SweepRecord(0.2, 0, 0, 0, "up")]
        back = load_results(emit_results(recs, tmp_path / "o.csv"))
        assert [(r.loop_variant, r.theta) for r in back] == [("up", 0.2), ("up", 0.5), ("mirror", 1.0)]

    def test_io_error(self, tmp_path):
        with pytest.raises(OSError):
            emit_results([], tmp_path / "missing" / "x.csv")
