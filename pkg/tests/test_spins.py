import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmrgeo.quantum import IY, IZ, DensityOperator, Operator, StateVector, ket, partial_trace, spin_op, tensor
from nmrgeo.spins import (
    NOISELESS,
    T2_ONLY,
    Delay,
    FrameSpec,
    HardPulse,
    NoiseConfig,
    SpinSystem,
    apply_crusher,
    apply_delay,
    apply_hard_pulse,
    conditional_block,
    conditional_frame,
    delay_unitary,
    frame_hamiltonian,
    frame_transform,
    load_config,
    offset_a_frame,
    on_resonance_frame,
    parse_config,
    thermal_state,
)
from tests.strategies import angles, density_matrices, pure_states

J = 214.5
IZA, IZB = spin_op("a", "z"), spin_op("b", "z")


class TestSpinSystem:
    def test_defaults(self, system):
        assert system.j_coupling == 214.5
        assert (system.t2_a, system.t2_b) == (0.35, 3.3)
        assert system.omega_b / system.omega_a == pytest.approx(4.0)

    @pytest.mark.parametrize("kw", [{"j_coupling": 0}, {"j_coupling": -1}, {"t2_a": 0}, {"t2_b": -3}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SpinSystem(**kw)

    def test_weak_coupling_warning(self):
        with pytest.warns(UserWarning, match="weak-coupling"):
            SpinSystem(omega_a=0.0, omega_b=2 * math.pi * 50 * J)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            SpinSystem()

    def test_scaled_t2(self, system):
        s = system.scaled_t2(0.1)
        assert (s.t2_a, s.t2_b) == pytest.approx((0.035, 0.33))
        assert s.t2("b") == s.t2_b


class TestFrameHamiltonian:
    def test_conditional_frame_blocks(self, system):
        h = frame_hamiltonian(system, conditional_frame(system))
        assert h.is_hermitian()
        up = conditional_block(h, "b", 0)
        down = conditional_block(h, "b", 1)
        # the subtraction of carriers near 400 MHz leaves ~1e-7 rad/s of rounding
        assert np.max(np.abs(up - 2 * math.pi * J * IZ)) < 1e-6
        assert np.max(np.abs(down)) < 1e-6

    def test_on_resonance(self, system):
        h = frame_hamiltonian(system, on_resonance_frame(system)).matrix
        assert np.allclose(h, 2 * math.pi * J * IZA @ IZB, atol=1e-12)

    def test_offset_a(self, system):
        h = frame_hamiltonian(system, offset_a_frame(system)).matrix
        expected = 4 * math.pi * J * IZA + 2 * math.pi * J * IZA @ IZB
        assert np.max(np.abs(h - expected)) < 1e-6

    def test_frame_requires_finite(self):
        with pytest.raises(ValueError):
            FrameSpec(math.inf, 0.0)


class TestPulses:
    def test_rx_pi(self):
        out = apply_hard_pulse(ket("0"), HardPulse("a", 0.0, math.pi))
        assert np.allclose(out.amplitudes, [0, -1j])

    def test_ry_half_pi(self):
        out = apply_hard_pulse(ket("0"), HardPulse("a", math.pi / 2, math.pi / 2))
        assert np.allclose(out.amplitudes, np.array([1, 1]) / math.sqrt(2))

    def test_rx_conjugation_of_iz(self):
        a = math.pi / 3
        rho = DensityOperator(np.eye(2) / 2 + 0.1 * IZ)
        out = apply_hard_pulse(rho, HardPulse("a", 0.0, a)).matrix
        expected = np.eye(2) / 2 + 0.1 * (math.cos(a) * IZ - math.sin(a) * IY)
        assert np.max(np.abs(out - expected)) < 1e-14

    def test_invalid(self):
        with pytest.raises(ValueError):
            HardPulse("c", 0.0, 1.0)
        with pytest.raises(ValueError):
            HardPulse("a", 0.0, 7.0)
        with pytest.raises(TypeError):
            apply_hard_pulse(ket("0"), Delay(1.0))

    def test_amplitude_error_only_when_enabled(self):
        ev = HardPulse("a", 0.0, math.pi)
        off = apply_hard_pulse(ket("0"), ev, NoiseConfig(pulse_amplitude_error=0.1))
        on = apply_hard_pulse(ket("0"), ev, NoiseConfig(enabled=True, pulse_amplitude_error=0.1))
        assert np.allclose(off.amplitudes, [0, -1j])
        assert abs(on.amplitudes[0]) == pytest.approx(abs(math.cos(1.1 * math.pi / 2)))

    def test_noise_bounds(self):
        with pytest.raises(ValueError):
            NoiseConfig(enabled=True, pulse_amplitude_error=0.5)

    @given(density_matrices(4), angles, angles)
    def test_pulses_on_b_leave_a_alone(self, rho, angle, phase):
        state = DensityOperator(rho)
        out = apply_hard_pulse(state, HardPulse("b", phase, angle))
        diff = partial_trace(out, "a").matrix - partial_trace(state, "a").matrix
        assert np.max(np.abs(diff)) < 1e-12


class TestDelay:
    def test_eighth_j_under_offset_gives_quarter_turn(self):
        h = Operator(4 * math.pi * J * IZA)
        u = delay_unitary(h, 1 / (8 * J))
        expected = np.kron(np.diag([np.exp(-1j * math.pi / 4), np.exp(1j * math.pi / 4)]), np.eye(2))
        assert np.max(np.abs(u - expected)) < 1e-12

    def test_zero_duration(self, system):
        h = frame_hamiltonian(system, conditional_frame(system))
        psi = tensor(ket("+"), ket("+i"))
        out = apply_delay(psi, 0.0, h, system)
        assert np.allclose(out.amplitudes, psi.amplitudes)

    def test_product_operator_oracle(self):
        # Iy^b under 2 pi J Iz^a Iz^b for 1/(2J) becomes -2 Ix^b Iz^a
        u = delay_unitary(Operator(2 * math.pi * J * IZA @ IZB), 1 / (2 * J))
        out = u @ spin_op("b", "y") @ u.conj().T
        assert np.max(np.abs(out + 2 * spin_op("b", "x") @ IZA)) < 1e-12

    def test_negative_duration(self, system):
        h = frame_hamiltonian(system, on_resonance_frame(system))
        with pytest.raises(ValueError):
            apply_delay(ket("00"), -1e-3, h, system)
        with pytest.raises(ValueError):
            Delay(-1.0)

    @given(pure_states(4), st.floats(min_value=0, max_value=0.05))
    def test_noiseless_delay_preserves_purity(self, psi, t):
        sys = SpinSystem()
        h = frame_hamiltonian(sys, conditional_frame(sys))
        rho = apply_delay(StateVector(psi).projector(), t, h, sys, NOISELESS)
        assert abs(rho.purity() - 1) < 1e-12
        out = apply_delay(StateVector(psi), t, h, sys, NOISELESS)
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-12

    @given(st.floats(min_value=1e-4, max_value=1.0))
    def test_dephasing_factor(self, t):
        sys = SpinSystem()
        h = frame_hamiltonian(sys, on_resonance_frame(sys))
        rho = tensor(ket("0"), ket("+")).projector()
        out = apply_delay(rho, t, h, sys, T2_ONLY).matrix
        assert abs(abs(out[0, 1]) - 0.5 * math.exp(-t / sys.t2_b)) < 1e-12
        rho = tensor(ket("+"), ket("0")).projector()
        out = apply_delay(rho, t, h, sys, T2_ONLY).matrix
        assert abs(abs(out[0, 2]) - 0.5 * math.exp(-t / sys.t2_a)) < 1e-12
        rho = tensor(ket("+"), ket("+")).projector()
        out = apply_delay(rho, t, h, sys, T2_ONLY).matrix
        assert abs(abs(out[0, 3]) - 0.25 * math.exp(-t / sys.t2_a - t / sys.t2_b)) < 1e-12

    def test_dephasing_needs_density(self, system):
        h = frame_hamiltonian(system, on_resonance_frame(system))
        with pytest.raises(TypeError):
            apply_delay(ket("00"), 1e-3, h, system, T2_ONLY)

    def test_dephasing_flag_needs_enabled(self):
        assert not NoiseConfig(dephasing_enabled=True).dephasing
        assert T2_ONLY.dephasing

    @given(pure_states(4), st.floats(min_value=0, max_value=0.01), st.floats(-5e3, 5e3), st.floats(-5e3, 5e3))
    def test_frame_change_consistency(self, psi, t, shift_a, shift_b):
        sys = SpinSystem()
        f1 = conditional_frame(sys)
        f2 = FrameSpec(f1.carrier_a + shift_a, f1.carrier_b + shift_b)
        state = StateVector(psi)
        in_f1 = apply_delay(state, t, frame_hamiltonian(sys, f1), sys)
        in_f2 = apply_delay(frame_transform(state, f1, f2, 0.0), t, frame_hamiltonian(sys, f2), sys)
        moved = frame_transform(in_f1, f1, f2, t)
        assert np.max(np.abs(moved.amplitudes - in_f2.amplitudes)) < 1e-10


class TestCrusher:
    def test_examples(self):
        assert np.allclose(apply_crusher(ket("+").projector()).matrix, np.eye(2) / 2)
        rho = DensityOperator(np.diag([0.1, 0.2, 0.3, 0.4]))
        assert np.array_equal(apply_crusher(rho).matrix, rho.matrix)

    def test_rejects_pure_state(self):
        with pytest.raises(TypeError):
            apply_crusher(ket("0"))

    def test_after_first_prep_pulse(self):
        eps = 1e-5
        rho = apply_hard_pulse(thermal_state(epsilon=eps), HardPulse("b", 0.0, math.pi / 3))
        out = apply_crusher(rho).matrix
        expected = np.eye(4) / 4 + eps * (IZA + 2 * IZB)
        assert np.max(np.abs(out - expected)) < 1e-15

    @given(density_matrices(4))
    def test_idempotent_and_trace_preserving(self, m):
        once = apply_crusher(DensityOperator(m))
        twice = apply_crusher(once)
        assert np.max(np.abs(once.matrix - twice.matrix)) < 1e-12
        assert abs(np.trace(once.matrix) - 1) < 1e-12


class TestThermal:
    def test_deviation_pattern(self):
        eps = 1e-5
        dev = np.diag(thermal_state(epsilon=eps).matrix).real - 0.25
        assert np.allclose(dev, np.array([5, -3, 3, -5]) / 2 * eps, atol=1e-16, rtol=0)

    def test_zero_epsilon(self):
        assert np.array_equal(thermal_state(epsilon=0.0).matrix, np.eye(4) / 4)

    @given(st.floats(min_value=0, max_value=0.09))
    def test_unit_trace(self, eps):
        assert abs(np.trace(thermal_state(epsilon=eps).matrix) - 1) < 1e-12

    @pytest.mark.parametrize("eps", [-1e-3, 0.2])
    def test_bad_epsilon(self, eps):
        with pytest.raises(ValueError):
            thermal_state(epsilon=eps)


class TestConfig:
    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            "omega_a_mhz = 125.0\nj_hz = 200.0\nt2_a_s = 0.5\nepsilon = 2e-5\n"
            "[sweep]\nn_start = 1\nn_end = 4\ndenom = 12\n"
        )
        cfg = load_config(path)
        assert cfg.system.omega_a == pytest.approx(2 * math.pi * 125e6)
        assert cfg.system.j_coupling == 200.0
        assert cfg.system.t2_a == 0.5 and cfg.system.t2_b == 3.3
        assert cfg.epsilon == 2e-5
        assert cfg.sweep == (1, 4, 12)

    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.system == SpinSystem() and cfg.sweep == (0, 9, 18)

    def test_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config"):
            parse_config({"j": 1})
        with pytest.raises(ValueError, match="unknown sweep"):
            parse_config({"sweep": {"step": 1}})
