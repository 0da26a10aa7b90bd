"""Two-spin physical model: Hamiltonian, rotating frames, pulses, delays, crushers.

Angular frequencies are in rad/s, the scalar coupling J in Hz, times in s.
"""

from __future__ import annotations

import math
import sys as _sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
from scipy.linalg import expm

from nmrgeo.quantum import (
    IX,
    IY,
    IZ,
    DensityOperator,
    Operator,
    State,
    StateVector,
    embed,
    spin_index,
    spin_op,
)

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class SpinSystem:
    """Heteronuclear two-spin system; defaults are 13C-labelled chloroform."""

    omega_a: float = TWO_PI * 100e6
    omega_b: float = TWO_PI * 400e6
    j_coupling: float = 214.5
    t2_a: float = 0.35
    t2_b: float = 3.3

    def __post_init__(self):
        if not self.j_coupling > 0:
            raise ValueError(f"j_coupling must be positive, got {self.j_coupling}")
        if not (self.t2_a > 0 and self.t2_b > 0):
            raise ValueError("T2 times must be positive")
        ratio = abs(self.omega_b - self.omega_a) / (TWO_PI * self.j_coupling)
        if ratio < 100:
            warnings.warn(
                f"weak-coupling condition marginal: |wb - wa| / 2piJ = {ratio:.1f}",
                stacklevel=2,
            )

    @classmethod
    def from_mhz(cls, omega_a_mhz=100.0, omega_b_mhz=400.0, j_hz=214.5, t2_a_s=0.35, t2_b_s=3.3):
        return cls(TWO_PI * omega_a_mhz * 1e6, TWO_PI * omega_b_mhz * 1e6, j_hz, t2_a_s, t2_b_s)

    def t2(self, spin: str) -> float:
        return (self.t2_a, self.t2_b)[spin_index(spin)]

    def scaled_t2(self, factor: float) -> SpinSystem:
        return replace(self, t2_a=self.t2_a * factor, t2_b=self.t2_b * factor)


@dataclass(frozen=True)
class FrameSpec:
    """Carrier (rotating-frame) angular frequencies of the two RF channels."""

    carrier_a: float
    carrier_b: float

    def __post_init__(self):
        if not (math.isfinite(self.carrier_a) and math.isfinite(self.carrier_b)):
            raise ValueError("carrier frequencies must be finite")


def on_resonance_frame(sys: SpinSystem) -> FrameSpec:
    """Both carriers on resonance: only the coupling term survives."""
    return FrameSpec(sys.omega_a, sys.omega_b)


def conditional_frame(sys: SpinSystem) -> FrameSpec:
    """Spin-b carrier at wb - pi J: spin b precesses at 2 pi J only when spin a is up."""
    return FrameSpec(sys.omega_a, sys.omega_b - math.pi * sys.j_coupling)


def offset_a_frame(sys: SpinSystem) -> FrameSpec:
    """Carbon carrier at wa - 4 pi J, leaving a 4 pi J Iz^a offset on spin a."""
    return FrameSpec(sys.omega_a - 2 * TWO_PI * sys.j_coupling, sys.omega_b)


@dataclass(frozen=True)
class HardPulse:
    """Instantaneous rotation exp(-i angle (cos(phase) Ix + sin(phase) Iy)) of one spin."""

    target: str
    phase_axis: float
    rotation_angle: float

    def __post_init__(self):
        spin_index(self.target)
        if not -TWO_PI < self.rotation_angle <= TWO_PI:
            raise ValueError(f"rotation angle {self.rotation_angle} outside (-2pi, 2pi]")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"delay duration must be non-negative, got {self.duration}")


@dataclass(frozen=True)
class GradientCrusher:
    pass


PulseEvent = Union[HardPulse, Delay, GradientCrusher]


@dataclass(frozen=True)
class NoiseConfig:
    """Optional imperfections. Nothing applies unless ``enabled`` is set."""

    enabled: bool = False
    pulse_amplitude_error: float = 0.0
    dephasing_enabled: bool = False

    def __post_init__(self):
        if abs(self.pulse_amplitude_error) >= 0.5:
            raise ValueError("pulse_amplitude_error must satisfy |e| < 0.5")

    @property
    def dephasing(self) -> bool:
        return self.enabled and self.dephasing_enabled

    @property
    def amplitude_scale(self) -> float:
        return 1.0 + self.pulse_amplitude_error if self.enabled else 1.0


NOISELESS = NoiseConfig()
T2_ONLY = NoiseConfig(enabled=True, dephasing_enabled=True)


def frame_hamiltonian(sys: SpinSystem, frame: FrameSpec) -> Operator:
    """H = (wa - ca) Iz^a + (wb - cb) Iz^b + 2 pi J Iz^a Iz^b in rad/s."""
    h = (
        (sys.omega_a - frame.carrier_a) * spin_op("a", "z")
        + (sys.omega_b - frame.carrier_b) * spin_op("b", "z")
        + TWO_PI * sys.j_coupling * spin_op("a", "z") @ spin_op("b", "z")
    )
    return Operator(h)


def conditional_block(h: Operator, spin: str, other_state: int) -> np.ndarray:
    """2x2 Hamiltonian seen by ``spin`` when the other spin sits in z-eigenstate ``other_state``."""
    t = h.matrix.reshape(2, 2, 2, 2)
    if spin_index(spin) == 0:
        return t[:, other_state, :, other_state].copy()
    return t[other_state, :, other_state, :].copy()


def pulse_matrix(angle: float, phase: float) -> np.ndarray:
    """Single-spin rotation exp(-i angle (cos phase Ix + sin phase Iy))."""
    gen = math.cos(phase) * IX + math.sin(phase) * IY
    # closed form; the generator squares to I/4
    return math.cos(angle / 2) * np.eye(2) - 2j * math.sin(angle / 2) * gen


def pulse_unitary(event: HardPulse, noise: NoiseConfig = NOISELESS, dim: int = 4) -> np.ndarray:
    single = pulse_matrix(event.rotation_angle * noise.amplitude_scale, event.phase_axis)
    return single if dim == 2 else embed(single, event.target)


def _conjugate(state: State, u: np.ndarray) -> State:
    if isinstance(state, StateVector):
        return StateVector.normalized(u @ state.amplitudes)
    m = u @ state.matrix @ u.conj().T
    return DensityOperator((m + m.conj().T) / 2)


def apply_hard_pulse(state: State, event: HardPulse, noise: NoiseConfig = NOISELESS) -> State:
    if not isinstance(event, HardPulse):
        raise TypeError(f"expected HardPulse, got {type(event).__name__}")
    return _conjugate(state, pulse_unitary(event, noise, dim=state.dim))


def delay_unitary(h: Operator, duration: float) -> np.ndarray:
    if duration < 0:
        raise ValueError(f"negative delay duration {duration}")
    return expm(-1j * h.matrix * duration)


def dephasing_mask(sys: SpinSystem, duration: float) -> np.ndarray:
    """Elementwise decay factors for a two-spin density matrix after ``duration``."""
    fa = math.exp(-duration / sys.t2_a)
    fb = math.exp(-duration / sys.t2_b)
    bits = np.array([(i >> 1, i & 1) for i in range(4)])
    diff_a = bits[:, None, 0] != bits[None, :, 0]
    diff_b = bits[:, None, 1] != bits[None, :, 1]
    return np.where(diff_a, fa, 1.0) * np.where(diff_b, fb, 1.0)


def apply_delay(
    state: State,
    duration: float,
    h: Operator,
    sys: SpinSystem,
    noise: NoiseConfig = NOISELESS,
) -> State:
    """Free evolution under ``h`` followed by per-spin T2 phase damping when enabled.

    The frame Hamiltonian is diagonal, so the damping commutes with the
    evolution and applying it afterwards is exact.
    """
    if duration < 0:
        raise ValueError(f"negative delay duration {duration}")
    if h.dim != state.dim:
        raise ValueError(f"Hamiltonian dimension {h.dim} does not match state {state.dim}")
    out = _conjugate(state, delay_unitary(h, duration))
    if noise.dephasing and duration > 0:
        if not isinstance(out, DensityOperator) or out.dim != 4:
            raise TypeError("T2 dephasing needs a two-spin DensityOperator")
        out = DensityOperator(out.matrix * dephasing_mask(sys, duration))
    return out


def apply_crusher(rho: DensityOperator) -> DensityOperator:
    """Gradient crusher: drop every off-diagonal element, keep populations."""
    if not isinstance(rho, DensityOperator):
        raise TypeError("the crusher is non-unitary; pass a DensityOperator, not a pure state")
    return DensityOperator(np.diag(np.diag(rho.matrix)))


DEFAULT_EPSILON = 1e-5


def thermal_deviation() -> np.ndarray:
    """Iz^a + 4 Iz^b; the 13C/1H gyromagnetic ratio is about 1/4."""
    return spin_op("a", "z") + 4 * spin_op("b", "z")


def thermal_state(sys: SpinSystem | None = None, epsilon: float = DEFAULT_EPSILON) -> DensityOperator:
    """High-temperature equilibrium I/4 + epsilon (Iz^a + 4 Iz^b)."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    m = np.eye(4, dtype=complex) / 4 + epsilon * thermal_deviation()
    if np.linalg.eigvalsh(m)[0] < 0:
        raise ValueError(f"epsilon = {epsilon} makes the thermal state non-positive (need < 0.1)")
    return DensityOperator(m)


def frame_transform(state: State, frm: FrameSpec, to: FrameSpec, t: float) -> State:
    """Re-express a state at time ``t`` from rotating frame ``frm`` into ``to``."""
    delta = (to.carrier_a - frm.carrier_a) * np.diag(embed(IZ, "a")) + (
        to.carrier_b - frm.carrier_b
    ) * np.diag(embed(IZ, "b"))
    return _conjugate(state, np.diag(np.exp(1j * delta * t)))


@dataclass(frozen=True)
class RunConfig:
    """Values read from a config file; see ``load_config``."""

    system: SpinSystem = field(default_factory=SpinSystem)
    epsilon: float = DEFAULT_EPSILON
    sweep: tuple[int, int, int] = (0, 9, 18)


_SYSTEM_KEYS = ("omega_a_mhz", "omega_b_mhz", "j_hz", "t2_a_s", "t2_b_s")


def parse_config(data: dict) -> RunConfig:
    """Build a RunConfig from a mapping with the documented keys.

    Top-level keys: omega_a_mhz, omega_b_mhz, j_hz, t2_a_s, t2_b_s, epsilon.
    A ``sweep`` table holds n_start, n_end, denom. Unknown keys are rejected.
    """
    allowed = set(_SYSTEM_KEYS) | {"epsilon", "sweep"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    system = SpinSystem.from_mhz(**{k: float(data[k]) for k in _SYSTEM_KEYS if k in data})
    sweep = data.get("sweep", {})
    bad = set(sweep) - {"n_start", "n_end", "denom"}
    if bad:
        raise ValueError(f"unknown sweep keys: {sorted(bad)}")
    grid = (int(sweep.get("n_start", 0)), int(sweep.get("n_end", 9)), int(sweep.get("denom", 18)))
    return RunConfig(system=system, epsilon=float(data.get("epsilon", DEFAULT_EPSILON)), sweep=grid)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "rb") as fh:
        return parse_config(tomllib.load(fh))
