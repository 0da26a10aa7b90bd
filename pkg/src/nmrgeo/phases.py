"""Cyclic evolutions of one spin: total, dynamic and geometric phases.

Conventions (hbar = 1):

* total phase      gamma   = arg <psi(0)|psi(T)>
* dynamic phase    gamma_d = -integral <psi|H|psi> dt
* geometric phase  gamma_g = gamma - gamma_d, which for spin 1/2 equals
  minus half the solid angle swept by the Bloch vector.

Trajectories are built in one of two pictures. In the ``rotating`` picture
hard pulses are sampled as arcs of the Bloch sphere with their generator as
the instantaneous Hamiltonian (measured per unit pulse parameter, so an
instantaneous pulse still contributes ``-angle * <n.I>``). In the ``toggling``
picture the state is viewed in the frame carried along by the pulses on the
active spin; pulses then leave the state in place and delays act through the
pulse-conjugated Hamiltonian. The two pictures agree on the total phase when
the pulses compose to the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from nmrgeo.quantum import IX, IY, IZ, Operator, StateVector, bloch_vector, spin_index
from nmrgeo.sequence import CompiledProgram
from nmrgeo.spins import (
    NOISELESS,
    Delay,
    GradientCrusher,
    HardPulse,
    NoiseConfig,
    SpinSystem,
    conditional_block,
    frame_hamiltonian,
    pulse_matrix,
)

CLOSURE_TOL = 1e-8
QUADRATURE_TOL = 1e-7


class NonCyclicError(RuntimeError):
    def __init__(self, distance: float):
        self.distance = distance
        super().__init__(f"evolution is not cyclic: Bloch vector reopens by {distance:.3e}")


class QuadratureError(RuntimeError):
    pass


def wrap_phase(x: float) -> float:
    """Map an angle to (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


@dataclass(frozen=True, eq=False)
class Segment:
    """Samples of one event.

    ``params`` are times in seconds for delays and the pulse parameter in
    [0, 1] for pulses; ``hamiltonians`` are in rad/s and rad respectively, so
    that integrating over ``params`` gives a dimensionless phase either way.
    """

    kind: str
    start_time: float
    duration: float
    params: np.ndarray
    states: np.ndarray  # (n, 2)
    hamiltonians: np.ndarray  # (n, 2, 2)


@dataclass(frozen=True, eq=False)
class Trajectory:
    initial: StateVector
    segments: tuple
    closed_flag: bool
    reopening: float
    picture: str
    frame_phase: float = 0.0

    @property
    def final(self) -> StateVector:
        if not self.segments:
            return self.initial
        return StateVector.normalized(self.segments[-1].states[-1])

    @property
    def samples(self) -> list:
        """(time, StateVector, Operator) triples in order; pulses share one time."""
        out = [(0.0, self.initial, None)]
        for seg in self.segments:
            times = seg.start_time + (seg.params if seg.kind == "delay" else 0.0 * seg.params)
            for t, psi, h in zip(times[1:], seg.states[1:], seg.hamiltonians[1:]):
                out.append((float(t), StateVector.normalized(psi), Operator(h)))
        return out

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def bloch_points(self) -> np.ndarray:
        pts = [bloch_vector(self.initial)]
        for seg in self.segments:
            pts.extend(_bloch_rows(seg.states[1:]))
        return np.array(pts)


def _bloch_rows(states: np.ndarray) -> list:
    out = []
    for psi in states:
        a, b = psi
        out.append(
            np.array([2 * (np.conj(a) * b).real, 2 * (np.conj(a) * b).imag, abs(a) ** 2 - abs(b) ** 2])
        )
    return out


def _is_flip(angle: float) -> bool:
    return math.isclose(abs(angle), math.pi, abs_tol=1e-12)


def _infer_active_spin(prog: CompiledProgram) -> str:
    candidates = {e.target for e in prog.events if isinstance(e, HardPulse) and not _is_flip(e.rotation_angle)}
    if len(candidates) == 1:
        return candidates.pop()
    if not candidates:
        targets = {e.target for e in prog.events if isinstance(e, HardPulse)}
        if len(targets) == 1:
            return targets.pop()
    raise ValueError("cannot infer the active spin; pass spin='a' or spin='b'")


def _net_active_pulse(prog: CompiledProgram, spin: str, noise: NoiseConfig) -> np.ndarray:
    p = np.eye(2, dtype=complex)
    for e in prog.events:
        if isinstance(e, HardPulse) and e.target == spin:
            p = pulse_matrix(e.rotation_angle * noise.amplitude_scale, e.phase_axis) @ p
    return p


def _scalar_phase(p: np.ndarray) -> float | None:
    """Phase a when p = e^{ia} I, else None."""
    if abs(p[0, 1]) < 1e-12 and abs(p[1, 0]) < 1e-12 and abs(p[0, 0] - p[1, 1]) < 1e-12:
        return float(np.angle(p[0, 0]))
    return None


def evolve_cyclic(
    initial: StateVector,
    prog: CompiledProgram,
    sys: SpinSystem,
    samples_per_event: int = 64,
    *,
    spin: str | None = None,
    other_state: int = 0,
    picture: str = "auto",
    noise: NoiseConfig = NOISELESS,
    require_closed: bool = True,
) -> Trajectory:
    """Sample the single-spin path traced by ``prog`` starting from ``initial``.

    The other spin must stay in a z eigenstate (``other_state`` 0 = up): it
    may only receive pi pulses, which flip it and switch the conditional
    Hamiltonian. ``picture="auto"`` picks the toggling picture when the
    active-spin pulses compose to a multiple of the identity, otherwise the
    rotating picture.
    """
    if initial.dim != 2:
        raise ValueError("evolve_cyclic follows a single spin; pass a dimension-2 state")
    if samples_per_event < 8:
        raise ValueError("samples_per_event must be at least 8")
    if prog.has_crusher:
        raise ValueError("a crusher is not a unitary evolution")
    n = int(math.ceil(samples_per_event / 4) * 4)
    spin = spin or _infer_active_spin(prog)
    spin_index(spin)
    other = "b" if spin == "a" else "a"

    net = _net_active_pulse(prog, spin, noise)
    frame_phase = 0.0
    if picture == "auto":
        picture = "toggling" if _scalar_phase(net) is not None else "rotating"
    if picture == "toggling":
        frame_phase = _scalar_phase(net)
        if frame_phase is None:
            raise ValueError("toggling picture needs pulses that compose to the identity")
    elif picture != "rotating":
        raise ValueError(f"unknown picture {picture!r}")

    h_full = frame_hamiltonian(sys, prog.frame)
    frame = np.eye(2, dtype=complex)  # accumulated active-spin pulses (toggling)
    psi = initial.amplitudes.copy()
    t = 0.0
    segments = []
    for event in prog.events:
        if isinstance(event, HardPulse):
            angle = event.rotation_angle * noise.amplitude_scale
            if event.target == other:
                if not _is_flip(event.rotation_angle):
                    raise ValueError(
                        f"spin {other} must stay in a z eigenstate; got a {angle:.4f} rad pulse on it"
                    )
                other_state ^= 1
                continue
            if picture == "toggling":
                frame = pulse_matrix(angle, event.phase_axis) @ frame
                continue
            gen = angle * (math.cos(event.phase_axis) * IX + math.sin(event.phase_axis) * IY)
            params = np.linspace(0.0, 1.0, n + 1)
            states = np.array([expm(-1j * s * gen) @ psi for s in params])
            segments.append(Segment("pulse", t, 0.0, params, states, np.repeat(gen[None], n + 1, axis=0)))
            psi = states[-1]
        elif isinstance(event, Delay):
            h = conditional_block(h_full, spin, other_state)
            if picture == "toggling":
                h = frame.conj().T @ h @ frame
            params = np.linspace(0.0, event.duration, n + 1)
            states = np.array([expm(-1j * h * s) @ psi for s in params])
            segments.append(Segment("delay", t, event.duration, params, states, np.repeat(h[None], n + 1, axis=0)))
            psi = states[-1]
            t += event.duration
        elif isinstance(event, GradientCrusher):
            raise ValueError("a crusher is not a unitary evolution")

    r0 = bloch_vector(initial)
    rf = bloch_vector(StateVector.normalized(psi))
    reopening = float(np.linalg.norm(rf - r0))
    closed = reopening < CLOSURE_TOL
    if require_closed and not closed:
        raise NonCyclicError(reopening)
    return Trajectory(initial, tuple(segments), closed, reopening, picture, frame_phase)


def total_phase(traj: Trajectory) -> float:
    """arg <psi(0)|psi(T)> in (-pi, pi]."""
    if not traj.closed_flag:
        raise NonCyclicError(traj.reopening)
    overlap = np.vdot(traj.initial.amplitudes, traj.final.amplitudes)
    return wrap_phase(float(np.angle(overlap)) + traj.frame_phase)


def _segment_energy(seg: Segment) -> np.ndarray:
    return np.einsum("ni,nij,nj->n", seg.states.conj(), seg.hamiltonians, seg.states).real


def dynamic_phase(traj: Trajectory, *, strict: bool = True) -> float:
    """-integral <H> dt by composite Simpson per event, with a halving check.

    Not wrapped: the value accumulates across events. ``strict=False`` allows
    open (noisy) trajectories.
    """
    if strict and not traj.closed_flag:
        raise NonCyclicError(traj.reopening)
    total = 0.0
    for seg in traj.segments:
        energy = _segment_energy(seg)
        fine = simpson(energy, x=seg.params)
        coarse = simpson(energy[::2], x=seg.params[::2])
        if abs(fine - coarse) > QUADRATURE_TOL:
            raise QuadratureError(
                f"Simpson estimates differ by {abs(fine - coarse):.2e}; increase samples_per_event"
            )
        total -= fine
    return total


def geometric_phase(traj: Trajectory) -> float:
    return wrap_phase(total_phase(traj) - dynamic_phase(traj))


# --------------------------------------------------------------------------- loops


@dataclass(frozen=True, eq=False)
class BlochLoop:
    """A closed path on the unit sphere.

    ``theta`` is the polar angle (from +z) of the loop's off-pole vertex and
    ``delta_phi`` the azimuthal span of its latitude leg; both are None for
    loops taken from a trajectory.
    """

    points: np.ndarray
    theta: float | None = None
    delta_phi: float | None = None
    variant: str = "trajectory"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 1:
            raise ValueError("loop points must be an (n, 3) array")
        if np.max(np.abs(np.linalg.norm(pts, axis=1) - 1)) > 1e-10:
            raise ValueError("loop points must lie on the unit sphere")
        object.__setattr__(self, "points", pts)

    @property
    def closed(self) -> bool:
        return bool(np.linalg.norm(self.points[0] - self.points[-1]) < CLOSURE_TOL)


def _sph(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def bloch_loop(theta: float, delta_phi: float = math.pi, variant: str = "north", samples: int = 256) -> BlochLoop:
    """Parametrized loops of the experiments.

    * ``north``: N -> A (polar theta) along a meridian, latitude arc of
      ``delta_phi`` to B, meridian back to N.
    * ``south-mirror``: the same construction around the south pole, with A'
      at polar angle ``theta`` measured from N.
    * ``EFN``: E (polar theta, azimuth 0) -> F along the latitude, then F -> N
      -> E along meridians.
    """
    s = np.linspace(0.0, 1.0, samples + 1)
    if variant == "north":
        p0 = -delta_phi / 2
        legs = [
            _sph(s * theta, np.full_like(s, p0)),
            _sph(np.full_like(s, theta), p0 + s * delta_phi),
            _sph((1 - s) * theta, np.full_like(s, p0 + delta_phi)),
        ]
    elif variant == "south-mirror":
        p0 = math.pi - delta_phi / 2
        legs = [
            _sph(math.pi - s * (math.pi - theta), np.full_like(s, p0)),
            _sph(np.full_like(s, theta), p0 + s * delta_phi),
            _sph(theta + s * (math.pi - theta), np.full_like(s, p0 + delta_phi)),
        ]
    elif variant == "EFN":
        legs = [
            _sph(np.full_like(s, theta), s * delta_phi),
            _sph((1 - s) * theta, np.full_like(s, delta_phi)),
            _sph(s * theta, np.zeros_like(s)),
        ]
    else:
        raise ValueError(f"unknown loop variant {variant!r}")
    points = np.concatenate([legs[0], legs[1][1:], legs[2][1:]])
    return BlochLoop(points, theta, delta_phi, variant)


def loop_from_trajectory(traj: Trajectory) -> BlochLoop:
    return BlochLoop(traj.bloch_points())


_CANDIDATE_AXES = [
    np.array(v, dtype=float)
    for v in ((0, 0, 1), (0, 0, -1), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
]


POLE_TOL = 1e-6


def _pick_axis(points: np.ndarray) -> np.ndarray:
    """Axis for the polar line integral; the path must avoid its antipode.

    +z or -z comes first whenever the path avoids that antipode at all:
    latitude and meridian arcs about z integrate exactly there, however close
    they pass. Otherwise the x or y axis with the widest clearance is used,
    where sampled arcs converge as O(h^2).
    """
    clearance = [float(np.min(np.linalg.norm(points + axis, axis=1))) for axis in _CANDIDATE_AXES]
    best_z = int(np.argmax(clearance[:2]))
    if clearance[best_z] > POLE_TOL:
        return _CANDIDATE_AXES[best_z]
    return _CANDIDATE_AXES[int(np.argmax(clearance))]


def solid_angle(loop: BlochLoop, axis: Sequence[float] | None = None) -> float:
    """Signed solid angle enclosed by the loop, as the line integral
    of (1 - cos chi) dphi in polar coordinates about ``axis``.

    Positive for counter-clockwise traversal seen from outside the sphere
    above the enclosed region. Results for different axes agree modulo 4 pi.
    """
    if not loop.closed:
        raise ValueError("solid angle needs a closed loop")
    pts = loop.points
    n = _pick_axis(pts) if axis is None else np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - n * (helper @ n)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    c = np.clip(pts @ n, -1.0, 1.0)
    phi = np.arctan2(pts @ e2, pts @ e1)
    at_pole = np.hypot(pts @ e1, pts @ e2) < POLE_TOL
    dphi = np.remainder(np.diff(phi) + math.pi, 2 * math.pi) - math.pi
    dphi[at_pole[:-1] | at_pole[1:]] = 0.0
    weight = 1.0 - 0.5 * (c[:-1] + c[1:])
    return float(np.sum(weight * dphi))


# --------------------------------------------------------------------------- reports and fits


@dataclass(frozen=True)
class PhaseReport:
    gamma_total: float
    gamma_dynamic: float
    gamma_geometric: float
    solid_angle: float


def phase_report(traj: Trajectory) -> PhaseReport:
    gamma = total_phase(traj)
    gd = dynamic_phase(traj)
    return PhaseReport(gamma, gd, wrap_phase(gamma - gd), solid_angle(loop_from_trajectory(traj)))


class DegenerateSweepError(ValueError):
    pass


@dataclass(frozen=True)
class UnconventionalFit:
    """Least-squares line gamma_d = alpha_g + eta * gamma_g."""

    alpha_g: float
    eta: float
    max_residual: float
    residuals: tuple = field(default=(), repr=False)


def fit_unconventional(points: Sequence[tuple[float, float]]) -> UnconventionalFit:
    """Fit (gamma_dynamic, gamma_geometric) pairs to a straight line."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateSweepError(f"need at least 3 sweep points, got {len(pts)}")
    gd, gg = pts[:, 0], pts[:, 1]
    if np.ptp(gg) < 1e-12:
        raise DegenerateSweepError("all geometric phases are equal; the slope is undetermined")
    design = np.column_stack([np.ones_like(gg), gg])
    (alpha, eta), *_ = np.linalg.lstsq(design, gd, rcond=None)
    resid = gd - (alpha + eta * gg)
    return UnconventionalFit(float(alpha), float(eta), float(np.max(np.abs(resid))), tuple(resid))


def closed_form_phases(theta: float, variant: str = "up") -> tuple[float, float]:
    """(gamma_d, gamma_g) of the interferometer loop with vertex polar angle theta."""
    if variant == "up":
        return -math.pi * math.cos(theta) / 2, -math.pi * (1 - math.cos(theta)) / 2
    if variant == "mirror":
        return -math.pi * math.cos(theta) / 2, math.pi * (1 + math.cos(theta)) / 2
    raise ValueError(f"unknown variant {variant!r}")
