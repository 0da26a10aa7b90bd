"""Ideal gates, state and process tomography, and average gate fidelity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Union

import numpy as np
from scipy.stats import unitary_group

from nmrgeo.quantum import (
    PAULI,
    DensityOperator,
    Operator,
    State,
    StateVector,
    expectation,
    fidelity_state,
    ket,
    tensor,
)

Channel = Callable[[np.ndarray], np.ndarray]
ChannelLike = Union[Operator, np.ndarray, Channel]

AXIAL_LABELS = ("0", "1", "+", "-", "+i", "-i")
TOMOGRAPHY_LABELS = ("0", "1", "+", "+i")


@dataclass(frozen=True)
class GateSpec:
    """Parameters of the single-qubit gate with cyclic states at (chi, phi)."""

    gamma: float
    chi: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.chi <= math.pi:
            raise ValueError(f"chi must lie in [0, pi], got {self.chi}")
        if not 0.0 <= self.phi < 2 * math.pi:
            raise ValueError(f"phi must lie in [0, 2pi), got {self.phi}")


U1_SPEC = GateSpec(-math.pi / 2, 0.0, 0.0)
U2_SPEC = GateSpec(-math.pi / 2, math.pi / 4, 0.0)


def make_gate(spec: GateSpec) -> Operator:
    """U = e^{i gamma}|psi+><psi+| + e^{-i gamma}|psi-><psi-| written out entrywise."""
    g, chi, phi = spec.gamma, spec.chi, spec.phi
    c2, s2 = math.cos(chi / 2) ** 2, math.sin(chi / 2) ** 2
    eg, emg = np.exp(1j * g), np.exp(-1j * g)
    off = 1j * math.sin(g) * math.sin(chi)
    m = np.array(
        [
            [eg * c2 + emg * s2, off * np.exp(-1j * phi)],
            [off * np.exp(1j * phi), eg * s2 + emg * c2],
        ]
    )
    return Operator(m, unitary=True)


def cyclic_states(chi: float, phi: float) -> tuple[StateVector, StateVector]:
    """Orthonormal pair at Bloch coordinates (chi, phi) and its antipode."""
    c, s = math.cos(chi / 2), math.sin(chi / 2)
    em, ep = np.exp(-0.5j * phi), np.exp(0.5j * phi)
    plus = StateVector(np.array([em * c, ep * s]))
    minus = StateVector(np.array([-em * s, ep * c]))
    return plus, minus


def make_controlled_gate() -> Operator:
    """diag(-i, i, 1, 1): the loop on spin b runs only when spin a is up."""
    return Operator(np.diag([-1j, 1j, 1, 1]), unitary=True)


U1 = make_gate(U1_SPEC)
U2 = make_gate(U2_SPEC)
UC = make_controlled_gate()


class EigenphaseError(ValueError):
    pass


def gate_eigenphase_check(u: Operator, chi: float, phi: float) -> tuple[float, float]:
    """Phases picked up by the two cyclic states at (chi, phi) under ``u``."""
    if not u.unitary:
        raise ValueError("gate_eigenphase_check expects a unitary operator")
    out = []
    for psi in cyclic_states(chi, phi):
        v = psi.amplitudes
        w = u.matrix @ v
        lam = np.vdot(v, w)
        dev = np.linalg.norm(w - lam * v)
        if dev > 1e-8:
            raise EigenphaseError(f"cyclic state is not an eigenvector (deviation {dev:.2e})")
        out.append(float(np.angle(lam)))
    return out[0], out[1]


def fix_global_phase(u: np.ndarray, index: int = -1) -> np.ndarray:
    """Scale ``u`` so its (index, index) entry is real and positive."""
    u = np.asarray(u)
    entry = u[index, index]
    return u * (abs(entry) / entry)


def phase_aligned_distance(ideal: np.ndarray, actual: np.ndarray) -> float:
    """min over global phase of max |ideal - e^{ia} actual|."""
    overlap = np.vdot(actual.ravel(), np.asarray(ideal).ravel())
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(ideal - phase * actual)))


# --------------------------------------------------------------------------- channels


def as_channel(actual: ChannelLike) -> Channel:
    if isinstance(actual, Operator):
        v = actual.matrix
    elif isinstance(actual, np.ndarray):
        v = actual
    elif callable(actual):
        return actual
    else:
        raise TypeError(f"cannot interpret {type(actual).__name__} as a channel")
    return lambda rho: v @ rho @ v.conj().T


def channel_dim(actual: ChannelLike, default: int) -> int:
    if isinstance(actual, Operator):
        return actual.dim
    if isinstance(actual, np.ndarray):
        return actual.shape[0]
    return default


def choi_matrix(channel: ChannelLike, dim: int) -> np.ndarray:
    """J = sum_ij |i><j| (x) E(|i><j|), input factor on the left; Tr J = dim."""
    channel = as_channel(channel)
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            unit = np.zeros((dim, dim), dtype=complex)
            unit[i, j] = 1.0
            out += np.kron(unit, channel(unit))
    return out


def unitary_vec(u: np.ndarray) -> np.ndarray:
    """|U>> = sum_i |i> (x) U|i>, matching the Choi ordering above."""
    return np.asarray(u).T.ravel()


def process_fidelity_from_choi(choi: np.ndarray, ideal: np.ndarray) -> float:
    d = ideal.shape[0]
    v = unitary_vec(ideal)
    return float(np.vdot(v, choi @ v).real / d**2)


def average_from_process(f_pro: float, d: int) -> float:
    return (d * f_pro + 1) / (d + 1)


def haar_closed_form_unitary(ideal: np.ndarray, actual: np.ndarray) -> float:
    """(d + |Tr U^dag V|^2) / (d (d + 1)) for a unitary ``actual``."""
    d = ideal.shape[0]
    return float((d + abs(np.trace(ideal.conj().T @ actual)) ** 2) / (d * (d + 1)))


# --------------------------------------------------------------------------- tomography


class TomographyError(ValueError):
    def __init__(self, message: str, distance: float):
        self.distance = distance
        super().__init__(f"{message} (distance to the PSD cone {distance:.3e})")


def _pauli_basis(dim: int) -> list[tuple[str, np.ndarray]]:
    if dim == 2:
        return list(PAULI.items())
    return [(p + q, np.kron(PAULI[p], PAULI[q])) for p, q in product("IXYZ", repeat=2)]


def state_tomography(rho_true: State) -> DensityOperator:
    """Linear inversion from the expectation values of all Pauli products.

    Readout is noiseless, so physical inputs come back exactly.
    """
    d = rho_true.dim
    m = np.zeros((d, d), dtype=complex)
    for _, p in _pauli_basis(d):
        m += expectation(rho_true, p) * p
    m /= d
    m = (m + m.conj().T) / 2
    evals = np.linalg.eigvalsh(m)
    if evals[0] < -1e-10:
        distance = float(np.sum(np.abs(evals[evals < 0])))
        raise TomographyError("reconstructed state is not positive", distance)
    return DensityOperator(m)


def tomography_inputs(dim: int) -> list[tuple[str, StateVector]]:
    singles = [(label, ket(label)) for label in TOMOGRAPHY_LABELS]
    if dim == 2:
        return singles
    if dim == 4:
        return [(la + "," + lb, tensor(sa, sb)) for (la, sa), (lb, sb) in product(singles, singles)]
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True, eq=False)
class ProcessTomographyResult:
    """Choi matrix (trace d, input factor first) rebuilt from tomographed outputs."""

    choi: np.ndarray
    inputs_used: tuple
    dim: int = field(default=0)

    def __post_init__(self):
        if not self.dim:
            object.__setattr__(self, "dim", int(round(math.sqrt(self.choi.shape[0]))))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.choi + self.choi.conj().T) / 2)[0])

    def output_marginal(self) -> np.ndarray:
        """Tr_out J; the identity for a trace-preserving channel."""
        d = self.dim
        return np.einsum("ikjk->ij", self.choi.reshape(d, d, d, d))

    def process_fidelity(self, ideal: Operator | np.ndarray) -> float:
        u = ideal.matrix if isinstance(ideal, Operator) else np.asarray(ideal)
        return process_fidelity_from_choi(self.choi, u)


def process_tomography(channel: ChannelLike, dim: int = 4) -> ProcessTomographyResult:
    """Rebuild a channel from state tomography of its outputs on product inputs.

    Inputs are |0>, |1>, |+>, |+i> on each qubit (16 states for two qubits).
    """
    fn = as_channel(channel)
    inputs = tomography_inputs(dim)
    rhos = [psi.projector().matrix for _, psi in inputs]
    outputs = []
    for rho in rhos:
        try:
            out = DensityOperator(fn(rho))
        except ValueError as exc:
            raise RuntimeError(f"channel evaluation failed: {exc}") from exc
        outputs.append(state_tomography(out).matrix)
    # express each matrix unit |i><j| as a combination of the input states
    basis = np.column_stack([r.ravel() for r in rhos])
    coeffs = np.linalg.solve(basis, np.eye(dim * dim))
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for idx in range(dim * dim):
        i, j = divmod(idx, dim)
        unit = np.zeros((dim, dim), dtype=complex)
        unit[i, j] = 1.0
        image = sum(c * out for c, out in zip(coeffs[:, idx], outputs))
        choi += np.kron(unit, image)
    return ProcessTomographyResult(choi, tuple(label for label, _ in inputs), dim)


# --------------------------------------------------------------------------- fidelity


@dataclass(frozen=True)
class FidelityReport:
    """Average gate fidelity three ways.

    ``six_state`` averages over the six axial states and is None for two
    qubits; ``haar`` is the exact uniform average from the channel's Choi
    matrix; ``process`` converts the tomographic process fidelity.
    """

    six_state: float | None
    haar: float
    process: float
    per_state: dict = field(default_factory=dict)


def _clip(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def average_gate_fidelity(ideal: Operator, actual: ChannelLike) -> FidelityReport:
    d = ideal.dim
    if channel_dim(actual, d) != d:
        raise ValueError(f"dimension mismatch: ideal {d}, actual {channel_dim(actual, d)}")
    fn = as_channel(actual)
    u = ideal.matrix
    per_state = {}
    six = None
    if d == 2:
        for label in AXIAL_LABELS:
            psi = ket(label)
            target = StateVector.normalized(u @ psi.amplitudes)
            out = DensityOperator(fn(psi.projector().matrix))
            per_state[label] = fidelity_state(target, out)
        six = _clip(np.mean(list(per_state.values())))
    haar = _clip(average_from_process(process_fidelity_from_choi(choi_matrix(fn, d), u), d))
    tomo = process_tomography(fn, d)
    process = _clip(average_from_process(tomo.process_fidelity(u), d))
    return FidelityReport(six, haar, process, per_state)


def random_pure_states(rng: np.random.Generator, dim: int, n: int) -> np.ndarray:
    z = rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_fidelity_monte_carlo(
    ideal: Operator,
    actual: ChannelLike,
    samples: int = 10_000,
    seed: int | np.random.SeedSequence = 0,
    chunk: int = 1000,
) -> tuple[float, float]:
    """Monte-Carlo estimate (mean, standard error) of the uniform average fidelity.

    Each chunk of samples draws from its own child of ``seed``, so chunks are
    independent and reproducible in any evaluation order.
    """
    fn = as_channel(actual)
    u = ideal.matrix
    d = ideal.dim
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    n_chunks = -(-samples // chunk)
    values = []
    for k, child in enumerate(seq.spawn(n_chunks)):
        rng = np.random.default_rng(child)
        size = min(chunk, samples - k * chunk)
        for psi in random_pure_states(rng, d, size):
            target = u @ psi
            out = fn(np.outer(psi, psi.conj()))
            values.append(np.vdot(target, out @ target).real)
    values = np.asarray(values)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(dim, random_state=rng)


def dephasing_channel(p: float, axis: np.ndarray | None = None) -> Channel:
    """rho -> (1 - p) rho + p (n.sigma) rho (n.sigma), default axis z."""
    n = np.array([0.0, 0.0, 1.0]) if axis is None else np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    sigma = n[0] * PAULI["X"] + n[1] * PAULI["Y"] + n[2] * PAULI["Z"]
    return lambda rho: (1 - p) * rho + p * sigma @ rho @ sigma
