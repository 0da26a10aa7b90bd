"""Dense state and operator primitives for one or two spin-1/2 nuclei.

Basis order is |a,b> = |00>, |01>, |10>, |11> with spin a (carbon) as the
left, most significant factor. |0> is spin up (Iz = +1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

SPINS = ("a", "b")
_DIMS = (2, 4)


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state of one (dim 2) or two (dim 4) spins."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amplitudes))
        if amps.size not in _DIMS:
            raise ValueError(f"state dimension must be 2 or 4, got {amps.size}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized: |psi|^2 = {norm!r}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        return cls(amps / np.linalg.norm(amps))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> DensityOperator:
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __repr__(self):
        return f"StateVector({np.array2string(self.amplitudes, precision=4)})"


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix of dimension 2 or 4."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in _DIMS:
            raise ValueError(f"density operator must be 2x2 or 4x4, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("density operator is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > 1e-12:
            raise ValueError(f"density operator trace is {tr!r}, expected 1")
        lowest = np.linalg.eigvalsh(m)[0]
        if lowest < -1e-10:
            raise ValueError(f"density operator has negative eigenvalue {lowest:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def __repr__(self):
        return f"DensityOperator(\n{np.array2string(self.matrix, precision=4)})"


@dataclass(frozen=True, eq=False)
class Operator:
    """Square matrix acting on one or two spins; ``unitary`` is checked, not assumed."""

    matrix: np.ndarray
    unitary: bool = field(default=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in _DIMS:
            raise ValueError(f"operator must be 2x2 or 4x4, got {m.shape}")
        if self.unitary:
            err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
            if err > 1e-10:
                raise ValueError(f"operator flagged unitary but |U^dag U - I| = {err:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dag(self) -> Operator:
        return Operator(self.matrix.conj().T, unitary=self.unitary)

    def __matmul__(self, other: Operator) -> Operator:
        return Operator(self.matrix @ other.matrix, unitary=self.unitary and other.unitary)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))

    def __repr__(self):
        flag = ", unitary" if self.unitary else ""
        return f"Operator({np.array2string(self.matrix, precision=4)}{flag})"


State = Union[StateVector, DensityOperator]

# single-spin angular momentum operators, I = sigma / 2
IX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
IY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
IZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
I2 = np.eye(2, dtype=complex)
PAULI = {"I": I2, "X": 2 * IX, "Y": 2 * IY, "Z": 2 * IZ}

_AXES = {"x": IX, "y": IY, "z": IZ}


def spin_index(spin: str) -> int:
    try:
        return SPINS.index(spin)
    except ValueError:
        raise ValueError(f"unknown spin label {spin!r}; expected 'a' or 'b'") from None


def spin_op(spin: str, axis: str) -> np.ndarray:
    """4x4 matrix of I_axis on ``spin`` (identity on the other spin)."""
    single = _AXES[axis]
    return np.kron(single, I2) if spin_index(spin) == 0 else np.kron(I2, single)


def embed(single: np.ndarray, spin: str) -> np.ndarray:
    """Lift a 2x2 matrix acting on ``spin`` to the two-spin space."""
    return np.kron(single, I2) if spin_index(spin) == 0 else np.kron(I2, single)


def ket(label: str) -> StateVector:
    """Computational or axial basis state from a label like '0', '+', '-i', '01'."""
    singles = {
        "0": [1, 0],
        "1": [0, 1],
        "+": [1, 1],
        "-": [1, -1],
        "+i": [1, 1j],
        "-i": [1, -1j],
    }
    if label in singles:
        return StateVector.normalized(singles[label])
    if len(label) == 2 and all(c in "01" for c in label):
        return tensor(ket(label[0]), ket(label[1]))
    raise ValueError(f"unknown state label {label!r}")


def tensor(a, b):
    """Kronecker product of two single-spin states or operators (a left, b right)."""
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    if a.dim != 2 or b.dim != 2:
        raise ValueError(f"tensor expects two dimension-2 factors, got {a.dim} and {b.dim}")
    if isinstance(a, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityOperator):
        return DensityOperator(np.kron(a.matrix, b.matrix))
    if isinstance(a, Operator):
        return Operator(np.kron(a.matrix, b.matrix), unitary=a.unitary and b.unitary)
    raise TypeError(f"unsupported type {type(a).__name__}")


def as_matrix(state: State) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return state.matrix


def expectation(state: State, obs) -> float:
    """Tr(rho obs) for a Hermitian observable."""
    m = obs.matrix if isinstance(obs, Operator) else np.asarray(obs, dtype=complex)
    if m.shape != (state.dim, state.dim):
        raise ValueError(f"observable shape {m.shape} does not match state dimension {state.dim}")
    if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
        raise ValueError("observable is not Hermitian")
    if isinstance(state, StateVector):
        value = np.vdot(state.amplitudes, m @ state.amplitudes)
    else:
        value = np.trace(state.matrix @ m)
    if abs(value.imag) > 1e-10:
        raise ArithmeticError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def partial_trace_matrix(m: np.ndarray, keep: str) -> np.ndarray:
    t = np.asarray(m).reshape(2, 2, 2, 2)
    if spin_index(keep) == 0:
        return np.einsum("ijkj->ik", t)
    return np.einsum("ijil->jl", t)


def partial_trace(rho: State, keep: str) -> DensityOperator:
    """Reduced state of spin ``keep`` from a two-spin state."""
    if rho.dim != 4:
        raise ValueError("partial_trace needs a two-spin (dimension 4) state")
    return DensityOperator(partial_trace_matrix(as_matrix(rho), keep))


def fidelity_state(ideal: StateVector, actual: State) -> float:
    """<psi|rho|psi>, clipped to [0, 1] against rounding."""
    if ideal.dim != actual.dim:
        raise ValueError(f"dimension mismatch: {ideal.dim} vs {actual.dim}")
    psi = ideal.amplitudes
    f = np.vdot(psi, as_matrix(actual) @ psi).real
    return float(min(1.0, max(0.0, f)))


def bloch_vector(state: State) -> np.ndarray:
    """(x, y, z) = <sigma> for a single-spin state."""
    if state.dim != 2:
        raise ValueError("Bloch vector is defined for single-spin states only")
    m = as_matrix(state)
    return np.array([np.trace(m @ PAULI[p]).real for p in "XYZ"])


def trace_distance(rho, sigma) -> float:
    diff = np.asarray(as_matrix(rho) if hasattr(rho, "dim") else rho) - np.asarray(
        as_matrix(sigma) if hasattr(sigma, "dim") else sigma
    )
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def maximally_mixed(dim: int) -> DensityOperator:
    return DensityOperator(np.eye(dim, dtype=complex) / dim)


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, atol: float = 1e-10) -> bool:
    """True when u = e^{i a} v for some real a."""
    u = np.asarray(u)
    v = np.asarray(v)
    overlap = np.vdot(v.ravel(), u.ravel())
    if abs(overlap) < 1e-14:
        return bool(np.allclose(u, 0, atol=atol) and np.allclose(v, 0, atol=atol))
    phase = overlap / abs(overlap)
    return bool(np.allclose(u, phase * v, atol=atol, rtol=0))
