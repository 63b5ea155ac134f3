"""Dense complex linear algebra for 1-3 qubit systems.

States are stored as dense numpy arrays over the computational basis with
index 0 = |down>/|H> and index 1 = |up>/|V>.  Multi-qubit indices are
big-endian: qubit 0 is the leftmost tensor factor, so a two-qubit basis
index is ``2*b0 + b1``.  Global phases carry no meaning anywhere in this
package; equality helpers compare projectors or overlap magnitudes.

Bell states are taken in the linear (H/V) basis:

    Phi+- = (|HH> +- |VV>)/sqrt(2),   Psi+- = (|HV> +- |VH>)/sqrt(2)

``bell_decompose`` implements the exact expansion of ``|phi>_A (Psi-)_BC``
over the Bell basis of the (A, C) pair.  Note that with the conventions
above the mathematically exact branch operators are (sx sz, sx, sz, 1) for
(Phi+, Phi-, Psi+, Psi-); the widely quoted variant with sx and sz swapped
on the middle branches describes the same measurement in the rotated frame
of an optical Bell analyzer (see :mod:`teleportsim.protocol`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

ATOL = 1e-12
_EIG_FLOOR = -1e-10

__all__ = [
    "ATOL",
    "QuantumStateError",
    "PureState",
    "DensityMatrix",
    "QuantumState",
    "BellLabel",
    "BellBranch",
    "PAULI",
    "pauli",
    "bell_state",
    "bell_basis",
    "tensor",
    "permute_qubits",
    "partial_trace",
    "bell_decompose",
    "correction_for",
    "fidelity",
    "depolarize",
]


class QuantumStateError(ValueError):
    """Raised when an array fails the defining invariants of a state."""


def _as_complex(values: Iterable[complex]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    return arr


def _qubit_count(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim or n < 1:
        raise QuantumStateError(f"dimension {dim} is not a power of two >= 2")
    return n


@dataclass(frozen=True)
class PureState:
    """Normalized complex amplitude vector over ``2**n_qubits`` basis states."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = _as_complex(self.amplitudes)
        if amps.ndim != 1:
            raise QuantumStateError("amplitudes must be a 1-d vector")
        _qubit_count(amps.size)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > ATOL:
            raise QuantumStateError(f"state norm {norm!r} deviates from 1 by more than {ATOL}")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return _qubit_count(self.amplitudes.size)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())

    def overlap(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def equals_up_to_phase(self, other: "PureState", atol: float = 1e-9) -> bool:
        if self.dim != other.dim:
            return False
        return abs(abs(self.overlap(other)) - 1.0) <= atol

    @staticmethod
    def from_unnormalized(values: Iterable[complex]) -> "PureState":
        arr = _as_complex(values)
        norm = np.linalg.norm(arr)
        if norm == 0:
            raise QuantumStateError("cannot normalize the zero vector")
        return PureState(arr / norm)

    @staticmethod
    def basis(index: int, n_qubits: int = 1) -> "PureState":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return PureState(amps)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix on 1-3 qubits."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = _as_complex(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise QuantumStateError("density matrix must be square")
        _qubit_count(mat.shape[0])
        if not np.allclose(mat, mat.conj().T, atol=ATOL):
            raise QuantumStateError("density matrix is not Hermitian")
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > ATOL:
            raise QuantumStateError(f"trace {tr!r} deviates from 1 by more than {ATOL}")
        evals = np.linalg.eigvalsh(mat)
        if evals.min() < _EIG_FLOOR:
            raise QuantumStateError(f"negative eigenvalue {evals.min():.3e}")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def n_qubits(self) -> int:
        return _qubit_count(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def bloch_vector(self) -> np.ndarray:
        """Bloch vector (sx, sy, sz) of a single-qubit state."""
        if self.n_qubits != 1:
            raise QuantumStateError("Bloch vector is defined for one qubit only")
        return np.array(
            [float(np.real(np.trace(self.matrix @ PAULI[k]))) for k in ("X", "Y", "Z")]
        )


QuantumState = Union[PureState, DensityMatrix]


PAULI: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
for _m in PAULI.values():
    _m.setflags(write=False)


def pauli(label: str) -> np.ndarray:
    """Return the 2x2 Pauli matrix for label in {I, X, Y, Z}."""
    try:
        return PAULI[label]
    except KeyError:
        raise QuantumStateError(f"unknown Pauli label {label!r}; valid: I, X, Y, Z") from None


class BellLabel(str, Enum):
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


_SQ2 = 1.0 / np.sqrt(2.0)
_BELL_VECTORS: dict[BellLabel, np.ndarray] = {
    BellLabel.PHI_PLUS: np.array([_SQ2, 0, 0, _SQ2], dtype=np.complex128),
    BellLabel.PHI_MINUS: np.array([_SQ2, 0, 0, -_SQ2], dtype=np.complex128),
    BellLabel.PSI_PLUS: np.array([0, _SQ2, _SQ2, 0], dtype=np.complex128),
    BellLabel.PSI_MINUS: np.array([0, _SQ2, -_SQ2, 0], dtype=np.complex128),
}


def bell_state(label: BellLabel) -> PureState:
    """Two-qubit Bell state in the H/V computational basis."""
    return PureState(_BELL_VECTORS[BellLabel(label)])


def bell_basis() -> dict[BellLabel, PureState]:
    """The four Bell states keyed by label (orthonormal, maximally entangled)."""
    return {label: bell_state(label) for label in BellLabel}


def _promote(state: QuantumState) -> np.ndarray:
    if isinstance(state, PureState):
        return state.projector()
    return state.matrix


def tensor(a: QuantumState, b: QuantumState) -> QuantumState:
    """Tensor product of two states; pure operands give a pure product.

    The combined register is limited to three qubits, the largest system the
    teleportation protocol needs.
    """
    n = a.n_qubits + b.n_qubits
    if n > 3:
        raise QuantumStateError(f"tensor product would span {n} qubits; limit is 3")
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes))
    return DensityMatrix(np.kron(_promote(a), _promote(b)))


def permute_qubits(state: PureState, order: Sequence[int]) -> PureState:
    """Reorder tensor factors so new qubit ``k`` is old qubit ``order[k]``."""
    n = state.n_qubits
    if sorted(order) != list(range(n)):
        raise QuantumStateError(f"order {order!r} is not a permutation of 0..{n - 1}")
    amps = state.amplitudes.reshape((2,) * n).transpose(order).reshape(-1)
    return PureState(amps)


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Trace out all qubits not listed in ``keep`` (kept order preserved)."""
    n = rho.n_qubits
    keep = list(keep)
    if len(set(keep)) != len(keep) or any(k < 0 or k >= n for k in keep):
        raise QuantumStateError(f"invalid qubit subset {keep!r} for {n} qubits")
    if not keep:
        raise QuantumStateError("must keep at least one qubit")
    traced = [q for q in range(n) if q not in keep]
    tensor_form = rho.matrix.reshape((2,) * (2 * n))
    for q in sorted(traced, reverse=True):
        tensor_form = np.trace(tensor_form, axis1=q, axis2=q + tensor_form.ndim // 2)
    m = len(keep)
    # np.trace removed axes in descending order, so the remaining axes are the
    # kept qubits in their original relative order; reorder to `keep`.
    kept_sorted = sorted(keep)
    perm = [kept_sorted.index(k) for k in keep]
    tensor_form = tensor_form.transpose(perm + [p + m for p in perm])
    return DensityMatrix(tensor_form.reshape(2**m, 2**m))


class BellBranch(NamedTuple):
    """One term of the Bell expansion: amplitude * |bell>_AC x |state>_B."""

    label: BellLabel
    state: PureState
    amplitude: complex


# Exact branch operators of |phi>_A (Psi-)_BC over the (A, C) Bell basis.
_BRANCH_OPS: dict[BellLabel, np.ndarray] = {
    BellLabel.PHI_PLUS: PAULI["X"] @ PAULI["Z"],
    BellLabel.PHI_MINUS: PAULI["X"],
    BellLabel.PSI_PLUS: PAULI["Z"],
    BellLabel.PSI_MINUS: PAULI["I"],
}
_BRANCH_AMPLITUDE: dict[BellLabel, complex] = {
    BellLabel.PHI_PLUS: -0.5,
    BellLabel.PHI_MINUS: -0.5,
    BellLabel.PSI_PLUS: 0.5,
    BellLabel.PSI_MINUS: 0.5,
}


def bell_decompose(phi: PureState) -> list[BellBranch]:
    """Expand ``|phi>_A (Psi-)_BC`` over the Bell basis of qubits (A, C).

    Returns the four branches ``(label, conditional B state, amplitude)``
    with `|amplitude| = 1/2` each, so every Bell outcome occurs with
    probability 1/4 regardless of the input.  The sum

        sum_k amplitude_k |bell_k>_AC (x) |state_k>_B

    reproduces ``tensor(phi, Psi-_BC)`` exactly (after reordering qubits to
    A, B, C), which fixes all signs; see the module docstring for how the
    branch operators relate to the optical analyzer's frame.
    """
    if not isinstance(phi, PureState):
        raise QuantumStateError("bell_decompose takes a pure single-qubit state")
    if phi.n_qubits != 1:
        raise QuantumStateError("bell_decompose is defined for one qubit")
    return [
        BellBranch(label, PureState(_BRANCH_OPS[label] @ phi.amplitudes), _BRANCH_AMPLITUDE[label])
        for label in BellLabel
    ]


def correction_for(outcome: BellLabel) -> np.ndarray:
    """Unitary that maps the ``bell_decompose`` branch state back onto phi.

    Each operator is the inverse of the branch operator for that outcome,
    so ``correction_for(k) @ branch_k == phi`` up to a global phase.
    """
    outcome = BellLabel(outcome)
    return _BRANCH_OPS[outcome].conj().T


def fidelity(rho: DensityMatrix, phi: PureState) -> float:
    """Overlap <phi| rho |phi> between a pure target and a density matrix."""
    if rho.dim != phi.dim:
        raise QuantumStateError("dimension mismatch between state and target")
    value = float(np.real(np.vdot(phi.amplitudes, rho.matrix @ phi.amplitudes)))
    return min(max(value, 0.0), 1.0)


def depolarize(state: PureState, p: float, dim: int) -> DensityMatrix:
    """Convex mixture ``p |state><state| + (1 - p)/dim * identity``.

    ``p`` is the probability that the state survives untouched; ``p = 1``
    returns the pure projector, ``p = 0`` the maximally mixed state.
    """
    if not 0.0 <= p <= 1.0:
        raise QuantumStateError(f"depolarization weight {p!r} outside [0, 1]")
    if dim not in (2, 4):
        raise QuantumStateError("depolarize supports one- and two-qubit states")
    if state.dim != dim:
        raise QuantumStateError(f"state dimension {state.dim} does not match dim={dim}")
    mat = p * state.projector() + (1.0 - p) * np.eye(dim) / dim
    return DensityMatrix(mat)
