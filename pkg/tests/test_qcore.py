"""Unit tests for the qubit linear-algebra core."""

import numpy as np
import pytest

from teleportsim.qcore import (
    BellLabel,
    DensityMatrix,
    PAULI,
    PureState,
    QuantumStateError,
    bell_basis,
    bell_decompose,
    bell_state,
    correction_for,
    depolarize,
    fidelity,
    partial_trace,
    pauli,
    permute_qubits,
    tensor,
)


def random_pure(rng: np.random.Generator, n_qubits: int = 1) -> PureState:
    amps = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return PureState.from_unnormalized(amps)


def random_density(rng: np.random.Generator, n_qubits: int = 1) -> DensityMatrix:
    dim = 2**n_qubits
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    mat = a @ a.conj().T
    return DensityMatrix(mat / np.trace(mat))


class TestStateInvariants:
    def test_pure_state_requires_normalization(self):
        with pytest.raises(QuantumStateError):
            PureState(np.array([1.0, 1.0]))

    def test_pure_state_dimension_must_be_power_of_two(self):
        with pytest.raises(QuantumStateError):
            PureState(np.array([1.0, 0.0, 0.0]))

    def test_density_matrix_rejects_nonhermitian(self):
        with pytest.raises(QuantumStateError):
            DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))

    def test_density_matrix_rejects_bad_trace(self):
        with pytest.raises(QuantumStateError):
            DensityMatrix(np.eye(2))

    def test_density_matrix_rejects_negative_eigenvalue(self):
        mat = np.diag([1.5, -0.5]).astype(complex)
        with pytest.raises(QuantumStateError):
            DensityMatrix(mat)

    def test_states_are_immutable(self):
        state = PureState.basis(0)
        with pytest.raises(ValueError):
            state.amplitudes[0] = 0.0


class TestPauli:
    @pytest.mark.parametrize("label", ["X", "Y", "Z"])
    def test_unitary_hermitian_traceless(self, label):
        m = pauli(label)
        assert np.allclose(m @ m.conj().T, np.eye(2), atol=1e-12)
        assert np.allclose(m, m.conj().T, atol=1e-12)
        assert abs(np.trace(m)) < 1e-12

    def test_unknown_label_rejected(self):
        with pytest.raises(QuantumStateError):
            pauli("W")


class TestBellBasis:
    def test_orthonormal(self):
        states = list(bell_basis().values())
        for i, a in enumerate(states):
            for j, b in enumerate(states):
                expected = 1.0 if i == j else 0.0
                assert abs(abs(a.overlap(b)) - expected) < 1e-12

    @pytest.mark.parametrize("label", list(BellLabel))
    def test_maximally_entangled(self, label):
        rho = bell_state(label).density()
        for keep in ([0], [1]):
            reduced = partial_trace(rho, keep)
            assert np.allclose(reduced.matrix, np.eye(2) / 2, atol=1e-12)


class TestTensor:
    def test_basis_product(self):
        out = tensor(PureState.basis(0), PureState.basis(0))
        assert isinstance(out, PureState)
        assert np.allclose(out.amplitudes, [1, 0, 0, 0], atol=1e-15)

    def test_norm_multiplicative(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            out = tensor(random_pure(rng), random_pure(rng, 2))
            assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-12

    def test_three_qubit_overflow_rejected(self):
        two = tensor(PureState.basis(0), PureState.basis(0))
        with pytest.raises(QuantumStateError):
            tensor(two, two)

    def test_mixed_operands_promote_to_density(self):
        out = tensor(PureState.basis(0), DensityMatrix(np.eye(2) / 2))
        assert isinstance(out, DensityMatrix)
        assert out.n_qubits == 2

    def test_singlet_component_of_input_down(self):
        # project the A,C pair of |down>_A (Psi-)_BC onto the singlet
        state = tensor(PureState.basis(0), bell_state(BellLabel.PSI_MINUS))
        reordered = permute_qubits(state, [0, 2, 1])  # (A, B, C) -> (A, C, B)
        singlet = bell_state(BellLabel.PSI_MINUS).amplitudes
        block = reordered.amplitudes.reshape(4, 2)
        component = singlet.conj() @ block
        assert abs(np.linalg.norm(component) - 0.5) < 1e-12
        assert abs(abs(component[0]) - 0.5) < 1e-12  # proportional to |down>
        assert abs(component[1]) < 1e-12


class TestBellDecompose:
    def test_input_down_psi_minus_branch(self):
        branches = {b.label: b for b in bell_decompose(PureState.basis(0))}
        branch = branches[BellLabel.PSI_MINUS]
        assert abs(abs(branch.amplitude) ** 2 - 0.25) < 1e-12
        assert branch.state.equals_up_to_phase(PureState.basis(0), atol=1e-12)

    def test_branch_probabilities_quarter(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            for branch in bell_decompose(random_pure(rng)):
                assert abs(abs(branch.amplitude) ** 2 - 0.25) < 1e-12

    def test_reassembly_oracle(self):
        # brute-force: sum of amplitude * |bell>_AC x |branch>_B must equal
        # the three-qubit product state, element by element
        rng = np.random.default_rng(23)
        target_pair = bell_state(BellLabel.PSI_MINUS)
        for _ in range(100):
            phi = random_pure(rng)
            expected = tensor(phi, target_pair).amplitudes
            total = np.zeros(8, dtype=complex)
            for branch in bell_decompose(phi):
                term = np.kron(bell_state(branch.label).amplitudes, branch.state.amplitudes)
                three = PureState.from_unnormalized(term)
                total += branch.amplitude * permute_qubits(three, [0, 2, 1]).amplitudes
            assert np.max(np.abs(total - expected)) < 1e-12

    def test_correction_recovers_input(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            phi = random_pure(rng)
            for branch in bell_decompose(phi):
                corrected = correction_for(branch.label) @ branch.state.amplitudes
                assert abs(abs(np.vdot(phi.amplitudes, corrected)) - 1.0) < 1e-12

    def test_rejects_unnormalized_and_multiqubit(self):
        with pytest.raises(QuantumStateError):
            bell_decompose(bell_state(BellLabel.PHI_PLUS))

    def test_correction_table(self):
        assert np.allclose(correction_for(BellLabel.PSI_MINUS), PAULI["I"])
        # middle-branch corrections follow the exact singlet expansion;
        # the analyzer-frame pairing lives in the protocol layer
        assert np.allclose(correction_for(BellLabel.PSI_PLUS), PAULI["Z"])
        assert np.allclose(correction_for(BellLabel.PHI_MINUS), PAULI["X"])


class TestFidelity:
    def test_self_overlap(self):
        rng = np.random.default_rng(3)
        phi = random_pure(rng)
        assert abs(fidelity(phi.density(), phi) - 1.0) < 1e-12

    def test_maximally_mixed(self):
        assert abs(fidelity(DensityMatrix(np.eye(2) / 2), PureState.basis(0)) - 0.5) < 1e-12

    def test_partially_mixed_preparation(self):
        phi = PureState.basis(0)
        assert abs(fidelity(depolarize(phi, 0.9, 2), phi) - 0.95) < 1e-12


class TestDepolarize:
    def test_no_noise_limit(self):
        phi = PureState.from_unnormalized([1.0, 1.0j])
        assert np.allclose(depolarize(phi, 1.0, 2).matrix, phi.projector(), atol=1e-15)

    def test_full_depolarization(self):
        rng = np.random.default_rng(9)
        out = depolarize(random_pure(rng), 0.0, 2)
        assert np.allclose(out.matrix, np.eye(2) / 2, atol=1e-15)

    def test_entanglement_fidelity_value(self):
        p_ent = (4.0 / 3.0) * (0.89 - 0.25)
        singlet = bell_state(BellLabel.PSI_MINUS)
        rho = depolarize(singlet, p_ent, 4)
        assert abs(fidelity(rho, singlet) - 0.89) < 1e-12

    def test_single_qubit_fidelity_closed_form(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            phi = random_pure(rng)
            p = float(rng.random())
            assert abs(fidelity(depolarize(phi, p, 2), phi) - (1 + p) / 2) < 1e-12

    def test_two_qubit_fidelity_closed_form(self):
        rng = np.random.default_rng(19)
        singlet = bell_state(BellLabel.PSI_MINUS)
        for _ in range(25):
            p = float(rng.random())
            assert abs(fidelity(depolarize(singlet, p, 4), singlet) - (1 + 3 * p) / 4) < 1e-12

    def test_rejects_bad_weight_and_dimension(self):
        with pytest.raises(QuantumStateError):
            depolarize(PureState.basis(0), 1.5, 2)
        with pytest.raises(QuantumStateError):
            depolarize(PureState.basis(0), 0.5, 4)

    def test_output_passes_density_invariants(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            out = depolarize(random_pure(rng, 2), float(rng.random()), 4)
            assert isinstance(out, DensityMatrix)  # construction validates


class TestPartialTrace:
    def test_entangled_mixture_reduces_to_identity(self):
        for p in (0.0, 0.3, 0.8533, 1.0):
            rho = depolarize(bell_state(BellLabel.PSI_MINUS), p, 4)
            for keep in ([0], [1]):
                reduced = partial_trace(rho, keep)
                assert np.allclose(reduced.matrix, np.eye(2) / 2, atol=1e-12)

    def test_keep_everything_is_identity_operation(self):
        rng = np.random.default_rng(31)
        rho = random_density(rng, 2)
        assert np.allclose(partial_trace(rho, [0, 1]).matrix, rho.matrix, atol=1e-15)

    def test_trace_and_hermiticity_preserved(self):
        rng = np.random.default_rng(41)
        rho3 = random_density(rng, 3)
        reduced = partial_trace(rho3, [0, 2])
        assert abs(np.trace(reduced.matrix) - 1.0) < 1e-12

    def test_consistency_with_kron_structure(self):
        rng = np.random.default_rng(43)
        a, b = random_density(rng), random_density(rng)
        joint = DensityMatrix(np.kron(a.matrix, b.matrix))
        assert np.allclose(partial_trace(joint, [0]).matrix, a.matrix, atol=1e-12)
        assert np.allclose(partial_trace(joint, [1]).matrix, b.matrix, atol=1e-12)

    def test_invalid_subsets_rejected(self):
        rho = depolarize(bell_state(BellLabel.PSI_PLUS), 0.5, 4)
        with pytest.raises(QuantumStateError):
            partial_trace(rho, [2])
        with pytest.raises(QuantumStateError):
            partial_trace(rho, [0, 0])
        with pytest.raises(QuantumStateError):
            partial_trace(rho, [])
