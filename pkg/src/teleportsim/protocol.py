"""Teleportation protocol model: noisy preparation, analytic fidelity, budgets.

Imperfections enter through three knobs.  State preparation and readout at
the sender leave the ideal state with probability ``p_a`` and a maximally
mixed qubit otherwise, so the preparation fidelity is ``F_A = (1 + p_a)/2``.
The entangled memory-photon pair is the singlet with probability ``p_ent``
and two-qubit white noise otherwise: ``F_ent = (1 + 3 p_ent)/4``.  Frequency
jitter of width ``sigma_omega`` degrades the two-photon interference and is
summarized by the measured contrast ``C``.

Closed-form teleportation fidelities conditioned on a Psi- herald:

    F_perp     = 1/2 + 4/3 * C * (F_ent - 1/4) (F_A - 1/2)
    F_parallel = 1/2 + 4/3 *     (F_ent - 1/4) (F_A - 1/2)
    F_average  = (4 F_perp + 2 F_parallel) / 6
               = 1/2 + 8/9 (C + 1/2)(F_ent - 1/4)(F_A - 1/2)

The parallel class covers the two inputs along the x axis of the Bloch
sphere: the optical mapping sends the atomic x basis onto the H/V
eigenpolarizations of the Bell analyzer, where polarization correlations
alone herald the transfer even without interference.  The other four
inputs (z and y bases) map onto polarizations unbiased with respect to
H/V and need genuine two-photon interference, hence the factor ``C``.

Frame convention: detected outcomes are click patterns in the analyzer's
H/V frame.  In the logical frame where a Psi- pattern teleports ``|phi>``
exactly, a Psi+ pattern delivers ``sigma_x |phi>`` (the H/V frame is
rotated by the x<->z exchange relative to the abstract Bell algebra of
:func:`teleportsim.qcore.bell_decompose`, which swaps the sigma_x/sigma_z
corrections of the two middle branches).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bsm import Outcome
from .qcore import DensityMatrix, PAULI, PureState, bell_state, BellLabel, depolarize

__all__ = [
    "InputStateLabel",
    "INPUT_LABELS",
    "input_state",
    "is_x_basis",
    "lab_polarization",
    "BSM_BASIS_MAP",
    "NoiseModel",
    "EfficiencyBudget",
    "PAPER_BUDGET_A",
    "PAPER_BUDGET_B",
    "FidelityClass",
    "prepare_input",
    "prepare_entangled",
    "predict_fidelity",
    "success_probability",
    "coincidence_probability",
    "detected_branch_state",
    "correction_for_detected",
    "swap_detected_outcome",
    "conditioned_state",
    "TrialRecord",
]

_SQ2 = 1.0 / np.sqrt(2.0)


class InputStateLabel(str, Enum):
    """Six mutually unbiased sender states (z, y and x eigenbases)."""

    DOWN = "down"
    UP = "up"
    DOWN_Y = "down_y"
    UP_Y = "up_y"
    DOWN_X = "down_x"
    UP_X = "up_x"


INPUT_LABELS: tuple[InputStateLabel, ...] = tuple(InputStateLabel)

_INPUT_VECTORS: dict[InputStateLabel, np.ndarray] = {
    InputStateLabel.DOWN: np.array([1, 0], dtype=np.complex128),
    InputStateLabel.UP: np.array([0, 1], dtype=np.complex128),
    InputStateLabel.DOWN_Y: np.array([_SQ2, 1j * _SQ2]),
    InputStateLabel.UP_Y: np.array([_SQ2, -1j * _SQ2]),
    InputStateLabel.DOWN_X: np.array([_SQ2, _SQ2]),
    InputStateLabel.UP_X: np.array([_SQ2, -_SQ2]),
}


def input_state(label: InputStateLabel) -> PureState:
    return PureState(_INPUT_VECTORS[InputStateLabel(label)])


def is_x_basis(label: InputStateLabel) -> bool:
    """True for the two inputs mapped onto analyzer eigenpolarizations."""
    return InputStateLabel(label) in (InputStateLabel.DOWN_X, InputStateLabel.UP_X)


# Atom-to-photon polarization map: the atomic x basis goes to H/V, so the
# z and y bases land on superpositions unbiased with respect to the
# analyzer.  A Hadamard implements exactly this exchange.
BSM_BASIS_MAP: np.ndarray = _SQ2 * np.array([[1, 1], [1, -1]], dtype=np.complex128)
BSM_BASIS_MAP.setflags(write=False)


def lab_polarization(state: PureState | DensityMatrix) -> PureState | DensityMatrix:
    """Express a logical qubit state in the analyzer's H/V frame."""
    if isinstance(state, PureState):
        return PureState(BSM_BASIS_MAP @ state.amplitudes)
    if isinstance(state, DensityMatrix):
        return DensityMatrix(BSM_BASIS_MAP @ state.matrix @ BSM_BASIS_MAP.conj().T)
    raise TypeError("expected PureState or DensityMatrix")


@dataclass(frozen=True)
class NoiseModel:
    """The three imperfection knobs of the protocol.

    ``p_a`` and ``p_ent`` are survival probabilities of the white-noise
    mixtures for preparation and entanglement; ``sigma_omega`` (rad/s) is
    the per-photon frequency-jitter width.
    """

    p_a: float = 1.0
    p_ent: float = 1.0
    sigma_omega: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_a", "p_ent"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value!r} outside [0, 1]")
        if self.sigma_omega < 0:
            raise ValueError("sigma_omega must be nonnegative")

    @property
    def f_a(self) -> float:
        """Preparation/readout fidelity (1 + p_a)/2."""
        return 0.5 * (self.p_a + 1.0)

    @property
    def f_ent(self) -> float:
        """Entanglement fidelity (1 + 3 p_ent)/4."""
        return 0.25 + 0.75 * self.p_ent

    @classmethod
    def from_fidelities(cls, f_a: float, f_ent: float, sigma_omega: float = 0.0) -> "NoiseModel":
        if not 0.5 <= f_a <= 1.0:
            raise ValueError("f_a must lie in [1/2, 1]")
        if not 0.25 <= f_ent <= 1.0:
            raise ValueError("f_ent must lie in [1/4, 1]")
        return cls(p_a=2.0 * f_a - 1.0, p_ent=(4.0 * f_ent - 1.0) / 3.0, sigma_omega=sigma_omega)


@dataclass(frozen=True)
class EfficiencyBudget:
    """Per-node efficiency factors; derived values are always recomputed.

    ``eta`` is the photon-production efficiency into the cavity mode,
    ``t_out`` the outcoupling transmission, ``t_opt`` the optical path
    transmission and ``epsilon`` the detector quantum efficiency.
    """

    eta: float
    t_out: float = 1.0
    t_opt: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        for name in ("eta", "t_out", "t_opt", "epsilon"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value!r} outside [0, 1]")

    @property
    def p_det(self) -> float:
        """Probability to detect an intracavity photon: t_out * t_opt * epsilon."""
        return self.t_out * self.t_opt * self.epsilon

    @property
    def xi(self) -> float:
        """Detector-click probability per attempt: eta * p_det."""
        return self.eta * self.p_det

    @classmethod
    def from_detection(cls, eta: float, p_det: float) -> "EfficiencyBudget":
        """Budget specified by eta and the lumped detection probability."""
        return cls(eta=eta, t_out=p_det, t_opt=1.0, epsilon=1.0)


# Published per-node budgets (eta, p_det) = (0.39, 0.31) and (0.25, 0.12);
# the unrounded factor products (t_out=0.9, t_opt=0.62/0.24, eps=0.55)
# differ from these in the third decimal.
PAPER_BUDGET_A = EfficiencyBudget.from_detection(0.39, 0.31)
PAPER_BUDGET_B = EfficiencyBudget.from_detection(0.25, 0.12)


def prepare_input(label: InputStateLabel, noise: NoiseModel) -> DensityMatrix:
    """Sender qubit after imperfect preparation: white noise with weight 1 - p_a."""
    return depolarize(input_state(label), noise.p_a, 2)


def prepare_entangled(noise: NoiseModel) -> DensityMatrix:
    """Memory-photon pair: singlet mixed with two-qubit white noise."""
    return depolarize(bell_state(BellLabel.PSI_MINUS), noise.p_ent, 4)


class FidelityClass(str, Enum):
    PERP = "perp"
    PARALLEL = "parallel"
    AVERAGE = "average"


def predict_fidelity(
    contrast: float, f_ent: float, f_a: float, klass: FidelityClass | str = FidelityClass.AVERAGE
) -> float:
    """Closed-form teleportation fidelity for the selected input class."""
    if not 0.0 <= contrast <= 1.0:
        raise ValueError(f"contrast {contrast!r} outside [0, 1]")
    if not 0.25 <= f_ent <= 1.0:
        raise ValueError(f"f_ent {f_ent!r} outside [1/4, 1]")
    if not 0.5 <= f_a <= 1.0:
        raise ValueError(f"f_a {f_a!r} outside [1/2, 1]")
    klass = FidelityClass(klass)
    core = (f_ent - 0.25) * (f_a - 0.5)
    if klass is FidelityClass.PERP:
        return 0.5 + (4.0 / 3.0) * contrast * core
    if klass is FidelityClass.PARALLEL:
        return 0.5 + (4.0 / 3.0) * core
    return 0.5 + (8.0 / 9.0) * (contrast + 0.5) * core


def coincidence_probability(budget_a: EfficiencyBudget, budget_b: EfficiencyBudget) -> float:
    """Probability that both photons of an attempt are detected."""
    return budget_a.xi * budget_b.xi


def success_probability(budget_a: EfficiencyBudget, budget_b: EfficiencyBudget) -> float:
    """Psi--heralded success probability per attempt: xi_A * xi_B / 4.

    A perfect-efficiency protocol saturates at 1/4: the linear-optics
    analyzer resolves only two of the four Bell states, and only the Psi-
    pattern is used as the herald.
    """
    return 0.25 * coincidence_probability(budget_a, budget_b)


def swap_detected_outcome(outcome: Outcome) -> Outcome:
    """Exchange the two heralding patterns (Psi- <-> Psi+)."""
    if outcome == Outcome.PSI_MINUS:
        return Outcome.PSI_PLUS
    if outcome == Outcome.PSI_PLUS:
        return Outcome.PSI_MINUS
    raise ValueError(f"{outcome!r} is not a heralding outcome")


def detected_branch_state(outcome: Outcome, label: InputStateLabel) -> PureState:
    """Ideal receiver state for a detected herald, in the logical frame.

    A Psi- pattern delivers the input itself; a Psi+ pattern delivers
    ``sigma_x |phi>`` (no feed-forward correction is applied, so reported
    Psi+ fidelities are measured against this rotated target).
    """
    phi = input_state(label)
    if outcome == Outcome.PSI_MINUS:
        return phi
    if outcome == Outcome.PSI_PLUS:
        return PureState(PAULI["X"] @ phi.amplitudes)
    raise ValueError(f"{outcome!r} is not a heralding outcome")


def correction_for_detected(outcome: Outcome) -> np.ndarray:
    """Unitary that undoes the rotation of a detected herald pattern."""
    if outcome == Outcome.PSI_MINUS:
        return PAULI["I"]
    if outcome == Outcome.PSI_PLUS:
        return PAULI["X"]
    raise ValueError(f"{outcome!r} is not a heralding outcome")


def conditioned_state(
    outcome: Outcome,
    label: InputStateLabel,
    noise: NoiseModel,
    interfered: bool,
) -> DensityMatrix:
    """Receiver state conditioned on a herald, as a deterministic mixture.

    With probability ``p_ent * p_a`` preparation and entanglement were
    ideal and the receiver holds the branch state for the detected
    pattern; otherwise it is maximally mixed.  For the two x-basis inputs
    the ideal branch survives even without interference, because their
    analyzer eigenpolarizations make the click correlations classically
    sufficient; for the other four inputs a non-interfering herald leaves
    no usable correlation and ``interfered=False`` zeroes the ideal weight.
    """
    weight = noise.p_ent * noise.p_a if (interfered or is_x_basis(label)) else 0.0
    branch = detected_branch_state(outcome, label)
    matrix = weight * branch.projector() + (1.0 - weight) * 0.5 * np.eye(2)
    return DensityMatrix(matrix)


@dataclass(frozen=True)
class TrialRecord:
    """Book-keeping for one protocol attempt (losses may truncate it)."""

    trial_id: int
    label: InputStateLabel
    click_a: bool
    click_c: bool
    detector_1: int | None = None
    t1_s: float | None = None
    detector_2: int | None = None
    t2_s: float | None = None
    outcome: Outcome | None = None
    d_omega: float | None = None
    branch_class: int | None = None  # 0 ideal, 1 coherently swapped, 2 no interference
    tomo_basis: int | None = None  # 0 z (H/V), 1 x (D/A), 2 y (R/L)
    tomo_result: int | None = None  # +1 / -1

    @property
    def interfered(self) -> bool | None:
        if self.branch_class is None:
            return None
        return self.branch_class != 2
