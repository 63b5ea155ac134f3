"""Temporal-mode photons and time-resolved two-photon interference.

Two photons, one per input port of a 50:50 nonpolarizing beam splitter
(NPBS), are detected by four non-photon-number-resolving detectors: a
polarizing beam splitter in each NPBS output port splits H from V.  Each
photon carries a polarization qubit, a temporal envelope ``zeta(t)``
(the probability density of its detection time) and a per-trial angular
frequency offset.

For temporal amplitudes ``psi(t) = sqrt(zeta(t)) exp(-i w t)`` the joint
ordered detection density for detector ``(p, lam)`` firing at ``t1`` and
``(q, mu)`` at ``t2`` is

    G = 1/4 [ g1 <lam mu|rho|lam mu> + g2 <mu lam|rho|mu lam>
              + 2 s_p s_q Re( sqrt(g1 g2) e^{i dw (t2-t1)} <lam mu|rho|mu lam> ) ]

with ``g1 = zeta_a(t1) zeta_c(t2)``, ``g2 = zeta_a(t2) zeta_c(t1)``,
``dw`` the frequency difference and ``s_p = +1/-1`` for output port 1/2.
Summed over all sixteen ordered detector pairs this equals ``g1 + g2``,
so drawing ``t1`` from the first envelope, ``t2`` from the second and
then the detector pair from the conditional distribution reproduces the
exact joint statistics, including Hong-Ou-Mandel suppression of
same-polarization coincidences in opposite ports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .qcore import DensityMatrix, PureState, QuantumStateError

__all__ = [
    "Detector",
    "ClickRecord",
    "TemporalEnvelope",
    "TemporalPhoton",
    "coincidence_density",
    "sample_freq_offset",
    "pattern_distribution",
    "pattern_weight_components",
    "sample_click_pair",
    "sample_click_pairs",
    "mode_overlap",
    "DETECTOR_PAIRS",
]

_NORM_TOL = 1e-9
_GRID_POINTS = 4096


class Detector(IntEnum):
    """The four single-photon detectors: NPBS port 1/2, then H/V output."""

    P1H = 0
    P1V = 1
    P2H = 2
    P2V = 3

    @property
    def port(self) -> int:
        return 1 + self.value // 2

    @property
    def polarization(self) -> int:
        """0 for H, 1 for V."""
        return self.value % 2

    @property
    def port_sign(self) -> int:
        return 1 if self.port == 1 else -1


@dataclass(frozen=True)
class ClickRecord:
    """A single detector click with its timestamp in seconds."""

    detector: Detector
    time: float


class TemporalEnvelope:
    """Detection-time probability density over a gate window.

    The density lives on a dense grid over ``[gate_start, gate_stop]``,
    is nonnegative and normalized to unit integral; sampling uses the
    tabulated inverse CDF.  Two constructors cover the supported shapes:
    a difference-of-exponentials pulse (fast rise, slow fall, optionally
    mixed with a delayed copy to model a late-emission tail) and an
    arbitrary tabulated density loaded from CSV.
    """

    def __init__(self, times: np.ndarray, densities: np.ndarray, shape: str = "table"):
        times = np.asarray(times, dtype=float)
        densities = np.asarray(densities, dtype=float)
        if times.ndim != 1 or times.size < 8 or times.shape != densities.shape:
            raise ValueError("envelope needs matching 1-d time/density arrays (>= 8 points)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("envelope time grid must be strictly increasing")
        if np.any(densities < 0):
            raise ValueError("envelope density must be nonnegative")
        total = np.trapz(densities, times)
        if total <= 0:
            raise ValueError("envelope density integrates to zero")
        self.shape = shape
        self.times = times
        self.densities = densities / total
        # cumulative trapezoid for inverse-CDF sampling
        increments = 0.5 * (self.densities[1:] + self.densities[:-1]) * np.diff(times)
        cdf = np.concatenate([[0.0], np.cumsum(increments)])
        self._cdf = cdf / cdf[-1]

    @classmethod
    def double_exponential(
        cls,
        rise: float,
        fall: float,
        gate: tuple[float, float] = (0.0, 600e-9),
        tail_weight: float = 0.0,
        tail_delay: float = 0.0,
        n_grid: int = _GRID_POINTS,
    ) -> "TemporalEnvelope":
        """Pulse ``exp(-t/fall) - exp(-t/rise)`` starting at the gate opening.

        ``tail_weight`` in [0, 1) mixes in a copy delayed by ``tail_delay``,
        modeling photons emitted late after imperfect state preparation.
        """
        if rise <= 0 or fall <= rise:
            raise ValueError("need 0 < rise < fall for a double-exponential envelope")
        if not 0.0 <= tail_weight < 1.0:
            raise ValueError("tail_weight must lie in [0, 1)")
        t0, t1 = gate
        if t1 <= t0:
            raise ValueError("gate must satisfy start < stop")
        times = np.linspace(t0, t1, n_grid)
        rel = times - t0

        def pulse(offset: float) -> np.ndarray:
            x = rel - offset
            out = np.exp(-x / fall) - np.exp(-x / rise)
            out[x < 0] = 0.0
            return np.clip(out, 0.0, None)

        dens = (1.0 - tail_weight) * pulse(0.0)
        if tail_weight > 0.0:
            dens = dens + tail_weight * pulse(tail_delay)
        return cls(times, dens, shape="double_exponential")

    @classmethod
    def from_table(cls, times: np.ndarray, densities: np.ndarray) -> "TemporalEnvelope":
        return cls(times, densities, shape="table")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TemporalEnvelope":
        """Load a tabulated envelope with columns ``time_s, density``."""
        times: list[float] = []
        dens: list[float] = []
        with open(path, newline="") as handle:
            for row in csv.reader(handle):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    t, d = float(row[0]), float(row[1])
                except ValueError:
                    if not times:
                        continue  # header row
                    raise
                times.append(t)
                dens.append(d)
        if not times:
            raise ValueError(f"no numeric rows found in envelope table {path}")
        return cls(np.asarray(times), np.asarray(dens), shape="table")

    @property
    def gate(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def density(self, t: np.ndarray | float) -> np.ndarray | float:
        return np.interp(t, self.times, self.densities, left=0.0, right=0.0)

    def amplitude(self, t: np.ndarray | float) -> np.ndarray | float:
        return np.sqrt(self.density(t))

    def integral(self) -> float:
        return float(np.trapz(self.densities, self.times))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray | float:
        u = rng.random(size)
        return np.interp(u, self._cdf, self.times)

    def mean_time(self) -> float:
        return float(np.trapz(self.times * self.densities, self.times))


@dataclass(frozen=True)
class TemporalPhoton:
    """Polarization qubit plus temporal envelope and per-trial detuning."""

    polarization: PureState
    envelope: TemporalEnvelope
    freq_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.polarization.n_qubits != 1:
            raise QuantumStateError("photon polarization must be a single qubit")


def sample_freq_offset(sigma_omega: float, rng: np.random.Generator) -> float:
    """Zero-mean Gaussian angular-frequency offset, constant within a trial."""
    if sigma_omega < 0:
        raise ValueError("sigma_omega must be nonnegative")
    if sigma_omega == 0:
        return 0.0
    return float(rng.normal(0.0, sigma_omega))


def coincidence_density(
    t1: np.ndarray | float,
    t2: np.ndarray | float,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
    d_omega: float,
    same_pol: bool,
) -> np.ndarray | float:
    """Opposite-port coincidence density for two definite polarizations.

    For identically polarized photons the amplitude interference term
    survives and the density is

        1/4 |psi_a(t1) psi_c(t2) - psi_a(t2) psi_c(t1) e^{i dw (t2 - t1)}|^2

    which vanishes as ``t1 -> t2``; for orthogonal (distinguishable)
    polarizations it is the classical sum ``(g1 + g2)/4``.
    """
    g1 = np.asarray(env_a.density(t1)) * np.asarray(env_c.density(t2))
    g2 = np.asarray(env_a.density(t2)) * np.asarray(env_c.density(t1))
    if not same_pol:
        return 0.25 * (g1 + g2)
    cross = 2.0 * np.sqrt(g1 * g2) * np.cos(d_omega * (np.asarray(t2) - np.asarray(t1)))
    return 0.25 * np.clip(g1 + g2 - cross, 0.0, None)


def mode_overlap(
    t1: np.ndarray | float,
    t2: np.ndarray | float,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
) -> np.ndarray | float:
    """Envelope indistinguishability ``2 sqrt(g1 g2)/(g1 + g2)`` at fixed times.

    Equals 1 exactly for identical envelopes; the full interference
    visibility of a trial is this factor times ``cos(dw * (t2 - t1))``.
    """
    g1 = np.asarray(env_a.density(t1)) * np.asarray(env_c.density(t2))
    g2 = np.asarray(env_a.density(t2)) * np.asarray(env_c.density(t1))
    total = g1 + g2
    with np.errstate(invalid="ignore", divide="ignore"):
        overlap = np.where(total > 0.0, 2.0 * np.sqrt(g1 * g2) / np.where(total > 0, total, 1.0), 0.0)
    return overlap


# Ordered detector pairs indexing the 16-cell click-pattern distribution.
DETECTOR_PAIRS: tuple[tuple[Detector, Detector], ...] = tuple(
    (Detector(i), Detector(j)) for i in range(4) for j in range(4)
)


def pattern_weight_components(joint_pol: DensityMatrix) -> dict[str, np.ndarray]:
    """Per-cell coefficients of the ordered click-pattern distribution.

    For each ordered detector pair the unnormalized weight is

        w = g1 * d1 + g2 * d2 + 2 s sqrt(g1 g2) (cos(th) zr - sin(th) zi)

    where ``th = dw (t2 - t1)`` and the returned arrays hold ``d1``, ``d2``,
    ``s * zr`` and ``s * zi`` (already folded with the port-sign product).
    The joint polarization basis is |lam mu> with photon a first.
    """
    if joint_pol.n_qubits != 2:
        raise QuantumStateError("joint polarization state must cover two qubits")
    rho = joint_pol.matrix
    d1 = np.empty(16)
    d2 = np.empty(16)
    zr = np.empty(16)
    zi = np.empty(16)
    for idx, (da, db) in enumerate(DETECTOR_PAIRS):
        lam, mu = da.polarization, db.polarization
        s = da.port_sign * db.port_sign
        i_lm = 2 * lam + mu
        i_ml = 2 * mu + lam
        d1[idx] = rho[i_lm, i_lm].real
        d2[idx] = rho[i_ml, i_ml].real
        z = rho[i_lm, i_ml]
        zr[idx] = s * z.real
        zi[idx] = s * z.imag
    return {"d1": d1, "d2": d2, "zr": zr, "zi": zi}


def _pattern_weights(
    components: dict[str, np.ndarray],
    g1: np.ndarray,
    g2: np.ndarray,
    theta: np.ndarray,
) -> np.ndarray:
    g1 = np.atleast_1d(g1)[:, None]
    g2 = np.atleast_1d(g2)[:, None]
    theta = np.atleast_1d(theta)[:, None]
    cross = 2.0 * np.sqrt(g1 * g2)
    w = (
        g1 * components["d1"]
        + g2 * components["d2"]
        + cross * (np.cos(theta) * components["zr"] - np.sin(theta) * components["zi"])
    )
    return np.clip(w, 0.0, None)


def pattern_distribution(
    joint_pol: DensityMatrix,
    t1: float,
    t2: float,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
    d_omega: float,
) -> np.ndarray:
    """Normalized probabilities of the 16 ordered detector pairs at fixed times."""
    g1 = float(env_a.density(t1)) * float(env_c.density(t2))
    g2 = float(env_a.density(t2)) * float(env_c.density(t1))
    comps = pattern_weight_components(joint_pol)
    w = _pattern_weights(comps, np.array([g1]), np.array([g2]), np.array([d_omega * (t2 - t1)]))[0]
    total = w.sum()
    if total <= 0.0:
        # zero-density times: all patterns equally uninformative
        return np.full(16, 1.0 / 16.0)
    return w / total


def _categorical(rng_values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Vectorized categorical draw: one index per row of ``weights``."""
    cdf = np.cumsum(weights, axis=1)
    totals = cdf[:, -1:]
    bad = totals[:, 0] <= 0.0
    if np.any(bad):
        weights = weights.copy()
        weights[bad] = 1.0
        cdf = np.cumsum(weights, axis=1)
        totals = cdf[:, -1:]
    cdf = cdf / totals
    return (cdf < rng_values[:, None]).sum(axis=1)


def sample_click_pairs(
    n: int,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
    joint_pol: DensityMatrix,
    d_omega: np.ndarray | float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample ``n`` two-click events: returns (det1, t1, det2, t2) arrays.

    Detection times are drawn from the two envelopes, then the ordered
    detector pair from the exact conditional pattern distribution at those
    times.  ``d_omega`` may be a scalar or one value per event.
    """
    d_omega = np.broadcast_to(np.asarray(d_omega, dtype=float), (n,))
    t1 = np.asarray(env_a.sample(rng, n), dtype=float)
    t2 = np.asarray(env_c.sample(rng, n), dtype=float)
    g1 = np.asarray(env_a.density(t1)) * np.asarray(env_c.density(t2))
    g2 = np.asarray(env_a.density(t2)) * np.asarray(env_c.density(t1))
    comps = pattern_weight_components(joint_pol)
    weights = _pattern_weights(comps, g1, g2, d_omega * (t2 - t1))
    idx = _categorical(rng.random(n), weights)
    det1 = (idx // 4).astype(np.int8)
    det2 = (idx % 4).astype(np.int8)
    return det1, t1, det2, t2


def sample_click_pair(
    photon_a: TemporalPhoton,
    photon_c: TemporalPhoton,
    joint_pol_state: DensityMatrix,
    rng: np.random.Generator,
) -> tuple[ClickRecord, ClickRecord]:
    """Sample one BSM click pair for two photons incident on the NPBS.

    Both photons are assumed present (losses are applied upstream).  The
    frequency difference is ``photon_c.freq_offset - photon_a.freq_offset``.
    Two clicks may land on the same detector; with non-number-resolving
    detectors such pairs are the unresolved outcome, which the classifier
    in :mod:`teleportsim.bsm` tags as ``Outcome.UNRESOLVED``.
    """
    d_omega = photon_c.freq_offset - photon_a.freq_offset
    det1, t1, det2, t2 = sample_click_pairs(
        1, photon_a.envelope, photon_c.envelope, joint_pol_state, d_omega, rng
    )
    return (
        ClickRecord(Detector(int(det1[0])), float(t1[0])),
        ClickRecord(Detector(int(det2[0])), float(t2[0])),
    )
