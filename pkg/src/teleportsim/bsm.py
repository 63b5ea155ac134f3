"""Click-pattern classification, interference contrast and time windowing.

A two-click pattern maps onto a Bell-measurement outcome:

* opposite NPBS ports, orthogonal polarizations  -> Psi- herald
* same port, orthogonal polarizations            -> Psi+ herald
* opposite ports, identical polarizations        -> no interference (ni)
* both clicks on one detector                    -> unresolved

The interference contrast is ``C = 1 - N_ni / N_psi_minus``; restricting
events to detection-time differences ``dt <= tau_max`` trades event rate
for contrast.  Events with ``dt`` exactly equal to ``tau_max`` are kept
(closed window) and histogram bins are left-closed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .photonics import ClickRecord, Detector

__all__ = [
    "Outcome",
    "BSMEvent",
    "ContrastEstimate",
    "DtHistogram",
    "classify",
    "classify_codes",
    "make_event",
    "contrast",
    "retained_fraction",
    "dt_histogram",
    "EventLogError",
    "event_to_record",
    "record_to_event",
    "write_event_log",
    "read_event_log",
]


class Outcome(IntEnum):
    PSI_MINUS = 0
    PSI_PLUS = 1
    NO_INTERFERENCE = 2
    UNRESOLVED = 3

    @property
    def label(self) -> str:
        return _OUTCOME_LABELS[self]


_OUTCOME_LABELS = {
    Outcome.PSI_MINUS: "psi_minus",
    Outcome.PSI_PLUS: "psi_plus",
    Outcome.NO_INTERFERENCE: "no_interference",
    Outcome.UNRESOLVED: "unresolved",
}
_LABEL_TO_OUTCOME = {v: k for k, v in _OUTCOME_LABELS.items()}


def classify(clicks: tuple[ClickRecord, ClickRecord]) -> Outcome:
    """Classify a click pair; total, deterministic and order-insensitive.

    With four detectors indexed by (port, polarization) the case "same
    port, same polarization, two different detectors" cannot be formed:
    port and polarization determine the detector.
    """
    a, b = clicks
    return Outcome(int(classify_codes(np.array([int(a.detector)]), np.array([int(b.detector)]))[0]))


def classify_codes(det1: np.ndarray, det2: np.ndarray) -> np.ndarray:
    """Vectorized classifier over integer detector codes (see Detector)."""
    det1 = np.asarray(det1)
    det2 = np.asarray(det2)
    same_port = (det1 // 2) == (det2 // 2)
    same_pol = (det1 % 2) == (det2 % 2)
    out = np.empty(det1.shape, dtype=np.int8)
    out[~same_pol & ~same_port] = Outcome.PSI_MINUS
    out[~same_pol & same_port] = Outcome.PSI_PLUS
    out[same_pol & ~same_port] = Outcome.NO_INTERFERENCE
    out[same_pol & same_port] = Outcome.UNRESOLVED
    return out


@dataclass(frozen=True)
class BSMEvent:
    """A classified detector-click pair from one protocol attempt."""

    clicks: tuple[ClickRecord, ClickRecord]
    outcome: Outcome
    dt: float

    def __post_init__(self) -> None:
        expected = classify(self.clicks)
        if expected != self.outcome:
            raise ValueError(
                f"outcome {self.outcome.label} does not match clicks (expect {expected.label})"
            )


def make_event(clicks: tuple[ClickRecord, ClickRecord]) -> BSMEvent:
    """Build a ``BSMEvent`` with the outcome and |t1 - t2| derived."""
    dt = abs(clicks[0].time - clicks[1].time)
    return BSMEvent(clicks=clicks, outcome=classify(clicks), dt=dt)


@dataclass(frozen=True)
class ContrastEstimate:
    """Interference contrast ``1 - N_ni / N_psi_minus`` with counts."""

    c: float
    n_psi_minus: int
    n_ni: int
    stderr: float
    defined: bool = True


def _event_arrays(events: Sequence[BSMEvent]) -> tuple[np.ndarray, np.ndarray]:
    outcomes = np.array([int(e.outcome) for e in events], dtype=np.int8)
    dts = np.array([e.dt for e in events], dtype=float)
    return outcomes, dts


def contrast_from_counts(n_psi_minus: int, n_ni: int) -> ContrastEstimate:
    """Contrast estimate with the ratio error propagated from both counts."""
    if n_psi_minus <= 0:
        return ContrastEstimate(c=math.nan, n_psi_minus=0, n_ni=n_ni, stderr=math.nan, defined=False)
    ratio = n_ni / n_psi_minus
    # Poisson errors on both counts: sigma_r = r sqrt(1/N_ni + 1/N_psi-)
    stderr = math.sqrt(n_ni * (1.0 + ratio)) / n_psi_minus if n_ni > 0 else 1.0 / n_psi_minus
    return ContrastEstimate(c=1.0 - ratio, n_psi_minus=n_psi_minus, n_ni=n_ni, stderr=stderr)


def contrast(events: Sequence[BSMEvent], tau_max: float = math.inf) -> ContrastEstimate:
    """Contrast over events with ``dt <= tau_max`` (closed interval)."""
    if not events:
        raise ValueError("contrast requires a nonempty event list")
    outcomes, dts = _event_arrays(events)
    keep = dts <= tau_max
    n_minus = int(np.sum(keep & (outcomes == Outcome.PSI_MINUS)))
    n_ni = int(np.sum(keep & (outcomes == Outcome.NO_INTERFERENCE)))
    return contrast_from_counts(n_minus, n_ni)


def retained_fraction(events: Sequence[BSMEvent], tau_max: float) -> float:
    """Fraction of Psi- events surviving the ``dt <= tau_max`` window."""
    if not events:
        raise ValueError("retained_fraction requires a nonempty event list")
    outcomes, dts = _event_arrays(events)
    minus = outcomes == Outcome.PSI_MINUS
    total = int(np.sum(minus))
    if total == 0:
        return 0.0
    return float(np.sum(minus & (dts <= tau_max)) / total)


@dataclass(frozen=True)
class DtHistogram:
    """Per-outcome counts binned over the detection-time difference."""

    bin_edges: np.ndarray
    n_psi_minus: np.ndarray
    n_psi_plus: np.ndarray
    n_ni: np.ndarray
    n_unresolved: np.ndarray
    ratio: np.ndarray = field(init=False)
    ratio_err: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.n_psi_minus > 0, self.n_ni / np.maximum(self.n_psi_minus, 1), np.nan)
            err = np.where(
                self.n_psi_minus > 0,
                np.sqrt(np.maximum(self.n_ni, 1) * (1.0 + ratio)) / np.maximum(self.n_psi_minus, 1),
                np.nan,
            )
        object.__setattr__(self, "ratio", ratio)
        object.__setattr__(self, "ratio_err", err)

    @property
    def total_counts(self) -> int:
        return int(
            self.n_psi_minus.sum() + self.n_psi_plus.sum() + self.n_ni.sum() + self.n_unresolved.sum()
        )


def dt_histogram(events: Sequence[BSMEvent], bin_width: float = 40e-9) -> DtHistogram:
    """Histogram the dt of every event per outcome; bins are left-closed."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not events:
        raise ValueError("dt_histogram requires a nonempty event list")
    outcomes, dts = _event_arrays(events)
    n_bins = max(1, int(np.ceil((dts.max() + 1e-15) / bin_width)))
    edges = np.arange(n_bins + 1) * bin_width
    idx = np.minimum((dts / bin_width).astype(int), n_bins - 1)

    def count(kind: Outcome) -> np.ndarray:
        return np.bincount(idx[outcomes == kind], minlength=n_bins)

    return DtHistogram(
        bin_edges=edges,
        n_psi_minus=count(Outcome.PSI_MINUS),
        n_psi_plus=count(Outcome.PSI_PLUS),
        n_ni=count(Outcome.NO_INTERFERENCE),
        n_unresolved=count(Outcome.UNRESOLVED),
    )


# --------------------------------------------------------------------------
# Event log: newline-delimited JSON records, bit-exact round trip.

_REQUIRED_FIELDS = ("trial_id", "detector_1", "t1_s", "detector_2", "t2_s", "outcome", "d_omega_rad_s")


class EventLogError(ValueError):
    """Raised on malformed event-log records; carries the record number."""

    def __init__(self, message: str, record_number: int | None = None):
        super().__init__(message if record_number is None else f"record {record_number}: {message}")
        self.record_number = record_number


def event_to_record(trial_id: int, event: BSMEvent, d_omega: float, **extra) -> dict:
    """Flatten an event into the log schema; extra fields pass through."""
    rec = {
        "trial_id": int(trial_id),
        "detector_1": event.clicks[0].detector.name,
        "t1_s": float(event.clicks[0].time),
        "detector_2": event.clicks[1].detector.name,
        "t2_s": float(event.clicks[1].time),
        "outcome": event.outcome.label,
        "d_omega_rad_s": float(d_omega),
    }
    rec.update(extra)
    return rec


def record_to_event(record: dict, record_number: int | None = None) -> tuple[int, BSMEvent, float]:
    """Parse and validate one log record into (trial_id, event, d_omega)."""
    for key in _REQUIRED_FIELDS:
        if key not in record:
            raise EventLogError(f"missing field {key!r}", record_number)
    try:
        clicks = (
            ClickRecord(Detector[record["detector_1"]], float(record["t1_s"])),
            ClickRecord(Detector[record["detector_2"]], float(record["t2_s"])),
        )
    except KeyError as exc:
        raise EventLogError(f"unknown detector {exc}", record_number) from None
    outcome = _LABEL_TO_OUTCOME.get(record["outcome"])
    if outcome is None:
        raise EventLogError(f"unknown outcome {record['outcome']!r}", record_number)
    event = make_event(clicks)
    if event.outcome != outcome:
        raise EventLogError(
            f"outcome {record['outcome']!r} inconsistent with detectors", record_number
        )
    return int(record["trial_id"]), event, float(record["d_omega_rad_s"])


def write_event_log(path: str | Path, records: Iterable[dict]) -> int:
    """Write records as one JSON object per line; returns the record count."""
    count = 0
    with open(path, "w") as handle:
        for rec in records:
            handle.write(json.dumps(rec, separators=(",", ":")))
            handle.write("\n")
            count += 1
    return count


def read_event_log(path: str | Path) -> Iterator[dict]:
    """Yield raw record dicts; malformed JSON raises ``EventLogError``."""
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise EventLogError(f"invalid JSON ({exc.msg})", number) from None
