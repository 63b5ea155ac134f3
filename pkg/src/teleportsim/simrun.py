"""Monte Carlo campaign engine with deterministic, chunked RNG streams.

A campaign repeats the protocol ``trials`` times: prepare the sender qubit
(round-robin over the configured input schedule), create the entangled
memory-photon pair, apply per-photon loss Bernoullis, and for surviving
pairs sample detection times, frequency offsets and the four-detector
click pattern from the exact beam-splitter statistics.  Heralded events
additionally draw the latent interference class of the trial and, for
Psi- heralds, a tomography outcome on the receiver qubit.

Determinism: trials are processed in fixed chunks; chunk ``k`` uses the
``k``-th child of ``SeedSequence(seed)`` and results merge in chunk order,
so outputs are byte-identical for any worker count.  A dedicated child
stream drives tomography sampling, which walks the Psi- events in global
trial order (round-robin basis assignment).

Latent interference class:  at sampled times the interference visibility
of a trial is ``v = M(t1, t2) * cos(dw (t2 - t1))`` with ``M`` the envelope
overlap factor.  A heralded trial is drawn coherent with probability
``|v|`` (with the sign deciding whether the herald acts as its own Bell
pattern or as the conjugate one) and non-interfering otherwise.  This
reproduces the exact conditional receiver states of the white-noise
protocol model, and the measured contrast re-emerges as the ensemble
average of ``v`` rather than being injected as a parameter.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import __version__
from .bsm import EventLogError, Outcome, classify_codes
from .config import ExperimentConfig, SCHEMA_VERSION
from .photonics import TemporalEnvelope, pattern_weight_components
from .protocol import (
    InputStateLabel,
    NoiseModel,
    conditioned_state,
    detected_branch_state,
    is_x_basis,
    lab_polarization,
    prepare_input,
    swap_detected_outcome,
)
from .qcore import DensityMatrix

__all__ = [
    "EventTable",
    "CampaignResult",
    "LoadedCampaign",
    "run_campaign",
    "write_log",
    "load_log",
    "trial_fidelities",
    "receiver_bloch_vectors",
    "CalibrationError",
    "CalibrationResult",
    "calibrate_sigma_omega",
    "predicted_contrast",
    "thread_count",
]

THREADS_ENV = "TELEPORTSIM_THREADS"

_LABELS = tuple(InputStateLabel)
_LABEL_INDEX = {label: i for i, label in enumerate(_LABELS)}
_TOMO_AXES = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])  # z, x, y
TOMO_BASIS_NAMES = ("z", "x", "y")

BRANCH_IDEAL = 0
BRANCH_SWAPPED = 1
BRANCH_MIXED = 2


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value <= 0:
        value = min(4, os.cpu_count() or 1)
    return value


@dataclass
class EventTable:
    """Columnar store of two-click events, ordered by trial id."""

    trial_id: np.ndarray
    label_code: np.ndarray  # index into InputStateLabel order, -1 if unknown
    det1: np.ndarray
    t1: np.ndarray
    det2: np.ndarray
    t2: np.ndarray
    outcome: np.ndarray
    d_omega: np.ndarray
    branch_class: np.ndarray  # -1 for non-heralded events
    tomo_basis: np.ndarray  # -1 when absent
    tomo_result: np.ndarray  # 0 when absent

    def __len__(self) -> int:
        return self.trial_id.size

    @property
    def dt(self) -> np.ndarray:
        return np.abs(self.t1 - self.t2)

    @classmethod
    def empty(cls) -> "EventTable":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        zb = np.zeros(0, dtype=np.int8)
        return cls(zi, zb.copy(), zb.copy(), z.copy(), zb.copy(), z.copy(), zb.copy(), z.copy(), zb.copy(), zb.copy(), zb.copy())

    @classmethod
    def concatenate(cls, parts: list["EventTable"]) -> "EventTable":
        if not parts:
            return cls.empty()
        return cls(
            **{
                name: np.concatenate([getattr(p, name) for p in parts])
                for name in (
                    "trial_id",
                    "label_code",
                    "det1",
                    "t1",
                    "det2",
                    "t2",
                    "outcome",
                    "d_omega",
                    "branch_class",
                    "tomo_basis",
                    "tomo_result",
                )
            }
        )


_COUNTER_KEYS = (
    "attempts",
    "no_click",
    "one_click",
    "two_click",
    "psi_minus",
    "psi_plus",
    "no_interference",
    "unresolved",
)


@dataclass
class CampaignResult:
    config: ExperimentConfig
    header: dict
    counters: dict[str, int]
    events: EventTable
    attempts: dict | None  # full-detail per-trial presence arrays
    sigma_omega: float
    elapsed_s: float

    def as_loaded(self) -> "LoadedCampaign":
        """View this result the way ``load_log`` presents a written log."""
        return LoadedCampaign(header=self.header, events=self.events, counters=self.counters)

    def rate_summary(self) -> dict:
        """Heralding-rate bookkeeping at the configured repetition rate."""
        attempts = max(self.counters["attempts"], 1)
        p_herald = self.counters["psi_minus"] / attempts
        rate_trapped = self.config.rep_rate_hz * p_herald
        return {
            "psi_minus_rate_per_attempt": p_herald,
            "events_per_second_trapped": rate_trapped,
            "events_per_second_lab": rate_trapped * self.config.duty_cycle,
            "seconds_per_event_trapped": (1.0 / rate_trapped) if rate_trapped > 0 else math.inf,
        }


def _joint_lab_components(noise: NoiseModel) -> dict[str, np.ndarray]:
    """Per-label 16-cell weight coefficients for the sender (x) idler pair.

    The sender photon carries the depolarized input state mapped to the
    analyzer frame; the entangled photon's reduced polarization is
    maximally mixed regardless of ``p_ent``, so the joint state used for
    click sampling is ``rho_sender (x) I/2``.
    """
    stacks: dict[str, list[np.ndarray]] = {"d1": [], "d2": [], "zr": [], "zi": []}
    eye2 = np.eye(2) / 2.0
    for label in _LABELS:
        rho_sender = lab_polarization(prepare_input(label, noise))
        joint = DensityMatrix(np.kron(rho_sender.matrix, eye2))
        comps = pattern_weight_components(joint)
        for key in stacks:
            stacks[key].append(comps[key])
    return {key: np.stack(vals) for key, vals in stacks.items()}


def _sample_patterns(
    comps: dict[str, np.ndarray],
    label_codes: np.ndarray,
    g1: np.ndarray,
    g2: np.ndarray,
    theta: np.ndarray,
    u: np.ndarray,
) -> np.ndarray:
    cross = 2.0 * np.sqrt(g1 * g2)
    w = (
        g1[:, None] * comps["d1"][label_codes]
        + g2[:, None] * comps["d2"][label_codes]
        + cross[:, None] * (np.cos(theta)[:, None] * comps["zr"][label_codes]
                            - np.sin(theta)[:, None] * comps["zi"][label_codes])
    )
    np.clip(w, 0.0, None, out=w)
    cdf = np.cumsum(w, axis=1)
    totals = cdf[:, -1:]
    zero = totals[:, 0] <= 0.0
    if np.any(zero):
        w[zero] = 1.0
        cdf = np.cumsum(w, axis=1)
        totals = cdf[:, -1:]
    return (cdf / totals < u[:, None]).sum(axis=1)


def _single_photon_detector(rho_lab: np.ndarray, u_port: np.ndarray, u_pol: np.ndarray) -> np.ndarray:
    """Detector codes for a lone photon: random NPBS port, PBS by polarization."""
    p_h = np.real(rho_lab[0, 0])
    port = (u_port < 0.5).astype(np.int8)  # 0 -> port 1, 1 -> port 2
    pol = (u_pol >= p_h).astype(np.int8)
    return (2 * port + pol).astype(np.int8)


def run_campaign(config: ExperimentConfig) -> CampaignResult:
    """Run the full Monte Carlo campaign described by ``config``."""
    t_start = time.perf_counter()
    sigma = config.resolved_sigma_omega()
    noise = NoiseModel(p_a=config.noise.p_a, p_ent=config.noise.p_ent, sigma_omega=sigma)

    env_a = config.envelope_a.build()
    env_c = env_a if config.envelope_c == config.envelope_a else config.envelope_c.build()

    comps = _joint_lab_components(noise)
    schedule_codes = np.array([_LABEL_INDEX[l] for l in config.schedule], dtype=np.int8)

    xi_a = config.budget_a.xi * config.storage_success if config.losses else 1.0
    xi_c = config.budget_b.xi if config.losses else 1.0
    jitter = config.detector_jitter_ns * 1e-9
    gate_a = env_a.gate
    gate_c = env_c.gate
    dark_gate = max(gate_a[1], gate_c[1]) - min(gate_a[0], gate_c[0])
    p_dark_pair = 1.0 - math.exp(-4.0 * config.dark_rate_hz * dark_gate) if config.dark_rate_hz else 0.0
    rho_a_lab = {i: lab_polarization(prepare_input(label, noise)).matrix for i, label in enumerate(_LABELS)}

    n_chunks = (config.trials + config.chunk_size - 1) // config.chunk_size
    children = np.random.SeedSequence(config.seed).spawn(n_chunks + 1)
    tomo_rng = np.random.default_rng(children[-1])

    def process_chunk(k: int) -> tuple[EventTable, dict[str, int], dict | None]:
        rng = np.random.default_rng(children[k])
        start = k * config.chunk_size
        stop = min(start + config.chunk_size, config.trials)
        ids = np.arange(start, stop, dtype=np.int64)
        n = ids.size
        label_codes = schedule_codes[ids % schedule_codes.size]

        if config.losses:
            click_a = rng.random(n) < xi_a
            click_c = rng.random(n) < xi_c
        else:
            click_a = np.ones(n, dtype=bool)
            click_c = np.ones(n, dtype=bool)

        pair = click_a & click_c
        lone_a = click_a & ~click_c
        lone_c = click_c & ~click_a

        m = int(pair.sum())
        e_ids = ids[pair]
        e_labels = label_codes[pair]

        off_a = rng.normal(0.0, sigma, m)
        off_c = rng.normal(0.0, sigma, m)
        d_omega = off_c - off_a
        t1 = np.asarray(env_a.sample(rng, m), dtype=float)
        t2 = np.asarray(env_c.sample(rng, m), dtype=float)

        g1 = np.asarray(env_a.density(t1)) * np.asarray(env_c.density(t2))
        g2 = np.asarray(env_a.density(t2)) * np.asarray(env_c.density(t1))
        theta = d_omega * (t2 - t1)
        idx = _sample_patterns(comps, e_labels, g1, g2, theta, rng.random(m))
        det1 = (idx // 4).astype(np.int8)
        det2 = (idx % 4).astype(np.int8)

        # interference visibility and latent branch class for heralds
        total = g1 + g2
        overlap = np.divide(2.0 * np.sqrt(g1 * g2), total, out=np.zeros(m), where=total > 0)
        vis = overlap * np.cos(theta)
        u_branch = rng.random(m)
        branch = np.full(m, BRANCH_MIXED, dtype=np.int8)
        branch[u_branch < np.abs(vis)] = BRANCH_SWAPPED
        branch[u_branch < np.clip(vis, 0.0, None)] = BRANCH_IDEAL

        if jitter > 0:
            t1 = t1 + rng.normal(0.0, jitter, m)
            t2 = t2 + rng.normal(0.0, jitter, m)

        outcome = classify_codes(det1, det2)
        herald = (outcome == int(Outcome.PSI_MINUS)) | (outcome == int(Outcome.PSI_PLUS))
        branch[~herald] = -1

        # optional dark counts: a lone real click plus one dark click forms
        # a spurious, non-interfering event
        dark_tables: list[EventTable] = []
        if p_dark_pair > 0.0:
            for lone_mask, env, is_sender in ((lone_a, env_a, True), (lone_c, env_c, False)):
                l_ids = ids[lone_mask]
                nl = l_ids.size
                if nl == 0:
                    continue
                promote = rng.random(nl) < p_dark_pair
                l_ids = l_ids[promote]
                l_labels = label_codes[lone_mask][promote]
                nl = l_ids.size
                if nl == 0:
                    continue
                if is_sender:
                    rho_stack = np.stack([rho_a_lab[int(c)] for c in l_labels])
                    p_h = np.real(rho_stack[:, 0, 0])
                else:
                    p_h = np.full(nl, 0.5)
                port = (rng.random(nl) < 0.5).astype(np.int8)
                pol = (rng.random(nl) >= p_h).astype(np.int8)
                real_det = 2 * port + pol
                real_t = np.asarray(env.sample(rng, nl), dtype=float)
                dark_det = rng.integers(0, 4, nl).astype(np.int8)
                dark_t = rng.random(nl) * dark_gate + min(gate_a[0], gate_c[0])
                d_outcome = classify_codes(real_det, dark_det)
                d_branch = np.where(
                    (d_outcome == int(Outcome.PSI_MINUS)) | (d_outcome == int(Outcome.PSI_PLUS)),
                    BRANCH_MIXED,
                    -1,
                ).astype(np.int8)
                dark_tables.append(
                    EventTable(
                        trial_id=l_ids,
                        label_code=l_labels,
                        det1=real_det,
                        t1=real_t,
                        det2=dark_det,
                        t2=dark_t,
                        outcome=d_outcome,
                        d_omega=np.zeros(nl),
                        branch_class=d_branch,
                        tomo_basis=np.full(nl, -1, dtype=np.int8),
                        tomo_result=np.zeros(nl, dtype=np.int8),
                    )
                )

        table = EventTable(
            trial_id=e_ids,
            label_code=e_labels,
            det1=det1,
            t1=t1,
            det2=det2,
            t2=t2,
            outcome=outcome,
            d_omega=d_omega,
            branch_class=branch,
            tomo_basis=np.full(m, -1, dtype=np.int8),
            tomo_result=np.zeros(m, dtype=np.int8),
        )
        if dark_tables:
            merged = EventTable.concatenate([table] + dark_tables)
            order = np.argsort(merged.trial_id, kind="stable")
            table = EventTable(**{k: getattr(merged, k)[order] for k in vars(merged)})

        counters = {
            "attempts": n,
            "no_click": int(np.sum(~click_a & ~click_c)),
            "one_click": int(np.sum(click_a ^ click_c)),
            "two_click": m,
        }
        for kind in Outcome:
            counters[kind.label] = int(np.sum(table.outcome == int(kind)))

        attempts = None
        if config.log_detail == "full":
            attempts = {
                "trial_id": ids,
                "label_code": label_codes,
                "click_a": click_a,
                "click_c": click_c,
            }
        return table, counters, attempts

    workers = thread_count()
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process_chunk, range(n_chunks)))
    else:
        results = [process_chunk(k) for k in range(n_chunks)]

    events = EventTable.concatenate([r[0] for r in results])
    counters = {key: 0 for key in _COUNTER_KEYS}
    for _, c, _ in results:
        for key, value in c.items():
            counters[key] += value

    attempts = None
    if config.log_detail == "full":
        attempts = {
            key: np.concatenate([r[2][key] for r in results]) for key in results[0][2]
        }

    if config.tomography and len(events):
        _assign_tomography(events, noise, tomo_rng)

    header = config.header_dict()
    elapsed = time.perf_counter() - t_start
    return CampaignResult(
        config=config,
        header=header,
        counters=counters,
        events=events,
        attempts=attempts,
        sigma_omega=sigma,
        elapsed_s=elapsed,
    )


def _branch_states(noise: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Lookup tables over (label, herald outcome, branch class).

    Returns ``bloch[label, outcome, class, 3]`` of the conditioned receiver
    state and ``fid[label, outcome, class]`` against the detected-herald
    target; both follow from :func:`teleportsim.protocol.conditioned_state`.
    """
    n_labels = len(_LABELS)
    bloch = np.zeros((n_labels, 2, 3, 3))
    fid = np.zeros((n_labels, 2, 3))
    for li, label in enumerate(_LABELS):
        for oi, out in enumerate((Outcome.PSI_MINUS, Outcome.PSI_PLUS)):
            target = detected_branch_state(out, label)
            for cls in (BRANCH_IDEAL, BRANCH_SWAPPED, BRANCH_MIXED):
                if cls == BRANCH_SWAPPED:
                    rho = conditioned_state(swap_detected_outcome(out), label, noise, interfered=True)
                else:
                    rho = conditioned_state(out, label, noise, interfered=(cls == BRANCH_IDEAL))
                bloch[li, oi, cls] = rho.bloch_vector()
                fid[li, oi, cls] = float(np.real(np.vdot(target.amplitudes, rho.matrix @ target.amplitudes)))
    return bloch, fid


def trial_fidelities(events: EventTable, noise: NoiseModel) -> np.ndarray:
    """Per-event fidelity of the conditioned receiver state vs its target.

    Defined for heralded events (Psi-/Psi+); other rows get NaN.
    """
    _, fid = _branch_states(noise)
    out = np.full(len(events), np.nan)
    herald = (events.outcome == int(Outcome.PSI_MINUS)) | (events.outcome == int(Outcome.PSI_PLUS))
    ok = herald & (events.branch_class >= 0) & (events.label_code >= 0)
    out[ok] = fid[events.label_code[ok], events.outcome[ok], events.branch_class[ok]]
    return out


def receiver_bloch_vectors(events: EventTable, noise: NoiseModel) -> np.ndarray:
    """Bloch vector of the conditioned receiver state per heralded event."""
    bloch, _ = _branch_states(noise)
    out = np.full((len(events), 3), np.nan)
    herald = (events.outcome == int(Outcome.PSI_MINUS)) | (events.outcome == int(Outcome.PSI_PLUS))
    ok = herald & (events.branch_class >= 0) & (events.label_code >= 0)
    out[ok] = bloch[events.label_code[ok], events.outcome[ok], events.branch_class[ok]]
    return out


def _assign_tomography(events: EventTable, noise: NoiseModel, rng: np.random.Generator) -> None:
    """Round-robin basis choice and Born-rule outcome for Psi- heralds."""
    minus = np.flatnonzero(
        (events.outcome == int(Outcome.PSI_MINUS))
        & (events.branch_class >= 0)
        & (events.label_code >= 0)
    )
    if minus.size == 0:
        return
    basis = (np.arange(minus.size) % 3).astype(np.int8)
    bloch, _ = _branch_states(noise)
    vectors = bloch[events.label_code[minus], 0, events.branch_class[minus]]
    projections = np.einsum("ij,ij->i", vectors, _TOMO_AXES[basis])
    p_plus = 0.5 * (1.0 + projections)
    draws = rng.random(minus.size)
    events.tomo_basis[minus] = basis
    events.tomo_result[minus] = np.where(draws < p_plus, 1, -1).astype(np.int8)


# --------------------------------------------------------------------------
# Event log I/O (newline-delimited JSON: header, events, summary)

_DETECTOR_NAMES = ("P1H", "P1V", "P2H", "P2V")
_DETECTOR_CODES = {name: i for i, name in enumerate(_DETECTOR_NAMES)}
_OUTCOME_NAMES = tuple(o.label for o in Outcome)
_OUTCOME_CODES = {name: i for i, name in enumerate(_OUTCOME_NAMES)}


def _event_records(result: CampaignResult) -> Iterator[dict]:
    ev = result.events
    for i in range(len(ev)):
        rec = {
            "trial_id": int(ev.trial_id[i]),
            "detector_1": _DETECTOR_NAMES[ev.det1[i]],
            "t1_s": float(ev.t1[i]),
            "detector_2": _DETECTOR_NAMES[ev.det2[i]],
            "t2_s": float(ev.t2[i]),
            "outcome": _OUTCOME_NAMES[ev.outcome[i]],
            "d_omega_rad_s": float(ev.d_omega[i]),
            "input": _LABELS[ev.label_code[i]].value if ev.label_code[i] >= 0 else None,
        }
        if ev.branch_class[i] >= 0:
            rec["branch_class"] = int(ev.branch_class[i])
            rec["interfered"] = bool(ev.branch_class[i] != BRANCH_MIXED)
        if ev.tomo_basis[i] >= 0:
            rec["tomo_basis"] = TOMO_BASIS_NAMES[ev.tomo_basis[i]]
            rec["tomo_result"] = int(ev.tomo_result[i])
        yield rec


def write_log(result: CampaignResult, path: str | Path) -> int:
    """Write header, event records and a summary; returns the event count."""
    path = Path(path)
    count = 0
    with open(path, "w") as handle:
        handle.write(json.dumps(result.header, separators=(",", ":")) + "\n")
        if result.attempts is not None:
            ev_ids = set(result.events.trial_id.tolist())
            att = result.attempts
            for i in range(att["trial_id"].size):
                tid = int(att["trial_id"][i])
                if tid in ev_ids:
                    continue
                handle.write(
                    json.dumps(
                        {
                            "type": "attempt",
                            "trial_id": tid,
                            "input": _LABELS[att["label_code"][i]].value,
                            "click_a": bool(att["click_a"][i]),
                            "click_c": bool(att["click_c"][i]),
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        for rec in _event_records(result):
            handle.write(json.dumps(rec, separators=(",", ":")) + "\n")
            count += 1
        summary = {"type": "summary", "counters": result.counters}
        handle.write(json.dumps(summary, separators=(",", ":")) + "\n")
    return count


@dataclass
class LoadedCampaign:
    header: dict
    events: EventTable
    counters: dict[str, int] | None
    n_attempt_records: int = 0

    def noise(self) -> NoiseModel:
        block = self.header.get("noise", {})
        return NoiseModel(
            p_a=float(block.get("p_a", 1.0)),
            p_ent=float(block.get("p_ent", 1.0)),
            sigma_omega=float(block.get("sigma_omega", 0.0)),
        )


def load_log(path: str | Path) -> LoadedCampaign:
    """Parse an event log, validating each record (first bad record named)."""
    header: dict | None = None
    counters: dict[str, int] | None = None
    cols: dict[str, list] = {k: [] for k in (
        "trial_id", "label_code", "det1", "t1", "det2", "t2",
        "outcome", "d_omega", "branch_class", "tomo_basis", "tomo_result",
    )}
    n_attempts = 0
    with open(path) as handle:
        number = 0
        for line in handle:
            number += 1
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EventLogError(f"invalid JSON ({exc.msg})", number) from None
            kind = rec.get("type")
            if kind == "header":
                header = rec
                continue
            if kind == "summary":
                counters = rec.get("counters")
                continue
            if kind == "attempt":
                n_attempts += 1
                continue
            for fld in ("trial_id", "detector_1", "t1_s", "detector_2", "t2_s", "outcome", "d_omega_rad_s"):
                if fld not in rec:
                    raise EventLogError(f"missing field {fld!r}", number)
            det1 = _DETECTOR_CODES.get(rec["detector_1"])
            det2 = _DETECTOR_CODES.get(rec["detector_2"])
            if det1 is None or det2 is None:
                raise EventLogError(
                    f"unknown detector {rec['detector_1']!r}/{rec['detector_2']!r}", number
                )
            outcome = _OUTCOME_CODES.get(rec["outcome"])
            if outcome is None:
                raise EventLogError(f"unknown outcome {rec['outcome']!r}", number)
            if int(classify_codes(np.array([det1]), np.array([det2]))[0]) != outcome:
                raise EventLogError("outcome inconsistent with detector pair", number)
            label = rec.get("input")
            try:
                label_code = _LABEL_INDEX[InputStateLabel(label)] if label else -1
            except ValueError:
                raise EventLogError(f"unknown input label {label!r}", number) from None
            basis = rec.get("tomo_basis")
            if basis is not None and basis not in TOMO_BASIS_NAMES:
                raise EventLogError(f"unknown tomography basis {basis!r}", number)
            cols["trial_id"].append(int(rec["trial_id"]))
            cols["label_code"].append(label_code)
            cols["det1"].append(det1)
            cols["det2"].append(det2)
            cols["t1"].append(float(rec["t1_s"]))
            cols["t2"].append(float(rec["t2_s"]))
            cols["outcome"].append(outcome)
            cols["d_omega"].append(float(rec["d_omega_rad_s"]))
            cols["branch_class"].append(int(rec.get("branch_class", -1)))
            cols["tomo_basis"].append(TOMO_BASIS_NAMES.index(basis) if basis else -1)
            cols["tomo_result"].append(int(rec.get("tomo_result", 0)))
    if header is None and not cols["trial_id"] and counters is None:
        raise EventLogError("log contains no records")
    events = EventTable(
        trial_id=np.array(cols["trial_id"], dtype=np.int64),
        label_code=np.array(cols["label_code"], dtype=np.int8),
        det1=np.array(cols["det1"], dtype=np.int8),
        t1=np.array(cols["t1"], dtype=float),
        det2=np.array(cols["det2"], dtype=np.int8),
        t2=np.array(cols["t2"], dtype=float),
        outcome=np.array(cols["outcome"], dtype=np.int8),
        d_omega=np.array(cols["d_omega"], dtype=float),
        branch_class=np.array(cols["branch_class"], dtype=np.int8),
        tomo_basis=np.array(cols["tomo_basis"], dtype=np.int8),
        tomo_result=np.array(cols["tomo_result"], dtype=np.int8),
    )
    return LoadedCampaign(header=header or {}, events=events, counters=counters, n_attempt_records=n_attempts)


def run_metadata(result: CampaignResult, timings: dict | None = None) -> dict:
    meta = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "git_describe": _git_describe(),
        "seed": result.config.seed,
        "trials": result.config.trials,
        "sigma_omega_rad_s": result.sigma_omega,
        "noise": result.header["noise"],
        "budget_a": result.header["budget_a"],
        "budget_b": result.header["budget_b"],
        "counters": result.counters,
        "threads": thread_count(),
        "elapsed_s": result.elapsed_s,
    }
    meta.update(result.rate_summary())
    if timings:
        meta["timings"] = timings
    return meta


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


# --------------------------------------------------------------------------
# Contrast calibration

class CalibrationError(RuntimeError):
    """Target contrast unreachable; carries bracketing diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class CalibrationResult:
    target: float
    sigma_omega: float
    achieved_contrast: float
    achieved_stderr: float
    iterations: int
    trials_per_iteration: int
    seed: int

    def to_json(self) -> dict:
        return {
            "target_contrast": self.target,
            "sigma_omega_rad_s": self.sigma_omega,
            "achieved_contrast": self.achieved_contrast,
            "achieved_stderr": self.achieved_stderr,
            "iterations": self.iterations,
            "trials_per_iteration": self.trials_per_iteration,
            "seed": self.seed,
        }


def _contrast_probe(
    sigma: float,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
    n: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo unwindowed contrast for jitter width ``sigma``.

    Uses the pattern-class probabilities of an unpolarized photon pair:
    Psi- patterns occur with probability 1/4 per two-click trial and
    no-interference patterns with ``(1 - v)/4`` at per-trial visibility
    ``v``; the contrast estimator is the same as in a full campaign.
    """
    off = rng.normal(0.0, sigma, (2, n))
    d_omega = off[1] - off[0]
    t1 = np.asarray(env_a.sample(rng, n), dtype=float)
    t2 = np.asarray(env_c.sample(rng, n), dtype=float)
    g1 = np.asarray(env_a.density(t1)) * np.asarray(env_c.density(t2))
    g2 = np.asarray(env_a.density(t2)) * np.asarray(env_c.density(t1))
    total = g1 + g2
    overlap = np.divide(2.0 * np.sqrt(g1 * g2), total, out=np.zeros(n), where=total > 0)
    vis = overlap * np.cos(d_omega * (t2 - t1))
    u = rng.random(n)
    n_minus = int(np.sum(u < 0.25))
    n_ni = int(np.sum((u >= 0.25) & (u < 0.25 + 0.25 * (1.0 - vis))))
    if n_minus == 0:
        return math.nan, math.inf
    ratio = n_ni / n_minus
    stderr = math.sqrt(max(n_ni, 1) * (1.0 + ratio)) / n_minus
    return 1.0 - ratio, stderr


def predicted_contrast(
    sigma: float,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
    tau_max: float = math.inf,
    n_grid: int = 600,
) -> float:
    """Deterministic quadrature of the expected contrast.

    Averages the visibility ``M(t1,t2) exp(-sigma^2 (t1-t2)^2)`` over the
    product density of the two envelopes restricted to ``|t1-t2| <= tau``;
    the Gaussian factor is the jitter average of ``cos(dw dt)`` with
    per-photon width ``sigma``.
    """
    ta = np.linspace(*env_a.gate, n_grid)
    tc = np.linspace(*env_c.gate, n_grid)
    za = np.asarray(env_a.density(ta))
    zc = np.asarray(env_c.density(tc))
    g1 = np.outer(za, zc)
    diff = ta[:, None] - tc[None, :]
    g2 = np.asarray(env_a.density(tc))[None, :] * np.asarray(env_c.density(ta))[:, None]
    # overlap factor on the grid; g2 here is zeta_a(t2) zeta_c(t1)
    total = g1 + g2
    overlap = np.divide(2.0 * np.sqrt(g1 * g2), total, out=np.zeros_like(total), where=total > 0)
    weight = g1
    if math.isfinite(tau_max):
        weight = np.where(np.abs(diff) <= tau_max, weight, 0.0)
    kernel = overlap * np.exp(-(sigma**2) * diff**2)
    denom = weight.sum()
    if denom <= 0:
        return 0.0
    return float((weight * kernel).sum() / denom)


def calibrate_sigma_omega(
    target: float,
    env_a: TemporalEnvelope,
    env_c: TemporalEnvelope,
    trials: int = 400_000,
    seed: int = 7,
    tol: float = 0.005,
    max_iter: int = 60,
) -> CalibrationResult:
    """Bisect the jitter width until the simulated contrast hits ``target``.

    The simulated unwindowed contrast decreases monotonically with the
    jitter width; iteration stops once the probe lands within ``tol`` of
    the target.  Raises :class:`CalibrationError` with the bracketing
    values if the target is outside the reachable range.
    """
    if not 0.0 < target <= 1.0:
        raise CalibrationError(f"target contrast {target!r} outside (0, 1]")
    streams = np.random.SeedSequence(seed).spawn(max_iter + 32)

    def probe(sig: float, stream: int) -> tuple[float, float]:
        rng = np.random.default_rng(streams[stream])
        return _contrast_probe(sig, env_a, env_c, trials, rng)

    c_zero, err_zero = probe(0.0, 0)
    if target > c_zero + tol:
        raise CalibrationError(
            f"target {target} exceeds maximum achievable contrast {c_zero:.4f}"
            " (envelope mismatch limits the ceiling)",
            {"sigma_lo": 0.0, "contrast_lo": c_zero},
        )
    if abs(c_zero - target) <= tol:
        return CalibrationResult(target, 0.0, c_zero, err_zero, 1, trials, seed)

    # establish an upper bracket: contrast decays toward its positive floor
    duration = max(env_a.duration, env_c.duration)
    hi = 2.0 / duration
    c_hi, err_hi = probe(hi, 1)
    grow = 2
    while c_hi > target and grow < 24:
        hi *= 4.0
        c_hi, err_hi = probe(hi, grow)
        grow += 1
    if c_hi > target:
        raise CalibrationError(
            f"target {target} below the contrast floor {c_hi:.4f} at sigma={hi:.3e} rad/s",
            {"sigma_hi": hi, "contrast_hi": c_hi, "sigma_lo": 0.0, "contrast_lo": c_zero},
        )

    lo, c_lo = 0.0, c_zero
    iterations = grow
    sigma = hi
    achieved, err = c_hi, err_hi
    for _ in range(max_iter):
        sigma = 0.5 * (lo + hi)
        achieved, err = probe(sigma, iterations)
        iterations += 1
        if abs(achieved - target) <= tol:
            break
        if achieved > target:
            lo, c_lo = sigma, achieved
        else:
            hi, c_hi = sigma, achieved
    else:
        raise CalibrationError(
            f"bisection did not reach |C - {target}| <= {tol} after {max_iter} iterations",
            {"sigma_lo": lo, "contrast_lo": c_lo, "sigma_hi": hi, "contrast_hi": c_hi},
        )
    return CalibrationResult(target, sigma, achieved, err, iterations, trials, seed)
