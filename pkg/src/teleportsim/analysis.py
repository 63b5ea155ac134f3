"""Reductions over campaign logs: contrast tables, fidelity tables, tomography.

Every report is computed from the event log alone (plus its header), so
analyzing a freshly written log reproduces the simulator's own reports
bit for bit.  Numeric CSV cells use a fixed ``%.9g`` rendering to keep
outputs deterministic across platforms and worker counts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bsm import Outcome, contrast_from_counts
from .protocol import InputStateLabel, NoiseModel, is_x_basis
from .qcore import DensityMatrix, PAULI
from .simrun import (
    EventTable,
    LoadedCampaign,
    TOMO_BASIS_NAMES,
    trial_fidelities,
)

__all__ = [
    "binomial_stderr",
    "TomographyResult",
    "tomography",
    "tomography_by_label",
    "ellipsoid_semiaxes",
    "WindowRow",
    "fidelity_vs_contrast",
    "Table1Row",
    "table1_report",
    "fig2b_rows",
    "fig2c_rows",
    "write_csv",
    "write_all_reports",
    "REPORT_FILES",
]

_LABELS = tuple(InputStateLabel)
_PERP_LABELS = tuple(l for l in _LABELS if not is_x_basis(l))
_X_LABELS = tuple(l for l in _LABELS if is_x_basis(l))


def binomial_stderr(p_hat: float, n: int) -> float:
    """Standard error sqrt(p(1-p)/n) of a proportion estimate.

    Degenerate proportions (0 or 1) return 0; callers flag such rows.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    p_hat = min(max(p_hat, 0.0), 1.0)
    return math.sqrt(p_hat * (1.0 - p_hat) / n)


# --------------------------------------------------------------------------
# Tomography


@dataclass(frozen=True)
class TomographyResult:
    """Single-qubit reconstruction from counts in three unbiased bases."""

    s: np.ndarray  # Bloch vector after physicality projection
    stderr: np.ndarray  # per-axis standard errors
    counts: tuple[int, int, int]  # samples per basis (z, x, y)
    projected: bool  # True if |s| > 1 required radial projection

    def density_matrix(self) -> DensityMatrix:
        mat = 0.5 * (
            np.eye(2)
            + self.s[0] * PAULI["X"]
            + self.s[1] * PAULI["Y"]
            + self.s[2] * PAULI["Z"]
        )
        return DensityMatrix(mat)


def tomography(basis: np.ndarray, results: np.ndarray) -> TomographyResult:
    """Reconstruct a Bloch vector from per-shot (basis, +-1 outcome) pairs.

    ``basis`` uses codes 0 = z (H/V), 1 = x (D/A), 2 = y (R/L).  Raises if
    any basis has no samples, naming the missing one.
    """
    basis = np.asarray(basis)
    results = np.asarray(results)
    s = np.zeros(3)
    err = np.zeros(3)
    counts = []
    # reconstruction order (z, x, y) -> Bloch components (z, x, y)
    component = {0: 2, 1: 0, 2: 1}
    for code in (0, 1, 2):
        mask = basis == code
        n = int(mask.sum())
        if n == 0:
            raise ValueError(f"no tomography samples in basis {TOMO_BASIS_NAMES[code]!r}")
        plus = int(np.sum(results[mask] > 0))
        p_hat = plus / n
        s[component[code]] = 2.0 * p_hat - 1.0
        err[component[code]] = 2.0 * binomial_stderr(p_hat, n)
        counts.append(n)
    norm = float(np.linalg.norm(s))
    projected = norm > 1.0
    if projected:
        s = s / norm
    return TomographyResult(s=s, stderr=err, counts=tuple(counts), projected=projected)


def tomography_by_label(events: EventTable) -> dict[InputStateLabel, TomographyResult]:
    """Per-input-state tomography over Psi--heralded events with outcomes."""
    out: dict[InputStateLabel, TomographyResult] = {}
    usable = (
        (events.outcome == int(Outcome.PSI_MINUS))
        & (events.tomo_basis >= 0)
        & (events.label_code >= 0)
    )
    for code, label in enumerate(_LABELS):
        mask = usable & (events.label_code == code)
        if not mask.any():
            continue
        out[label] = tomography(events.tomo_basis[mask], events.tomo_result[mask])
    return out


def ellipsoid_semiaxes(recons: dict[InputStateLabel, TomographyResult]) -> dict[str, float]:
    """Semi-axis lengths of the reconstructed state ellipsoid.

    Each axis length is half the separation of the two reconstructions of
    that basis pair, projected on the corresponding Bloch axis.
    """
    pairs = {
        "x": (InputStateLabel.DOWN_X, InputStateLabel.UP_X, 0),
        "y": (InputStateLabel.DOWN_Y, InputStateLabel.UP_Y, 1),
        "z": (InputStateLabel.DOWN, InputStateLabel.UP, 2),
    }
    axes: dict[str, float] = {}
    for name, (lo, hi, comp) in pairs.items():
        if lo in recons and hi in recons:
            axes[name] = 0.5 * abs(recons[lo].s[comp] - recons[hi].s[comp])
    return axes


# --------------------------------------------------------------------------
# Windowed contrast and fidelity tables


def _window_mask(events: EventTable, tau_s: float) -> np.ndarray:
    if math.isinf(tau_s):
        return np.ones(len(events), dtype=bool)
    return events.dt <= tau_s


def _label_means(
    fid: np.ndarray, events: EventTable, mask: np.ndarray, labels: tuple[InputStateLabel, ...]
) -> tuple[float, float, int]:
    """Uniform average of per-label mean fidelities with combined stderr."""
    means = []
    variances = []
    total = 0
    for label in labels:
        code = _LABELS.index(label)
        sel = mask & (events.label_code == code) & ~np.isnan(fid)
        n = int(sel.sum())
        if n == 0:
            return math.nan, math.nan, total
        mean = float(fid[sel].mean())
        means.append(mean)
        variances.append(binomial_stderr(mean, n) ** 2)
        total += n
    k = len(labels)
    return float(np.mean(means)), math.sqrt(sum(variances)) / k, total


@dataclass(frozen=True)
class WindowRow:
    tau_ns: float
    contrast: float
    contrast_err: float
    retained: float
    n_psi_minus: int
    n_ni: int
    f_perp: float
    f_perp_err: float
    f_parallel: float
    f_parallel_err: float
    f_avg: float
    f_avg_err: float
    low_stats: bool


def fidelity_vs_contrast(
    loaded: LoadedCampaign, windows_ns: list[float] | None = None
) -> list[WindowRow]:
    """One row per coincidence window: contrast, retention and fidelities.

    Windows always include the unwindowed (infinite) row.  Rows with fewer
    than 10 Psi- events are flagged ``low_stats``.
    """
    events = loaded.events
    noise = loaded.noise()
    if windows_ns is None:
        windows_ns = list(loaded.header.get("windows_ns", []))
    taus = sorted(set(float(w) for w in windows_ns)) + [math.inf]
    fid = trial_fidelities(events, noise)
    minus = events.outcome == int(Outcome.PSI_MINUS)
    ni = events.outcome == int(Outcome.NO_INTERFERENCE)
    n_minus_total = int(minus.sum())
    rows = []
    for tau in taus:
        mask = _window_mask(events, tau * 1e-9 if math.isfinite(tau) else math.inf)
        n_minus = int((mask & minus).sum())
        n_ni = int((mask & ni).sum())
        est = contrast_from_counts(n_minus, n_ni)
        f_perp, e_perp, _ = _label_means(fid, events, mask & minus, _PERP_LABELS)
        f_par, e_par, _ = _label_means(fid, events, mask & minus, _X_LABELS)
        f_avg, e_avg, _ = _label_means(fid, events, mask & minus, _LABELS)
        rows.append(
            WindowRow(
                tau_ns=tau,
                contrast=est.c,
                contrast_err=est.stderr,
                retained=(n_minus / n_minus_total) if n_minus_total else math.nan,
                n_psi_minus=n_minus,
                n_ni=n_ni,
                f_perp=f_perp,
                f_perp_err=e_perp,
                f_parallel=f_par,
                f_parallel_err=e_par,
                f_avg=f_avg,
                f_avg_err=e_avg,
                low_stats=n_minus < 10,
            )
        )
    return rows


@dataclass(frozen=True)
class Table1Row:
    input: str
    n_events: int
    fidelity: float
    stderr: float


def table1_report(loaded: LoadedCampaign, tau_ns: float = math.inf) -> list[Table1Row]:
    """Per-input-state Psi- fidelities, their average, and the Psi+ average.

    The average row is the unweighted mean of the six per-state values.
    The final row reports Psi+-heralded events against the rotated target
    ``sigma_x |phi>`` (no feed-forward correction applied).
    """
    events = loaded.events
    noise = loaded.noise()
    fid = trial_fidelities(events, noise)
    window = _window_mask(events, tau_ns * 1e-9 if math.isfinite(tau_ns) else math.inf)
    minus = window & (events.outcome == int(Outcome.PSI_MINUS))
    plus = window & (events.outcome == int(Outcome.PSI_PLUS))
    rows: list[Table1Row] = []
    per_label = []
    for code, label in enumerate(_LABELS):
        sel = minus & (events.label_code == code) & ~np.isnan(fid)
        n = int(sel.sum())
        if n == 0:
            rows.append(Table1Row(label.value, 0, math.nan, math.nan))
            continue
        mean = float(fid[sel].mean())
        rows.append(Table1Row(label.value, n, mean, binomial_stderr(mean, n)))
        per_label.append((mean, n))
    if len(per_label) == len(_LABELS):
        avg = float(np.mean([m for m, _ in per_label]))
        err = math.sqrt(sum(binomial_stderr(m, n) ** 2 for m, n in per_label)) / len(per_label)
        rows.append(Table1Row("average", sum(n for _, n in per_label), avg, err))
    f_plus, e_plus, n_plus = _label_means(fid, events, plus, _LABELS)
    rows.append(Table1Row("psi_plus_average", n_plus, f_plus, e_plus))
    return rows


def fig2b_rows(loaded: LoadedCampaign, bin_width_ns: float = 40.0) -> list[dict]:
    """Time-resolved coincidence counts: Psi- vs same-polarization events."""
    events = loaded.events
    dts = events.dt
    minus = events.outcome == int(Outcome.PSI_MINUS)
    ni = events.outcome == int(Outcome.NO_INTERFERENCE)
    if len(events) == 0:
        return []
    width = bin_width_ns * 1e-9
    n_bins = max(1, int(math.ceil((float(dts.max()) + 1e-15) / width)))
    idx = np.minimum((dts / width).astype(int), n_bins - 1)
    rows = []
    for b in range(n_bins):
        n_minus = int(np.sum(minus & (idx == b)))
        n_ni = int(np.sum(ni & (idx == b)))
        if n_minus > 0:
            ratio = n_ni / n_minus
            err = math.sqrt(max(n_ni, 1) * (1.0 + ratio)) / n_minus
        else:
            ratio, err = math.nan, math.nan
        rows.append(
            {
                "bin_start_ns": b * bin_width_ns,
                "bin_stop_ns": (b + 1) * bin_width_ns,
                "n_psi_minus": n_minus,
                "n_ni": n_ni,
                "ratio": ratio,
                "ratio_err": err,
            }
        )
    return rows


_FIG2C_DEFAULT_NS = (10, 20, 30, 40, 60, 80, 100, 120, 160, 200, 250, 300, 400, 600)


def fig2c_rows(loaded: LoadedCampaign, windows_ns: list[float] | None = None) -> list[dict]:
    """Contrast and retained Psi- fraction versus the coincidence window."""
    events = loaded.events
    minus = events.outcome == int(Outcome.PSI_MINUS)
    ni = events.outcome == int(Outcome.NO_INTERFERENCE)
    n_total = int(minus.sum())
    if windows_ns is None:
        windows_ns = sorted(set(_FIG2C_DEFAULT_NS) | set(loaded.header.get("windows_ns", [])))
    taus = [float(w) for w in windows_ns] + [math.inf]
    rows = []
    for tau in taus:
        mask = _window_mask(events, tau * 1e-9 if math.isfinite(tau) else math.inf)
        n_minus = int((mask & minus).sum())
        n_ni = int((mask & ni).sum())
        est = contrast_from_counts(n_minus, n_ni)
        rows.append(
            {
                "tau_ns": tau,
                "contrast": est.c,
                "contrast_err": est.stderr,
                "retained_fraction": (n_minus / n_total) if n_total else math.nan,
                "n_psi_minus": n_minus,
                "n_ni": n_ni,
            }
        )
    return rows


# --------------------------------------------------------------------------
# CSV output

REPORT_FILES = ("table1.csv", "fig2b.csv", "fig2c.csv", "fig3a.csv", "bloch.csv")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf"
        return f"{value:.9g}"
    return str(value)


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_all_reports(loaded: LoadedCampaign, out_dir: str | Path, windows_ns: list[float] | None = None) -> dict:
    """Emit every report CSV into ``out_dir``; returns summary values.

    fig3a/table1/bloch need the protocol extras (input labels, branch
    classes, tomography); logs lacking them still produce fig2b/fig2c.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {}

    rows2b = fig2b_rows(loaded)
    write_csv(
        out / "fig2b.csv",
        ["bin_start_ns", "bin_stop_ns", "n_psi_minus", "n_ni", "ratio", "ratio_err"],
        [[r["bin_start_ns"], r["bin_stop_ns"], r["n_psi_minus"], r["n_ni"], r["ratio"], r["ratio_err"]] for r in rows2b],
    )

    rows2c = fig2c_rows(loaded)
    write_csv(
        out / "fig2c.csv",
        ["tau_ns", "contrast", "contrast_err", "retained_fraction", "n_psi_minus", "n_ni"],
        [[r["tau_ns"], r["contrast"], r["contrast_err"], r["retained_fraction"], r["n_psi_minus"], r["n_ni"]] for r in rows2c],
    )
    summary["contrast_unwindowed"] = rows2c[-1]["contrast"] if rows2c else math.nan

    window_rows = fidelity_vs_contrast(loaded, windows_ns)
    write_csv(
        out / "fig3a.csv",
        [
            "tau_ns", "contrast", "contrast_err", "retained_fraction",
            "n_psi_minus", "n_ni", "f_perp", "f_perp_err",
            "f_parallel", "f_parallel_err", "f_avg", "f_avg_err", "low_stats",
        ],
        [
            [
                r.tau_ns, r.contrast, r.contrast_err, r.retained, r.n_psi_minus, r.n_ni,
                r.f_perp, r.f_perp_err, r.f_parallel, r.f_parallel_err, r.f_avg, r.f_avg_err,
                r.low_stats,
            ]
            for r in window_rows
        ],
    )
    if window_rows:
        summary["f_avg_unwindowed"] = window_rows[-1].f_avg

    t1_rows = table1_report(loaded)
    write_csv(
        out / "table1.csv",
        ["input", "n_events", "fidelity", "stderr"],
        [[r.input, r.n_events, r.fidelity, r.stderr] for r in t1_rows],
    )

    recons = tomography_by_label(loaded.events)
    bloch_rows = []
    for label in _LABELS:
        res = recons.get(label)
        if res is None:
            continue
        bloch_rows.append(
            [
                label.value,
                res.counts[0], res.counts[1], res.counts[2],
                res.s[0], res.s[1], res.s[2],
                res.stderr[0], res.stderr[1], res.stderr[2],
                res.projected,
            ]
        )
    write_csv(
        out / "bloch.csv",
        ["input", "n_z", "n_x", "n_y", "s_x", "s_y", "s_z", "err_x", "err_y", "err_z", "projected"],
        bloch_rows,
    )
    axes = ellipsoid_semiaxes(recons)
    if axes:
        summary["bloch_semiaxes"] = axes
    return summary
