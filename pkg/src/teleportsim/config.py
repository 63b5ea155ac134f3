"""Experiment configuration: flat dotted-key text format and presets.

Config files are human-readable ``key = value`` lines (``#`` comments),
using the same dotted keys the CLI accepts for ``--set`` overrides, e.g.::

    schema_version = 1
    trials = 8000
    seed = 20130521
    noise.p_a = 0.9
    windows_ns = 20, 40, 80, 160

Unknown keys are rejected with the full list of valid keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .photonics import TemporalEnvelope
from .protocol import (
    EfficiencyBudget,
    InputStateLabel,
    NoiseModel,
    PAPER_BUDGET_A,
    PAPER_BUDGET_B,
)

__all__ = [
    "ConfigError",
    "EnvelopeConfig",
    "ExperimentConfig",
    "SCHEMA_VERSION",
    "VALID_KEYS",
    "parse_config_text",
    "config_from_mapping",
    "config_to_text",
    "apply_overrides",
    "load_config_file",
    "load_preset",
    "preset_names",
    "DEFAULT_SIGMA_OMEGA",
]

SCHEMA_VERSION = 1

# Per-photon jitter width (rad/s) reproducing an unwindowed contrast of 0.64
# with the default envelope; regenerate with ``teleportsim calibrate``.
DEFAULT_SIGMA_OMEGA = 5.063068e6


class ConfigError(ValueError):
    """Invalid configuration; ``messages`` holds one entry per bad key."""

    def __init__(self, messages: list[str]):
        super().__init__("; ".join(messages))
        self.messages = messages


@dataclass(frozen=True)
class EnvelopeConfig:
    """Parameters of one node's temporal envelope."""

    shape: str = "double_exponential"
    rise_ns: float = 40.0
    fall_ns: float = 150.0
    gate_start_ns: float = 0.0
    gate_stop_ns: float = 600.0
    tail_weight: float = 0.0
    tail_delay_ns: float = 0.0
    table_path: str | None = None

    def build(self) -> TemporalEnvelope:
        if self.shape == "table":
            if not self.table_path:
                raise ConfigError(["envelope shape 'table' requires table_path"])
            return TemporalEnvelope.from_csv(self.table_path)
        if self.shape != "double_exponential":
            raise ConfigError([f"unknown envelope shape {self.shape!r}"])
        return TemporalEnvelope.double_exponential(
            rise=self.rise_ns * 1e-9,
            fall=self.fall_ns * 1e-9,
            gate=(self.gate_start_ns * 1e-9, self.gate_stop_ns * 1e-9),
            tail_weight=self.tail_weight,
            tail_delay=self.tail_delay_ns * 1e-9,
        )


_DEFAULT_SCHEDULE = tuple(InputStateLabel)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a campaign needs; identical configs give identical runs."""

    trials: int = 8000
    seed: int = 20130521
    noise: NoiseModel = field(
        default_factory=lambda: NoiseModel(p_a=0.9, p_ent=2.56 / 3.0, sigma_omega=DEFAULT_SIGMA_OMEGA)
    )
    budget_a: EfficiencyBudget = PAPER_BUDGET_A
    budget_b: EfficiencyBudget = PAPER_BUDGET_B
    losses: bool = False
    storage_success: float = 1.0  # extra sender-side Bernoulli; rates only
    schedule: tuple[InputStateLabel, ...] = _DEFAULT_SCHEDULE
    windows_ns: tuple[float, ...] = (20.0, 40.0, 80.0, 160.0)
    envelope_a: EnvelopeConfig = field(default_factory=EnvelopeConfig)
    envelope_c: EnvelopeConfig = field(default_factory=EnvelopeConfig)
    tomography: bool = True
    dark_rate_hz: float = 0.0
    detector_jitter_ns: float = 0.0
    rep_rate_hz: float = 10_000.0
    duty_cycle: float = 0.25
    chunk_size: int = 250_000
    log_detail: str = "events"  # events | full
    out_dir: str = "teleportsim_out"
    calibration_file: str | None = None

    def __post_init__(self) -> None:
        errors: list[str] = []
        if self.trials <= 0:
            errors.append("trials: must be positive")
        if list(self.windows_ns) != sorted(self.windows_ns):
            errors.append("windows_ns: must be sorted ascending")
        if any(w <= 0 for w in self.windows_ns):
            errors.append("windows_ns: windows must be positive")
        if not self.schedule:
            errors.append("schedule: must name at least one input state")
        if not 0.0 <= self.storage_success <= 1.0:
            errors.append("storage_success: outside [0, 1]")
        if not 0.0 < self.duty_cycle <= 1.0:
            errors.append("duty_cycle: outside (0, 1]")
        if self.chunk_size <= 0:
            errors.append("chunk_size: must be positive")
        if self.log_detail not in ("events", "full"):
            errors.append("log_detail: must be 'events' or 'full'")
        if self.dark_rate_hz < 0:
            errors.append("dark_rate_hz: must be nonnegative")
        if self.detector_jitter_ns < 0:
            errors.append("detector_jitter_ns: must be nonnegative")
        if errors:
            raise ConfigError(errors)

    def resolved_sigma_omega(self) -> float:
        """Jitter width, possibly read from a calibration JSON file."""
        if self.calibration_file:
            try:
                with open(self.calibration_file) as handle:
                    payload = json.load(handle)
                return float(payload["sigma_omega_rad_s"])
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError([f"calibration_file: cannot read sigma_omega ({exc})"]) from exc
        return self.noise.sigma_omega

    def header_dict(self) -> dict:
        """Flat JSON-safe summary embedded at the top of every event log."""
        return {
            "type": "header",
            "schema_version": SCHEMA_VERSION,
            "trials": self.trials,
            "seed": self.seed,
            "noise": {
                "p_a": self.noise.p_a,
                "p_ent": self.noise.p_ent,
                "sigma_omega": self.resolved_sigma_omega(),
            },
            "budget_a": {"eta": self.budget_a.eta, "p_det": self.budget_a.p_det},
            "budget_b": {"eta": self.budget_b.eta, "p_det": self.budget_b.p_det},
            "losses": self.losses,
            "storage_success": self.storage_success,
            "schedule": [label.value for label in self.schedule],
            "windows_ns": list(self.windows_ns),
            "rep_rate_hz": self.rep_rate_hz,
            "duty_cycle": self.duty_cycle,
        }


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_labels(raw: str) -> tuple[InputStateLabel, ...]:
    labels = []
    for token in raw.split(","):
        token = token.strip()
        if token:
            labels.append(InputStateLabel(token))
    return tuple(labels)


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


# key -> (parser, short description)
VALID_KEYS: dict[str, tuple] = {
    "schema_version": (int, "config schema version"),
    "trials": (int, "number of protocol attempts"),
    "seed": (int, "64-bit RNG seed"),
    "losses": (_parse_bool, "apply per-photon loss Bernoullis"),
    "storage_success": (float, "sender storage success probability"),
    "noise.p_a": (float, "preparation survival probability"),
    "noise.p_ent": (float, "entanglement survival probability"),
    "noise.sigma_omega": (float, "frequency jitter width (rad/s)"),
    "budget_a.eta": (float, "node A photon production efficiency"),
    "budget_a.t_out": (float, "node A outcoupling transmission"),
    "budget_a.t_opt": (float, "node A path transmission"),
    "budget_a.epsilon": (float, "node A detector efficiency"),
    "budget_a.p_det": (float, "node A lumped detection probability"),
    "budget_b.eta": (float, "node B photon production efficiency"),
    "budget_b.t_out": (float, "node B outcoupling transmission"),
    "budget_b.t_opt": (float, "node B path transmission"),
    "budget_b.epsilon": (float, "node B detector efficiency"),
    "budget_b.p_det": (float, "node B lumped detection probability"),
    "schedule": (_parse_labels, "comma list of input-state labels"),
    "windows_ns": (_parse_floats, "comma list of coincidence windows (ns)"),
    "envelope_a.shape": (str, "double_exponential or table"),
    "envelope_a.rise_ns": (float, "rise time (ns)"),
    "envelope_a.fall_ns": (float, "fall time (ns)"),
    "envelope_a.gate_start_ns": (float, "gate start (ns)"),
    "envelope_a.gate_stop_ns": (float, "gate stop (ns)"),
    "envelope_a.tail_weight": (float, "late-tail mixture weight"),
    "envelope_a.tail_delay_ns": (float, "late-tail delay (ns)"),
    "envelope_a.table": (str, "CSV path for a tabulated envelope"),
    "envelope_c.shape": (str, "double_exponential or table"),
    "envelope_c.rise_ns": (float, "rise time (ns)"),
    "envelope_c.fall_ns": (float, "fall time (ns)"),
    "envelope_c.gate_start_ns": (float, "gate start (ns)"),
    "envelope_c.gate_stop_ns": (float, "gate stop (ns)"),
    "envelope_c.tail_weight": (float, "late-tail mixture weight"),
    "envelope_c.tail_delay_ns": (float, "late-tail delay (ns)"),
    "envelope_c.table": (str, "CSV path for a tabulated envelope"),
    "tomography": (_parse_bool, "sample tomography outcomes"),
    "dark_rate_hz": (float, "per-detector dark-count rate"),
    "detector_jitter_ns": (float, "Gaussian click-time blur (ns)"),
    "rep_rate_hz": (float, "protocol repetition rate"),
    "duty_cycle": (float, "fraction of lab time with both atoms trapped"),
    "chunk_size": (int, "trials per deterministic RNG chunk"),
    "log_detail": (str, "events | full"),
    "out_dir": (str, "output directory"),
    "calibration_file": (str, "JSON file providing sigma_omega"),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a raw string mapping."""
    errors: list[str] = []
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    if errors:
        raise ConfigError(errors)
    return raw


def apply_overrides(raw: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Apply ``key=value`` override strings on top of a raw mapping."""
    out = dict(raw)
    errors = []
    for item in overrides:
        if "=" not in item:
            errors.append(f"override {item!r}: expected key=value")
            continue
        key, _, value = item.partition("=")
        out[key.strip()] = value.strip()
    if errors:
        raise ConfigError(errors)
    return out


def _unknown_key_error(key: str) -> str:
    valid = ", ".join(sorted(VALID_KEYS))
    return f"unknown key {key!r}; valid keys: {valid}"


def config_from_mapping(raw: dict[str, str]) -> ExperimentConfig:
    """Validate a raw string mapping and build the typed configuration."""
    errors: list[str] = []
    parsed: dict[str, object] = {}
    for key, value in raw.items():
        spec = VALID_KEYS.get(key)
        if spec is None:
            errors.append(_unknown_key_error(key))
            continue
        parser = spec[0]
        try:
            parsed[key] = parser(value)
        except (ValueError, KeyError) as exc:
            errors.append(f"{key}: cannot parse {value!r} ({exc})")
    if errors:
        raise ConfigError(errors)

    version = parsed.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError([f"schema_version: {version} unsupported (expected {SCHEMA_VERSION})"])

    def budget(prefix: str, default: EfficiencyBudget) -> EfficiencyBudget:
        keys = {k.split(".")[1]: v for k, v in parsed.items() if k.startswith(prefix + ".")}
        if not keys:
            return default
        eta = keys.get("eta", default.eta)
        if "p_det" in keys:
            if any(f in keys for f in ("t_out", "t_opt", "epsilon")):
                raise ConfigError([f"{prefix}: give either p_det or the three factors, not both"])
            return EfficiencyBudget.from_detection(float(eta), float(keys["p_det"]))
        return EfficiencyBudget(
            eta=float(eta),
            t_out=float(keys.get("t_out", default.t_out)),
            t_opt=float(keys.get("t_opt", default.t_opt)),
            epsilon=float(keys.get("epsilon", default.epsilon)),
        )

    def envelope(prefix: str) -> EnvelopeConfig:
        keys = {k.split(".")[1]: v for k, v in parsed.items() if k.startswith(prefix + ".")}
        base = EnvelopeConfig()
        if not keys:
            return base
        return EnvelopeConfig(
            shape=str(keys.get("shape", "table" if "table" in keys else base.shape)),
            rise_ns=float(keys.get("rise_ns", base.rise_ns)),
            fall_ns=float(keys.get("fall_ns", base.fall_ns)),
            gate_start_ns=float(keys.get("gate_start_ns", base.gate_start_ns)),
            gate_stop_ns=float(keys.get("gate_stop_ns", base.gate_stop_ns)),
            tail_weight=float(keys.get("tail_weight", base.tail_weight)),
            tail_delay_ns=float(keys.get("tail_delay_ns", base.tail_delay_ns)),
            table_path=keys.get("table"),
        )

    defaults = ExperimentConfig()
    try:
        noise = NoiseModel(
            p_a=float(parsed.get("noise.p_a", defaults.noise.p_a)),
            p_ent=float(parsed.get("noise.p_ent", defaults.noise.p_ent)),
            sigma_omega=float(parsed.get("noise.sigma_omega", defaults.noise.sigma_omega)),
        )
        return ExperimentConfig(
            trials=int(parsed.get("trials", defaults.trials)),
            seed=int(parsed.get("seed", defaults.seed)),
            noise=noise,
            budget_a=budget("budget_a", defaults.budget_a),
            budget_b=budget("budget_b", defaults.budget_b),
            losses=bool(parsed.get("losses", defaults.losses)),
            storage_success=float(parsed.get("storage_success", defaults.storage_success)),
            schedule=parsed.get("schedule", defaults.schedule),
            windows_ns=parsed.get("windows_ns", defaults.windows_ns),
            envelope_a=envelope("envelope_a"),
            envelope_c=envelope("envelope_c"),
            tomography=bool(parsed.get("tomography", defaults.tomography)),
            dark_rate_hz=float(parsed.get("dark_rate_hz", defaults.dark_rate_hz)),
            detector_jitter_ns=float(parsed.get("detector_jitter_ns", defaults.detector_jitter_ns)),
            rep_rate_hz=float(parsed.get("rep_rate_hz", defaults.rep_rate_hz)),
            duty_cycle=float(parsed.get("duty_cycle", defaults.duty_cycle)),
            chunk_size=int(parsed.get("chunk_size", defaults.chunk_size)),
            log_detail=str(parsed.get("log_detail", defaults.log_detail)),
            out_dir=str(parsed.get("out_dir", defaults.out_dir)),
            calibration_file=parsed.get("calibration_file"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([str(exc)]) from exc


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize a configuration back to the flat key=value form."""
    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        f"trials = {config.trials}",
        f"seed = {config.seed}",
        f"losses = {str(config.losses).lower()}",
        f"storage_success = {config.storage_success!r}",
        f"noise.p_a = {config.noise.p_a!r}",
        f"noise.p_ent = {config.noise.p_ent!r}",
        f"noise.sigma_omega = {config.noise.sigma_omega!r}",
        f"budget_a.eta = {config.budget_a.eta!r}",
        f"budget_a.p_det = {config.budget_a.p_det!r}",
        f"budget_b.eta = {config.budget_b.eta!r}",
        f"budget_b.p_det = {config.budget_b.p_det!r}",
        "schedule = " + ", ".join(label.value for label in config.schedule),
        "windows_ns = " + ", ".join(repr(w) for w in config.windows_ns),
        f"tomography = {str(config.tomography).lower()}",
        f"rep_rate_hz = {config.rep_rate_hz!r}",
        f"duty_cycle = {config.duty_cycle!r}",
        f"chunk_size = {config.chunk_size}",
        f"log_detail = {config.log_detail}",
        f"out_dir = {config.out_dir}",
    ]
    for prefix, env in (("envelope_a", config.envelope_a), ("envelope_c", config.envelope_c)):
        lines.append(f"{prefix}.shape = {env.shape}")
        if env.shape == "table" and env.table_path:
            lines.append(f"{prefix}.table = {env.table_path}")
        else:
            lines.append(f"{prefix}.rise_ns = {env.rise_ns!r}")
            lines.append(f"{prefix}.fall_ns = {env.fall_ns!r}")
            lines.append(f"{prefix}.gate_start_ns = {env.gate_start_ns!r}")
            lines.append(f"{prefix}.gate_stop_ns = {env.gate_stop_ns!r}")
            if env.tail_weight:
                lines.append(f"{prefix}.tail_weight = {env.tail_weight!r}")
                lines.append(f"{prefix}.tail_delay_ns = {env.tail_delay_ns!r}")
    return "\n".join(lines) + "\n"


def load_config_file(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    raw = parse_config_text(text)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return config_from_mapping(raw)


def preset_names() -> list[str]:
    files = resources.files("teleportsim").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in files.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str, overrides: list[str] | None = None) -> ExperimentConfig:
    files = resources.files("teleportsim").joinpath("presets")
    candidate = files.joinpath(f"{name}.cfg")
    if not candidate.is_file():
        raise ConfigError([f"unknown preset {name!r}; available: {', '.join(preset_names())}"])
    raw = parse_config_text(candidate.read_text())
    if overrides:
        raw = apply_overrides(raw, overrides)
    return config_from_mapping(raw)
