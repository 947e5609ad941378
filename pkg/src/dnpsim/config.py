"""Flat key-value scenario configuration.

Format: one ``section.key = value`` assignment per line, ``#`` comments,
blank lines ignored. Parsing is strict: unknown keys, malformed lines and
out-of-range values raise distinct error types so the CLI can map them to
distinct exit codes, and every message names the offending key and line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import MW_LABELS, RF_LABELS, SystemParams
from .errors import ConfigKeyError, ConfigRangeError, ConfigSyntaxError
from .kinetics import (
    DEFAULT_DRIVE_FACTOR,
    DEFAULT_T1_ELECTRON,
    DEFAULT_T1_NUCLEAR,
    RelaxationRates,
)

SCENARIO_KINDS = ("thermal", "overhauser", "ponsee_cw", "ponsee_pulsed", "relax")

# Narrative defaults: how long each experiment ran.
DEFAULT_DURATIONS = {
    "thermal": 0.0,
    "overhauser": 9000.0,
    "ponsee_cw": 1200.0,
    "relax": 41400.0,
}
DEFAULT_PULSE_WAIT_T1E = 5.0  # wait step length in electronic lifetimes


@dataclass(frozen=True)
class ScenarioSettings:
    kind: str = "ponsee_cw"
    mw: str = "MW2"
    rf: str | None = "RF2"
    duration_s: float | None = None  # None -> kind-specific default
    cycles: int = 4
    drive_factor: float = DEFAULT_DRIVE_FACTOR
    initial_polarization: float = 0.62  # starting point of the relax scenario

    def resolved_duration(self) -> float:
        if self.duration_s is not None:
            return self.duration_s
        return DEFAULT_DURATIONS.get(self.kind, 0.0)


@dataclass(frozen=True)
class SpectrumSettings:
    linewidth_tesla: float = 0.3e-3
    n_points: int = 801
    span_tesla: float = 6e-3
    noise_rms: float = 0.0
    seed: int = 20060301


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv", "json")
    figures: bool = True


@dataclass(frozen=True)
class RateSettings:
    t1e_seconds: float = DEFAULT_T1_ELECTRON
    t1n_seconds: float = DEFAULT_T1_NUCLEAR
    electronic_rate_per_s: float | None = None  # direct overrides beat lifetimes
    nuclear_rate_per_s: float | None = None
    flipflop_rate_per_s: float = 0.0
    lattice_temperature_kelvin: float | None = None  # None -> system temperature

    def build(self, params: SystemParams) -> RelaxationRates:
        base = RelaxationRates.from_lifetimes(
            params,
            t1_electron=self.t1e_seconds,
            t1_nuclear=self.t1n_seconds,
            flipflop_rate=self.flipflop_rate_per_s,
            lattice_temperature=self.lattice_temperature_kelvin,
        )
        w_e = self.electronic_rate_per_s if self.electronic_rate_per_s is not None else base.electronic_rate
        w_n = self.nuclear_rate_per_s if self.nuclear_rate_per_s is not None else base.nuclear_rate
        return RelaxationRates(w_e, w_n, base.flipflop_rate, base.lattice_temperature)


@dataclass(frozen=True)
class ScenarioConfig:
    system: SystemParams = field(default_factory=SystemParams)
    rates: RateSettings = field(default_factory=RateSettings)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def echo(self) -> dict:
        """Flat key -> value view of every setting, for reports and hashing."""
        sc = self.scenario
        return {
            "system.b_field_tesla": self.system.b_field,
            "system.temperature_kelvin": self.system.temperature,
            "system.g_electron": self.system.g_electron,
            "system.g_nuclear": self.system.g_nuclear,
            "system.hyperfine_hz": self.system.hyperfine_a,
            "system.mw_frequency_hz": self.system.mw_frequency,
            "rates.t1e_seconds": self.rates.t1e_seconds,
            "rates.t1n_seconds": self.rates.t1n_seconds,
            "rates.electronic_rate_per_s": self.rates.electronic_rate_per_s,
            "rates.nuclear_rate_per_s": self.rates.nuclear_rate_per_s,
            "rates.flipflop_rate_per_s": self.rates.flipflop_rate_per_s,
            "rates.lattice_temperature_kelvin": self.rates.lattice_temperature_kelvin,
            "scenario.kind": sc.kind,
            "scenario.mw": sc.mw,
            "scenario.rf": sc.rf,
            "scenario.duration_s": sc.resolved_duration(),
            "scenario.cycles": sc.cycles,
            "scenario.drive_factor": sc.drive_factor,
            "scenario.initial_polarization": sc.initial_polarization,
            "spectrum.linewidth_tesla": self.spectrum.linewidth_tesla,
            "spectrum.n_points": self.spectrum.n_points,
            "spectrum.span_tesla": self.spectrum.span_tesla,
            "spectrum.noise_rms": self.spectrum.noise_rms,
            "spectrum.seed": self.spectrum.seed,
            "output.directory": self.output.directory,
            "output.formats": ",".join(self.output.formats),
            "output.figures": self.output.figures,
        }


def _float(raw: str, key: str, line_no: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigSyntaxError(f"line {line_no}: value for {key} is not a number: {raw!r}")


def _int(raw: str, key: str, line_no: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigSyntaxError(f"line {line_no}: value for {key} is not an integer: {raw!r}")


def _bool(raw: str, key: str, line_no: int) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigSyntaxError(f"line {line_no}: value for {key} is not a boolean: {raw!r}")


def _positive(value: float, key: str, line_no: int) -> float:
    if value <= 0:
        raise ConfigRangeError(f"line {line_no}: {key} must be > 0, got {value}")
    return value


def _nonnegative(value: float, key: str, line_no: int) -> float:
    if value < 0:
        raise ConfigRangeError(f"line {line_no}: {key} must be >= 0, got {value}")
    return value


def _choice(raw: str, key: str, line_no: int, choices) -> str:
    if raw not in choices:
        raise ConfigRangeError(
            f"line {line_no}: {key} must be one of {sorted(choices)}, got {raw!r}"
        )
    return raw


# key -> setter(value_string, line_no, state_dict)
def _known_keys():
    keys = {}

    def sys_key(name, attr, check=None, conv=_float):
        def setter(raw, ln, st):
            v = conv(raw, name, ln)
            if check:
                v = check(v, name, ln)
            st["system"][attr] = v

        keys[name] = setter

    sys_key("system.b_field_tesla", "b_field", _positive)
    sys_key("system.temperature_kelvin", "temperature", _positive)
    sys_key("system.g_electron", "g_electron", _positive)
    sys_key("system.g_nuclear", "g_nuclear")
    sys_key("system.hyperfine_hz", "hyperfine_a")
    sys_key("system.mw_frequency_hz", "mw_frequency", _positive)

    def rate_key(name, attr, check, conv=_float):
        def setter(raw, ln, st):
            st["rates"][attr] = check(conv(raw, name, ln), name, ln)

        keys[name] = setter

    rate_key("rates.t1e_seconds", "t1e_seconds", _positive)
    rate_key("rates.t1n_seconds", "t1n_seconds", _positive)
    rate_key("rates.electronic_rate_per_s", "electronic_rate_per_s", _nonnegative)
    rate_key("rates.nuclear_rate_per_s", "nuclear_rate_per_s", _nonnegative)
    rate_key("rates.flipflop_rate_per_s", "flipflop_rate_per_s", _nonnegative)
    rate_key("rates.lattice_temperature_kelvin", "lattice_temperature_kelvin", _positive)

    def scen_key(name, attr, setter_fn):
        def setter(raw, ln, st):
            st["scenario"][attr] = setter_fn(raw, name, ln)

        keys[name] = setter

    scen_key("scenario.kind", "kind", lambda r, k, ln: _choice(r, k, ln, SCENARIO_KINDS))
    scen_key("scenario.mw", "mw", lambda r, k, ln: _choice(r, k, ln, MW_LABELS))
    scen_key("scenario.rf", "rf", lambda r, k, ln: _choice(r, k, ln, RF_LABELS))
    scen_key("scenario.duration_s", "duration_s",
             lambda r, k, ln: _nonnegative(_float(r, k, ln), k, ln))
    scen_key("scenario.cycles", "cycles",
             lambda r, k, ln: int(_positive(_int(r, k, ln), k, ln)))
    scen_key("scenario.drive_factor", "drive_factor",
             lambda r, k, ln: _positive(_float(r, k, ln), k, ln))

    def init_pol(raw, key, ln):
        v = _float(raw, key, ln)
        if not -1.0 <= v <= 1.0:
            raise ConfigRangeError(f"line {ln}: {key} must lie in [-1, 1], got {v}")
        return v

    scen_key("scenario.initial_polarization", "initial_polarization", init_pol)

    def spec_key(name, attr, setter_fn):
        def setter(raw, ln, st):
            st["spectrum"][attr] = setter_fn(raw, name, ln)

        keys[name] = setter

    spec_key("spectrum.linewidth_tesla", "linewidth_tesla",
             lambda r, k, ln: _positive(_float(r, k, ln), k, ln))
    spec_key("spectrum.n_points", "n_points",
             lambda r, k, ln: int(_positive(_int(r, k, ln), k, ln)))
    spec_key("spectrum.span_tesla", "span_tesla",
             lambda r, k, ln: _positive(_float(r, k, ln), k, ln))
    spec_key("spectrum.noise_rms", "noise_rms",
             lambda r, k, ln: _nonnegative(_float(r, k, ln), k, ln))
    spec_key("spectrum.seed", "seed", lambda r, k, ln: _int(r, k, ln))

    def out_dir(raw, ln, st):
        st["output"]["directory"] = raw

    keys["output.directory"] = out_dir

    def out_formats(raw, ln, st):
        fmts = tuple(s.strip() for s in raw.split(",") if s.strip())
        for f in fmts:
            if f not in ("csv", "json"):
                raise ConfigRangeError(
                    f"line {ln}: output.formats entries must be csv or json, got {f!r}"
                )
        if not fmts:
            raise ConfigRangeError(f"line {ln}: output.formats must not be empty")
        st["output"]["formats"] = fmts

    keys["output.formats"] = out_formats

    def out_figures(raw, ln, st):
        st["output"]["figures"] = _bool(raw, "output.figures", ln)

    keys["output.figures"] = out_figures
    return keys


KNOWN_KEYS = _known_keys()


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate config text, applying defaults for absent keys."""
    state = {"system": {}, "rates": {}, "scenario": {}, "spectrum": {}, "output": {}}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigSyntaxError(
                f"line {line_no}: expected 'section.key = value', got {raw_line.strip()!r}"
            )
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigSyntaxError(f"line {line_no}: empty key or value in {raw_line.strip()!r}")
        setter = KNOWN_KEYS.get(key)
        if setter is None:
            raise ConfigKeyError(
                f"line {line_no}: unknown key {key!r} (known keys: "
                f"{', '.join(sorted(KNOWN_KEYS))})"
            )
        setter(value, line_no, state)

    system = SystemParams(**state["system"])
    rates = RateSettings(**state["rates"])
    scenario = ScenarioSettings(**state["scenario"])
    spectrum = SpectrumSettings(**state["spectrum"])
    output = OutputSettings(**state["output"])
    cfg = ScenarioConfig(system=system, rates=rates, scenario=scenario,
                         spectrum=spectrum, output=output)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ScenarioConfig) -> None:
    """Cross-field checks that single-key validation cannot express."""
    sc = cfg.scenario
    if sc.kind in ("ponsee_cw", "ponsee_pulsed") and sc.rf is None:
        raise ConfigRangeError(f"scenario.kind = {sc.kind} requires scenario.rf")
    if sc.kind == "overhauser" and cfg.rates.flipflop_rate_per_s <= 0:
        raise ConfigRangeError(
            "scenario.kind = overhauser requires rates.flipflop_rate_per_s > 0; "
            "run 'dnpsim calibrate-flipflop' to derive one from a target polarization"
        )


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def config_with_overrides(cfg: ScenarioConfig, **sections) -> ScenarioConfig:
    """Functional update helper (used by the CLI for flag overrides)."""
    return replace(cfg, **sections)
