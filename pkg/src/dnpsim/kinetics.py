"""Master-equation population kinetics for the eight-level system.

The generator M acts on a population column vector p as dp/dt = M p, with
M[i, j] the rate from level j into level i, so every column sums to zero.

Relaxation channels obey detailed balance: a channel with nominal
(downward) rate w on a pair with energy gap dE has upward rate
w * exp(-dE / k T). A channel acting alone on an isolated pair therefore
relaxes it with time constant 1 / (w_down + w_up), which is how lifetimes
map onto rates (see RelaxationRates.from_lifetimes).

Drives model saturating irradiation as a symmetric exchange rate w_d on
the driven pair(s); an MW drive covers all three degenerate pairs of its
manifold. Coherences are dropped throughout: every claim this package
makes concerns populations and saturation limits, for which the diagonal
rate-equation picture is sufficient, and it keeps the integrator exact
(matrix exponentials of piecewise-constant 8x8 generators) even at
drive/relaxation ratios of 1e6.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from .constants import BOHR_MAGNETON, BOLTZMANN_K
from .core import (
    MW_MANIFOLD,
    RF_MANIFOLD,
    SystemParams,
    TransitionCatalog,
    build_levels,
    catalog_transitions,
    check_populations,
    thermal_populations,
)
from .errors import CalibrationError, ConfigRangeError, DegeneracyError

DEFAULT_T1_ELECTRON = 270.0  # s, electronic spin-lattice lifetime
DEFAULT_T1_NUCLEAR = 4.32e4  # s, nuclear lifetime (order-of-magnitude knob)
DEFAULT_DRIVE_FACTOR = 1e6  # drive strength over max relaxation rate for "saturating"
PULSE_KINDS = ("mw_pi", "rf_pi", "mw_saturate", "rf_saturate", "wait")


@dataclass(frozen=True)
class RelaxationRates:
    """Downward rates (1/s) of the three relaxation channels.

    ``electronic_rate`` acts on the 6 electronic pairs, ``nuclear_rate`` on
    the 4 nuclear pairs and ``flipflop_rate`` on the 3 angular-momentum
    conserving electron-nuclear pairs. ``lattice_temperature`` sets the
    detailed-balance ratios.
    """

    electronic_rate: float
    nuclear_rate: float
    flipflop_rate: float
    lattice_temperature: float

    def __post_init__(self):
        for name in ("electronic_rate", "nuclear_rate", "flipflop_rate"):
            if getattr(self, name) < 0:
                raise ConfigRangeError(f"{name} must be >= 0")
        if self.lattice_temperature <= 0:
            raise ConfigRangeError("lattice_temperature must be > 0")

    @classmethod
    def from_lifetimes(
        cls,
        params: SystemParams,
        t1_electron: float = DEFAULT_T1_ELECTRON,
        t1_nuclear: float = DEFAULT_T1_NUCLEAR,
        flipflop_rate: float = 0.0,
        lattice_temperature: float | None = None,
    ) -> "RelaxationRates":
        """Map pair lifetimes onto downward rates via w = 1/(T1 (1 + e^{-dE/kT})).

        The electronic gap is the Zeeman quantum g_e mu_B B; nuclear gaps are
        small against kT so the nuclear rate is essentially 1/(2 T1n). No
        default is offered for the flip-flop rate: it is not derivable from
        a lifetime and should come from calibrate_flipflop or config.
        """
        if t1_electron <= 0 or t1_nuclear <= 0:
            raise ConfigRangeError("lifetimes must be > 0")
        temp = params.temperature if lattice_temperature is None else lattice_temperature
        gap_e = params.g_electron * BOHR_MAGNETON * params.b_field
        w_e = 1.0 / (t1_electron * (1.0 + np.exp(-gap_e / (BOLTZMANN_K * temp))))
        gaps_n = [
            abs(params.level_energy(ms, 0.5) - params.level_energy(ms, -0.5))
            for ms in (-1.5, -0.5, 0.5, 1.5)
        ]
        gap_n = float(np.mean(gaps_n))
        w_n = 1.0 / (t1_nuclear * (1.0 + np.exp(-gap_n / (BOLTZMANN_K * temp))))
        return cls(
            electronic_rate=w_e,
            nuclear_rate=w_n,
            flipflop_rate=flipflop_rate,
            lattice_temperature=temp,
        )

    def max_rate(self) -> float:
        return max(self.electronic_rate, self.nuclear_rate, self.flipflop_rate)


@dataclass(frozen=True)
class DriveSpec:
    """Saturating irradiation on one labeled transition.

    ``strength`` is a symmetric population-exchange rate (1/s) applied to
    every pair under the label (three pairs for an MW label).
    """

    target: str
    strength: float

    def __post_init__(self):
        if self.strength < 0:
            raise ConfigRangeError("drive strength must be >= 0")
        if self.target not in MW_MANIFOLD and self.target not in RF_MANIFOLD:
            raise ConfigRangeError(
                f"unknown transition label {self.target!r}; "
                f"valid labels: {sorted(MW_MANIFOLD) + sorted(RF_MANIFOLD)}"
            )


@dataclass(frozen=True)
class RateModel:
    """8x8 generator plus a record of what went into it."""

    generator: np.ndarray
    catalog: TransitionCatalog
    rates: RelaxationRates
    drives: tuple[DriveSpec, ...]

    @property
    def matrix(self) -> np.ndarray:
        return self.generator


@dataclass(frozen=True)
class PulseStep:
    """One step of a pulse schedule.

    ``mw_pi`` reverses the m_s order of the addressed nuclear manifold (the
    population image of a global pi rotation of the degenerate spin-3/2
    multiplet); ``rf_pi`` swaps the two populations of the RF pair;
    ``*_saturate`` and ``wait`` are timed segments integrated under the
    running rate matrix.
    """

    kind: str
    target: str | None = None
    duration: float | None = None

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise ConfigRangeError(f"unknown pulse kind {self.kind!r}; valid: {PULSE_KINDS}")
        if self.kind in ("wait", "mw_saturate", "rf_saturate"):
            if self.duration is None or self.duration <= 0:
                raise ConfigRangeError(f"{self.kind} requires duration > 0")
        if self.kind != "wait" and self.target is None:
            raise ConfigRangeError(f"{self.kind} requires a transition label target")


def _add_channel(m: np.ndarray, lower: int, upper: int, w_down: float, gap: float, temp: float):
    if w_down == 0.0:
        return
    w_up = w_down * np.exp(-gap / (BOLTZMANN_K * temp))
    m[lower, upper] += w_down
    m[upper, upper] -= w_down
    m[upper, lower] += w_up
    m[lower, lower] -= w_up


def _add_exchange(m: np.ndarray, a: int, b: int, w: float):
    if w == 0.0:
        return
    m[a, b] += w
    m[b, b] -= w
    m[b, a] += w
    m[a, a] -= w


def build_rate_matrix(
    params: SystemParams,
    rates: RelaxationRates,
    drives: list[DriveSpec] | tuple[DriveSpec, ...] = (),
) -> RateModel:
    """Assemble the generator from relaxation channels plus drive terms."""
    levels = build_levels(params)
    catalog = catalog_transitions(levels)
    e = levels.energies
    m = np.zeros((8, 8))
    temp = rates.lattice_temperature
    for tr in catalog.electronic:
        _add_channel(m, tr.lower_level, tr.upper_level, rates.electronic_rate,
                     e[tr.upper_level] - e[tr.lower_level], temp)
    for tr in catalog.nuclear:
        _add_channel(m, tr.lower_level, tr.upper_level, rates.nuclear_rate,
                     e[tr.upper_level] - e[tr.lower_level], temp)
    for tr in catalog.flipflop:
        _add_channel(m, tr.lower_level, tr.upper_level, rates.flipflop_rate,
                     e[tr.upper_level] - e[tr.lower_level], temp)
    for d in drives:
        for tr in catalog.by_label(d.target):
            _add_exchange(m, tr.lower_level, tr.upper_level, d.strength)
    return RateModel(generator=m, catalog=catalog, rates=rates, drives=tuple(drives))


def _connected_parts(m: np.ndarray) -> list[list[int]]:
    adj = (np.abs(m) > 0).astype(int)
    np.fill_diagonal(adj, 0)
    n, labels = connected_components(adj, directed=False)
    return [sorted(np.nonzero(labels == k)[0].tolist()) for k in range(n)]


def steady_state(model: RateModel) -> np.ndarray:
    """Unique normalized null vector of the generator.

    Raises DegeneracyError when the nonzero-rate graph is disconnected,
    naming the disconnected level groups (each group then carries its own
    conserved population, so no unique steady state exists).
    """
    m = model.generator
    parts = _connected_parts(m)
    if len(parts) > 1:
        raise DegeneracyError(
            "steady state is not unique: transition graph splits into "
            f"{len(parts)} disconnected level groups {parts}",
            components=parts,
        )
    a = np.vstack([m, np.ones(8)])
    b = np.zeros(9)
    b[-1] = 1.0
    p, *_ = np.linalg.lstsq(a, b, rcond=None)
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m @ p).max() > 1e-9 * scale:
        raise DegeneracyError("steady-state solve failed: residual too large")
    p = np.where(np.abs(p) < 1e-15, 0.0, p)
    if p.min() < -1e-10:
        raise DegeneracyError(f"steady-state solve produced negative population {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def evolve(model: RateModel, p0: np.ndarray, t: float) -> np.ndarray:
    """Propagate populations for time t under a constant generator.

    Uses the exact matrix exponential (scaling and squaring), so stiffness
    from strong drives costs nothing. Returns a normalized, nonnegative
    vector; negative excursions beyond -1e-12 of numerical origin raise,
    smaller ones are clamped with a warning.
    """
    if t < 0:
        raise ConfigRangeError("evolution time must be >= 0")
    p0 = check_populations(p0)
    if t == 0:
        return p0
    p = expm(model.generator * t) @ p0
    if p.min() < -1e-12:
        raise ValueError(f"evolution produced negative population {p.min():.3e}")
    if p.min() < 0:
        warnings.warn("clamping tiny negative populations from matrix exponential")
        p = np.clip(p, 0.0, None)
    return p / p.sum()


def apply_pulse(p: np.ndarray, catalog: TransitionCatalog, step: PulseStep) -> np.ndarray:
    """Instantaneous population image of one pulse.

    ``wait`` steps carry no population map of their own and must go through
    evolve / run_schedule instead.
    """
    if step.kind == "wait":
        raise ConfigRangeError("wait steps are integrated by run_schedule, not apply_pulse")
    p = check_populations(p).copy()
    levels = catalog.levels
    if step.kind in ("rf_pi", "rf_saturate"):
        if step.target not in RF_MANIFOLD:
            raise ConfigRangeError(f"{step.kind} needs an RF label, got {step.target!r}")
        tr = catalog.by_label(step.target)[0]
        i, j = tr.lower_level, tr.upper_level
        if step.kind == "rf_pi":
            p[i], p[j] = p[j], p[i]
        else:
            p[i] = p[j] = 0.5 * (p[i] + p[j])
    else:
        if step.target not in MW_MANIFOLD:
            raise ConfigRangeError(f"{step.kind} needs an MW label, got {step.target!r}")
        idx = levels.nuclear_manifold(MW_MANIFOLD[step.target])
        if step.kind == "mw_pi":
            p[idx] = p[idx][::-1]
        else:
            p[idx] = p[idx].mean()
    return p


def run_schedule(
    params: SystemParams,
    rates: RelaxationRates,
    steps: list[PulseStep],
    p0: np.ndarray,
    drive_factor: float = DEFAULT_DRIVE_FACTOR,
) -> list[tuple[float, np.ndarray]]:
    """Execute a pulse schedule, returning the (time, populations) trajectory.

    Pi pulses act instantaneously (the trajectory gains an entry at the
    same timestamp); wait segments integrate the relaxation-only generator;
    saturate segments integrate relaxation plus a drive of strength
    drive_factor times the largest relaxation rate on the addressed label.
    """
    p = check_populations(p0)
    traj = [(0.0, p)]
    t = 0.0
    relax_model = build_rate_matrix(params, rates, ())
    for step in steps:
        if step.kind in ("mw_pi", "rf_pi"):
            p = apply_pulse(p, relax_model.catalog, step)
        elif step.kind == "wait":
            p = evolve(relax_model, p, step.duration)
            t += step.duration
        else:  # mw_saturate | rf_saturate
            strength = drive_factor * max(rates.max_rate(), 1e-30)
            model = build_rate_matrix(params, rates, (DriveSpec(step.target, strength),))
            p = evolve(model, p, step.duration)
            t += step.duration
        traj.append((t, p))
    return traj


def ponsee_pulse_cycle(mw_label: str, rf_label: str, wait: float) -> list[PulseStep]:
    """The three-step polarization-transfer cycle: MW pi, RF pi, wait.

    The MW pulse inverts the ladder of one nuclear manifold, the RF pulse
    swaps populations across the bridged pair, and the wait (a few
    electronic lifetimes) lets the ladders re-thermalize internally.
    """
    return [
        PulseStep("mw_pi", mw_label),
        PulseStep("rf_pi", rf_label),
        PulseStep("wait", duration=wait),
    ]


def single_pair_model(
    params: SystemParams,
    lower: int,
    upper: int,
    w_down: float,
    lattice_temperature: float | None = None,
) -> RateModel:
    """Generator with a single relaxation channel on one level pair.

    Test utility: an isolated pair built this way decays with time constant
    1 / (w_down + w_up), making a configured lifetime directly observable.
    """
    levels = build_levels(params)
    catalog = catalog_transitions(levels)
    temp = params.temperature if lattice_temperature is None else lattice_temperature
    rates = RelaxationRates(0.0, 0.0, 0.0, temp)
    m = np.zeros((8, 8))
    gap = levels.energies[upper] - levels.energies[lower]
    if gap < 0:
        raise ConfigRangeError("upper level must lie above lower level")
    _add_channel(m, lower, upper, w_down, gap, temp)
    return RateModel(generator=m, catalog=catalog, rates=rates, drives=())


def nuclear_polarization_of(p: np.ndarray, levels) -> float:
    # Local copy of the observables formula to avoid an import cycle.
    mi = levels.m_i
    plus = p[mi == 0.5].sum()
    minus = p[mi == -0.5].sum()
    return float((plus - minus) / (plus + minus))


def calibrate_flipflop(
    params: SystemParams,
    w_e: float,
    mw_label: str,
    target_p: float,
    duration: float,
    drive_factor: float = DEFAULT_DRIVE_FACTOR,
    tol: float = 1e-6,
) -> float:
    """Find the flip-flop rate that reaches a target polarization in time.

    Evolves thermal populations for ``duration`` under MW saturation of
    ``mw_label`` plus electronic relaxation ``w_e`` and flip-flop rate w_x,
    and root-finds on the monotone map w_x -> P(duration). Raises
    CalibrationError (reporting the attainable bound) when even a flip-flop
    rate far above w_e cannot reach the target.
    """
    if duration <= 0:
        raise ConfigRangeError("duration must be > 0")
    levels = build_levels(params)
    p0 = thermal_populations(levels, params.temperature)

    def pol_at(w_x: float) -> float:
        rates = RelaxationRates(w_e, 0.0, w_x, params.temperature)
        drive = DriveSpec(mw_label, drive_factor * max(w_e, w_x, 1e-30))
        model = build_rate_matrix(params, rates, (drive,))
        return nuclear_polarization_of(evolve(model, p0, duration), levels)

    if target_p == 0.0:
        return 0.0
    if target_p < 0:
        raise ConfigRangeError("target polarization must be >= 0 for this pumping scheme")

    hi = w_e
    p_hi = pol_at(hi)
    while p_hi < target_p and hi < 1e6 * w_e:
        hi *= 10.0
        p_hi = pol_at(hi)
    if p_hi < target_p:
        raise CalibrationError(
            f"target polarization {target_p} unreachable: saturating flip-flop "
            f"rates top out near P = {p_hi:.4f} after {duration} s",
            bound=p_hi,
        )
    lo = hi
    while pol_at(lo) > target_p and lo > 1e-12 * w_e:
        lo /= 10.0
    if pol_at(lo) > target_p:
        raise CalibrationError("could not bracket the target from below", bound=pol_at(lo))
    return float(brentq(lambda w: pol_at(w) - target_p, lo, hi, xtol=1e-18, rtol=tol))
