"""Derived quantities: polarizations, enhancement, closed-form predictions.

Sign convention for the nuclear polarization P: we report

    P = (N_plus - N_minus) / (N_plus + N_minus)

with N_plus the total population carrying m_i = +1/2. Positive P therefore
means enrichment of the manifold that the MW2+RF2 double-saturation scheme
(and MW-only cross-relaxation pumping) feeds. Note that for a negative
nuclear g-factor thermal equilibrium slightly favors the m_i = -1/2 state,
so the thermal value of P is small and NEGATIVE (about -5.6e-4 at the
default operating point); the enhancement baselines below are quoted as
magnitudes, which is how area-ratio measurements report them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import BOLTZMANN_K, NUCLEAR_MAGNETON, PLANCK_H
from .core import LevelSet, SystemParams, build_levels, check_populations, thermal_populations

# Number of electronic ladder steps between the lowest manifold level and
# the level bridged by each RF transition, under the default signed
# parameters (RF1 sits in the m_s = -3/2 manifold, RF4 in m_s = +3/2).
RF_LADDER_STEPS = {"RF1": 0, "RF2": 1, "RF3": 2, "RF4": 3}


@dataclass(frozen=True)
class PolarizationReport:
    nuclear_p: float
    electronic_p: float
    enhancement: float | None = None

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.nuclear_p <= 1.0 + 1e-12:
            raise ValueError("nuclear polarization outside [-1, 1]")
        if not -1.0 - 1e-12 <= self.electronic_p <= 1.0 + 1e-12:
            raise ValueError("electronic polarization outside [-1, 1]")


@dataclass(frozen=True)
class FrequencyTable:
    """Nuclear transition frequencies (Hz) with 1-sigma uncertainties (Hz)."""

    rf1: tuple[float, float]
    rf2: tuple[float, float]
    rf3: tuple[float, float]
    rf4: tuple[float, float]

    def __post_init__(self):
        vals = [self.rf1[0], self.rf2[0], self.rf3[0], self.rf4[0]]
        if not (vals[0] > vals[1] > vals[2] > vals[3] > 0):
            raise ValueError(f"expected rf1 > rf2 > rf3 > rf4 > 0, got {vals}")


def nuclear_polarization(p: np.ndarray, levels: LevelSet) -> float:
    """(N+ - N-)/(N+ + N-) over the two nuclear manifolds."""
    p = check_populations(p)
    mi = levels.m_i
    plus = p[mi == 0.5].sum()
    minus = p[mi == -0.5].sum()
    return float((plus - minus) / (plus + minus))


def electronic_polarization(p: np.ndarray, levels: LevelSet) -> float:
    """-<m_s>/S, in [-1, 1]; positive when the lowest electronic state dominates."""
    p = check_populations(p)
    return float(-(p * levels.m_s).sum() / 1.5)


def manifold_fractions(p: np.ndarray, levels: LevelSet) -> dict[float, float]:
    """Total population per electronic manifold, keyed by m_s."""
    p = check_populations(p)
    ms = levels.m_s
    return {m: float(p[ms == m].sum()) for m in sorted(set(ms))}


def polarization_report(
    p: np.ndarray, levels: LevelSet, baseline: float | None = None
) -> PolarizationReport:
    """Bundle nuclear and electronic polarization, plus enhancement if a
    baseline polarization is supplied."""
    np_ = nuclear_polarization(p, levels)
    ep = electronic_polarization(p, levels)
    enh = None if baseline is None else enhancement(np_, baseline)
    return PolarizationReport(nuclear_p=np_, electronic_p=ep, enhancement=enh)


def enhancement(p_after: float, p_before: float) -> float:
    """Polarization enhancement, the plain ratio p_after / p_before."""
    if p_before == 0.0:
        raise ZeroDivisionError(
            "enhancement baseline is zero; supply the thermal baseline "
            "polarization (see thermal_nuclear_baseline)"
        )
    return p_after / p_before


def ponsee_cw_prediction(alpha: float, rf_label: str) -> float:
    """Closed-form steady-state nuclear polarization under CW double saturation.

    Assumes complete saturation of one MW manifold and the chosen RF pair,
    with only electronic spin-lattice relaxation otherwise active. With
    Z = 1 + alpha + alpha^2 + alpha^3 and n the number of electronic ladder
    steps from the free manifold's ground level to the RF-bridged level,

        P = (Z - 4 alpha^n) / (Z + 4 alpha^n).

    For RF2 (n = 1) this is algebraically identical to
    (1/alpha - 3 + alpha + alpha^2) / (1/alpha + 5 + alpha + alpha^2).
    RF1 (n = 0) yields a negative value: pumping through the ground-level
    pair enriches the opposite manifold.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if rf_label not in RF_LADDER_STEPS:
        raise ValueError(f"rf_label must be one of {sorted(RF_LADDER_STEPS)}")
    n = RF_LADDER_STEPS[rf_label]
    z = 1.0 + alpha + alpha**2 + alpha**3
    return (z - 4.0 * alpha**n) / (z + 4.0 * alpha**n)


def gn_from_rf2(rf2: float, hyperfine_abs: float, b_field: float) -> float:
    """Nuclear g-factor magnitude from the RF2 frequency: h (RF2 - A/2) / (mu_N B)."""
    if rf2 <= 0 or hyperfine_abs <= 0 or b_field <= 0:
        raise ValueError("rf2, hyperfine_abs and b_field must be > 0")
    num = rf2 - hyperfine_abs / 2.0
    if num <= 0:
        raise ValueError("rf2 must exceed half the hyperfine constant")
    return PLANCK_H * num / (NUCLEAR_MAGNETON * b_field)


def predict_rf_table(
    rf2_measured: float, hyperfine_abs: float, sigma_hyperfine: float = 0.0
) -> FrequencyTable:
    """Predict RF1, RF3, RF4 from a measured RF2 and the hyperfine magnitude.

    The nuclear frequencies are equally spaced by |A| (the level formula is
    linear in m_s m_i), so RF1 = RF2 + |A|, RF3 = RF2 - |A| and
    RF4 = |RF2 - 2 |A||. Uncertainties are plain first-order propagation of
    sigma_hyperfine; RF2 itself is treated as exact input.
    """
    if rf2_measured <= 0 or hyperfine_abs <= 0:
        raise ValueError("frequencies must be > 0")
    if sigma_hyperfine < 0:
        raise ValueError("sigma_hyperfine must be >= 0")
    a = hyperfine_abs
    return FrequencyTable(
        rf1=(rf2_measured + a, sigma_hyperfine),
        rf2=(rf2_measured, 0.0),
        rf3=(rf2_measured - a, sigma_hyperfine),
        rf4=(abs(rf2_measured - 2 * a), 2.0 * sigma_hyperfine),
    )


def thermal_bare_polarization(g_n_abs: float, b_field: float, temperature: float) -> float:
    """Thermal polarization of an isolated I = 1/2 nucleus, tanh(|g| mu_N B / 2 k T)."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if g_n_abs < 0 or b_field < 0:
        raise ValueError("g_n_abs and b_field must be >= 0")
    return math.tanh(g_n_abs * NUCLEAR_MAGNETON * b_field / (2.0 * BOLTZMANN_K * temperature))


def thermal_nuclear_baseline(params: SystemParams) -> float:
    """|P| of the full eight-level thermal state; the enhancement baseline.

    Reported as a magnitude: the thermally favored manifold is opposite to
    the one the pumping schemes enrich when the nuclear g-factor is
    negative, and enhancement factors compare sizes, not senses.
    """
    levels = build_levels(params)
    p = thermal_populations(levels, params.temperature)
    return abs(nuclear_polarization(p, levels))


def estimate_decay_constant(p_start: float, p_end: float, elapsed: float) -> float:
    """Single-exponential decay-to-zero time constant from two observations."""
    if elapsed <= 0:
        raise ValueError("elapsed time must be > 0")
    if not p_start > p_end > 0:
        raise ValueError("need p_start > p_end > 0 for a decay estimate")
    return elapsed / math.log(p_start / p_end)
