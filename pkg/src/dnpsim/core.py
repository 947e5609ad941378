"""Spin system description for an S = 3/2 electron coupled to an I = 1/2 nucleus.

Energies follow the effective high-field Hamiltonian

    E(m_s, m_i) = B (g_e mu_B m_s - g_n mu_N m_i) + h A m_s m_i

which is diagonal in (m_s, m_i). The module builds the eight levels, the
transition catalog (electronic, nuclear, electron-nuclear flip-flop) and
thermal-equilibrium populations.

Sign conventions that everything downstream relies on:

* ``g_nuclear`` is signed (negative for this nucleus) and ``hyperfine_a``
  is signed (negative), which makes the nuclear transition frequencies
  decrease monotonically from the m_s = -3/2 manifold (RF1) to the
  m_s = +3/2 manifold (RF4).
* MW labels group the three degenerate electronic transitions of each
  nuclear manifold: MW1 drives the m_i = +1/2 manifold, MW2 the
  m_i = -1/2 manifold. With a negative hyperfine constant MW2 is the
  higher-frequency electronic line. This assignment makes the MW2-driven
  double-resonance scheme and the MW2-only cross-relaxation (Overhauser)
  scheme pump the same nuclear manifold, as observed experimentally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import BOHR_MAGNETON, BOLTZMANN_K, NUCLEAR_MAGNETON, PLANCK_H
from .errors import ConfigRangeError

M_S_VALUES = (-1.5, -0.5, 0.5, 1.5)
M_I_VALUES = (-0.5, 0.5)

MW_LABELS = ("MW1", "MW2")
RF_LABELS = ("RF1", "RF2", "RF3", "RF4")
FF_LABELS = ("FF1", "FF2", "FF3")
ALL_LABELS = MW_LABELS + RF_LABELS

# Nuclear transitions are labeled by descending frequency, which under the
# default signs maps one-to-one onto the electronic manifolds:
RF_MANIFOLD = {"RF1": -1.5, "RF2": -0.5, "RF3": 0.5, "RF4": 1.5}
MW_MANIFOLD = {"MW1": 0.5, "MW2": -0.5}

# Populations must stay normalized to this tolerance (see check_populations).
POPULATION_TOL = 1e-12


@dataclass(frozen=True)
class SystemParams:
    """Static field, temperature and coupling constants of the spin system."""

    b_field: float = 8.6  # T
    temperature: float = 3.0  # K
    g_electron: float = 2.00232
    g_nuclear: float = -0.566  # signed
    hyperfine_a: float = -21.9e6  # Hz, signed
    mw_frequency: float = 240e9  # Hz, spectrometer quantum for field-swept spectra

    def __post_init__(self):
        if self.b_field <= 0:
            raise ConfigRangeError("b_field must be > 0")
        if self.temperature <= 0:
            raise ConfigRangeError("temperature must be > 0")
        if self.g_electron <= 0:
            raise ConfigRangeError("g_electron must be > 0")
        if self.mw_frequency <= 0:
            raise ConfigRangeError("mw_frequency must be > 0")

    def level_energy(self, m_s: float, m_i: float) -> float:
        """Energy in joules of the |m_s, m_i> product state."""
        return (
            self.b_field
            * (self.g_electron * BOHR_MAGNETON * m_s - self.g_nuclear * NUCLEAR_MAGNETON * m_i)
            + PLANCK_H * self.hyperfine_a * m_s * m_i
        )


@dataclass(frozen=True)
class Level:
    index: int
    m_s: float
    m_i: float
    energy: float  # J


@dataclass(frozen=True)
class LevelSet:
    """The eight levels, sorted by ascending energy, plus the generating params."""

    params: SystemParams
    levels: tuple[Level, ...]

    def __post_init__(self):
        if len(self.levels) != 8:
            raise ValueError("expected exactly 8 levels")

    @property
    def energies(self) -> np.ndarray:
        return np.array([lv.energy for lv in self.levels])

    @property
    def m_s(self) -> np.ndarray:
        return np.array([lv.m_s for lv in self.levels])

    @property
    def m_i(self) -> np.ndarray:
        return np.array([lv.m_i for lv in self.levels])

    def index_of(self, m_s: float, m_i: float) -> int:
        for lv in self.levels:
            if lv.m_s == m_s and lv.m_i == m_i:
                return lv.index
        raise KeyError(f"no level with m_s={m_s}, m_i={m_i}")

    def electron_manifold(self, m_s: float) -> list[int]:
        """Level indices with the given m_s, ordered by m_i ascending."""
        idx = [lv.index for lv in self.levels if lv.m_s == m_s]
        return sorted(idx, key=lambda i: self.levels_by_index(i).m_i)

    def nuclear_manifold(self, m_i: float) -> list[int]:
        """Level indices with the given m_i, ordered by m_s ascending."""
        idx = [lv.index for lv in self.levels if lv.m_i == m_i]
        return sorted(idx, key=lambda i: self.levels_by_index(i).m_s)

    def levels_by_index(self, index: int) -> Level:
        return self.levels[index]


@dataclass(frozen=True)
class Transition:
    kind: str  # electronic | nuclear | flipflop
    lower_level: int
    upper_level: int
    frequency: float  # Hz
    label: str


@dataclass(frozen=True)
class TransitionCatalog:
    levels: LevelSet
    electronic: tuple[Transition, ...]
    nuclear: tuple[Transition, ...]
    flipflop: tuple[Transition, ...]

    @property
    def all(self) -> tuple[Transition, ...]:
        return self.electronic + self.nuclear + self.flipflop

    def by_label(self, label: str) -> list[Transition]:
        """All transition pairs carrying the given label (3 for MW, 1 for RF)."""
        hits = [t for t in self.all if t.label == label]
        if not hits:
            valid = sorted({t.label for t in self.all})
            raise ConfigRangeError(f"unknown transition label {label!r}; valid labels: {valid}")
        return hits

    def frequency_of(self, label: str) -> float:
        return self.by_label(label)[0].frequency


def build_levels(params: SystemParams) -> LevelSet:
    """Enumerate the 8 product states and sort them by ascending energy.

    Ties (possible only for degenerate parameter choices) break on
    (m_s, m_i) lexicographic order so indices are stable across runs.
    """
    raw = [
        (params.level_energy(m_s, m_i), m_s, m_i)
        for m_s in M_S_VALUES
        for m_i in M_I_VALUES
    ]
    raw.sort(key=lambda t: (t[0], t[1], t[2]))
    levels = tuple(
        Level(index=i, m_s=m_s, m_i=m_i, energy=e) for i, (e, m_s, m_i) in enumerate(raw)
    )
    return LevelSet(params=params, levels=levels)


def catalog_transitions(levels: LevelSet) -> TransitionCatalog:
    """Group all level pairs by selection rule and attach labels.

    Electronic pairs (delta m_s = +-1, delta m_i = 0) come in two triply
    degenerate groups, one per m_i manifold. Nuclear pairs (delta m_i = +-1,
    delta m_s = 0) are labeled RF1..RF4 by descending frequency. Flip-flop
    pairs jointly change m_s by +1 and m_i by -1, conserving m_s + m_i.
    """
    lv = levels.levels
    electronic, nuclear, flipflop = [], [], []
    # Levels are sorted by ascending energy, so for j > i level j is the
    # upper state (ties resolved by index, keeping |delta E| = 0 pairs valid).
    for i in range(8):
        for j in range(i + 1, 8):
            a, b = lv[i], lv[j]
            dms, dmi = b.m_s - a.m_s, b.m_i - a.m_i
            freq = (b.energy - a.energy) / PLANCK_H
            if abs(dms) == 1.0 and dmi == 0.0:
                label = next(l for l, m in MW_MANIFOLD.items() if m == a.m_i)
                electronic.append(Transition("electronic", a.index, b.index, freq, label))
            elif dms == 0.0 and abs(dmi) == 1.0:
                nuclear.append(Transition("nuclear", a.index, b.index, freq, "RF?"))
            elif abs(dms) == 1.0 and abs(dmi) == 1.0 and dms + dmi == 0.0:
                flipflop.append(Transition("flipflop", a.index, b.index, freq, "FF?"))

    # RF labels by descending frequency (manifold m_s breaks exact ties so a
    # degenerate parameter choice still labels deterministically); FF labels
    # by ascending lower index.
    nuclear.sort(key=lambda t: (-t.frequency, lv[t.lower_level].m_s))
    nuclear = [
        Transition(t.kind, t.lower_level, t.upper_level, t.frequency, RF_LABELS[i])
        for i, t in enumerate(nuclear)
    ]
    flipflop.sort(key=lambda t: t.lower_level)
    flipflop = [
        Transition(t.kind, t.lower_level, t.upper_level, t.frequency, FF_LABELS[i])
        for i, t in enumerate(flipflop)
    ]
    electronic.sort(key=lambda t: (t.label, t.lower_level))
    return TransitionCatalog(
        levels=levels,
        electronic=tuple(electronic),
        nuclear=tuple(nuclear),
        flipflop=tuple(flipflop),
    )


def boltzmann_factor(params: SystemParams) -> float:
    """Population ratio of adjacent electronic Zeeman levels, exp(-g mu_B B / k T).

    Written in exponential form so that the ratio is always in (0, 1]; the
    linearized form g mu_B B / k T evaluates to about 3.86 at the default
    operating point and is only a valid population ratio when it is << 1.
    """
    x = params.g_electron * BOHR_MAGNETON * params.b_field / (BOLTZMANN_K * params.temperature)
    return math.exp(-x)


def thermal_populations(levels: LevelSet, temperature: float) -> np.ndarray:
    """Boltzmann distribution over the 8 levels at the given temperature."""
    if temperature <= 0:
        raise ConfigRangeError("temperature must be > 0")
    e = levels.energies
    w = np.exp(-(e - e.min()) / (BOLTZMANN_K * temperature))
    return w / w.sum()


def populations_with_polarization(levels: LevelSet, temperature: float, p_nuclear: float) -> np.ndarray:
    """Populations with prescribed nuclear polarization and thermal manifold shapes.

    Splits the total as (1 + P)/2 in the m_i = +1/2 manifold and (1 - P)/2
    in m_i = -1/2, distributing each manifold internally in Boltzmann
    proportions. Used to seed relaxation scenarios and synthetic spectra.
    """
    if not -1.0 <= p_nuclear <= 1.0:
        raise ConfigRangeError("nuclear polarization must lie in [-1, 1]")
    p = np.zeros(8)
    th = thermal_populations(levels, temperature)
    mi = levels.m_i
    for m, total in ((0.5, (1 + p_nuclear) / 2), (-0.5, (1 - p_nuclear) / 2)):
        sel = mi == m
        shape = th[sel] / th[sel].sum()
        p[sel] = total * shape
    return p


def check_populations(p: np.ndarray, tol: float = POPULATION_TOL) -> np.ndarray:
    """Validate an 8-component population vector; returns it as ndarray.

    Requires all entries >= -tol and a total within tol of 1. Entries in
    (-tol, 0) are clamped to zero.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (8,):
        raise ValueError(f"population vector must have shape (8,), got {p.shape}")
    if p.min() < -tol:
        raise ValueError(f"negative population {p.min():.3e} below tolerance {-tol:.0e}")
    if abs(p.sum() - 1.0) > max(tol, 8 * np.finfo(float).eps):
        raise ValueError(f"populations sum to {p.sum()!r}, expected 1 within {tol:.0e}")
    return np.clip(p, 0.0, None)
