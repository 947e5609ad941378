"""Fundamental constants, CODATA-2018, SI units.

Hard-coded on purpose: every frequency, population and field value in the
package is derived from these four numbers, so they are not configurable.
"""

PLANCK_H = 6.62607015e-34  # J s (exact since the 2019 SI redefinition)
BOLTZMANN_K = 1.380649e-23  # J/K (exact)
BOHR_MAGNETON = 9.27401008e-24  # J/T
NUCLEAR_MAGNETON = 5.05078375e-27  # J/T
