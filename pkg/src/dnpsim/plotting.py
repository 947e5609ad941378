"""Figure rendering for scenario reports.

Uses the object-oriented matplotlib API (no pyplot state) so figures can
be rendered from worker threads during sweeps, and strips the PNG date
metadata so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: F401  (activates Agg)
from matplotlib.figure import Figure

from .spectrum import DoubletFit, Spectrum, _lorentzian


def save_figure(fig: Figure, path) -> None:
    fig.savefig(path, dpi=150, metadata={"Date": None})


def trajectory_figure(times, populations, polarizations) -> Figure:
    """Level populations and nuclear polarization against simulated time."""
    times = np.asarray(times, dtype=float)
    populations = np.asarray(populations, dtype=float)
    fig = Figure(figsize=(7.0, 5.0))
    ax1 = fig.add_subplot(211)
    for k in range(populations.shape[1]):
        ax1.plot(times, populations[:, k], lw=1.0, label=f"p{k}")
    ax1.set_ylabel("population")
    ax1.legend(ncol=4, fontsize=7, frameon=False)
    ax2 = fig.add_subplot(212, sharex=ax1)
    ax2.plot(times, polarizations, lw=1.4, color="C3")
    ax2.set_xlabel("time (s)")
    ax2.set_ylabel("nuclear polarization")
    fig.tight_layout()
    return fig


def spectrum_figure(spec: Spectrum, fit: DoubletFit | None = None) -> Figure:
    """Absorption doublet in millitesla around the doublet center, with the
    fitted curve overlaid when a fit is given."""
    fig = Figure(figsize=(7.0, 4.2))
    ax = fig.add_subplot(111)
    x = spec.field_axis
    mid = 0.5 * (x[0] + x[-1])
    xm = (x - mid) * 1e3
    ax.plot(xm, spec.amplitude, lw=0.9, color="C0", label="spectrum")
    if fit is not None:
        dense = np.linspace(x[0], x[-1], 4 * x.size)
        model = (
            fit.baseline
            + _lorentzian(dense, fit.center_1, fit.width_1, fit.area_1)
            + _lorentzian(dense, fit.center_2, fit.width_2, fit.area_2)
        )
        ax.plot((dense - mid) * 1e3, model, lw=1.4, color="C1", label="bi-Lorentzian fit")
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel(f"field - {mid:.4f} T (mT)")
    ax.set_ylabel("absorption (a.u.)")
    fig.tight_layout()
    return fig
