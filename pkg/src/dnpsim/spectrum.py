"""Field-swept absorption doublets: synthesis, bi-Lorentzian fitting, readout.

The electronic resonance of each nuclear manifold sits at

    B_res(m_i) = h (nu_mw - A m_i) / (g_e mu_B)

and carries an integrated area proportional to that manifold's total
population, so the peak-area asymmetry of the doublet reads out the
nuclear polarization directly. Saturation/passage lineshape physics is not
modeled: peaks are ideal Lorentzians whose area ratio equals the
population ratio by construction, which is exactly the convention used
when polarization is extracted from measured spectra.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .constants import BOHR_MAGNETON, PLANCK_H
from .core import LevelSet, SystemParams, check_populations
from .errors import ConfigRangeError, FitError, ResolvabilityError

MAX_FIT_ITERATIONS = 200
STEP_TOLERANCE = 1e-8  # relative parameter step declaring convergence


def params_meta(params: SystemParams) -> dict:
    return {
        "b_field_tesla": params.b_field,
        "temperature_kelvin": params.temperature,
        "g_electron": params.g_electron,
        "g_nuclear": params.g_nuclear,
        "hyperfine_hz": params.hyperfine_a,
        "mw_frequency_hz": params.mw_frequency,
    }


def params_hash(params: SystemParams) -> str:
    blob = json.dumps(params_meta(params), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def resonance_field(params: SystemParams, m_i: float) -> float:
    """Center field of the electronic line belonging to one nuclear manifold."""
    return (
        PLANCK_H
        * (params.mw_frequency - params.hyperfine_a * m_i)
        / (params.g_electron * BOHR_MAGNETON)
    )


def doublet_separation(params: SystemParams) -> float:
    """Field spacing of the two lines, h |A| / (g_e mu_B)."""
    return PLANCK_H * abs(params.hyperfine_a) / (params.g_electron * BOHR_MAGNETON)


@dataclass(frozen=True)
class Spectrum:
    """A sampled absorption trace over a strictly increasing field axis."""

    field_axis: np.ndarray  # T
    amplitude: np.ndarray  # a.u.
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        fa = np.asarray(self.field_axis, dtype=float)
        am = np.asarray(self.amplitude, dtype=float)
        if fa.shape != am.shape or fa.ndim != 1:
            raise ValueError("field_axis and amplitude must be 1-d arrays of equal length")
        if fa.size < 16:
            raise ValueError("spectrum needs at least 16 samples")
        if not np.all(np.diff(fa) > 0):
            raise ValueError("field_axis must be strictly increasing")
        object.__setattr__(self, "field_axis", fa)
        object.__setattr__(self, "amplitude", am)


@dataclass(frozen=True)
class DoubletFit:
    """Converged bi-Lorentzian parameters; center_1 is the lower-field peak.

    Widths are half-widths at half-maximum (T). ``covariance`` is the
    residual-variance-scaled inverse of the Jacobian normal matrix over the
    free parameters, ordered as in ``parameter_names``.
    """

    center_1: float
    center_2: float
    width_1: float
    width_2: float
    area_1: float
    area_2: float
    baseline: float
    equal_width: bool
    covariance: np.ndarray
    residual_norm: float
    meta: dict = field(default_factory=dict)

    @property
    def parameter_names(self) -> tuple[str, ...]:
        if self.equal_width:
            return ("center_1", "center_2", "width", "area_1", "area_2", "baseline")
        return ("center_1", "center_2", "width_1", "width_2", "area_1", "area_2", "baseline")

    def as_dict(self) -> dict:
        out = {
            "center_1": self.center_1,
            "center_2": self.center_2,
            "area_1": self.area_1,
            "area_2": self.area_2,
            "baseline": self.baseline,
            "equal_width": self.equal_width,
            "residual_norm": self.residual_norm,
            "covariance": self.covariance.tolist(),
        }
        if self.equal_width:
            out["width"] = self.width_1
        else:
            out["width_1"] = self.width_1
            out["width_2"] = self.width_2
        return out


def _lorentzian(x: np.ndarray, center: float, hwhm: float, area: float) -> np.ndarray:
    return area * (hwhm / np.pi) / ((x - center) ** 2 + hwhm**2)


def synthesize_spectrum(
    p: np.ndarray,
    params: SystemParams,
    levels: LevelSet,
    linewidth: float = 0.3e-3,
    n_points: int = 801,
    span: float = 6e-3,
    noise_rms: float = 0.0,
    seed: int | None = None,
) -> Spectrum:
    """Two Lorentzian absorption peaks with areas set by manifold populations.

    ``linewidth`` is the FWHM in tesla. Additive Gaussian noise of the given
    rms comes from a generator seeded per call, so identical arguments give
    identical samples. The span must comfortably contain both peaks:
    span > separation + 10 linewidths.
    """
    p = check_populations(p)
    if linewidth <= 0:
        raise ConfigRangeError("linewidth must be > 0")
    if n_points < 16:
        raise ConfigRangeError("n_points must be >= 16")
    if noise_rms < 0:
        raise ConfigRangeError("noise_rms must be >= 0")
    sep = doublet_separation(params)
    if span <= sep + 10 * linewidth:
        raise ConfigRangeError(
            f"span {span:.3e} T too small: need > separation + 10 linewidths "
            f"= {sep + 10 * linewidth:.3e} T"
        )
    mi = levels.m_i
    center_of = {m: resonance_field(params, m) for m in (-0.5, 0.5)}
    mid = 0.5 * (center_of[-0.5] + center_of[0.5])
    x = np.linspace(mid - span / 2, mid + span / 2, n_points)
    hwhm = linewidth / 2.0
    y = np.zeros_like(x)
    for m in (-0.5, 0.5):
        y += _lorentzian(x, center_of[m], hwhm, float(p[mi == m].sum()))
    if noise_rms > 0:
        rng = np.random.default_rng(seed)
        y = y + rng.normal(0.0, noise_rms, size=x.size)
    meta = {
        "mw_frequency_hz": params.mw_frequency,
        "noise_seed": seed,
        "noise_rms": noise_rms,
        "linewidth_tesla": linewidth,
        "params_hash": params_hash(params),
        "system": params_meta(params),
    }
    return Spectrum(field_axis=x, amplitude=y, meta=meta)


def _model_and_jacobian(theta: np.ndarray, x: np.ndarray, equal_width: bool):
    if equal_width:
        c1, c2, g, a1, a2, b = theta
        g1 = g2 = g
    else:
        c1, c2, g1, g2, a1, a2, b = theta
    d1 = (x - c1) ** 2 + g1**2
    d2 = (x - c2) ** 2 + g2**2
    l1 = (g1 / np.pi) / d1
    l2 = (g2 / np.pi) / d2
    y = b + a1 * l1 + a2 * l2
    dc1 = a1 * (g1 / np.pi) * 2 * (x - c1) / d1**2
    dc2 = a2 * (g2 / np.pi) * 2 * (x - c2) / d2**2
    dg1 = a1 * ((x - c1) ** 2 - g1**2) / (np.pi * d1**2)
    dg2 = a2 * ((x - c2) ** 2 - g2**2) / (np.pi * d2**2)
    ones = np.ones_like(x)
    if equal_width:
        jac = np.column_stack([dc1, dc2, dg1 + dg2, l1, l2, ones])
    else:
        jac = np.column_stack([dc1, dc2, dg1, dg2, l1, l2, ones])
    return y, jac


def _width_indices(equal_width: bool) -> tuple[int, ...]:
    return (2,) if equal_width else (2, 3)


def _initial_guess(x: np.ndarray, y: np.ndarray, initial_centers) -> tuple:
    baseline = float(np.percentile(y, 5))
    if initial_centers is not None:
        c1, c2 = sorted(float(c) for c in initial_centers)
        i1 = int(np.argmin(np.abs(x - c1)))
        i2 = int(np.argmin(np.abs(x - c2)))
    else:
        interior = np.arange(1, x.size - 1)
        is_max = (y[interior] > y[interior - 1]) & (y[interior] >= y[interior + 1])
        maxima = interior[is_max]
        if maxima.size == 0:
            raise ResolvabilityError("no local maxima found; supply initial_centers")
        order = maxima[np.argsort(y[maxima])[::-1]]
        i1 = int(order[0])
        # half-width of the tallest peak, for both the separation criterion
        # and the width seed
        half = baseline + 0.5 * (y[i1] - baseline)
        left = i1
        while left > 0 and y[left] > half:
            left -= 1
        right = i1
        while right < x.size - 1 and y[right] > half:
            right += 1
        fwhm_est = max(x[right] - x[left], 2 * (x[1] - x[0]))
        i2 = None
        for cand in order[1:]:
            if abs(x[cand] - x[i1]) > fwhm_est:
                i2 = int(cand)
                break
        if i2 is None:
            raise ResolvabilityError(
                "only one resolvable peak; supply initial_centers for the doublet"
            )
        c1, c2 = x[i1], x[i2]
    # use the tallest peak's half-width to seed both widths
    half = baseline + 0.5 * (y[i1] - baseline)
    left = i1
    while left > 0 and y[left] > half:
        left -= 1
    right = i1
    while right < x.size - 1 and y[right] > half:
        right += 1
    hwhm0 = max(0.5 * (x[right] - x[left]), x[1] - x[0])
    a1 = max(y[i1] - baseline, 1e-30) * np.pi * hwhm0
    a2 = max(y[i2] - baseline, 1e-30) * np.pi * hwhm0
    if c1 > c2:
        c1, c2, a1, a2 = c2, c1, a2, a1
    return float(c1), float(c2), float(hwhm0), float(a1), float(a2), baseline


def fit_bilorentzian(
    spec: Spectrum,
    equal_width: bool = True,
    initial_centers: tuple[float, float] | None = None,
) -> DoubletFit:
    """Damped least-squares fit of two Lorentzian peaks plus a flat baseline.

    Seeds itself from the two largest separated local maxima (or from
    ``initial_centers``), then iterates Levenberg-style steps: the damping
    parameter grows until a step strictly reduces the residual and shrinks
    after each accepted step. Converged when the relative parameter step
    drops below 1e-8, failing after 200 iterations with the last iterate
    attached to the raised FitError.
    """
    x, y = spec.field_axis, spec.amplitude
    c1, c2, g0, a1, a2, b0 = _initial_guess(x, y, initial_centers)
    if equal_width:
        theta = np.array([c1, c2, g0, a1, a2, b0])
    else:
        theta = np.array([c1, c2, g0, g0, a1, a2, b0])

    widx = _width_indices(equal_width)
    ymodel, jac = _model_and_jacobian(theta, x, equal_width)
    resid = ymodel - y
    ssr = float(resid @ resid)
    lam = 1e-3
    converged = False
    for _ in range(MAX_FIT_ITERATIONS):
        jtj = jac.T @ jac
        grad = jac.T @ resid
        step = None
        for _ in range(60):
            damped = jtj + lam * np.diag(np.clip(np.diag(jtj), 1e-30, None))
            try:
                delta = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            trial = theta + delta
            for k in widx:  # widths must stay positive
                if trial[k] <= 0:
                    trial[k] = theta[k] / 2.0
            ytrial, jtrial = _model_and_jacobian(trial, x, equal_width)
            rtrial = ytrial - y
            strial = float(rtrial @ rtrial)
            if strial <= ssr:  # monotone safeguard
                step = trial - theta
                theta, resid, jac, ssr = trial, rtrial, jtrial, strial
                lam = max(lam * 0.25, 1e-12)
                break
            lam *= 4.0
            if lam > 1e14:
                break
        if step is None:
            # no downhill step exists at any damping: we are at a minimum
            converged = True
            break
        rel = np.linalg.norm(step) / (np.linalg.norm(theta) + 1e-300)
        if rel < STEP_TOLERANCE:
            converged = True
            break
    if not converged:
        raise FitError(
            f"bi-Lorentzian fit did not converge in {MAX_FIT_ITERATIONS} iterations "
            f"(residual norm {np.sqrt(ssr):.3e})",
            last_params=theta,
            residual_norm=float(np.sqrt(ssr)),
        )

    ymodel, jac = _model_and_jacobian(theta, x, equal_width)
    resid = ymodel - y
    ssr = float(resid @ resid)
    dof = max(x.size - theta.size, 1)
    sigma2 = ssr / dof
    cov = sigma2 * np.linalg.pinv(jac.T @ jac)
    cov = 0.5 * (cov + cov.T)

    if equal_width:
        c1f, c2f, gf, a1f, a2f, bf = theta
        g1f = g2f = gf
    else:
        c1f, c2f, g1f, g2f, a1f, a2f, bf = theta
    # normalize ordering: peak 1 at lower field
    if c1f > c2f:
        perm = list(range(theta.size))
        if equal_width:
            c1f, c2f, a1f, a2f = c2f, c1f, a2f, a1f
            perm[0], perm[1], perm[3], perm[4] = 1, 0, 4, 3
        else:
            c1f, c2f, g1f, g2f, a1f, a2f = c2f, c1f, g2f, g1f, a2f, a1f
            perm[0], perm[1], perm[2], perm[3], perm[4], perm[5] = 1, 0, 3, 2, 5, 4
        cov = cov[np.ix_(perm, perm)]
    return DoubletFit(
        center_1=float(c1f),
        center_2=float(c2f),
        width_1=float(abs(g1f)),
        width_2=float(abs(g2f)),
        area_1=float(a1f),
        area_2=float(a2f),
        baseline=float(bf),
        equal_width=equal_width,
        covariance=cov,
        residual_norm=float(np.sqrt(ssr)),
        meta=dict(spec.meta),
    )


def polarization_from_fit(fit: DoubletFit) -> tuple[float, float]:
    """Nuclear polarization and 1-sigma uncertainty from fitted peak areas.

    Peaks are assigned to nuclear manifolds through the center-field map:
    the peak nearer the m_i = +1/2 resonance field contributes N+. Requires
    the fit to carry the system snapshot in its meta (fits of synthesized
    or CSV-loaded spectra always do).
    """
    total = fit.area_1 + fit.area_2
    if total == 0:
        raise ValueError("degenerate fit: total peak area is zero")
    system = fit.meta.get("system")
    if system is None:
        raise ValueError("fit carries no system metadata for the center-field map")
    sp = SystemParams(
        b_field=system["b_field_tesla"],
        temperature=system["temperature_kelvin"],
        g_electron=system["g_electron"],
        g_nuclear=system["g_nuclear"],
        hyperfine_a=system["hyperfine_hz"],
        mw_frequency=system["mw_frequency_hz"],
    )
    c_plus = resonance_field(sp, 0.5)
    c_minus = resonance_field(sp, -0.5)
    if abs(fit.center_1 - c_plus) + abs(fit.center_2 - c_minus) < abs(
        fit.center_1 - c_minus
    ) + abs(fit.center_2 - c_plus):
        a_plus, a_minus = fit.area_1, fit.area_2
        i_plus, i_minus = 0, 1
    else:
        a_plus, a_minus = fit.area_2, fit.area_1
        i_plus, i_minus = 1, 0
    pol = (a_plus - a_minus) / total
    # first-order propagation through P = (a+ - a-)/(a+ + a-)
    names = fit.parameter_names
    ia1 = names.index("area_1")
    grad = np.zeros(len(names))
    d_plus = 2.0 * a_minus / total**2
    d_minus = -2.0 * a_plus / total**2
    grad[ia1 + i_plus] = d_plus
    grad[ia1 + i_minus] = d_minus
    var = float(grad @ fit.covariance @ grad)
    return float(pol), float(np.sqrt(max(var, 0.0)))


def write_spectrum_csv(spec: Spectrum, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(spectrum_csv_text(spec))


def spectrum_csv_text(spec: Spectrum) -> str:
    def g12(v):
        return format(float(v), ".12g")

    buf = io.StringIO()
    meta = spec.meta
    buf.write(f"# mw_frequency_hz = {g12(meta.get('mw_frequency_hz', 0.0))}\n")
    seed = meta.get("noise_seed")
    buf.write(f"# noise_seed = {'' if seed is None else seed}\n")
    buf.write(f"# params_hash = {meta.get('params_hash', '')}\n")
    buf.write(f"# noise_rms = {g12(meta.get('noise_rms', 0.0))}\n")
    buf.write(f"# linewidth_tesla = {g12(meta.get('linewidth_tesla', 0.0))}\n")
    for key, val in meta.get("system", {}).items():
        buf.write(f"# system.{key} = {g12(val)}\n")
    buf.write("field_tesla,amplitude\n")
    for b, a in zip(spec.field_axis, spec.amplitude):
        buf.write(f"{g12(b)},{g12(a)}\n")
    return buf.getvalue()


def read_spectrum_csv(path) -> Spectrum:
    meta: dict = {"system": {}}
    fields, amps = [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    continue
                key, _, val = body.partition("=")
                key, val = key.strip(), val.strip()
                if key.startswith("system."):
                    meta["system"][key[len("system."):]] = float(val)
                elif key == "params_hash":
                    meta[key] = val
                elif key == "noise_seed":
                    meta[key] = int(val) if val else None
                else:
                    meta[key] = float(val)
                continue
            if line.startswith("field_tesla"):
                continue
            b, _, a = line.partition(",")
            fields.append(float(b))
            amps.append(float(a))
    return Spectrum(field_axis=np.array(fields), amplitude=np.array(amps), meta=meta)
