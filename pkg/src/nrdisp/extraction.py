"""Inverting a MeasurementSet to EffectiveParams, with Monte-Carlo uncertainties."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit, minimize_scalar

from .core import EffectiveParams, solve_dissipator
from .dynamics import TrajectoryRecord
from .errors import FitFailure, NoPhysicalSolution, TooFewValidSamples
from .experiments import OBSERVABLES, MeasurementSet

PARAMS = ("delta_c", "lam", "kappa", "gamma_nr", "theta", "eta")
DERIVED = ("gamma_sin_theta", "gamma_sinh_eta", "gamma_cosh_eta", "total_decay")
MC_CHUNK = 10_000
# Gaussian-fit R^2 below this, or sigma asymmetry above ASYM_LIMIT, selects the split fit
GOODNESS_MIN = 0.98
ASYM_LIMIT = 0.15


@dataclass
class ExtractionResult:
    params: EffectiveParams | None
    derived: dict
    uncertainty: dict | None = None
    derived_uncertainty: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"params": None if self.params is None else self.params.to_dict(), "derived": self.derived,
                "uncertainty": self.uncertainty, "derived_uncertainty": self.derived_uncertainty,
                "diagnostics": self.diagnostics}


def _solve(values: np.ndarray, n0: float, t_f: float, omega_r: float):
    """Vectorised inversion; ``values`` has OBSERVABLES along the last axis."""
    wg, we, kg, ke, phi, zeta = np.moveaxis(np.asarray(values, float), -1, 0)
    lam = wg - we
    delta_c = 0.5 * (wg + we) - omega_r
    A = 0.5 * (kg - ke)          # (kappa_g - kappa_e)/2 = Gamma sinh(eta)
    B = 0.5 * (kg + ke)
    dconst = B + 1j * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.log(zeta) + 1j * phi
        shape = -np.expm1(-dconst * t_f) / dconst
        coeff = L / (n0 * shape)
    C = lam + coeff.imag
    D = -coeff.real
    kappa, gamma, theta, eta, code = solve_dissipator(A, B, C, D, scale=np.abs(lam))
    code = np.where(np.isfinite(coeff) & (zeta > 0) & (zeta <= 1), code, 3)
    out = {"delta_c": delta_c, "lam": lam, "kappa": kappa, "gamma_nr": gamma, "theta": theta, "eta": eta,
           "gamma_sin_theta": C, "gamma_sinh_eta": A, "gamma_cosh_eta": B - kappa, "total_decay": B}
    return out, code


_CODE_MSG = {1: "Gamma(cosh eta - cos theta) <= 0", 2: "kappa < 0", 3: "zeta outside (0, 1]"}


def extract(ms: MeasurementSet) -> ExtractionResult:
    """Point estimate from the finite-window constraint equations."""
    out, code = _solve(ms.values(), ms.n0, ms.t_f, ms.omega_r)
    code = int(code)
    if code:
        raise NoPhysicalSolution(_CODE_MSG[code], ", ".join(f"{k}={float(out[k]):.6g}" for k in
                                                            ("kappa", "gamma_sin_theta", "total_decay")))
    p = EffectiveParams(*(float(out[k]) for k in PARAMS))
    return ExtractionResult(p, {k: float(out[k]) for k in DERIVED}, diagnostics={"physical": True})


# ---------------------------------------------------------------- histogram fits

@dataclass(frozen=True)
class GaussianFit:
    center: float
    sigma: float
    goodness: float
    degenerate: bool = False


@dataclass(frozen=True)
class HalfGaussianFit:
    center: float
    sigma_low: float
    sigma_high: float
    goodness: float


def _histogram(samples: np.ndarray, bins):
    x = np.asarray(samples, float)
    x = x[np.isfinite(x)]
    if len(x) < 100:
        raise ValueError("need at least 100 samples")
    if bins is None:
        bins = np.histogram_bin_edges(x, bins="fd")
        if len(bins) > 1001:
            bins = 1000
    counts, edges = np.histogram(x, bins=bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return x, counts.astype(float), centers


def histogram_table(samples, bins=None) -> tuple[np.ndarray, np.ndarray]:
    """(bin centres, counts) with the same binning the fits use."""
    _, counts, centers = _histogram(samples, bins)
    return centers, counts


def _r2(y, yhat) -> float:
    ss = float(((y - y.mean()) ** 2).sum())
    return 1.0 - float(((y - yhat) ** 2).sum()) / ss if ss > 0 else float("nan")


def _gauss(x, a, m, s):
    return a * np.exp(-0.5 * ((x - m) / s) ** 2)


def fit_gaussian(samples, bins=None) -> GaussianFit:
    """Least-squares Gaussian on the histogram (Freedman-Diaconis bins by default)."""
    x = np.asarray(samples, float)
    x = x[np.isfinite(x)]
    if len(x) >= 100 and np.ptp(x) <= 1e-14 * max(1.0, abs(x[0])):
        return GaussianFit(float(x[0]), 0.0, float("nan"), True)
    x, counts, centers = _histogram(x, bins)
    p0 = (counts.max(), float(np.median(x)), float(np.std(x)))
    try:
        (a, m, s), _ = curve_fit(_gauss, centers, counts, p0=p0, maxfev=10000)
    except RuntimeError as exc:
        raise FitFailure(f"Gaussian histogram fit failed: {exc}") from exc
    return GaussianFit(float(m), float(abs(s)), _r2(counts, _gauss(centers, a, m, s)))


def _split(x, a, m, sl, sh):
    return a * np.exp(-0.5 * ((x - m) / np.where(x < m, sl, sh)) ** 2)


def fit_half_gaussians(samples, bins=None) -> HalfGaussianFit:
    """Split-normal fit: one amplitude and centre (the mode), separate left and right widths."""
    x, counts, centers = _histogram(samples, bins)
    sm = np.convolve(counts, np.ones(5) / 5, mode="same")
    mode = float(centers[int(np.argmax(sm))])
    left, right = x[x < mode], x[x >= mode]
    sl0 = float(np.sqrt(np.mean((left - mode) ** 2))) if len(left) > 1 else float(np.std(x))
    sh0 = float(np.sqrt(np.mean((right - mode) ** 2))) if len(right) > 1 else float(np.std(x))
    try:
        (a, m, sl, sh), _ = curve_fit(_split, centers, counts, p0=(sm.max(), mode, sl0, sh0), maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(f"half-Gaussian fit failed: {exc}") from exc
    return HalfGaussianFit(float(m), float(abs(sl)), float(abs(sh)), _r2(counts, _split(centers, a, m, sl, sh)))


def _quantile_summary(x) -> dict:
    lo, mid, hi = np.percentile(np.asarray(x, float), [15.865525393145708, 50.0, 84.13447460685429])
    return {"center": float(mid), "sigma_low": float(mid - lo), "sigma_high": float(hi - mid),
            "model": "quantile", "goodness": float("nan")}


def summarize(samples) -> dict:
    """Gaussian summary, or the split fit when the Gaussian is poor or lopsided.

    Distributions cut off by a physical boundary can defeat both fits; those fall
    back to the median and the central 68% interval.
    """
    try:
        g = fit_gaussian(samples)
    except FitFailure:
        g = None
    if g is not None and g.degenerate:
        return {"center": g.center, "sigma_low": 0.0, "sigma_high": 0.0, "model": "degenerate",
                "goodness": g.goodness}
    try:
        h = fit_half_gaussians(samples)
    except FitFailure:
        return _quantile_summary(samples) if g is None else {
            "center": g.center, "sigma_low": g.sigma, "sigma_high": g.sigma, "model": "gaussian",
            "goodness": g.goodness}
    asym = abs(h.sigma_high - h.sigma_low) / max(h.sigma_high + h.sigma_low, 1e-300)
    if g is None or g.goodness < GOODNESS_MIN or asym > ASYM_LIMIT:
        return {"center": h.center, "sigma_low": h.sigma_low, "sigma_high": h.sigma_high,
                "model": "half-gaussian", "goodness": h.goodness}
    return {"center": g.center, "sigma_low": g.sigma, "sigma_high": g.sigma, "model": "gaussian",
            "goodness": g.goodness}


# ---------------------------------------------------------------- Monte Carlo

def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("NRDISP_WORKERS", "1"))
    return max(1, workers)


def sample_extractions(ms: MeasurementSet, n_samples: int, seed: int = 0, workers: int | None = None):
    """Raw MC samples: dict of arrays and the per-sample status code (0 = physical).

    Sample i always comes from chunk i // MC_CHUNK of a Philox stream jumped by the
    chunk index, so results do not depend on the worker count.
    """
    mu = ms.values()
    sig = ms.sigma_vector()
    n_chunks = -(-n_samples // MC_CHUNK)

    def chunk(i):
        n = min(MC_CHUNK, n_samples - i * MC_CHUNK)
        rng = np.random.Generator(np.random.Philox(key=seed).jumped(i))
        vals = mu + sig * rng.standard_normal((n, len(OBSERVABLES)))
        return _solve(vals, ms.n0, ms.t_f, ms.omega_r)

    w = _workers(workers)
    if w == 1:
        parts = [chunk(i) for i in range(n_chunks)]
    else:
        with ThreadPoolExecutor(w) as ex:
            parts = list(ex.map(chunk, range(n_chunks)))
    keys = parts[0][0].keys()
    out = {k: np.concatenate([np.broadcast_to(p[0][k], p[1].shape) for p in parts]) for k in keys}
    return out, np.concatenate([p[1] for p in parts])


def monte_carlo(ms: MeasurementSet, n_samples: int = 100_000, seed: int = 0,
                workers: int | None = None) -> ExtractionResult:
    """Propagate independent Gaussian measurement noise through the inversion."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    samples, code = sample_extractions(ms, n_samples, seed, workers)
    ok = code == 0
    n_ok = int(ok.sum())
    if n_ok < 0.5 * n_samples:
        raise TooFewValidSamples(f"only {n_ok}/{n_samples} samples are physical")
    diag = {"n_samples": n_samples, "n_physical": n_ok,
            "failures": {_CODE_MSG[c]: int((code == c).sum()) for c in (1, 2, 3) if (code == c).any()},
            "physical": n_ok == n_samples, "summaries": {}}
    unc, dunc, centers = {}, {}, {}
    for k in PARAMS + DERIVED:
        s = summarize(samples[k][ok])
        diag["summaries"][k] = s
        centers[k] = s["center"]
        (unc if k in PARAMS else dunc)[k] = (s["sigma_low"], s["sigma_high"])
    try:
        point = extract(ms)
        params, derived = point.params, point.derived
    except NoPhysicalSolution as exc:
        diag["point_estimate_error"] = str(exc)
        params = None
        derived = {k: centers[k] for k in DERIVED}
    diag["mc_centers"] = centers
    return ExtractionResult(params, derived, unc, dunc, diag)


def linearized_uncertainty(ms: MeasurementSet, rel_step: float = 1e-6) -> dict:
    """First-order propagation through a central finite-difference Jacobian."""
    mu = ms.values()
    sig = ms.sigma_vector()
    keys = PARAMS + DERIVED
    J = np.zeros((len(keys), len(mu)))
    for j in range(len(mu)):
        h = rel_step * max(abs(mu[j]), 1e-3)
        up, dn = mu.copy(), mu.copy()
        up[j] += h
        dn[j] -= h
        fu, _ = _solve(up, ms.n0, ms.t_f, ms.omega_r)
        fd, _ = _solve(dn, ms.n0, ms.t_f, ms.omega_r)
        J[:, j] = [(float(fu[k]) - float(fd[k])) / (2 * h) for k in keys]
    s = np.sqrt((J ** 2) @ (sig ** 2))
    return dict(zip(keys, s))


def aggregate_repeats(results: list[ExtractionResult]) -> ExtractionResult:
    """Average repeated extractions.

    Each uncertainty is the larger of the mean intrinsic sigma and the standard
    error of the mean of the repeat centres.
    """
    if not results:
        raise ValueError("need at least one result")
    if len(results) == 1:
        return results[0]
    n = len(results)
    vals = {k: np.array([getattr(r.params, k) for r in results]) for k in PARAMS}
    dvals = {k: np.array([r.derived[k] for r in results]) for k in DERIVED}

    def combine(arr, sig_pairs):
        scatter = float(np.std(arr, ddof=1) / math.sqrt(n))
        if not sig_pairs:
            return scatter, scatter
        lo = float(np.mean([s[0] for s in sig_pairs]))
        hi = float(np.mean([s[1] for s in sig_pairs]))
        return max(lo, scatter), max(hi, scatter)

    unc = {k: combine(vals[k], [r.uncertainty[k] for r in results if r.uncertainty]) for k in PARAMS}
    dunc = {k: combine(dvals[k], [r.derived_uncertainty[k] for r in results if r.derived_uncertainty])
            for k in DERIVED}
    mean = {k: float(v.mean()) for k, v in vals.items()}
    params = EffectiveParams(**{**mean, "kappa": max(mean["kappa"], 0.0), "gamma_nr": max(mean["gamma_nr"], 0.0)})
    return ExtractionResult(params, {k: float(v.mean()) for k, v in dvals.items()}, unc, dunc,
                            {"n_repeats": n})


# ---------------------------------------------------------------- time offset

def fit_time_offset(theory: TrajectoryRecord, t, phi, zeta, max_shift: float = 0.1,
                    resolution: float = 5e-4) -> float:
    """Shift (us, in [0, max_shift]) that best aligns theory(t - s) with the data.

    Residuals on phi and ln zeta are each normalised by the data RMS. Theory
    before its first sample is taken as zero photon effect.
    """
    t = np.asarray(t, float)
    phi = np.asarray(phi, float)
    lz = np.log(np.asarray(zeta, float))
    if theory.log_ratio is None:
        raise ValueError("theory record needs log_ratio")
    tt = theory.times
    if t[-1] - max_shift < tt[0] or t[0] > tt[-1]:
        raise FitFailure("theory and data time ranges do not overlap")
    f_phi = CubicSpline(tt, theory.log_ratio.imag)
    f_lz = CubicSpline(tt, theory.log_ratio.real)
    w_phi = 1.0 / max(float(np.sqrt(np.mean(phi ** 2))), 1e-300)
    w_lz = 1.0 / max(float(np.sqrt(np.mean(lz ** 2))), 1e-300)

    def cost(s):
        ts = np.clip(t - s, tt[0], tt[-1])
        before = (t - s) < tt[0]
        mp = np.where(before, 0.0, f_phi(ts))
        ml = np.where(before, 0.0, f_lz(ts))
        return float(np.sum((w_phi * (mp - phi)) ** 2 + (w_lz * (ml - lz)) ** 2))

    grid = np.arange(0.0, max_shift + 0.5 * resolution, resolution)
    costs = np.array([cost(s) for s in grid])
    k = int(np.argmin(costs))
    if k == len(grid) - 1:
        raise FitFailure("best shift lies on the upper bound; no interior minimum")
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    return float(res.x) if res.fun <= costs[k] else float(grid[k])
