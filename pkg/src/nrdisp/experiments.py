"""Synthetic versions of the measurement protocols.

Each protocol returns the observable an experiment would report.  Readout is
abstracted: cavity Ramsey fits Re a(t) directly, the cavity T1 uses the
ancilla phase phi_a = chi_a * integral |a|^2 over a sliding window.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import hilbert

from .core import EffectiveParams, QubitSector, conditional_energy, mhz
from .dynamics import cw_steady_state, fock_steady_ratio, free_decay_closed_form, long_time_ratio
from .errors import ConfigError, DegenerateDecay, FitFailure, RatioUndefined
from .oracle import (FwmSpec, HilbertSpec, coherent_block, driven_coherence_rate, evolve_coherence_block,
                     evolve_fwm)

OBSERVABLES = ("omega_g", "omega_e", "kappa_g", "kappa_e", "phi", "zeta")


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol timings and options.  Times in us, rates in rad/us.

    ``noise`` maps observable names (see ``OBSERVABLES``) to Gaussian sigmas applied
    to the reported values; ``signal_noise`` is added pointwise to fitted traces.
    """

    n0: float = 3.0
    t_window: float = 0.200
    t_f: float = 0.700
    tau_slide: float = 0.100
    chi_a: float = mhz(1.1)
    noise: dict = field(default_factory=dict)
    signal_noise: float = 0.0
    rng_seed: int = 0
    backend: str = "semiclassical"
    omega_r: float = 0.0
    t_dead: float = 0.060
    ramsey_detuning: float = mhz(10.0)
    t_trace: float = 1.0
    n_points: int = 201
    intrinsic_dephasing: float = 0.0
    n_max: int = 30

    def __post_init__(self):
        for name in ("t_window", "t_f", "tau_slide", "t_trace"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n0 < 0:
            raise ConfigError("n0 must be non-negative")
        if self.t_dead < 0 or self.intrinsic_dephasing < 0 or self.signal_noise < 0:
            raise ConfigError("t_dead, intrinsic_dephasing and signal_noise must be non-negative")
        for k, s in self.noise.items():
            if k not in OBSERVABLES:
                raise ConfigError(f"unknown noise key {k!r}")
            if s < 0:
                raise ConfigError(f"noise sigma for {k} must be non-negative")
        if self.backend not in ("semiclassical", "oracle"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.n_points < 8:
            raise ConfigError("n_points must be at least 8")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.rng_seed).jumped(stream))

    def replace(self, **kw) -> "ProtocolConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MeasurementSet:
    omega_g: float
    omega_e: float
    kappa_g: float
    kappa_e: float
    phi: float
    zeta: float
    n0: float
    t_f: float
    sigmas: dict = field(default_factory=dict)
    omega_r: float = 0.0

    def __post_init__(self):
        if not 0 < self.zeta <= 1:
            raise ConfigError(f"zeta must lie in (0, 1], got {self.zeta}")
        if not (self.kappa_g > 0 and self.kappa_e > 0):
            raise ConfigError("kappa_g and kappa_e must be positive")
        if self.n0 <= 0 or self.t_f <= 0:
            raise ConfigError("n0 and t_f must be positive")
        for k, s in self.sigmas.items():
            if k not in OBSERVABLES or s < 0:
                raise ConfigError(f"bad sigma entry {k!r}: {s}")

    def values(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in OBSERVABLES])

    def sigma_vector(self) -> np.ndarray:
        return np.array([float(self.sigmas.get(k, 0.0)) for k in OBSERVABLES])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        try:
            kw = {k: float(d[k]) for k in OBSERVABLES + ("n0", "t_f")}
        except KeyError as exc:
            raise ConfigError(f"missing measurement field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad measurement value: {exc}") from exc
        sig = {k: float(v) for k, v in (d.get("sigmas") or {}).items()}
        return cls(**kw, sigmas=sig, omega_r=float(d.get("omega_r", 0.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------- qubit Ramsey

@dataclass
class RamseyResult:
    times: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray
    backend: str

    @property
    def log_ratio(self) -> np.ndarray:
        return np.log(self.zeta) + 1j * self.phi

    def to_rows(self):
        return ["t", "phi", "zeta"], [[t, f, z] for t, f, z in zip(self.times, self.phi, self.zeta)]


def _coherence_with_photons(p: EffectiveParams, cfg: ProtocolConfig, grid: np.ndarray, n0: float) -> np.ndarray:
    if n0 == 0:
        return np.full(len(grid), 0.5 + 0j)
    if cfg.backend == "semiclassical":
        return 0.5 * np.exp(free_decay_closed_form(p, n0, grid))
    spec = HilbertSpec(n_max=cfg.n_max)
    X0 = coherent_block(math.sqrt(n0), math.sqrt(n0), spec.n_levels, 0.5)
    t = grid if grid[0] == 0 else np.concatenate([[0.0], grid])
    sig = evolve_coherence_block(p, spec, X0, t).sigma_minus
    return sig if grid[0] == 0 else sig[1:]


def qubit_ramsey(p: EffectiveParams, cfg: ProtocolConfig, grid=None) -> RamseyResult:
    """Differential qubit Ramsey: photon-induced phi(t), zeta(t).

    Both arms carry the same intrinsic dephasing exp(-gamma_2 t); the ratio of
    the photon arm to the photon-free reference cancels it.
    """
    grid = np.linspace(0.0, cfg.t_f, cfg.n_points) if grid is None else np.asarray(grid, float)
    intrinsic = np.exp(-cfg.intrinsic_dephasing * grid)
    with_photons = _coherence_with_photons(p, cfg, grid, cfg.n0) * intrinsic
    reference = 0.5 * intrinsic
    r = with_photons / reference
    return RamseyResult(grid, np.unwrap(np.angle(r)), np.abs(r), cfg.backend)


def dispersive_shift_estimates(phi: float, zeta: float, t: float, n_avg: float) -> tuple[float, float]:
    """(chi_cq, gamma) = (phi, -ln zeta) / (t * n_avg)."""
    if t * n_avg == 0:
        raise DegenerateDecay("t * n_avg must be non-zero")
    return phi / (t * n_avg), -math.log(zeta) / (t * n_avg)


def ramsey_angle_sweep(sigma_minus: complex, angles, noise: float = 0.0,
                       rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Demonstration of reading sigma_- through the second-pulse phase sweep.

    P_up(a) = 1/2 + Re(sigma_- e^{-ia}); a linear sinusoid fit recovers
    |2 sigma_-| and arg sigma_-, returned as (amplitude, phase).
    """
    a = np.asarray(angles, float)
    if len(a) < 3:
        raise ConfigError("need at least three rotation angles")
    pop = 0.5 + (sigma_minus * np.exp(-1j * a)).real
    if noise > 0:
        pop = _add_noise(pop, noise, rng if rng is not None else np.random.default_rng(0))
    design = np.column_stack([np.cos(a), np.sin(a), np.ones_like(a)])
    (c, s, _), *_ = np.linalg.lstsq(design, pop, rcond=None)
    return float(2 * math.hypot(c, s)), float(math.atan2(s, c))


# ---------------------------------------------------------------- cavity protocols

@dataclass
class CavityFit:
    value: float
    stderr: float
    params: np.ndarray
    cov: np.ndarray
    rms_residual: float
    times: np.ndarray = None
    signal: np.ndarray = None


def _trace_grid(cfg: ProtocolConfig) -> np.ndarray:
    return np.linspace(cfg.t_dead, cfg.t_dead + cfg.t_trace, cfg.n_points)


def _fit(residual, x0, n_data: int, scale) -> tuple[np.ndarray, np.ndarray, float]:
    sol = least_squares(residual, x0, x_scale=scale, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=20000)
    if not sol.success:
        raise FitFailure(sol.message)
    dof = max(n_data - len(x0), 1)
    s2 = float(sol.fun @ sol.fun) / dof
    J = sol.jac
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError as exc:
        raise FitFailure("singular fit Jacobian") from exc
    return sol.x, cov, math.sqrt(s2)


def _add_noise(signal: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return signal + sigma * rng.standard_normal(signal.shape) if sigma > 0 else signal


def fit_damped_sine(t: np.ndarray, y: np.ndarray, noise_floor: float = 0.0,
                    max_rel_residual: float = 0.05) -> CavityFit:
    """Fit A exp(-g t) sin(w t + p0) + C; the starting point comes from the data only."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    dt = t[1] - t[0]
    yc = y - y.mean()
    nfft = 16 * len(t)
    spec = np.abs(np.fft.rfft(yc, nfft))
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, dt)
    k = int(np.argmax(spec[1:])) + 1
    w0 = freqs[k]
    if w0 * (t[-1] - t[0]) < 2 * np.pi:
        raise FitFailure("oscillation not resolved within the trace")
    env = np.abs(hilbert(yc))
    core = slice(len(t) // 10, len(t) - len(t) // 10)
    g0 = max(-np.polyfit(t[core], np.log(np.maximum(env[core], 1e-300)), 1)[0], 0.0)
    a0 = env[core].max() * math.exp(g0 * t[core][0])
    p_guess = math.atan2(yc[0], 0.0)
    model = lambda x: x[0] * np.exp(-x[1] * t) * np.sin(x[2] * t + x[3]) + x[4]
    x0 = np.array([a0, g0, w0, p_guess, y.mean()])
    best = None
    for ph in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
        x0[3] = ph
        try:
            x, cov, rms = _fit(lambda x: model(x) - y, x0.copy(), len(t), np.array([a0, 1.0, w0, 1.0, a0]))
        except FitFailure:
            continue
        if best is None or rms < best[2]:
            best = (x, cov, rms)
    if best is None:
        raise FitFailure("damped-sine fit did not converge")
    x, cov, rms = best
    x = x.copy()
    if x[2] < 0:  # sin(-wt + p) = sin(wt + pi - p)
        x[2], x[3] = -x[2], np.pi - x[3]
    if x[0] < 0:
        x[0], x[3] = -x[0], x[3] + np.pi
    x[3] = np.mod(x[3], 2 * np.pi)
    if rms > max_rel_residual * abs(x[0]) + 3 * noise_floor:
        raise FitFailure(f"residual {rms:.3g} too large for amplitude {abs(x[0]):.3g}")
    return CavityFit(float(x[2]), float(math.sqrt(max(cov[2, 2], 0.0))), x, cov, rms, t, y)


def cavity_ramsey(p: EffectiveParams, sector: QubitSector, cfg: ProtocolConfig,
                  rng: np.random.Generator | None = None) -> CavityFit:
    """Fitted cavity frequency with the qubit in ``sector``.

    The proxy signal Re a(t) is recorded in a frame offset by ``cfg.ramsey_detuning``
    so the oscillation is resolvable and its sign is kept; the offset is removed
    from the fitted frequency, whose decay constant is half the linewidth.
    """
    t = _trace_grid(cfg)
    E = conditional_energy(p, sector) + cfg.ramsey_detuning
    sig = (math.sqrt(max(cfg.n0, 0.0)) * np.exp(-1j * E * t)).real
    if cfg.signal_noise > 0:
        sig = _add_noise(sig, cfg.signal_noise, rng if rng is not None else cfg.rng(10 + (sector.value > 0)))
    fit = fit_damped_sine(t, sig, cfg.signal_noise)
    fit.value = fit.value - cfg.ramsey_detuning
    return fit


def sliding_window_phase(p: EffectiveParams, sector: QubitSector, cfg: ProtocolConfig, t: np.ndarray,
                         tau: float | None = None) -> np.ndarray:
    """Ancilla phase chi_a * int_t^{t+tau} |a(t')|^2 dt' after a short displacement to n0."""
    tau = cfg.tau_slide if tau is None else tau
    k = -2.0 * conditional_energy(p, sector).imag
    return cfg.chi_a * cfg.n0 * np.exp(-k * t) * tau * _expm1_ratio(-k * tau)


def _expm1_ratio(x):
    """(1 - exp(x)) / (-x) = (exp(x) - 1) / x, with the x -> 0 limit 1."""
    x = float(x)
    return 1.0 if x == 0 else math.expm1(x) / x


def fit_exponential(t: np.ndarray, y: np.ndarray) -> CavityFit:
    """Fit A exp(-k t); starting point from a log-linear fit."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    pos = y > 0
    if pos.sum() < 3:
        raise FitFailure("not enough positive samples for an exponential fit")
    slope, icpt = np.polyfit(t[pos], np.log(y[pos]), 1)
    k0 = max(-slope, 1e-6)
    a0 = math.exp(icpt)
    x, cov, rms = _fit(lambda x: x[0] * np.exp(-x[1] * t) - y, np.array([a0, k0]), len(t),
                       np.array([a0, k0]))
    if not x[1] > 0:
        raise FitFailure("fitted decay rate is not positive")
    return CavityFit(float(x[1]), float(math.sqrt(max(cov[1, 1], 0.0))), x, cov, rms, t, y)


def cavity_t1(p: EffectiveParams, sector: QubitSector, cfg: ProtocolConfig,
              rng: np.random.Generator | None = None, tau: float | None = None) -> CavityFit:
    """Cavity energy decay rate from the sliding-window ancilla phase."""
    tau = cfg.tau_slide if tau is None else tau
    t = _trace_grid(cfg)
    n_avg = sliding_window_phase(p, sector, cfg, t, tau) / (tau * cfg.chi_a)
    if cfg.signal_noise > 0:
        n_avg = _add_noise(n_avg, cfg.signal_noise, rng if rng is not None else cfg.rng(20 + (sector.value > 0)))
    return fit_exponential(t, n_avg)


def photon_calibration(p: EffectiveParams, cfg: ProtocolConfig, kappa_g: float | None = None) -> tuple[float, float]:
    """(n_avg over t_window, n0 estimate) from the ancilla phase with the qubit in |g>.

    ``kappa_g`` defaults to the exact rate; pass a fitted one to mimic the experiment.
    """
    t = cfg.t_window
    phi_a = cfg.chi_a * t * cfg.n0 * _decay_average(-2.0 * conditional_energy(p, QubitSector.UP).imag * t)
    n_avg = phi_a / (cfg.chi_a * t)
    k = -2.0 * conditional_energy(p, QubitSector.UP).imag if kappa_g is None else kappa_g
    return n_avg, n0_from_average(n_avg, k, t)


def _decay_average(x: float) -> float:
    """(1 - exp(-x)) / x, equal to 1 at x = 0."""
    return 1.0 if x == 0 else -math.expm1(-x) / x


def n0_from_average(n_avg: float, kappa_g: float, t: float) -> float:
    """n0 = n_avg * kappa_g t / (1 - exp(-kappa_g t))."""
    return n_avg / _decay_average(kappa_g * t)


# ---------------------------------------------------------------- CW and FWM

@dataclass
class CwSweep:
    delta_d: np.ndarray
    stark: np.ndarray
    dephasing: np.ndarray
    oracle_stark: np.ndarray | None = None
    oracle_dephasing: np.ndarray | None = None
    errors: dict = field(default_factory=dict)

    def peak_detunings(self, which: str = "formula") -> tuple[float, float]:
        """Detunings maximising |stark| and dephasing."""
        s, g = (self.stark, self.dephasing) if which == "formula" else (self.oracle_stark, self.oracle_dephasing)
        return float(self.delta_d[np.nanargmax(np.abs(s))]), float(self.delta_d[np.nanargmax(g)])

    def to_rows(self):
        header = ["delta_d", "stark", "dephasing"]
        cols = [self.delta_d, self.stark, self.dephasing]
        if self.oracle_stark is not None:
            header += ["oracle_stark", "oracle_dephasing"]
            cols += [self.oracle_stark, self.oracle_dephasing]
        return header, [list(r) for r in zip(*cols)]


def cw_sweep(p: EffectiveParams, epsilon: complex, delta_d_list, backend: str = "semiclassical",
             cross_check: bool = False, spec: HilbertSpec = HilbertSpec(n_max=15)) -> CwSweep:
    """Stark shift and dephasing vs drive detuning; failed points become NaN with the error recorded."""
    dd = np.asarray(list(delta_d_list), float)
    if dd.size == 0:
        raise ConfigError("empty detuning list")
    if backend not in ("semiclassical", "oracle"):
        raise ConfigError(f"unknown backend {backend!r}")
    n = len(dd)
    st, de = np.full(n, np.nan), np.full(n, np.nan)
    ost, ode = (np.full(n, np.nan), np.full(n, np.nan)) if (cross_check or backend == "oracle") else (None, None)
    errors = {}
    for i, d in enumerate(dd):
        try:
            st[i], de[i] = cw_steady_state(p, epsilon, d)
        except DegenerateDecay as exc:
            errors[i] = str(exc)
        if ost is not None:
            z = driven_coherence_rate(p, epsilon, d, spec)
            ost[i], ode[i] = z.imag, -z.real
    if backend == "oracle" and not cross_check:
        return CwSweep(dd, ost, ode, errors=errors)
    return CwSweep(dd, st, de, ost, ode, errors)


@dataclass
class FwmResult:
    ratio: float
    phi: float
    ln_zeta: float
    coherent_ratio: float
    fock_ratio: float


def ln_ratio(z: complex) -> float:
    """ln(zeta)/phi of a coherence ratio z."""
    return math.log(abs(z)) / math.atan2(z.imag, z.real)


def fwm_experiment(p: EffectiveParams, fwm: FwmSpec, n_max: int = 2, phi_threshold: float = 1e-6) -> FwmResult:
    """ln(zeta)/phi from the FWM single-photon source, with the Fock and coherent references."""
    phi, lz, _ = evolve_fwm(p, fwm, n_max)
    if abs(phi) < phi_threshold:
        raise RatioUndefined(f"|phi| = {abs(phi):.3g} below {phi_threshold:.3g}")
    lt = long_time_ratio(p, 1.0)
    return FwmResult(lz / phi, phi, lz, lt.real / lt.imag, ln_ratio(fock_steady_ratio(p)))


# ---------------------------------------------------------------- full measurement set

def measure(p: EffectiveParams, cfg: ProtocolConfig) -> MeasurementSet:
    """Run all four cavity fits and the qubit Ramsey at t_f; add per-observable noise."""
    rng = cfg.rng(0)
    rg = cavity_ramsey(p, QubitSector.UP, cfg, cfg.rng(1))
    re = cavity_ramsey(p, QubitSector.DOWN, cfg, cfg.rng(2))
    kg = cavity_t1(p, QubitSector.UP, cfg, cfg.rng(3))
    ke = cavity_t1(p, QubitSector.DOWN, cfg, cfg.rng(4))
    ram = qubit_ramsey(p, cfg)  # full grid so the phase unwraps correctly
    vals = {"omega_g": cfg.omega_r + rg.value, "omega_e": cfg.omega_r + re.value,
            "kappa_g": kg.value, "kappa_e": ke.value, "phi": float(ram.phi[-1]), "zeta": float(ram.zeta[-1])}
    for k in OBSERVABLES:
        s = cfg.noise.get(k, 0.0)
        if s > 0:
            vals[k] += s * rng.standard_normal()
    vals["zeta"] = min(max(vals["zeta"], 1e-300), 1.0)
    return MeasurementSet(**vals, n0=cfg.n0, t_f=cfg.t_f, sigmas=dict(cfg.noise), omega_r=cfg.omega_r)
