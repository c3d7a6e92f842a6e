"""Semiclassical dynamics: conditional cavity amplitudes and qubit coherence.

The coherence block rho_{up,down} stays a scaled outer product |a_up><a_down| of
coherent states, so the whole problem reduces to two linear scalar ODEs

    i da_s/dt = E_s a_s + eps(t)

plus d ln<sigma_-> / dt = C a_up conj(a_down).  For piecewise-constant drives
both are integrated in closed form.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicSpline

from .core import (EffectiveParams, QubitSector, coherence_coefficient, conditional_energy,
                   decay_constant)
from .errors import DegenerateDecay

UP, DOWN = QubitSector.UP, QubitSector.DOWN


@dataclass(frozen=True)
class DriveEnvelope:
    """Piecewise-constant cavity drive; each segment is (t_start, t_end, epsilon)."""

    segments: tuple = ()
    delta_d: float = 0.0

    def __post_init__(self):
        segs = tuple((float(a), float(b), complex(e)) for a, b, e in self.segments)
        last = -math.inf
        for a, b, _ in segs:
            if not b > a:
                raise ValueError(f"empty or reversed segment ({a}, {b})")
            if a < last:
                raise ValueError("segments must be ordered and non-overlapping")
            last = b
        object.__setattr__(self, "segments", segs)

    @classmethod
    def square_pulse(cls, width: float, epsilon: complex, t_start: float = 0.0,
                     delta_d: float = 0.0) -> "DriveEnvelope":
        return cls(((t_start, t_start + width, epsilon),), delta_d)

    @classmethod
    def off(cls) -> "DriveEnvelope":
        return cls()

    def pieces(self, t0: float, t1: float):
        """Yield (start, end, eps) covering [t0, t1] with eps constant on each piece."""
        edges = {t0, t1}
        for a, b, _ in self.segments:
            edges.update(x for x in (a, b) if t0 < x < t1)
        edges = sorted(edges)
        for a, b in zip(edges[:-1], edges[1:]):
            yield a, b, self.amplitude(0.5 * (a + b))

    def amplitude(self, t: float) -> complex:
        for a, b, e in self.segments:
            if a <= t < b:
                return e
        return 0j


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    a_up: np.ndarray
    a_down: np.ndarray
    sigma_minus: np.ndarray | None = None
    log_ratio: np.ndarray | None = None
    params: EffectiveParams | None = None
    drive: DriveEnvelope | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ("a_up", "a_down", "sigma_minus", "log_ratio"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} has length {len(arr)}, expected {n}")

    @property
    def phi(self) -> np.ndarray:
        return self.log_ratio.imag

    @property
    def ln_zeta(self) -> np.ndarray:
        return self.log_ratio.real

    def to_rows(self):
        header = ["t", "re_a_up", "im_a_up", "re_a_down", "im_a_down"]
        if self.sigma_minus is not None:
            header += ["re_sigma_minus", "im_sigma_minus"]
        rows = []
        for i, t in enumerate(self.times):
            row = [t, self.a_up[i].real, self.a_up[i].imag, self.a_down[i].real, self.a_down[i].imag]
            if self.sigma_minus is not None:
                row += [self.sigma_minus[i].real, self.sigma_minus[i].imag]
            rows.append(row)
        return header, rows

    def to_json(self) -> dict:
        header, rows = self.to_rows()
        return {"columns": header, "rows": rows, "meta": self.meta}


def _grid(grid) -> np.ndarray:
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def _phi1(z):
    """(exp(z) - 1) / z, accurate near z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def _propagate(E: complex, a0: complex, eps: complex, tau):
    """Exact solution of i da/dt = E a + eps after time tau."""
    tau = np.asarray(tau, dtype=float)
    return a0 * np.exp(-1j * E * tau) - 1j * eps * tau * _phi1(-1j * E * tau)


def evolve_amplitudes(p: EffectiveParams, drive: DriveEnvelope | None, a0_up: complex,
                      a0_down: complex, grid) -> TrajectoryRecord:
    """Propagate both conditional amplitudes exactly on a time grid.

    The amplitudes are taken as given at ``grid[0]``.
    """
    t = _grid(grid)
    drive = drive or DriveEnvelope.off()
    out = {}
    for s, a0 in ((UP, complex(a0_up)), (DOWN, complex(a0_down))):
        E = conditional_energy(p, s, drive.delta_d)
        a = np.empty(len(t), dtype=complex)
        a[0] = a0
        cur = a0
        for start, end, eps in drive.pieces(t[0], t[-1]):
            mask = (t > start) & (t <= end)
            a[mask] = _propagate(E, cur, eps, t[mask] - start)
            cur = complex(_propagate(E, cur, eps, end - start))
        out[s] = a
    return TrajectoryRecord(t, out[UP], out[DOWN], params=p, drive=drive,
                            meta={"a0_up": [float(np.real(a0_up)), float(np.imag(a0_up))],
                                  "a0_down": [float(np.real(a0_down)), float(np.imag(a0_down))],
                                  "solver": "piecewise-analytic"})


def _product_integral(Eu: complex, Ed: complex, au: complex, ad: complex, eps: complex, tau):
    """Integral over [0, tau] of a_up(s) conj(a_down(s)) for a constant drive."""
    tau = np.asarray(tau, dtype=float)
    # a_s(t) = c_s exp(-i E_s t) + d_s with d_s = -eps / E_s
    du, dd = (0j, 0j) if eps == 0 else (-eps / Eu, -eps / Ed)
    cu, cd = au - du, ad - dd
    f = lambda w: tau * _phi1(-1j * w * tau)      # integral of exp(-i w s)
    return (cu * np.conj(cd) * f(Eu - np.conj(Ed)) + cu * np.conj(dd) * f(Eu)
            + du * np.conj(cd) * f(-np.conj(Ed)) + du * np.conj(dd) * tau)


def _log_ratio_exact(p: EffectiveParams, traj: TrajectoryRecord) -> np.ndarray:
    t = traj.times
    drive = traj.drive
    Eu = conditional_energy(p, UP, drive.delta_d)
    Ed = conditional_energy(p, DOWN, drive.delta_d)
    integral = np.zeros(len(t), dtype=complex)
    acc = 0j
    au, ad = complex(traj.a_up[0]), complex(traj.a_down[0])
    for start, end, eps in drive.pieces(t[0], t[-1]):
        if eps != 0 and (Eu == 0 or Ed == 0):
            raise DegenerateDecay("undamped resonant drive")
        mask = (t > start) & (t <= end)
        integral[mask] = acc + _product_integral(Eu, Ed, au, ad, eps, t[mask] - start)
        acc += complex(_product_integral(Eu, Ed, au, ad, eps, end - start))
        au = complex(_propagate(Eu, au, eps, end - start))
        ad = complex(_propagate(Ed, ad, eps, end - start))
    return coherence_coefficient(p) * integral


def _log_ratio_quadrature(p: EffectiveParams, traj: TrajectoryRecord) -> np.ndarray:
    t = traj.times
    prod = traj.a_up * np.conj(traj.a_down)
    re = CubicSpline(t, prod.real).antiderivative()
    im = CubicSpline(t, prod.imag).antiderivative()
    integral = (re(t) - re(t[0])) + 1j * (im(t) - im(t[0]))
    return coherence_coefficient(p) * integral


def evolve_coherence(p: EffectiveParams, traj: TrajectoryRecord, sigma0: complex = 1.0) -> TrajectoryRecord:
    """Attach <sigma_-(t)> to an amplitude record.

    Records produced by :func:`evolve_amplitudes` are integrated in closed form;
    bare sampled amplitudes fall back to spline quadrature.
    """
    if traj.drive is not None and traj.params == p:
        try:
            log_ratio = _log_ratio_exact(p, traj)
            method = "piecewise-analytic"
        except DegenerateDecay:
            log_ratio = _log_ratio_adaptive(p, traj)
            method = "adaptive-quadrature"
    else:
        log_ratio = _log_ratio_quadrature(p, traj)
        method = "spline-quadrature"
    meta = dict(traj.meta, coherence=method, sigma0=[complex(sigma0).real, complex(sigma0).imag])
    return TrajectoryRecord(traj.times, traj.a_up, traj.a_down, sigma0 * np.exp(log_ratio),
                            log_ratio, p, traj.drive, meta)


def _log_ratio_adaptive(p: EffectiveParams, traj: TrajectoryRecord) -> np.ndarray:
    drive = traj.drive
    t = traj.times
    Eu = conditional_energy(p, UP, drive.delta_d)
    Ed = conditional_energy(p, DOWN, drive.delta_d)
    integral = np.zeros(len(t), dtype=complex)
    acc = 0j
    au, ad = complex(traj.a_up[0]), complex(traj.a_down[0])
    for start, end, eps in drive.pieces(t[0], t[-1]):
        def prod(s, au=au, ad=ad, eps=eps):
            return _propagate(Eu, au, eps, s) * np.conj(_propagate(Ed, ad, eps, s))
        mask = np.nonzero((t > start) & (t <= end))[0]
        for i in mask:
            integral[i] = acc + quad_vec(prod, 0.0, t[i] - start, epsabs=1e-14, epsrel=1e-12)[0]
        acc += quad_vec(prod, 0.0, end - start, epsabs=1e-14, epsrel=1e-12)[0]
        au = complex(_propagate(Eu, au, eps, end - start))
        ad = complex(_propagate(Ed, ad, eps, end - start))
    return coherence_coefficient(p) * integral


def free_decay_closed_form(p: EffectiveParams, n0: float, t_f) -> complex:
    """ln(<sigma_-(t_f)> / <sigma_-(0)>) for equal initial amplitudes sqrt(n0).

    Imaginary part is the phase shift phi, real part is ln(zeta).
    """
    if n0 < 0:
        raise ValueError("n0 must be non-negative")
    D = decay_constant(p)
    t_f = np.asarray(t_f, dtype=float)
    if D == 0:
        raise DegenerateDecay("i lambda + kappa + Gamma cosh(eta) = 0")
    val = n0 * coherence_coefficient(p) * t_f * _phi1(-D * t_f)
    return complex(val) if val.ndim == 0 else val


def long_time_ratio(p: EffectiveParams, n0: float) -> complex:
    """t_f -> infinity limit of :func:`free_decay_closed_form`."""
    if p.total_decay <= 0:
        raise DegenerateDecay("kappa + Gamma cosh(eta) must be positive")
    return n0 * coherence_coefficient(p) / decay_constant(p)


def cw_steady_state(p: EffectiveParams, epsilon: complex, delta_d: float) -> tuple[float, float]:
    """Qubit Stark shift and dephasing rate under a constant cavity drive.

    Returns ``(stark_shift, dephasing_rate)`` with i*stark - dephasing equal to
    C |eps|^2 / (E_up conj(E_down)).
    """
    Eu = conditional_energy(p, UP, delta_d)
    Ed = conditional_energy(p, DOWN, delta_d)
    if Eu == 0 or Ed == 0:
        raise DegenerateDecay("conditional energy vanishes at this detuning")
    z = coherence_coefficient(p) * abs(epsilon) ** 2 / (Eu * np.conj(Ed))
    return float(z.imag), float(-z.real)


def fock_steady_ratio(p: EffectiveParams) -> complex:
    """<sigma_-(inf)> / <sigma_-(0)> with the cavity starting in |1>."""
    if p.total_decay <= 0:
        raise DegenerateDecay("kappa + Gamma cosh(eta) must be positive")
    return (p.kappa + p.gamma_nr * complex(math.cos(p.theta), math.sin(p.theta))) / decay_constant(p)


def ramsey_trace(p: EffectiveParams, n0: float, grid, pulse: DriveEnvelope | None = None) -> TrajectoryRecord:
    """Coherence trace for a coherent initial cavity state.

    Without ``pulse`` both amplitudes start at sqrt(n0) (short-pulse limit).  With
    ``pulse`` the cavity starts in vacuum at ``grid[0]`` and is displaced by the
    given drive, so a_up(0) and a_down(0) differ.
    """
    if pulse is None:
        a = math.sqrt(n0)
        traj = evolve_amplitudes(p, None, a, a, grid)
    else:
        traj = evolve_amplitudes(p, pulse, 0.0, 0.0, grid)
    return evolve_coherence(p, traj)


def write_csv(path, header: Sequence[str], rows) -> None:
    """CSV with 17 significant digits and LF line endings (bit-stable)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def export_trajectory(traj: TrajectoryRecord, csv_path=None, json_path=None) -> None:
    header, rows = traj.to_rows()
    if csv_path is not None:
        write_csv(csv_path, header, rows)
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(traj.to_json(), fh, indent=2)
