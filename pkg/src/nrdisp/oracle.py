"""Truncated-Fock Lindblad reference solver.

Everything here is brute force on purpose: it is the independent check for the
closed forms in :mod:`nrdisp.dynamics`.  Operators are row-major vectorised, so
vec(A X B) = kron(A, B.T) vec(X).

Qubit basis ordering is (up, down) = (|g>, |e>); the full Hilbert space is
qubit (x) cavity with the qubit index major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import eig, expm
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from .core import EffectiveParams
from .errors import IntegratorFailure, TruncationLeak

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
# Liouville dimension above which the generator is kept sparse
DENSE_LIMIT = 400
# largest generator for which dense propagators are cached on uniform grids
DENSE_EXPM_LIMIT = 400


@dataclass(frozen=True)
class HilbertSpec:
    n_max: int = 30
    qubit_dim: int = 2
    leak_threshold: float = 1e-8

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.qubit_dim not in (2, 3):
            raise ValueError("qubit_dim must be 2 or 3")

    @property
    def n_levels(self) -> int:
        return self.n_max + 1


@dataclass(frozen=True)
class FwmSpec:
    """Four-wave-mixing single-photon source on the ancilla (levels g, e, f).

    ``omega_rabi`` multiplies (a^dag |g><f| + h.c.) in the Hamiltonian.
    """

    omega_rabi: float
    gamma_f: float = 0.0
    gamma_e: float = 0.0
    f_prep_fidelity: float = 1.0

    def __post_init__(self):
        if min(self.omega_rabi, self.gamma_f, self.gamma_e) < 0:
            raise ValueError("FWM rates must be non-negative")
        if not 0.0 <= self.f_prep_fidelity <= 1.0:
            raise ValueError("f_prep_fidelity must lie in [0, 1]")


# ---------------------------------------------------------------- operators

def destroy(n_levels: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_levels, dtype=float)), 1, format="csr", dtype=complex)


def number(n_levels: int) -> sp.csr_matrix:
    return sp.diags(np.arange(n_levels, dtype=float), 0, format="csr", dtype=complex)


def identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=complex, format="csr")


def coherent_state(alpha: complex, n_levels: int) -> np.ndarray:
    """Truncated coherent state, renormalised."""
    n = np.arange(n_levels)
    if alpha == 0:
        psi = np.zeros(n_levels, dtype=complex)
        psi[0] = 1.0
        return psi
    logmag = n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1) - 0.5 * abs(alpha) ** 2
    psi = np.exp(logmag) * np.exp(1j * n * np.angle(alpha))
    return psi / np.linalg.norm(psi)


def fock_state(k: int, n_levels: int) -> np.ndarray:
    psi = np.zeros(n_levels, dtype=complex)
    psi[k] = 1.0
    return psi


def block_superoperator(h_left, h_right, jumps) -> sp.csr_matrix:
    """Generator of dX/dt = -i(H_L X - X H_R) + sum J_L X J_R^dag - (J_L^dag J_L X + X J_R^dag J_R)/2.

    With H_L = H_R and J_L = J_R this is an ordinary Lindbladian; different left
    and right operators give the evolution of an off-diagonal qubit block.
    """
    h_left = sp.csr_matrix(h_left)
    h_right = sp.csr_matrix(h_right)
    n = h_left.shape[0]
    eye = identity(n)
    L = -1j * (sp.kron(h_left, eye) - sp.kron(eye, h_right.T))
    for jl, jr in jumps:
        jl = sp.csr_matrix(jl)
        jr = sp.csr_matrix(jr)
        L = L + sp.kron(jl, jr.conj())
        L = L - 0.5 * sp.kron(jl.conj().T @ jl, eye) - 0.5 * sp.kron(eye, (jr.conj().T @ jr).T)
    return sp.csr_matrix(L)


def _qubit_factor(p: EffectiveParams, sz: int) -> complex:
    return complex(math.exp(0.5 * p.eta * sz) * math.cos(0.5 * p.theta * sz),
                   math.exp(0.5 * p.eta * sz) * math.sin(0.5 * p.theta * sz))


def _cavity_hamiltonian(p: EffectiveParams, n_levels: int, sz: int, drive) -> sp.csr_matrix:
    a = destroy(n_levels)
    eps, delta_d = drive if drive is not None else (0.0, 0.0)
    h = (p.delta_c - delta_d + 0.5 * p.lam * sz) * number(n_levels)
    if eps != 0:
        h = h + eps * a.conj().T + np.conj(eps) * a
    return sp.csr_matrix(h)


@dataclass
class Liouvillian:
    matrix: sp.csr_matrix
    hilbert_dim: int
    spec: HilbertSpec
    kind: str = "full"

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.matrix @ rho.reshape(-1)).reshape(rho.shape)


def build_liouvillian(p: EffectiveParams, spec: HilbertSpec = HilbertSpec(), drive=None) -> Liouvillian:
    """Full qubit (x) cavity Lindbladian of the effective model.

    ``drive`` is an optional constant ``(epsilon, delta_d)``; the generator is then
    written in the frame rotating with the drive.
    """
    if spec.qubit_dim != 2:
        raise ValueError("the full Lindbladian is defined for a two-level qubit")
    nl = spec.n_levels
    a = destroy(nl)
    eps, delta_d = drive if drive is not None else (0.0, 0.0)
    sz = sp.diags([1.0, -1.0], 0, format="csr", dtype=complex)
    eye_q = identity(2)
    h = sp.kron(eye_q, (p.delta_c - delta_d) * number(nl)) + 0.5 * p.lam * sp.kron(sz, number(nl))
    if eps != 0:
        h = h + sp.kron(eye_q, eps * a.conj().T + np.conj(eps) * a)
    jumps = []
    if p.kappa > 0:
        j = math.sqrt(p.kappa) * sp.kron(eye_q, a)
        jumps.append((j, j))
    if p.gamma_nr > 0:
        q = sp.diags([_qubit_factor(p, 1), _qubit_factor(p, -1)], 0, format="csr")
        j = math.sqrt(p.gamma_nr) * sp.kron(q, a)
        jumps.append((j, j))
    return Liouvillian(block_superoperator(h, h, jumps), 2 * nl, spec, "full")


def block_liouvillian(p: EffectiveParams, spec: HilbertSpec = HilbertSpec(), drive=None) -> Liouvillian:
    """Generator of the (up, down) coherence block alone, an operator on the cavity."""
    nl = spec.n_levels
    a = destroy(nl)
    h_up = _cavity_hamiltonian(p, nl, 1, drive)
    h_dn = _cavity_hamiltonian(p, nl, -1, drive)
    jumps = []
    if p.kappa > 0:
        j = math.sqrt(p.kappa) * a
        jumps.append((j, j))
    if p.gamma_nr > 0:
        g = math.sqrt(p.gamma_nr)
        jumps.append((g * _qubit_factor(p, 1) * a, g * _qubit_factor(p, -1) * a))
    return Liouvillian(block_superoperator(h_up, h_dn, jumps), nl, spec, "block")


# ---------------------------------------------------------------- integration

def integrate_linear(matrix, y0: np.ndarray, grid, method: str = "rk", rtol: float = DEFAULT_RTOL,
                     atol: float = DEFAULT_ATOL) -> np.ndarray:
    """Solve dy/dt = M y on ``grid``; returns an array of shape (len(grid), len(y0)).

    ``method='rk'`` uses the adaptive DOP853 embedded Runge-Kutta pair;
    ``method='expm'`` propagates exactly with Krylov exponentials between grid points.
    """
    t = np.asarray(grid, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    y0 = np.asarray(y0, dtype=complex).reshape(-1)
    M = matrix
    if sp.issparse(M) and M.shape[0] <= DENSE_LIMIT:
        M = M.toarray()
    if method == "expm":
        out = np.empty((len(t), len(y0)), dtype=complex)
        out[0] = y0
        if len(y0) <= DENSE_EXPM_LIMIT:
            Md = M.toarray() if sp.issparse(M) else np.asarray(M)
            cache = {}
            for i in range(1, len(t)):
                dt = t[i] - t[i - 1]
                key = round(dt, 12)
                if key not in cache:
                    cache[key] = expm(dt * Md)
                out[i] = cache[key] @ out[i - 1]
            return out
        Ms = sp.csr_matrix(M)
        for i in range(1, len(t)):
            out[i] = expm_multiply((t[i] - t[i - 1]) * Ms, out[i - 1])
        return out
    if method != "rk":
        raise ValueError(f"unknown method {method!r}")
    # step exactly to every grid point: the dense-output interpolant of DOP853 is
    # less accurate than its steps and visibly breaks positivity of rho
    out = np.empty((len(t), len(y0)), dtype=complex)
    out[0] = y0
    rhs = lambda _t, y: M @ y
    for i in range(1, len(t)):
        sol = solve_ivp(rhs, (t[i - 1], t[i]), out[i - 1], method="DOP853", rtol=rtol, atol=atol)
        if sol.status != 0:
            raise IntegratorFailure(sol.message)
        out[i] = sol.y[:, -1]
    return out


@dataclass
class DensityEvolution:
    times: np.ndarray
    sigma_minus: np.ndarray
    sigma_z: np.ndarray
    n_photon: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray
    top_population: np.ndarray
    rhos: np.ndarray | None = None

    def to_rows(self):
        header = ["t", "re_sigma_minus", "im_sigma_minus", "sigma_z", "n_photon", "trace", "min_eig"]
        rows = [[t, s.real, s.imag, z, n, tr, me] for t, s, z, n, tr, me in
                zip(self.times, self.sigma_minus, self.sigma_z, self.n_photon, self.trace,
                    self.min_eigenvalue)]
        return header, rows


def _check_leak(top: np.ndarray, threshold: float) -> None:
    worst = float(np.max(np.abs(top)))
    if worst > threshold:
        raise TruncationLeak(f"top Fock level population {worst:.3g} exceeds {threshold:.3g}")


def evolve_density(liouvillian: Liouvillian, rho0: np.ndarray, grid, method: str = "rk",
                   rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                   keep_states: bool = False) -> DensityEvolution:
    """Integrate the full density matrix and sample the standard observables."""
    if liouvillian.kind != "full":
        raise ValueError("evolve_density needs a full Liouvillian")
    d = liouvillian.hilbert_dim
    nl = liouvillian.spec.n_levels
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ValueError(f"rho0 must be {d}x{d}")
    if not np.allclose(rho0, rho0.conj().T, atol=1e-12):
        raise ValueError("rho0 must be Hermitian")
    if abs(np.trace(rho0) - 1) > 1e-10:
        raise ValueError("rho0 must have unit trace")
    if np.linalg.eigvalsh(rho0).min() < -1e-10:
        raise ValueError("rho0 must be positive semidefinite")
    ys = integrate_linear(liouvillian.matrix, rho0, grid, method, rtol, atol)
    rhos = ys.reshape(-1, d, d)
    up = slice(0, nl)
    dn = slice(nl, 2 * nl)
    diag = np.real(np.einsum("kii->ki", rhos))
    ns = np.tile(np.arange(nl), 2)
    sigma_minus = np.einsum("kii->k", rhos[:, up, dn])
    sigma_z = diag[:, :nl].sum(1) - diag[:, nl:].sum(1)
    n_photon = diag @ ns
    trace = diag.sum(1)
    herm = 0.5 * (rhos + rhos.conj().transpose(0, 2, 1))
    min_eig = np.array([np.linalg.eigvalsh(r)[0] for r in herm])
    top = diag[:, nl - 1] + diag[:, 2 * nl - 1]
    _check_leak(top, liouvillian.spec.leak_threshold)
    return DensityEvolution(np.asarray(grid, float), sigma_minus, sigma_z, n_photon, trace, min_eig,
                            top, rhos if keep_states else None)


def product_state(qubit: np.ndarray, cavity: np.ndarray) -> np.ndarray:
    """Density matrix of qubit (x) cavity pure state, qubit amplitudes in (up, down) order."""
    psi = np.kron(np.asarray(qubit, complex), np.asarray(cavity, complex))
    return np.outer(psi, psi.conj())


def equator_state() -> np.ndarray:
    return np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)


@dataclass
class BlockEvolution:
    times: np.ndarray
    sigma_minus: np.ndarray
    rank1_deviation: np.ndarray
    top_weight: np.ndarray
    blocks: np.ndarray | None = None

    @property
    def log_ratio(self) -> np.ndarray:
        """ln(<sigma_-(t)>/<sigma_-(t0)>) with the phase unwrapped along the grid."""
        r = self.sigma_minus / self.sigma_minus[0]
        return np.log(np.abs(r)) + 1j * np.unwrap(np.angle(r))


def evolve_coherence_block(p: EffectiveParams, spec: HilbertSpec, rho_ud0: np.ndarray, grid,
                           drive=None, method: str = "rk", rtol: float = DEFAULT_RTOL,
                           atol: float = DEFAULT_ATOL, keep_blocks: bool = False) -> BlockEvolution:
    """Evolve only rho_{up,down}; <sigma_-> is its trace.

    ``rank1_deviation`` is s2/s1 of the block's singular values, zero when the
    block stays a scaled outer product.
    """
    nl = spec.n_levels
    rho_ud0 = np.asarray(rho_ud0, dtype=complex)
    if rho_ud0.shape != (nl, nl):
        raise ValueError(f"rho_ud0 must be {nl}x{nl}")
    L = block_liouvillian(p, spec, drive)
    ys = integrate_linear(L.matrix, rho_ud0, grid, method, rtol, atol)
    blocks = ys.reshape(-1, nl, nl)
    sigma = np.einsum("kii->k", blocks)
    sv = np.linalg.svd(blocks, compute_uv=False)
    dev = np.where(sv[:, 0] > 0, sv[:, 1] / np.where(sv[:, 0] > 0, sv[:, 0], 1.0), 0.0)
    norm0 = max(np.abs(np.diagonal(blocks[0])).sum(), 1e-300)
    top = np.abs(blocks[:, nl - 1, nl - 1]) / norm0
    _check_leak(top, spec.leak_threshold)
    return BlockEvolution(np.asarray(grid, float), sigma, dev, top, blocks if keep_blocks else None)


def coherent_block(alpha_up: complex, alpha_down: complex, n_levels: int, sigma0: complex = 0.5) -> np.ndarray:
    """Initial block sigma0 |alpha_up><alpha_down| / <alpha_down|alpha_up>, so its trace is sigma0."""
    u = coherent_state(alpha_up, n_levels)
    d = coherent_state(alpha_down, n_levels)
    return sigma0 * np.outer(u, d.conj()) / np.vdot(d, u)


def driven_coherence_rate(p: EffectiveParams, epsilon: complex, delta_d: float,
                          spec: HilbertSpec = HilbertSpec(n_max=15)) -> complex:
    """Long-time exponent of <sigma_-> under a constant drive: i*stark - dephasing.

    Obtained as the block-generator eigenvalue with the largest real part, i.e.
    the exact t -> infinity limit of the driven block evolution.
    """
    L = block_liouvillian(p, spec, (epsilon, delta_d)).matrix.toarray()
    w, v = eig(L)
    k = int(np.argmax(w.real))
    vec = v[:, k].reshape(spec.n_levels, spec.n_levels)
    top = abs(vec[-1, -1]) / np.abs(np.diagonal(vec)).sum()
    _check_leak(np.array([top]), spec.leak_threshold)
    return complex(w[k])


def driven_coherence_rate_evolved(p: EffectiveParams, epsilon: complex, delta_d: float,
                                  spec: HilbertSpec = HilbertSpec(n_max=15), settle: float | None = None,
                                  window: float | None = None) -> complex:
    """Same quantity as :func:`driven_coherence_rate`, from explicit time evolution.

    The cavity starts in vacuum; after ``settle`` (default 30 / min decay) the
    log-slope of <sigma_-> over ``window`` is returned.
    """
    kmin = 0.5 * min(p.kappa + p.gamma_nr * math.exp(p.eta), p.kappa + p.gamma_nr * math.exp(-p.eta))
    settle = 30.0 / kmin if settle is None else settle
    window = 1.0 / kmin if window is None else window
    nl = spec.n_levels
    X0 = 0.5 * np.outer(fock_state(0, nl), fock_state(0, nl))
    L = block_liouvillian(p, spec, (epsilon, delta_d)).matrix
    ys = integrate_linear(L, X0, [0.0, settle, settle + window], "expm")
    s = np.einsum("kii->k", ys.reshape(-1, nl, nl))
    return complex(np.log(s[2] / s[1]) / window)


# ---------------------------------------------------------------- FWM

def fwm_block_liouvillian(p: EffectiveParams, fwm: FwmSpec, n_max: int = 2,
                          sectors: tuple[int, int] = (1, -1)) -> sp.csr_matrix:
    """Probe-qubit block on ancilla (g, e, f) (x) cavity with the FWM coupling.

    ``sectors`` picks the (left, right) probe-qubit sectors: (1, -1) is the
    coherence block, equal entries give an ordinary conditional density matrix.
    """
    nl = n_max + 1
    a = destroy(nl)
    eye_c = identity(nl)
    g_f = sp.csr_matrix(([1.0], ([0], [2])), shape=(3, 3), dtype=complex)
    e_f = sp.csr_matrix(([1.0], ([1], [2])), shape=(3, 3), dtype=complex)
    g_e = sp.csr_matrix(([1.0], ([0], [1])), shape=(3, 3), dtype=complex)
    coupling = fwm.omega_rabi * sp.kron(g_f, a.conj().T)
    coupling = coupling + coupling.conj().T
    n = sp.kron(identity(3), number(nl))
    h_l, h_r = ((p.delta_c + 0.5 * p.lam * s) * n + coupling for s in sectors)
    A = sp.kron(identity(3), a)
    jumps = []
    if p.kappa > 0:
        j = math.sqrt(p.kappa) * A
        jumps.append((j, j))
    if p.gamma_nr > 0:
        g = math.sqrt(p.gamma_nr)
        jumps.append((g * _qubit_factor(p, sectors[0]) * A, g * _qubit_factor(p, sectors[1]) * A))
    for rate, op in ((fwm.gamma_f, e_f), (fwm.gamma_e, g_e)):
        if rate > 0:
            j = math.sqrt(rate) * sp.kron(op, eye_c)
            jumps.append((j, j))
    return block_superoperator(h_l, h_r, jumps)


def _fwm_initial(fwm: FwmSpec, nl: int) -> np.ndarray:
    anc = np.diag([1.0 - fwm.f_prep_fidelity, 0.0, fwm.f_prep_fidelity]).astype(complex)
    vac = np.outer(fock_state(0, nl), fock_state(0, nl))
    return np.kron(anc, vac)


def _settle(L, y0, step: float, tol: float, observable, max_steps: int = 100000):
    """Step y' = L y until ``observable`` changes by less than ``tol`` in one step."""
    if L.shape[0] <= DENSE_LIMIT:
        prop = expm(step * L.toarray())
        advance = lambda y: prop @ y
    else:
        advance = lambda y: expm_multiply(step * L, y)
    y = np.asarray(y0, complex).reshape(-1)
    prev = observable(y)
    for k in range(1, max_steps + 1):
        y = advance(y)
        cur = observable(y)
        if abs(cur - prev) < tol:
            return y, cur, k * step
        prev = cur
    raise IntegratorFailure("long-time limit did not converge")


def evolve_fwm(p: EffectiveParams, fwm: FwmSpec, n_max: int = 2, tol: float = 1e-6,
               step: float | None = None) -> tuple[float, float, complex]:
    """Long-time probe phase shift and log-decoherence from a FWM-generated photon.

    Returns ``(phi, ln_zeta, ratio)`` with ratio = <sigma_-(inf)>/<sigma_-(0)>.
    Stops once the ratio moves by less than ``tol`` over one step (default
    step 1/(kappa + Gamma cosh eta)).
    """
    nl = n_max + 1
    d = 3 * nl
    L = fwm_block_liouvillian(p, fwm, n_max)
    trace = lambda y: complex(np.trace(y.reshape(d, d)))
    step = 1.0 / p.total_decay if step is None else step
    y, ratio, _ = _settle(L, _fwm_initial(fwm, nl), step, tol, trace)
    X = y.reshape(d, d)
    top = sum(abs(X[k * nl + n_max, k * nl + n_max]) for k in range(3)) / max(abs(ratio), 1e-300)
    _check_leak(np.array([top]), 1e-8)
    return float(np.angle(ratio)), float(np.log(abs(ratio))), ratio


def fwm_conversion_efficiency(p: EffectiveParams, fwm: FwmSpec, n_max: int = 2, tol: float = 1e-12) -> float:
    """Probability that a prepared |f> ends up as an emitted cavity photon.

    With the probe in |g> and gamma_e switched off, every f -> e decay strands
    the excitation in |e>, so the efficiency is 1 - P(e) at long times.
    """
    nl = n_max + 1
    d = 3 * nl
    ideal = FwmSpec(fwm.omega_rabi, fwm.gamma_f, 0.0, 1.0)
    L = fwm_block_liouvillian(p, ideal, n_max, sectors=(1, 1))
    pe = lambda y: complex(sum(y.reshape(d, d)[nl + k, nl + k] for k in range(nl)))
    _, val, _ = _settle(L, _fwm_initial(ideal, nl), 1.0 / p.total_decay, tol, pe)
    return 1.0 - val.real


def calibrate_gamma_f(p: EffectiveParams, omega_rabi: float, efficiency: float, n_max: int = 2) -> float:
    """Ancilla f -> e decay rate giving the requested photon conversion efficiency."""
    from scipy.optimize import brentq

    f = lambda g: fwm_conversion_efficiency(p, FwmSpec(omega_rabi, g), n_max) - efficiency
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("efficiency not reachable")
    return brentq(f, 0.0, hi, xtol=1e-12, rtol=1e-10)
