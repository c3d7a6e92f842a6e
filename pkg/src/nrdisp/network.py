"""Coupled linear-mode bath, its susceptibility, and reduction to EffectiveParams."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve

from .core import EffectiveParams, params_from_energies
from .errors import ConfigError, SingularAtFrequency, TruncationLeak
from .oracle import block_superoperator, coherent_state, destroy, fock_state, identity, integrate_linear

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
COND_LIMIT = 1e14


@dataclass(frozen=True, eq=False)
class MultimodeNetwork:
    """Linear modes c_0..c_{N-1}: H = sum h_lm c_l^dag c_m, dissipator sum G_lm (c_m rho c_l^dag - {c_l^dag c_m, rho}/2).

    The qubit shifts mode ``qubit_mode_index`` by (lambda0/2) sigma_z c^dag c.
    Frequencies in ``h_mat`` are already in the reference rotating frame.
    """

    h_mat: np.ndarray
    gamma_mat: np.ndarray
    cavity_index: int = 0
    qubit_mode_index: int = 1
    lambda0: float = 0.0

    def __post_init__(self):
        h = np.array(self.h_mat, dtype=complex)
        g = np.array(self.gamma_mat, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 2:
            raise ConfigError("h_mat must be square with at least 2 modes")
        if g.shape != h.shape:
            raise ConfigError("gamma_mat must match h_mat in shape")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g)) and math.isfinite(self.lambda0)):
            raise ConfigError("network entries must be finite")
        if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(h))):
            raise ConfigError("h_mat is not Hermitian")
        if np.max(np.abs(g - g.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(g))):
            raise ConfigError("gamma_mat is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (g + g.conj().T)).min() < -PSD_TOL * max(1.0, np.max(np.abs(g))):
            raise ConfigError("gamma_mat is not positive semidefinite")
        n = h.shape[0]
        for name in ("cavity_index", "qubit_mode_index"):
            if not 0 <= getattr(self, name) < n:
                raise ConfigError(f"{name} out of range")
        if self.cavity_index == self.qubit_mode_index:
            raise ConfigError("cavity_index must differ from qubit_mode_index")
        h.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "h_mat", h)
        object.__setattr__(self, "gamma_mat", g)

    @property
    def n_modes(self) -> int:
        return self.h_mat.shape[0]

    def replace(self, **kw) -> "MultimodeNetwork":
        d = dict(h_mat=self.h_mat, gamma_mat=self.gamma_mat, cavity_index=self.cavity_index,
                 qubit_mode_index=self.qubit_mode_index, lambda0=self.lambda0)
        d.update(kw)
        return MultimodeNetwork(**d)

    def to_dict(self) -> dict:
        pairs = lambda m: [[[float(z.real), float(z.imag)] for z in row] for row in m]
        return {"h_mat": pairs(self.h_mat), "gamma_mat": pairs(self.gamma_mat),
                "cavity_index": self.cavity_index, "qubit_mode_index": self.qubit_mode_index,
                "lambda0": self.lambda0}

    @classmethod
    def from_dict(cls, d: dict, units: str = "rad_per_us") -> "MultimodeNetwork":
        """Complex entries are [re, im] pairs (plain numbers are taken as real)."""
        scale = {"rad_per_us": 1.0, "mhz": 2.0 * math.pi}.get(units.lower())
        if scale is None:
            raise ConfigError(f"unknown units {units!r}")

        def mat(rows):
            try:
                return scale * np.array([[complex(*z) if isinstance(z, (list, tuple)) else complex(z)
                                          for z in row] for row in rows])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad matrix entry: {exc}") from exc

        try:
            return cls(mat(d["h_mat"]), mat(d["gamma_mat"]), int(d.get("cavity_index", 0)),
                       int(d.get("qubit_mode_index", 1)), scale * float(d.get("lambda0", 0.0)))
        except KeyError as exc:
            raise ConfigError(f"missing network field {exc}") from exc

    @classmethod
    def load(cls, path) -> "MultimodeNetwork":
        d = json.loads(Path(path).read_text())
        return cls.from_dict(d, d.get("units", "rad_per_us"))


@dataclass(frozen=True)
class SusceptibilityMatrix:
    omega: float
    chi: np.ndarray

    def __getitem__(self, idx):
        return self.chi[idx]


def _response_matrix(net: MultimodeNetwork, omega: float) -> np.ndarray:
    return omega * np.eye(net.n_modes) - net.h_mat + 0.5j * net.gamma_mat


def susceptibility(net: MultimodeNetwork, omega: float) -> SusceptibilityMatrix:
    """chi = (omega - H + i Gamma/2)^-1 by dense LU."""
    M = _response_matrix(net, omega)
    cond = np.linalg.cond(M)
    if not math.isfinite(cond) or cond > COND_LIMIT:
        raise SingularAtFrequency(f"condition number {cond:.3g} at omega={omega}")
    chi = lu_solve(lu_factor(M), np.eye(net.n_modes, dtype=complex))
    return SusceptibilityMatrix(float(omega), chi)


def effective_energies(net: MultimodeNetwork) -> tuple[complex, complex, complex]:
    """(E_up, E_down, coherence coefficient) from the zero-frequency susceptibility."""
    chi = susceptibility(net, 0.0).chi
    i1, i2 = net.cavity_index, net.qubit_mode_index
    c11, c12, c21, c22 = chi[i1, i1], chi[i1, i2], chi[i2, i1], chi[i2, i2]
    det = c11 * c22 - c12 * c21
    l0 = net.lambda0

    def energy(sz):
        v = 0.5 * l0 * sz
        return complex(-(1.0 - v * c22) / (c11 - v * det))

    lam_lang = l0 * abs(c21) ** 2 / ((c11 - 0.5 * l0 * det) * (np.conj(c11) + 0.5 * l0 * np.conj(det)))
    return energy(1), energy(-1), complex(-1j * lam_lang)


def adiabatic_eliminate(net: MultimodeNetwork) -> EffectiveParams:
    """Reduce the network to the effective qubit-cavity parameters."""
    e_up, e_dn, coeff = effective_energies(net)
    return params_from_energies(e_up, e_dn, coeff)


def field_reverse(net: MultimodeNetwork) -> MultimodeNetwork:
    """Image of the network under B -> -B: both coefficient matrices transposed."""
    return net.replace(h_mat=net.h_mat.T.copy(), gamma_mat=net.gamma_mat.T.copy())


SYMMETRIC = ("delta_c", "lam", "gamma_sinh_eta", "total_decay")
ASYMMETRIC = ("gamma_sin_theta", "gamma_cos_theta")


def _combinations(e_up: complex, e_dn: complex, coeff: complex) -> dict:
    lam = (e_up - e_dn).real
    d = -coeff.real
    total = -(e_up + e_dn).imag
    c = lam + coeff.imag
    # Gamma cos(theta) = Gamma cosh(eta) - D, with Gamma cosh(eta) from the inversion identity
    out = {"delta_c": 0.5 * (e_up + e_dn).real, "lam": lam, "gamma_sinh_eta": -(e_up - e_dn).imag,
           "total_decay": total, "gamma_sin_theta": c}
    a = out["gamma_sinh_eta"]
    out["gamma_cos_theta"] = (a * a + c * c - d * d) / (2 * d) if d > 0 else float("nan")
    return out


@dataclass
class SymmetryReport:
    forward: dict
    reverse: dict
    tol: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks.values())

    def asymmetry(self, name: str) -> float:
        return abs(self.forward[name] - self.reverse[name])

    def to_dict(self) -> dict:
        return {"forward": self.forward, "reverse": self.reverse, "tol": self.tol,
                "checks": {k: {"diff": d, "pass": ok} for k, (d, ok) in self.checks.items()},
                "informational": {k: self.asymmetry(k) for k in ASYMMETRIC}, "passed": self.passed}


def onsager_report(net: MultimodeNetwork, tol: float = 1e-10) -> SymmetryReport:
    """Compare the effective combinations of ``net`` and ``field_reverse(net)``.

    Works on the raw energies, so it does not require either orientation to be
    physical; ``tol`` is relative to the largest |E|.
    """
    fw = effective_energies(net)
    rv = effective_energies(field_reverse(net))
    scale = max(1.0, *(abs(z) for z in fw + rv))
    f, r = _combinations(*fw), _combinations(*rv)
    checks = {}
    for k in SYMMETRIC:
        diff = abs(f[k] - r[k])
        checks[k] = (diff, diff <= tol * scale)
    return SymmetryReport(f, r, tol, checks)


@dataclass(frozen=True)
class ValidationResult:
    passed: bool
    ratio: float
    margin: float
    message: str


def validate_hierarchy(delta_jc: float, g: float, gamma22: float, margin: float = 10.0) -> ValidationResult:
    """Dispersive-regime check |Delta_JC| >= margin * max(g, Gamma_22) (inclusive)."""
    scale = max(abs(g), abs(gamma22))
    ratio = math.inf if scale == 0 else abs(delta_jc) / scale
    ok = abs(delta_jc) >= margin * scale
    msg = "ok" if ok else f"|Delta_JC|/max(g, Gamma22) = {ratio:.3g} < {margin}"
    return ValidationResult(ok, ratio, margin, msg)


# ---------------------------------------------------------------- builders

def flux_loop(omega_modes, couplings, flux: float, decays, lambda0: float,
              cavity_index: int = 0, qubit_mode_index: int = 1) -> MultimodeNetwork:
    """Three modes in a ring with hopping g_01, g_12, g_20 and the phase ``flux`` on g_20."""
    w = np.asarray(omega_modes, float)
    g01, g12, g20 = couplings
    h = np.diag(w).astype(complex)
    h[0, 1] = h[1, 0] = g01
    h[1, 2] = h[2, 1] = g12
    h[2, 0] = g20 * np.exp(1j * flux)
    h[0, 2] = np.conj(h[2, 0])
    return MultimodeNetwork(h, np.diag(np.asarray(decays, float)).astype(complex), cavity_index,
                            qubit_mode_index, lambda0)


def random_network(rng: np.random.Generator, n_modes: int = 3, scale: float = 10.0,
                   decay: float = 50.0, lambda0: float = 5.0) -> MultimodeNetwork:
    """Random complex-hopping network with a random PSD dissipator (for property tests)."""
    z = rng.normal(size=(n_modes, n_modes)) + 1j * rng.normal(size=(n_modes, n_modes))
    h = scale * 0.5 * (z + z.conj().T)
    k = rng.normal(size=(n_modes, n_modes)) + 1j * rng.normal(size=(n_modes, n_modes))
    g = decay * (k @ k.conj().T) / n_modes
    return MultimodeNetwork(h, g, 0, 1, lambda0 * (0.5 + rng.random()))


# ---------------------------------------------------------------- full-system oracle

def _mode_operators(levels):
    ops = []
    for k, nl in enumerate(levels):
        factors = [identity(m) for m in levels]
        factors[k] = destroy(nl)
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op)
    return ops


@dataclass
class NetworkEvolution:
    times: np.ndarray
    sigma_minus: np.ndarray

    @property
    def log_ratio(self) -> np.ndarray:
        r = self.sigma_minus / self.sigma_minus[0]
        return np.log(np.abs(r)) + 1j * np.unwrap(np.angle(r))


def full_system_coherence(net: MultimodeNetwork, n0: float, grid, levels=None, method: str = "rk",
                          leak_threshold: float = 1e-8) -> NetworkEvolution:
    """<sigma_-(t)> from the coherence block of the full multimode network.

    The cavity mode starts in a coherent state with mean photon number ``n0`` and
    every other mode in vacuum.  ``levels`` gives the Fock dimension per mode.
    """
    if levels is None:
        levels = [9 if k == net.cavity_index else 4 for k in range(net.n_modes)]
    if len(levels) != net.n_modes:
        raise ConfigError("one Fock dimension per mode required")
    cs = _mode_operators(levels)
    dim = int(np.prod(levels))
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for l in range(net.n_modes):
        for m in range(net.n_modes):
            if net.h_mat[l, m] != 0:
                h = h + net.h_mat[l, m] * (cs[l].conj().T @ cs[m])
    nq = cs[net.qubit_mode_index].conj().T @ cs[net.qubit_mode_index]
    g_vals, g_vecs = np.linalg.eigh(net.gamma_mat)
    jumps = []
    for k, gk in enumerate(g_vals):
        if gk <= PSD_TOL:
            continue
        j = math.sqrt(gk) * sum(np.conj(g_vecs[m, k]) * cs[m] for m in range(net.n_modes))
        jumps.append((j, j))
    L = block_superoperator(h + 0.5 * net.lambda0 * nq, h - 0.5 * net.lambda0 * nq, jumps)
    psi = np.array([1.0 + 0j])
    for k, nl in enumerate(levels):
        psi = np.kron(psi, coherent_state(math.sqrt(n0), nl) if k == net.cavity_index else fock_state(0, nl))
    X0 = 0.5 * np.outer(psi, psi.conj())
    ys = integrate_linear(L, X0, grid, method)
    blocks = ys.reshape(-1, dim, dim)
    sigma = np.einsum("kii->k", blocks)
    diag = np.abs(np.einsum("kii->ki", blocks)).reshape((len(ys),) + tuple(levels))
    for k in range(net.n_modes):
        top = np.take(diag, levels[k] - 1, axis=k + 1).reshape(len(ys), -1).sum(1) / 0.5
        if top.max() > leak_threshold:
            raise TruncationLeak(f"mode {k}: top-level weight {top.max():.3g}")
    return NetworkEvolution(np.asarray(grid, float), sigma)
