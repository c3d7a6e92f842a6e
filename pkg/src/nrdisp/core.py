"""Effective non-reciprocal qubit-cavity model and its closed-form quantities.

Conventions
-----------
All angular frequencies and rates are in rad/us, times in us. ``QubitSector.UP``
is the qubit ground state |g> (sigma_z = +1), ``DOWN`` is |e> (sigma_z = -1).
The qubit coherence is <sigma_-> = Tr(rho_{up,down}).
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NoPhysicalSolution

TWO_PI = 2.0 * math.pi

# kappa >= -KAPPA_CLAMP * (|B| + 1) is clamped to zero instead of rejected
KAPPA_CLAMP = 1e-9
# |A|, |C|, |D| below this (relative to |B| + |lambda|) count as the reciprocal limit
DEGENERATE_RTOL = 1e-12


def mhz(f: float) -> float:
    """Cyclic MHz to rad/us."""
    return TWO_PI * f


def to_mhz(w: float) -> float:
    return w / TWO_PI


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    t = math.remainder(theta, TWO_PI)
    return math.pi if t == -math.pi else t


class QubitSector(enum.Enum):
    UP = 1
    DOWN = -1

    @property
    def sz(self) -> int:
        return self.value


@dataclass(frozen=True)
class EffectiveParams:
    """The six real parameters of the effective master equation.

    ``gamma_nr`` is the rate of the non-reciprocal dissipator
    Gamma D[exp((i theta + eta) sigma_z / 2) a].
    """

    delta_c: float
    lam: float
    kappa: float
    gamma_nr: float
    theta: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.kappa < 0 or self.gamma_nr < 0:
            raise ValueError("kappa and gamma_nr must be non-negative")
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    # symmetric / derived combinations
    @property
    def total_decay(self) -> float:
        """kappa + Gamma cosh(eta): the sector-averaged cavity decay rate."""
        return self.kappa + self.gamma_nr * math.cosh(self.eta)

    @property
    def gamma_sin_theta(self) -> float:
        return self.gamma_nr * math.sin(self.theta)

    @property
    def gamma_cos_theta(self) -> float:
        return self.gamma_nr * math.cos(self.theta)

    @property
    def gamma_sinh_eta(self) -> float:
        return self.gamma_nr * math.sinh(self.eta)

    @property
    def gamma_cosh_eta(self) -> float:
        return self.gamma_nr * math.cosh(self.eta)

    def as_array(self) -> np.ndarray:
        return np.array([self.delta_c, self.lam, self.kappa, self.gamma_nr, self.theta, self.eta])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, units: str = "rad_per_us") -> "EffectiveParams":
        """Build from a mapping; ``units='mhz'`` converts the four rate fields by 2 pi."""
        scale = TWO_PI if units.lower() == "mhz" else 1.0
        if units.lower() not in ("mhz", "rad_per_us"):
            raise ValueError(f"unknown units {units!r}")
        lam = d["lam"] if "lam" in d else d["lambda"]
        return cls(
            delta_c=scale * float(d["delta_c"]),
            lam=scale * float(lam),
            kappa=scale * float(d["kappa"]),
            gamma_nr=scale * float(d["gamma_nr"]),
            theta=float(d.get("theta", 0.0)),
            eta=float(d.get("eta", 0.0)),
        )

    def replace(self, **kw) -> "EffectiveParams":
        d = self.to_dict()
        d.update(kw)
        return EffectiveParams(**d)


def conditional_energy(p: EffectiveParams, s: QubitSector, delta_d: float = 0.0) -> complex:
    """Complex cavity frequency given the qubit sector, i da/dt = E a.

    ``delta_d`` shifts the frame to a drive detuned by ``delta_d`` from the reference.
    """
    sz = s.sz
    return complex(p.delta_c - delta_d + 0.5 * p.lam * sz,
                   -0.5 * (p.kappa + p.gamma_nr * math.exp(p.eta * sz)))


def coherence_coefficient(p: EffectiveParams) -> complex:
    """Rate C in d<sigma_-> / dt = C a_up conj(a_down) <sigma_->."""
    return -1j * p.lam + p.gamma_nr * (complex(math.cos(p.theta), math.sin(p.theta)) - math.cosh(p.eta))


def decay_constant(p: EffectiveParams) -> complex:
    """i lambda + kappa + Gamma cosh(eta): decay of a_up * conj(a_down) in free evolution."""
    return complex(p.total_decay, p.lam)


def solve_dissipator(A, B, C, D, scale=None):
    """Vectorised inversion of the dissipator combinations.

    Given A = Gamma sinh(eta), B = kappa + Gamma cosh(eta), C = Gamma sin(theta)
    and D = Gamma (cosh(eta) - cos(theta)), return ``(kappa, gamma, theta, eta, code)``
    arrays.  ``code`` is 0 for a physical solution, 1 for D <= 0 with A or C
    non-zero, 2 for kappa < 0 beyond the clamp tolerance.
    """
    A, B, C, D = (np.asarray(v, dtype=float) for v in (A, B, C, D))
    A, B, C, D = np.broadcast_arrays(A, B, C, D)
    if scale is None:
        scale = np.abs(B)
    tol = DEGENERATE_RTOL * (np.asarray(scale, dtype=float) + np.abs(B)) + 1e-300
    degenerate = (np.abs(A) <= tol) & (np.abs(C) <= tol) & (np.abs(D) <= tol)
    bad_d = (D <= tol) & ~degenerate
    safe_d = np.where(bad_d | degenerate, 1.0, D)
    x = (A * A + C * C + D * D) / (2.0 * safe_d)
    gamma = np.hypot(x - D, C)
    safe_g = np.where(gamma > 0, gamma, 1.0)
    eta = np.where(gamma > 0, np.arcsinh(A / safe_g), 0.0)
    theta = np.where(gamma > 0, np.arctan2(C, x - D), 0.0)
    x = np.where(degenerate | bad_d, 0.0, x)
    gamma = np.where(degenerate | bad_d, 0.0, gamma)
    eta = np.where(degenerate | bad_d, 0.0, eta)
    theta = np.where(degenerate | bad_d, 0.0, theta)
    kappa = B - x
    clampable = kappa >= -KAPPA_CLAMP * (np.abs(B) + 1.0)
    kappa = np.where((kappa < 0) & clampable, 0.0, kappa)
    code = np.where(bad_d, 1, np.where(~clampable, 2, 0))
    return kappa, gamma, theta, eta, code


def params_from_combinations(delta_c: float, lam: float, A: float, B: float, C: float,
                             D: float) -> EffectiveParams:
    """Scalar inversion with errors naming the violated constraint."""
    kappa, gamma, theta, eta, code = solve_dissipator(A, B, C, D, scale=abs(lam))
    code = int(code)
    if code == 1:
        raise NoPhysicalSolution("Gamma(cosh eta - cos theta) <= 0",
                                 f"D={D:.6g} with A={A:.6g}, C={C:.6g}")
    if code == 2:
        raise NoPhysicalSolution("kappa < 0", f"kappa={float(kappa):.6g}")
    return EffectiveParams(delta_c, lam, float(kappa), float(gamma), float(theta), float(eta))


def params_from_energies(e_up: complex, e_down: complex, coeff: complex) -> EffectiveParams:
    """Invert the two conditional energies and the coherence coefficient.

    The reciprocal limit (Gamma sin(theta) = 0 and Gamma(cosh eta - cos theta) = 0)
    is degenerate in Gamma; it is reported as Gamma = theta = eta = 0.
    """
    lam = (e_up - e_down).real
    delta_c = 0.5 * (e_up + e_down).real
    A = -(e_up - e_down).imag
    B = -(e_up + e_down).imag
    C = lam + coeff.imag          # Im C = -lambda + Gamma sin(theta)
    D = -coeff.real               # Re C = -Gamma (cosh(eta) - cos(theta))
    return params_from_combinations(delta_c, lam, A, B, C, D)
