"""Named parameter presets.

Device metadata are the measured hardware values of the two devices.  The
effective parameters themselves are illustrative: they only respect the
measured cavity linewidth through kappa + Gamma cosh(eta).
"""

from __future__ import annotations

import math

from .core import EffectiveParams, mhz
from .errors import ConfigError


def _kappa_for(total_mhz: float, gamma_mhz: float, eta: float) -> float:
    return mhz(total_mhz - gamma_mhz * math.cosh(eta))


DEVICE_METADATA = {
    "device-a": {
        "qubit_frequency_ghz": 9.141, "qubit_t1_us": 5.3, "qubit_t2_us": 2.2, "qubit_t2e_us": 2.7,
        "buffer_frequency_ghz": 10.808, "buffer_chi_mhz": 5.0,
        "cavity_frequency_ghz": 10.809, "cavity_linewidth_mhz": 1.7,
        "ancilla_frequency_ghz": 8.277, "ancilla_chi_mhz": 1.1,
    },
    "device-b": {
        "qubit_frequency_ghz": 8.305, "qubit_t1_us": 12.7, "qubit_t2_us": 5.5, "qubit_t2e_us": 10.1,
        "buffer_frequency_ghz": 10.812, "buffer_chi_mhz": 0.7,
        "cavity_frequency_ghz": 10.814, "cavity_linewidth_mhz": 1.8,
        "ancilla_frequency_ghz": 9.173, "ancilla_chi_mhz": 1.1,
    },
    "reciprocal": {"cavity_linewidth_mhz": 1.7, "ancilla_chi_mhz": 1.1},
}

PRESETS = {
    "device-a": EffectiveParams(delta_c=mhz(0.3), lam=mhz(0.25), kappa=_kappa_for(1.7, 1.0, 0.35),
                                gamma_nr=mhz(1.0), theta=-0.6, eta=0.35),
    "device-b": EffectiveParams(delta_c=mhz(0.2), lam=mhz(0.05), kappa=_kappa_for(1.8, 0.8, -0.2),
                                gamma_nr=mhz(0.8), theta=0.9, eta=-0.2),
    "reciprocal": EffectiveParams(delta_c=mhz(0.3), lam=mhz(0.25), kappa=mhz(1.7), gamma_nr=0.0),
}


def get_preset(name: str) -> EffectiveParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset_metadata(name: str) -> dict:
    get_preset(name)
    return dict(DEVICE_METADATA.get(name, {}))
