"""ln(zeta)/phi for a four-wave-mixing single photon, ideal and imperfect, against Fock and coherent light."""
import argparse

from nrdisp.core import mhz
from nrdisp.experiments import fwm_experiment
from nrdisp.oracle import FwmSpec, calibrate_gamma_f
from nrdisp.presets import get_preset

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--preset", default="device-a")
ap.add_argument("--omega", type=float, default=0.6, help="FWM Rabi rate, MHz")
ap.add_argument("--efficiency", type=float, default=0.89)
ap.add_argument("--prep", type=float, default=0.85, help="|f> preparation fidelity")
args = ap.parse_args()

p = get_preset(args.preset)
ideal = fwm_experiment(p, FwmSpec(mhz(args.omega)))
g = calibrate_gamma_f(p, mhz(args.omega), args.efficiency)
lossy = fwm_experiment(p, FwmSpec(mhz(args.omega), gamma_f=g, f_prep_fidelity=args.prep))
print(f"Fock {ideal.fock_ratio:.4f}  ideal FWM {ideal.ratio:.4f}  imperfect {lossy.ratio:.4f}  "
      f"coherent {ideal.coherent_ratio:.4f}  (gamma_f {g / mhz(1):.4f} MHz)")
