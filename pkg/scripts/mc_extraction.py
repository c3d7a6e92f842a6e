"""Simulated measurement set with 0.2% noise, then point estimate and Monte-Carlo errors."""
import argparse
from dataclasses import replace

from nrdisp.core import mhz
from nrdisp.experiments import OBSERVABLES, ProtocolConfig, measure
from nrdisp.extraction import PARAMS, extract, linearized_uncertainty, monte_carlo
from nrdisp.presets import get_preset

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--preset", default="device-a")
ap.add_argument("--samples", type=int, default=100_000)
ap.add_argument("--workers", type=int, default=None)
args = ap.parse_args()

ms = measure(get_preset(args.preset), ProtocolConfig())
ms = replace(ms, sigmas={k: 2e-3 * abs(getattr(ms, k)) for k in OBSERVABLES})
point = extract(ms).params
mc = monte_carlo(ms, args.samples, seed=0, workers=args.workers)
lin = linearized_uncertainty(ms)
for k in PARAMS:
    v = getattr(point, k)
    lo, hi = mc.uncertainty[k]
    scale = 1.0 if k in ("theta", "eta") else mhz(1)
    print(f"{k:10s} {v / scale:+.5f}  -{lo / scale:.5f} +{hi / scale:.5f}  (linear {lin[k] / scale:.5f})")
