"""Stark shift and measurement dephasing vs drive detuning, with optional oracle columns."""
import argparse

import numpy as np

from nrdisp.core import mhz
from nrdisp.dynamics import write_csv
from nrdisp.experiments import cw_sweep
from nrdisp.presets import get_preset

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--preset", default="device-a")
ap.add_argument("--epsilon", type=float, default=1.0, help="drive amplitude, MHz")
ap.add_argument("--points", type=int, default=41)
ap.add_argument("--oracle", action="store_true")
ap.add_argument("--out", default="cw_sweep.csv")
args = ap.parse_args()

p = get_preset(args.preset)
dd = p.delta_c + mhz(np.linspace(-3.0, 3.0, args.points))
sw = cw_sweep(p, mhz(args.epsilon), dd, cross_check=args.oracle)
header, rows = sw.to_rows()
write_csv(args.out, header, rows)
a, b = sw.peak_detunings()
print(f"wrote {args.out}; Stark peak at {(a - p.delta_c) / mhz(1):+.2f} MHz, "
      f"dephasing peak at {(b - p.delta_c) / mhz(1):+.2f} MHz (relative to delta_c)")
