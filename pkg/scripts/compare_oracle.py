"""Closed form vs semiclassical integration vs Lindblad oracle for each preset."""
import argparse
import math

import numpy as np

from nrdisp.dynamics import free_decay_closed_form, ramsey_trace
from nrdisp.oracle import (HilbertSpec, build_liouvillian, coherent_block, coherent_state, equator_state,
                           evolve_coherence_block, evolve_density, product_state)
from nrdisp.presets import get_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n0", type=float, default=3.0)
    ap.add_argument("--n-max", type=int, default=30)
    ap.add_argument("--t-final", type=float, default=2.0, help="microseconds")
    args = ap.parse_args()
    spec = HilbertSpec(n_max=args.n_max)
    grid = np.linspace(0.0, args.t_final, 41)
    alpha = math.sqrt(args.n0)
    for name in ("device-a", "device-b", "reciprocal"):
        p = get_preset(name)
        ref = np.exp(free_decay_closed_form(p, args.n0, grid))
        traj = ramsey_trace(p, args.n0, grid).sigma_minus
        blk = evolve_coherence_block(p, spec, coherent_block(alpha, alpha, spec.n_levels), grid).sigma_minus
        rho0 = product_state(equator_state(), coherent_state(alpha, spec.n_levels))
        full = evolve_density(build_liouvillian(p, spec), rho0, grid).sigma_minus
        errs = [np.max(np.abs(s / s[0] / ref - 1)) for s in (traj, blk, full)]
        print(f"{name:11s} integrated {errs[0]:.1e}  block {errs[1]:.1e}  full {errs[2]:.1e}")


if __name__ == "__main__":
    main()
