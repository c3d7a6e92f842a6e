"""Command-line front end: ``nrdisp simulate | extract | compare-oracle``.

Exit codes: 0 success, 2 configuration/usage error, 3 solver error.
Rates on the command line and in config files are cyclic MHz unless the
config says ``"units": "rad_per_us"``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import EffectiveParams, QubitSector, mhz
from .dynamics import export_trajectory, free_decay_closed_form, ramsey_trace, write_csv
from .errors import ConfigError, NrdispError, TruncationLeak
from .experiments import (ProtocolConfig, cavity_ramsey, cavity_t1, cw_sweep, fwm_experiment, measure,
                          photon_calibration, qubit_ramsey)
from .extraction import DERIVED, PARAMS, extract, histogram_table, monte_carlo, sample_extractions
from .network import MultimodeNetwork, adiabatic_eliminate
from .oracle import (FwmSpec, HilbertSpec, build_liouvillian, coherent_block, coherent_state,
                     equator_state, evolve_coherence_block, evolve_density, product_state)
from .presets import get_preset, preset_metadata

PROTOCOLS = ("qubit-ramsey", "cavity-ramsey", "cavity-t1", "photon-calibration", "cw-sweep", "fwm",
             "measurement-set", "trajectory")


@dataclass
class RunConfig:
    preset: str | None = None
    params: dict | None = None
    network: dict | None = None
    units: str = "mhz"
    protocol: str = "qubit-ramsey"
    backend: str = "semiclassical"
    seed: int = 0
    out: str = "out"
    protocol_config: dict = field(default_factory=dict)
    epsilon: float = 1.0
    detunings: list = field(default_factory=lambda: list(np.linspace(-3.0, 3.0, 41)))
    cross_check: bool = False
    fwm: dict = field(default_factory=dict)

    def __post_init__(self):
        sources = [s for s in (self.preset, self.params, self.network) if s is not None]
        if len(sources) != 1:
            raise ConfigError("exactly one of preset, params, network must be given")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        if self.backend not in ("semiclassical", "oracle"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    def resolve_params(self) -> EffectiveParams:
        if self.preset is not None:
            return get_preset(self.preset)
        try:
            if self.params is not None:
                return EffectiveParams.from_dict(self.params, self.units)
            return adiabatic_eliminate(MultimodeNetwork.from_dict(self.network, self.units))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad parameter source: {exc}") from exc

    def protocol_cfg(self) -> ProtocolConfig:
        known = {f.name for f in fields(ProtocolConfig)}
        extra = set(self.protocol_config) - known
        if extra:
            raise ConfigError(f"unknown protocol_config keys {sorted(extra)}")
        kw = dict(self.protocol_config)
        scale = mhz(1.0) if self.units == "mhz" else 1.0
        for k in ("chi_a", "ramsey_detuning", "omega_r"):
            if k in kw:
                kw[k] = scale * kw[k]
        return ProtocolConfig(**kw, rng_seed=self.seed, backend=self.backend)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _run_config(args) -> RunConfig:
    d = _load_json(args.config) if getattr(args, "config", None) else {}
    if args.preset:
        d.update(preset=args.preset, params=None, network=None)
    if getattr(args, "params", None):
        loaded = _load_json(args.params)
        d.update(preset=None, network=None, params=loaded)
        d.setdefault("units", loaded.get("units", "mhz"))
    for key in ("protocol", "backend", "seed", "out", "epsilon"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "cross_check", False):
        d["cross_check"] = True
    if getattr(args, "detunings", None) is not None:
        d["detunings"] = args.detunings
    if getattr(args, "n0", None) is not None:
        d.setdefault("protocol_config", {})["n0"] = args.n0
    if not any(d.get(k) is not None for k in ("preset", "params", "network")):
        d["preset"] = "device-a"
    try:
        return RunConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def _parse_detunings(text: str) -> list:
    """'a:b:n' (inclusive linspace) or comma-separated values, in MHz."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        a, b, n = text.split(":")
        return list(np.linspace(float(a), float(b), int(n)))
    return [float(x) for x in text.split(",") if x.strip()]


def _sidecar(path: Path, rc: RunConfig, p: EffectiveParams, extra: dict | None = None) -> None:
    meta = {"config": rc.to_dict(), "resolved_params_rad_per_us": p.to_dict(), "seed": rc.seed,
            "backend": rc.backend, "version": __version__}
    if rc.preset:
        meta["preset_metadata"] = preset_metadata(rc.preset)
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


def cmd_simulate(args) -> int:
    rc = _run_config(args)
    p = rc.resolve_params()
    cfg = rc.protocol_cfg()
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / rc.protocol.replace("-", "_")
    extra = {}
    if rc.protocol == "qubit-ramsey":
        res = qubit_ramsey(p, cfg)
        header, rows = res.to_rows()
    elif rc.protocol == "trajectory":
        traj = ramsey_trace(p, cfg.n0, np.linspace(0.0, cfg.t_f, cfg.n_points))
        export_trajectory(traj, f"{stem}.csv")
        _sidecar(Path(f"{stem}.meta.json"), rc, p)
        return 0
    elif rc.protocol in ("cavity-ramsey", "cavity-t1"):
        fn = cavity_ramsey if rc.protocol == "cavity-ramsey" else cavity_t1
        header, rows = ["sector", "value", "stderr"], []
        for s in (QubitSector.UP, QubitSector.DOWN):
            f = fn(p, s, cfg)
            rows.append(["g" if s is QubitSector.UP else "e", f.value, f.stderr])
    elif rc.protocol == "photon-calibration":
        n_avg, n0 = photon_calibration(p, cfg)
        header, rows = ["n_avg", "n0_est"], [[n_avg, n0]]
    elif rc.protocol == "cw-sweep":
        if len(rc.detunings) == 0:
            raise ConfigError("empty detuning list (use e.g. --detunings -3:3:41)")
        dd = [mhz(x) for x in rc.detunings] if rc.units == "mhz" else list(rc.detunings)
        eps = mhz(rc.epsilon) if rc.units == "mhz" else rc.epsilon
        sweep = cw_sweep(p, eps, dd, rc.backend, rc.cross_check)
        header, rows = sweep.to_rows()
        extra = {"peak_detunings": sweep.peak_detunings(), "point_errors": sweep.errors}
    elif rc.protocol == "fwm":
        f = dict(omega_rabi=0.6, gamma_f=0.0, gamma_e=0.0, f_prep_fidelity=1.0) | rc.fwm
        scale = mhz(1.0) if rc.units == "mhz" else 1.0
        spec = FwmSpec(scale * f["omega_rabi"], scale * f["gamma_f"], scale * f["gamma_e"], f["f_prep_fidelity"])
        r = fwm_experiment(p, spec)
        header = ["ratio", "phi", "ln_zeta", "coherent_ratio", "fock_ratio"]
        rows = [[r.ratio, r.phi, r.ln_zeta, r.coherent_ratio, r.fock_ratio]]
    else:  # measurement-set
        ms = measure(p, cfg)
        Path(f"{stem}.json").write_text(ms.to_json() + "\n")
        header, rows = ["observable", "value"], [[k, v] for k, v in ms.to_dict().items() if k != "sigmas"]
    write_csv(f"{stem}.csv", header, rows)
    _sidecar(Path(f"{stem}.meta.json"), rc, p, extra)
    return 0


def cmd_extract(args) -> int:
    from .experiments import MeasurementSet

    ms = MeasurementSet.from_dict(_load_json(args.measurements))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mc_samples == 0:
        res = extract(ms)
    else:
        res = monte_carlo(ms, args.mc_samples, args.seed)
    payload = res.to_dict() | {"input": ms.to_dict(), "mc_samples": args.mc_samples, "seed": args.seed,
                               "version": __version__}
    (out / "extraction.json").write_text(json.dumps(payload, indent=2, sort_keys=True,
                                                    default=_json_default) + "\n")
    if args.histograms and args.mc_samples:
        # same seed and chunking as monte_carlo, so these are the samples it summarised
        samples, code = sample_extractions(ms, args.mc_samples, args.seed)
        rows = []
        for k in PARAMS + DERIVED:
            centers, counts = histogram_table(samples[k][code == 0])
            rows += [[k, c, n] for c, n in zip(centers, counts)]
        write_csv(out / "histograms.csv", ["parameter", "bin_center", "count"], rows)
    return 0


def cmd_compare_oracle(args) -> int:
    rc = _run_config(args)
    p = rc.resolve_params()
    n0 = args.n0 if args.n0 is not None else 3.0
    spec = HilbertSpec(n_max=args.n_max)
    grid = np.linspace(0.0, args.t_final, args.n_points)
    semi = free_decay_closed_form(p, n0, grid)
    traj = ramsey_trace(p, n0, grid)
    nl = spec.n_levels
    block = evolve_coherence_block(p, spec, coherent_block(math.sqrt(n0), math.sqrt(n0), nl, 0.5), grid,
                                   method=args.method)
    rho0 = product_state(equator_state(), coherent_state(math.sqrt(n0), nl))
    full = evolve_density(build_liouvillian(p, spec), rho0, grid, method=args.method)
    ref = np.exp(semi)

    def rel(sig):
        return float(np.max(np.abs(sig / sig[0] / ref - 1.0)))

    report = {
        "n0": n0, "n_max": args.n_max, "t_final": args.t_final, "method": args.method,
        "max_rel_error": {"integrated_vs_closed_form": rel(traj.sigma_minus),
                          "block_vs_closed_form": rel(block.sigma_minus),
                          "full_vs_closed_form": rel(full.sigma_minus),
                          "full_vs_block": float(np.max(np.abs(full.sigma_minus / block.sigma_minus - 1)))},
        "physicality": {"max_trace_error": float(np.max(np.abs(full.trace - 1))),
                        "min_eigenvalue": float(full.min_eigenvalue.min()),
                        "sigma_z_drift": float(np.ptp(full.sigma_z)),
                        "max_rank1_deviation": float(block.rank1_deviation.max())},
        "params_rad_per_us": p.to_dict(), "version": __version__,
    }
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report["max_rel_error"], indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nrdisp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def source(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--preset", help="device-a, device-b or reciprocal")
        g.add_argument("--params", help="JSON file with effective parameters")
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--n0", type=float, help="initial mean photon number")

    s = sub.add_parser("simulate", help="run one protocol and write CSV + JSON sidecar")
    source(s)
    s.add_argument("--protocol", choices=PROTOCOLS)
    s.add_argument("--backend", choices=("semiclassical", "oracle"))
    s.add_argument("--cross-check", action="store_true", help="add oracle columns to a cw-sweep")
    s.add_argument("--detunings", type=_parse_detunings, help="MHz: 'start:stop:num' or comma list")
    s.add_argument("--epsilon", type=float, help="drive amplitude (MHz)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("extract", help="invert a measurement set, with Monte-Carlo uncertainties")
    e.add_argument("measurements", help="MeasurementSet JSON")
    e.add_argument("--mc-samples", type=int, default=100_000, help="0 for the point estimate only")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="out")
    e.add_argument("--histograms", action="store_true", help="also write histograms.csv")
    e.set_defaults(func=cmd_extract)

    c = sub.add_parser("compare-oracle", help="semiclassical vs Lindblad comparison report")
    source(c)
    c.add_argument("--n-max", type=int, default=30)
    c.add_argument("--t-final", type=float, default=2.0)
    c.add_argument("--n-points", type=int, default=41)
    c.add_argument("--method", choices=("rk", "expm"), default="rk", help="Lindblad integrator")
    c.set_defaults(func=cmd_compare_oracle)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "extract" and 0 < args.mc_samples < 1000:
        ap.error("--mc-samples must be 0 or at least 1000")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"nrdisp: config error: {exc}", file=sys.stderr)
        return 2
    except TruncationLeak as exc:
        print(f"nrdisp: TruncationLeak: {exc}", file=sys.stderr)
        return 3
    except NrdispError as exc:
        print(f"nrdisp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
