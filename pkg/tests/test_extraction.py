import math
from dataclasses import replace

import numpy as np
import pytest

from nrdisp.core import EffectiveParams, mhz
from nrdisp.dynamics import TrajectoryRecord, ramsey_trace
from nrdisp.errors import FitFailure, NoPhysicalSolution, TooFewValidSamples
from nrdisp.experiments import OBSERVABLES, ProtocolConfig, measure
from nrdisp.extraction import (DERIVED, GOODNESS_MIN, PARAMS, ExtractionResult, aggregate_repeats, extract,
                               fit_gaussian, fit_half_gaussians, fit_time_offset, histogram_table,
                               linearized_uncertainty, monte_carlo, sample_extractions, summarize)
from nrdisp.network import SYMMETRIC, adiabatic_eliminate, field_reverse, flux_loop

REL_SIGMA = {"omega_g": 2e-3, "omega_e": 2e-3, "kappa_g": 2e-3, "kappa_e": 2e-3, "phi": 2e-3, "zeta": 1e-3}


def with_noise(ms, scale=1.0):
    sig = {k: scale * REL_SIGMA[k] * abs(getattr(ms, k)) for k in OBSERVABLES}
    return replace(ms, sigmas=sig)


@pytest.fixture(scope="module")
def ms_a():
    from nrdisp.presets import get_preset
    return measure(get_preset("device-a"), ProtocolConfig())


# ---- point estimate

@pytest.mark.parametrize("name", ["device-a", "device-b"])
def test_round_trip_through_protocols(name):
    from nrdisp.presets import get_preset
    p = get_preset(name)
    q = extract(measure(p, ProtocolConfig())).params
    np.testing.assert_allclose(q.as_array(), p.as_array(), rtol=1e-6)


def test_round_trip_random_parameters():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = EffectiveParams(mhz(rng.uniform(0.1, 1)), mhz(rng.uniform(0.05, 0.5)), mhz(rng.uniform(0.2, 1)),
                            mhz(rng.uniform(0.2, 1)), rng.uniform(-2.5, 2.5), rng.uniform(-0.6, 0.6))
        q = extract(measure(p, ProtocolConfig())).params
        np.testing.assert_allclose(q.as_array(), p.as_array(), rtol=1e-6)


def test_default_window_and_photon_number(ms_a):
    assert ms_a.t_f == 0.7 and ms_a.n0 == 3.0


def test_reciprocal_measurement_gives_zero_gamma(reciprocal):
    res = extract(measure(reciprocal, ProtocolConfig()))
    assert res.params.gamma_nr < 1e-6 * reciprocal.kappa
    assert res.params.kappa == pytest.approx(reciprocal.kappa, rel=1e-6)


def test_unphysical_measurement_names_constraint(ms_a):
    # decay difference larger than any physical dissipator allows
    bad = replace(ms_a, kappa_g=ms_a.kappa_g * 30)
    with pytest.raises(NoPhysicalSolution) as exc:
        extract(bad)
    assert exc.value.constraint


def test_result_serialises(ms_a):
    d = extract(ms_a).to_dict()
    assert set(d["params"]) >= set(PARAMS) and set(d["derived"]) == set(DERIVED)


# ---- Monte Carlo

def test_zero_noise_gives_zero_uncertainty(ms_a):
    res = monte_carlo(ms_a, 2000)
    for lo, hi in res.uncertainty.values():
        assert lo == 0 and hi == 0


def test_mc_matches_linearised_propagation(ms_a):
    ms = with_noise(ms_a)
    res = monte_carlo(ms, 100_000, seed=1)
    lin = linearized_uncertainty(ms)
    for k in PARAMS:
        lo, hi = res.uncertainty[k]
        assert 0.5 * (lo + hi) == pytest.approx(lin[k], rel=0.1), k


def test_mc_bias_is_small(ms_a):
    ms = with_noise(ms_a, 0.25)
    res = monte_carlo(ms, 100_000, seed=2)
    point = extract(ms).params
    for k in PARAMS:
        lo, hi = res.uncertainty[k]
        assert abs(res.diagnostics["mc_centers"][k] - getattr(point, k)) < 0.1 * 0.5 * (lo + hi), k


def test_mc_independent_of_worker_count(ms_a):
    ms = with_noise(ms_a)
    a, ca = sample_extractions(ms, 25_000, seed=3, workers=1)
    b, cb = sample_extractions(ms, 25_000, seed=3, workers=4)
    assert np.array_equal(ca, cb)
    for k in PARAMS:
        assert np.array_equal(a[k], b[k])


def test_mc_is_seeded(ms_a):
    ms = with_noise(ms_a)
    a = monte_carlo(ms, 5000, seed=4)
    b = monte_carlo(ms, 5000, seed=4)
    assert a.to_dict() == b.to_dict()


def test_failed_samples_are_counted(ms_a):
    ms = replace(ms_a, sigmas={"kappa_g": 0.2 * ms_a.kappa_g})
    res = monte_carlo(ms, 20_000)
    assert res.diagnostics["n_physical"] + sum(res.diagnostics["failures"].values()) == 20_000
    assert res.diagnostics["physical"] == (res.diagnostics["n_physical"] == 20_000)


def test_too_few_valid_samples(ms_a):
    ms = replace(ms_a, sigmas={"kappa_g": 30 * ms_a.kappa_g, "kappa_e": 30 * ms_a.kappa_e})
    with pytest.raises(TooFewValidSamples):
        monte_carlo(ms, 5000)


def test_mc_rejects_small_runs(ms_a):
    with pytest.raises(ValueError):
        monte_carlo(ms_a, 500)


def test_onsager_consistency_end_to_end():
    net = flux_loop([0, 0, 0], [mhz(8), mhz(60), mhz(8)], math.pi / 2, [mhz(0.3), mhz(300), mhz(300)], mhz(150))
    out = []
    for k, n in enumerate((net, field_reverse(net))):
        cfg = ProtocolConfig(noise={o: 1e-3 for o in OBSERVABLES}, rng_seed=k)
        out.append(monte_carlo(measure(adiabatic_eliminate(n), cfg), 20_000, seed=k))
    fw, rv = out
    for k in SYMMETRIC:
        get = lambda r: getattr(r.params, k) if k in PARAMS else r.derived[k]
        unc = lambda r: max((r.uncertainty | r.derived_uncertainty)[k])
        assert abs(get(fw) - get(rv)) < 3 * math.hypot(unc(fw), unc(rv)), k


# ---- histogram summaries

def test_gaussian_fit_recovers_generator():
    x = np.random.default_rng(0).normal(1.5, 0.2, 100_000)
    g = fit_gaussian(x)
    assert g.center == pytest.approx(1.5, abs=0.03 * 0.2)
    assert g.sigma == pytest.approx(0.2, rel=0.03)
    assert g.goodness > GOODNESS_MIN


def test_constant_samples_are_degenerate():
    g = fit_gaussian(np.full(500, 2.5))
    assert g.degenerate and g.sigma == 0 and g.center == 2.5
    assert summarize(np.full(500, 2.5))["model"] == "degenerate"


def test_bimodal_samples_trigger_split_fit():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(0, 1, 50_000), rng.normal(6, 1, 50_000)])
    assert fit_gaussian(x).goodness < GOODNESS_MIN
    assert summarize(x)["model"] == "half-gaussian"


def test_histogram_needs_samples():
    with pytest.raises(ValueError):
        fit_gaussian(np.arange(50.0))


def test_half_gaussians_on_symmetric_data():
    x = np.random.default_rng(2).normal(0.0, 1.0, 100_000)
    h = fit_half_gaussians(x)
    g = fit_gaussian(x)
    assert h.sigma_low == pytest.approx(h.sigma_high, rel=0.05)
    assert h.sigma_low == pytest.approx(g.sigma, rel=0.05)
    assert h.center == pytest.approx(g.center, abs=0.05 * g.sigma)


def split_normal(rng, mode, lo, hi, n):
    z = np.abs(rng.standard_normal(n))
    left = rng.random(n) < lo / (lo + hi)
    return np.where(left, mode - lo * z, mode + hi * z)


def test_half_gaussians_on_skewed_data():
    x = split_normal(np.random.default_rng(3), 1.0, 0.03, 0.09, 100_000)
    h = fit_half_gaussians(x)
    assert h.sigma_low < h.sigma_high
    assert h.sigma_low == pytest.approx(0.03, rel=0.1)
    assert h.sigma_high == pytest.approx(0.09, rel=0.1)
    assert summarize(x)["model"] == "half-gaussian"


def test_mode_is_stable_under_rebinning():
    x = split_normal(np.random.default_rng(4), 0.0, 1.0, 2.0, 100_000)
    a, b = fit_half_gaussians(x, bins=50), fit_half_gaussians(x, bins=100)
    assert abs(a.center - b.center) < 0.2 * a.sigma_low


def test_histogram_table_counts_everything():
    x = np.random.default_rng(5).normal(size=1000)
    centers, counts = histogram_table(x)
    assert counts.sum() == 1000 and len(centers) == len(counts)


# ---- repeats

def _result(scale, sig):
    p = EffectiveParams(1.0 * scale, 0.5 * scale, 2.0 * scale, 1.0 * scale, 0.3, 0.1)
    unc = {k: (sig, sig) for k in PARAMS}
    derived = {k: getattr(p, k) for k in DERIVED}
    return ExtractionResult(p, derived, unc, {k: (sig, sig) for k in DERIVED})


def test_aggregate_single_passthrough():
    r = _result(1.0, 0.1)
    assert aggregate_repeats([r]) is r
    with pytest.raises(ValueError):
        aggregate_repeats([])


def test_aggregate_identical_repeats_keep_intrinsic_sigma():
    agg = aggregate_repeats([_result(1.0, 0.1)] * 4)
    assert agg.uncertainty["kappa"] == (0.1, 0.1)
    assert agg.params.kappa == pytest.approx(2.0)


def test_aggregate_scatter_wins_when_larger():
    rs = [_result(s, 1e-6) for s in (0.8, 1.0, 1.2, 1.4)]
    agg = aggregate_repeats(rs)
    kappas = np.array([r.params.kappa for r in rs])
    sem = np.std(kappas, ddof=1) / 2
    assert agg.uncertainty["kappa"][0] == pytest.approx(sem)
    assert agg.params.kappa == pytest.approx(kappas.mean())


# ---- time offset

@pytest.fixture(scope="module")
def theory():
    from nrdisp.presets import get_preset
    return ramsey_trace(get_preset("device-a"), 3.0, np.linspace(0, 1.0, 1001))


def _shifted(theory, shift, t):
    s = np.interp(t - shift, theory.times, theory.log_ratio.imag, left=0.0)
    z = np.interp(t - shift, theory.times, theory.log_ratio.real, left=0.0)
    return s, np.exp(z)


def test_recovers_known_offset(theory):
    t = np.linspace(0.02, 0.8, 80)
    phi, zeta = _shifted(theory, 0.033, t)
    assert fit_time_offset(theory, t, phi, zeta) == pytest.approx(0.033, abs=1e-3)


def test_zero_offset(theory):
    t = np.linspace(0.02, 0.8, 80)
    phi, zeta = _shifted(theory, 0.0, t)
    assert fit_time_offset(theory, t, phi, zeta) < 5e-4


def test_offset_with_noise(theory):
    t = np.linspace(0.02, 0.8, 80)
    phi, zeta = _shifted(theory, 0.033, t)
    rng = np.random.default_rng(6)
    phi = phi + 0.02 * np.sqrt(np.mean(phi ** 2)) * rng.standard_normal(len(t))
    lz = np.log(zeta)
    lz = lz + 0.02 * np.sqrt(np.mean(lz ** 2)) * rng.standard_normal(len(t))
    assert fit_time_offset(theory, t, phi, np.exp(lz)) == pytest.approx(0.033, abs=3e-3)


def test_offset_beyond_range_fails(theory):
    t = np.linspace(0.02, 0.8, 80)
    phi, zeta = _shifted(theory, 0.15, t)
    with pytest.raises(FitFailure):
        fit_time_offset(theory, t, phi, zeta)


def test_offset_needs_overlap(theory):
    with pytest.raises(FitFailure):
        fit_time_offset(theory, np.linspace(2.0, 3.0, 10), np.ones(10), np.ones(10) * 0.9)
    with pytest.raises(ValueError):
        fit_time_offset(TrajectoryRecord(np.arange(3.0), np.ones(3), np.ones(3)), np.arange(3.0), np.ones(3),
                        np.ones(3))


def test_truncated_distribution_falls_back_to_quantiles():
    x = np.random.default_rng(7).normal(0.0, 1.0, 50_000)
    x = np.minimum(x, 0.3)
    s = summarize(x)
    assert s["model"] in ("half-gaussian", "quantile")
    assert s["sigma_low"] > 0 and s["sigma_high"] >= 0
