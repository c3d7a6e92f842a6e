import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrdisp.core import mhz
from nrdisp.dynamics import free_decay_closed_form
from nrdisp.errors import ConfigError, SingularAtFrequency
from nrdisp.network import (ASYMMETRIC, SYMMETRIC, MultimodeNetwork, adiabatic_eliminate, effective_energies,
                            field_reverse, flux_loop, full_system_coherence, onsager_report, random_network,
                            susceptibility, validate_hierarchy)

seeds = st.integers(0, 2 ** 32 - 1)


def chain(lambda0=mhz(60)):
    h = np.array([[0, mhz(10)], [mhz(10), mhz(300)]])
    return MultimodeNetwork(h, np.diag([mhz(0.5), mhz(200)]), 0, 1, lambda0)


def loop(flux=math.pi / 2, lambda0=mhz(150)):
    return flux_loop([0, 0, 0], [mhz(8), mhz(60), mhz(8)], flux, [mhz(0.3), mhz(300), mhz(300)], lambda0)


# ---- construction

def test_validation_errors():
    with pytest.raises(ConfigError):
        MultimodeNetwork(np.array([[0, 1j], [1j, 0]]), np.eye(2))
    with pytest.raises(ConfigError):
        MultimodeNetwork(np.zeros((2, 2)), np.diag([1.0, -1.0]))
    with pytest.raises(ConfigError):
        MultimodeNetwork(np.zeros((2, 2)), np.eye(3))
    with pytest.raises(ConfigError):
        MultimodeNetwork(np.zeros((2, 2)), np.eye(2), cavity_index=1, qubit_mode_index=1)
    with pytest.raises(ConfigError):
        MultimodeNetwork(np.zeros((1, 1)), np.eye(1))
    with pytest.raises(ConfigError):
        MultimodeNetwork(np.zeros((2, 2)), np.eye(2), lambda0=math.nan)


def test_json_round_trip_and_load(tmp_path):
    net = loop()
    again = MultimodeNetwork.from_dict(json.loads(json.dumps(net.to_dict())))
    np.testing.assert_array_equal(again.h_mat, net.h_mat)
    path = tmp_path / "net.json"
    path.write_text(json.dumps({"units": "mhz", "h_mat": [[0, [1, 2]], [[1, -2], 3]],
                                "gamma_mat": [[1, 0], [0, 2]], "lambda0": 0.5}))
    loaded = MultimodeNetwork.load(path)
    assert loaded.h_mat[0, 1] == pytest.approx(mhz(1) + 2j * mhz(1))
    assert loaded.lambda0 == pytest.approx(mhz(0.5))


def test_load_rejects_non_hermitian(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"h_mat": [[0, [1, 2]], [[1, 2], 0]], "gamma_mat": [[1, 0], [0, 1]]}))
    with pytest.raises(ConfigError):
        MultimodeNetwork.load(path)
    with pytest.raises(ConfigError):
        MultimodeNetwork.from_dict({"h_mat": [[0, 0], [0, 0]]})


# ---- susceptibility

def test_single_mode_susceptibility():
    net = MultimodeNetwork(np.diag([2.0, 50.0]), np.diag([0.4, 1.0]))
    chi = susceptibility(net, 1.3)
    assert chi[0, 0] == pytest.approx(1 / (1.3 - 2.0 + 0.2j), rel=1e-14)
    assert chi[0, 1] == 0


def test_hermitian_resolvent_is_normal():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    net = MultimodeNetwork(z + z.conj().T, np.zeros((3, 3)))
    chi = susceptibility(net, 0.123).chi
    np.testing.assert_allclose(chi @ chi.conj().T, chi.conj().T @ chi, atol=1e-12)


@given(seeds, st.floats(-30, 30))
def test_susceptibility_residual(seed, omega):
    net = random_network(np.random.default_rng(seed))
    chi = susceptibility(net, omega).chi
    M = omega * np.eye(3) - net.h_mat + 0.5j * net.gamma_mat
    assert np.abs(chi @ M - np.eye(3)).max() < 1e-10


@given(seeds, st.floats(-30, 30))
def test_susceptibility_onsager_relation(seed, omega):
    net = random_network(np.random.default_rng(seed))
    a = susceptibility(net, omega).chi
    b = susceptibility(field_reverse(net), omega).chi
    assert np.abs(a - b.T).max() < 1e-12 * max(1.0, np.abs(a).max())


def test_singular_frequency():
    net = MultimodeNetwork(np.diag([1.0, 5.0]), np.zeros((2, 2)))
    with pytest.raises(SingularAtFrequency):
        susceptibility(net, 1.0)


# ---- adiabatic elimination

def test_no_dispersive_coupling_decouples_qubit():
    net = loop(lambda0=0.0)
    e_up, e_dn, coeff = effective_energies(net)
    assert e_up == e_dn and coeff == 0
    p = adiabatic_eliminate(net)
    assert p.lam == 0 and abs(p.gamma_sin_theta) < 1e-12


def test_reciprocal_chain_gamma_sin_theta_is_orientation_independent():
    net = chain()
    assert np.array_equal(field_reverse(net).h_mat, net.h_mat)
    r = onsager_report(net)
    assert r.passed
    assert r.asymmetry("gamma_sin_theta") < 1e-12


def test_reciprocal_chain_phase_matches_full_system():
    net = chain()
    p = adiabatic_eliminate(net)
    t = np.linspace(0, 0.4, 41)
    full = full_system_coherence(net, 0.05, t, levels=[7, 3]).log_ratio.imag
    late = t >= 3 / mhz(200)

    def err(q):
        eff = free_decay_closed_form(q, 0.05, t).imag
        return np.max(np.abs(full[late] - eff[late])) / np.max(np.abs(full))

    assert err(p) < 0.03
    # dropping the eliminated Gamma sin(theta) is visibly wrong
    assert err(p.replace(theta=0.0)) > 0.1


def test_flux_loop_is_non_reciprocal():
    p = adiabatic_eliminate(loop())
    q = adiabatic_eliminate(field_reverse(loop()))
    assert abs(p.gamma_sin_theta - q.gamma_sin_theta) > 1.0
    assert onsager_report(loop()).passed


@given(st.floats(0.0, 2 * math.pi))
@settings(max_examples=30)
def test_field_reverse_is_an_involution(flux):
    net = loop(flux)
    twice = field_reverse(field_reverse(net))
    np.testing.assert_array_equal(twice.h_mat, net.h_mat)
    np.testing.assert_array_equal(twice.gamma_mat, net.gamma_mat)


def test_real_symmetric_network_is_self_reverse():
    net = loop(flux=0.0)
    rev = field_reverse(net)
    np.testing.assert_array_equal(rev.h_mat, net.h_mat)
    np.testing.assert_array_equal(rev.gamma_mat, net.gamma_mat)


def test_reversal_conjugates_hopping_phase():
    net = loop(flux=0.7)
    assert field_reverse(net).h_mat[2, 0] == pytest.approx(net.h_mat[2, 0].conjugate())


@given(seeds)
def test_onsager_symmetric_combinations(seed):
    r = onsager_report(random_network(np.random.default_rng(seed)), tol=1e-10)
    assert r.passed, r.to_dict()["checks"]
    assert set(r.to_dict()["informational"]) == set(ASYMMETRIC)
    assert set(r.checks) == set(SYMMETRIC)


def test_small_coupling_scales_linearly():
    base = loop(lambda0=mhz(0.2))
    half = loop(lambda0=mhz(0.1))
    p, q = adiabatic_eliminate(base), adiabatic_eliminate(half)
    assert p.lam / q.lam == pytest.approx(2.0, rel=0.02)
    assert p.gamma_sin_theta / q.gamma_sin_theta == pytest.approx(2.0, rel=0.02)


# ---- hierarchy

def test_hierarchy_examples():
    assert validate_hierarchy(mhz(1668), mhz(50), mhz(20)).passed
    assert not validate_hierarchy(0.0, mhz(50), mhz(20)).passed
    edge = validate_hierarchy(10 * mhz(50), mhz(50), mhz(20))
    assert edge.passed and edge.ratio == pytest.approx(10)
    bad = validate_hierarchy(mhz(100), mhz(50), mhz(20))
    assert not bad.passed and "< 10" in bad.message


def test_full_system_needs_one_dimension_per_mode():
    with pytest.raises(ConfigError):
        full_system_coherence(chain(), 0.1, [0, 0.1], levels=[3])
