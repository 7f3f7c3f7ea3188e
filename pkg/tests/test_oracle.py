import math

import numpy as np
import pytest

from conftest import number_op
from gutzsim import oracle
from gutzsim.encoding import uniform
from gutzsim.gutzwiller import standard_observables
from gutzsim.model import build_lattice
from gutzsim.trialstate import fermi_sea_state, prepare_bcs

TWO = build_lattice("chain-open", 2)


def dense_D(n_site):
    n = 3 * n_site
    lab = uniform(n_site)
    eye = np.eye(2**n)
    D = np.zeros((2**n, 2**n))
    for i in range(n_site):
        for a, b in [(0, 1), (0, 2), (1, 2)]:
            D += (number_op(lab.qubit(i, a), n).real - eye / 2) @ (number_op(lab.qubit(i, b), n).real - eye / 2)
    return D


def test_d_table_matches_dense_operator():
    assert np.allclose(oracle.d_table(2), np.diag(dense_D(2)))


def test_exp_gd_factors():
    g = -0.8
    lab = uniform(2)
    triple = sum(1 << lab.qubit(0, c) for c in range(3))
    double = (1 << lab.qubit(0, 0)) | (1 << lab.qubit(0, 1)) | (1 << lab.qubit(1, 2))
    amps = np.zeros(64)
    amps[[triple, double]] = 1
    out = oracle.apply_exp_gD(amps, g)
    assert out[triple] == pytest.approx(math.exp(-1.5 * g))
    assert out[double] == pytest.approx(math.exp(0.5 * g))
    assert np.allclose(oracle.apply_exp_gD(amps, 0.0), amps)


def test_two_site_closed_forms_against_dense():
    psi = fermi_sea_state(TWO)
    obs = standard_observables(TWO)
    for U in (-0.5, -1.0, -2.0):
        cf = oracle.two_site_closed_forms(U)
        for g in (0.0, -0.3, -1.0, -2.5):
            e = oracle.gutzwiller_expectation_exact(obs["K"], g, psi) + U * oracle.gutzwiller_expectation_exact(
                obs["D"], g, psi)
            assert e == pytest.approx(cf.energy(g), abs=1e-12)
            assert oracle.success_probability(psi, g) == pytest.approx(0.25 + 0.75 * math.exp(4 * g), abs=1e-14)


def test_closed_form_examples():
    cf = oracle.two_site_closed_forms(-1.0)
    assert cf.g_opt == pytest.approx(-0.25 * math.log(3), abs=1e-15)
    assert cf.e_opt == pytest.approx(-(3 + 2 * math.sqrt(3)) / 2)
    assert cf.energy(0.0) == pytest.approx(-3.0)
    assert oracle.two_site_closed_forms(0.0).g_opt == pytest.approx(0.0, abs=1e-15)
    h = 1e-5
    assert abs(cf.energy(cf.g_opt + h) - cf.energy(cf.g_opt - h)) / (2 * h) < 1e-8
    assert cf.energy(cf.g_opt) == pytest.approx(cf.e_opt, abs=1e-12)
    with pytest.raises(ValueError):
        oracle.two_site_closed_forms(-1.0, J=0.0)


def test_fermi_sea_expectation_examples():
    psi = fermi_sea_state(TWO)
    obs = standard_observables(TWO)
    assert oracle.gutzwiller_expectation_exact(obs["K"], 0.0, psi) == pytest.approx(-3.0)
    p3 = oracle.diagonal_expectation(oracle.triple_table(2), 0.0, psi)
    assert p3 / 2 == pytest.approx(0.125)
    assert oracle.diagonal_expectation(oracle.d_table(2), -12.0, psi) == pytest.approx(1.5, abs=1e-9)


def test_exact_ground_energy():
    assert oracle.exact_ground_energy(TWO, -1.0) == pytest.approx(-(3 + 2 * math.sqrt(3)) / 2, abs=1e-12)
    assert oracle.exact_ground_energy(TWO, 0.0) == pytest.approx(-3.0, abs=1e-12)


def test_variational_upper_bound_four_sites():
    lat = build_lattice("chain-open", 4)
    psi = fermi_sea_state(lat)
    obs = standard_observables(lat)
    U = -1.0
    e0 = oracle.exact_ground_energy(lat, U)
    energies = [oracle.gutzwiller_expectation_exact(obs["K"], g, psi)
                + U * oracle.diagonal_expectation(oracle.d_table(4), g, psi) for g in np.linspace(-3, 0, 31)]
    assert min(energies) >= e0 - 1e-10
    assert min(energies) - e0 < 0.5


def test_derivative_identity():
    psi = fermi_sea_state(build_lattice("chain-open", 4))
    for g in (-0.2, -1.0):
        h = 1e-5
        fd = -0.5 * (oracle.normalization(psi, g + h) - oracle.normalization(psi, g - h)) / (2 * h)
        phi = oracle.apply_exp_gD(psi, g)
        direct = float(np.vdot(phi, oracle.d_table(4) * phi).real)
        assert fd == pytest.approx(direct, rel=1e-6)


def test_success_logderivative_matches_finite_difference():
    psi = fermi_sea_state(build_lattice("chain-open", 4))
    g, h = -0.7, 1e-6
    fd = -(math.log(oracle.success_probability(psi, g + h)) - math.log(oracle.success_probability(psi, g - h))) / (2 * h)
    assert oracle.success_logderivative(g, psi) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("delta", [0.0, 0.4, -0.4, 1.3])
def test_bcs_closed_forms_against_dense(delta):
    lat = build_lattice("chain-periodic", 2)
    psi = prepare_bcs(lat, delta).amplitudes
    u2 = 0.5 * (1 - 1 / math.sqrt(1 + delta**2))  # k = 0 has eps = -J
    u, v = math.sqrt(u2), math.sqrt(1 - u2)
    obs = standard_observables(lat)
    from gutzsim.statevector import pauli_sum_sparse

    Kd = pauli_sum_sparse(obs["K"], 6).toarray()
    Dd = dense_D(2)
    U = -1.3
    cf = oracle.two_site_closed_forms(U)
    for g in (0.0, -0.4, -1.5):
        phi = oracle.apply_exp_gD(psi, g)
        assert np.vdot(phi, phi).real == pytest.approx(cf.bcs_normalization(g, u, v), abs=1e-12)
        assert np.vdot(phi, Kd @ phi).real == pytest.approx(cf.bcs_kinetic(g, u, v), abs=1e-12)
        assert np.vdot(phi, U * Dd @ phi).real == pytest.approx(cf.bcs_interaction(g, u, v), abs=1e-12)
        if delta == 0.0:
            assert cf.bcs_energy(g, u, v) == pytest.approx(cf.energy(g), abs=1e-14)
