import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import annihilator, random_state
from gutzsim import oracle
from gutzsim.encoding import uniform
from gutzsim.gutzwiller import hs_params, standard_observables
from gutzsim.model import COLOR_PAIRS, build_lattice
from gutzsim.sampling import (
    WEIGHT_FLOOR, AuxFieldConfig, EstimatorRecord, McConfig, NonpositiveWeightError, WeightTables, build_tables,
    chain_seeds, config_histogram, enumerate_expectations, hadamard_matrix_element, local_estimator,
    metropolis_sweep, run_chain, run_chains, sweep_schedule, weight,
)
from gutzsim.trialstate import fermi_sea_state, prepare_bcs

TWO = build_lattice("chain-open", 2)
PSI2 = fermi_sea_state(TWO)


def dense_layer(fields, lam, n_site):
    """Ordered product of exp(s lam (c_a^dag c_b - h.c.)) from dense matrices."""
    n = 3 * n_site
    lab = uniform(n_site)
    u = np.eye(2**n)
    for i in range(n_site):
        for p, (a, b) in enumerate(COLOR_PAIRS):
            ca, cb = annihilator(lab.qubit(i, a), n).real, annihilator(lab.qubit(i, b), n).real
            u = expm(fields[i, p] * lam * (ca.T @ cb - cb.T @ ca)) @ u
    return u


def dense_weight(cfg, psi, g):
    lam = hs_params(g).lam
    u1 = dense_layer(cfg.s[:, :, 0], lam, cfg.n_site)
    u2 = dense_layer(cfg.s[:, :, 1], lam, cfg.n_site)
    return float(psi @ u2 @ u1 @ psi)


def test_weight_is_one_at_zero_coupling():
    rng = np.random.default_rng(0)
    for _ in range(5):
        cfg = AuxFieldConfig.from_indices(2, *rng.integers(0, 64, 2))
        assert weight(cfg, PSI2, 0.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("g", [-0.5, -2.0])
def test_weight_matches_dense_oracle(g):
    psi = PSI2.amplitudes.real
    assert weight(AuxFieldConfig.ones(2), PSI2, g) == pytest.approx(dense_weight(AuxFieldConfig.ones(2), psi, g),
                                                                    abs=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(4):
        cfg = AuxFieldConfig.from_indices(2, *rng.integers(0, 64, 2))
        assert weight(cfg, PSI2, g) == pytest.approx(dense_weight(cfg, psi, g), abs=1e-12)


@pytest.mark.parametrize("g", [-0.25, -1.0, -3.0])
def test_two_site_weights_are_positive(g):
    t = build_tables(TWO, PSI2, g)
    assert t.W.shape == (64, 64)
    assert t.min_weight() > WEIGHT_FLOOR
    assert t.probabilities().sum() == pytest.approx(1.0)


def test_local_estimators_basic():
    cfg = AuxFieldConfig.from_indices(2, 5, 40)
    assert local_estimator(cfg, "I", PSI2, -1.0) == 1.0
    # with g = 0 every layer is the identity: local D is <psi0|D|psi0> = 0 for the sea
    assert local_estimator(cfg, "D", PSI2, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert local_estimator(cfg, "K", PSI2, 0.0, lattice=TWO) == pytest.approx(-3.0)
    with pytest.raises(ValueError):
        local_estimator(cfg, "K", PSI2, -1.0)
    with pytest.raises(ValueError):
        local_estimator(cfg, "Q", PSI2, -1.0)


def test_tables_match_direct_evaluation():
    g = -1.3
    t = build_tables(TWO, PSI2, g)
    obs = standard_observables(TWO)
    rng = np.random.default_rng(2)
    for i1, i2 in rng.integers(0, 64, (6, 2)):
        cfg = AuxFieldConfig.from_indices(2, i1, i2)
        assert cfg.indices() == (i1, i2)
        w = weight(cfg, PSI2, g)
        assert t.W[i1, i2] == pytest.approx(w, abs=1e-13)
        for name in ("K", "D", "P3"):
            direct = local_estimator(cfg, name, PSI2, g, lattice=TWO)
            assert t.numerators[name][i1, i2] / w == pytest.approx(direct, abs=1e-11)
        # the Hadamard-test form of the numerator agrees
        had = hadamard_matrix_element(cfg, obs["K"], PSI2, g)
        assert had / w == pytest.approx(local_estimator(cfg, "K", PSI2, g, lattice=TWO), abs=1e-11)


@pytest.mark.parametrize("g", [-0.3, -1.0, -2.5])
def test_exhaustive_sum_matches_oracle(g):
    obs = standard_observables(TWO)
    exact = enumerate_expectations(TWO, PSI2, g)
    for name in ("K", "D", "P3"):
        assert exact[name] == pytest.approx(oracle.gutzwiller_expectation_exact(obs[name], g, PSI2), abs=1e-12)


def test_exhaustive_sum_bcs():
    lat = build_lattice("chain-periodic", 2)
    psi = prepare_bcs(lat, 0.5)
    obs = standard_observables(lat)
    exact = enumerate_expectations(lat, psi, -0.8)
    for name in ("K", "D", "P3"):
        assert exact[name] == pytest.approx(oracle.gutzwiller_expectation_exact(obs[name], -0.8, psi), abs=1e-12)
    with pytest.raises(ValueError):
        enumerate_expectations(build_lattice("chain-open", 3), fermi_sea_state(build_lattice("chain-open", 3)), -1)


@pytest.mark.slow
def test_four_site_table_sum_matches_oracle():
    lat = build_lattice("chain-open", 4)
    psi = fermi_sea_state(lat)
    t = build_tables(lat, psi, -1.0)
    obs = standard_observables(lat)
    for name, v in t.exact_expectations().items():
        assert v == pytest.approx(oracle.gutzwiller_expectation_exact(obs[name], -1.0, psi), abs=1e-12)


def test_zero_coupling_accepts_everything():
    t = build_tables(TWO, PSI2, 0.0)
    res = run_chains(McConfig(50, 50, 4, seed=1), TWO, PSI2, 0.0, tables=t)
    assert res.acceptance == 1.0
    assert res.estimates["D"].mean == pytest.approx(0.0, abs=1e-14)
    assert res.estimates["D"].stderr == pytest.approx(0.0, abs=1e-14)
    assert res.estimates["K"].mean == pytest.approx(-3.0)


def test_sweep_schedule_order():
    sched = sweep_schedule(2)
    assert sched.shape == (12, 2)
    # site 0: pairs 12, 23, 13 (bits 0, 2, 1), each layer 1 then layer 2
    assert sched[:6].tolist() == [[0, 0], [1, 0], [0, 2], [1, 2], [0, 1], [1, 1]]


def test_chain_is_stationary_on_a_random_table():
    # one site: 64 configurations with arbitrary positive weights
    W = np.random.default_rng(12).uniform(0.05, 2.0, (8, 8))
    t = WeightTables(1, -1.0, W, {})
    counts = config_histogram(t, 1_000_000, seed=13)
    assert tv_distance(counts, t.probabilities()) < 0.01


def tv_distance(counts, P):
    return 0.5 * np.abs(counts / counts.sum() - P).sum()


@pytest.mark.slow
def test_chain_visits_follow_the_weights():
    t = build_tables(TWO, PSI2, -1.0)
    P = t.probabilities()
    # iid baseline: the TV distance an exact sampler shows at the same sample size
    rng = np.random.default_rng(4)
    base = np.mean([tv_distance(rng.multinomial(100_000, P.ravel()), P.ravel()) for _ in range(20)])
    tv_short = tv_distance(config_histogram(t, 100_000, seed=5), P)
    assert tv_short < 1.2 * base
    tv_long = tv_distance(config_histogram(t, 2_000_000, seed=6), P)
    assert tv_long < 0.02


def test_chains_are_reproducible():
    mc = McConfig(100, 200, 4, seed=42)
    a = run_chains(mc, TWO, PSI2, -1.0)
    b = run_chains(mc, TWO, PSI2, -1.0)
    for name in a.estimates:
        assert np.array_equal(a.estimates[name].chain_means, b.estimates[name].chain_means)
    c = run_chains(McConfig(100, 200, 4, seed=43), TWO, PSI2, -1.0)
    assert not np.array_equal(a.estimates["K"].chain_means, c.estimates["K"].chain_means)


def test_chain_seeds_do_not_consume_the_parent():
    ss = np.random.SeedSequence(9)
    first = [s.generate_state(1)[0] for s in chain_seeds(ss, 3)]
    second = [s.generate_state(1)[0] for s in chain_seeds(ss, 3)]
    assert first == second
    assert first == [s.generate_state(1)[0] for s in chain_seeds(9, 3)]


def test_mc_estimate_is_close_to_exact():
    g = -1.0
    t = build_tables(TWO, PSI2, g)
    exact = t.exact_expectations()
    res = run_chains(McConfig(500, 2000, 16, seed=7), TWO, PSI2, g, tables=t)
    for name in ("K", "D", "P3"):
        rec = res.estimates[name]
        assert abs(rec.mean - exact[name]) < 4 * rec.stderr
    assert 0 < res.acceptance < 1


def test_estimator_record():
    rec = EstimatorRecord.from_chains([1.0, 2.0, 3.0, 4.0])
    assert rec.mean == 2.5
    assert rec.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert math.isnan(EstimatorRecord.from_chains([1.0]).stderr)


def synthetic_tables(bad_value):
    W = np.ones((8, 8))
    W[1, 0] = bad_value
    return WeightTables(1, -1.0, W, {})


def test_negative_weight_aborts():
    t = synthetic_tables(-0.5)
    with pytest.raises(NonpositiveWeightError, match="phase-problem breach"):
        metropolis_sweep(AuxFieldConfig.from_indices(1, 0, 0), t, np.random.default_rng(0))
    with pytest.raises(NonpositiveWeightError):
        t.check_positive()


def test_zero_weight_is_rejected_not_fatal():
    W = np.random.default_rng(1).uniform(0.5, 1.5, (8, 8))
    W[1, :] = 1e-16  # every configuration with layer-1 index 1 is numerically zero
    t = WeightTables(1, -1.0, W, {})
    for seed in range(5):
        out = metropolis_sweep(AuxFieldConfig.from_indices(1, 0, 0), t, np.random.default_rng(seed))
        assert out.indices()[0] != 1
    res = run_chain(t, McConfig(200, 200, 1), np.random.SeedSequence(0), [])
    assert res.zero_weight_proposals > 0


def test_direct_weight_raises_for_indefinite_trial():
    # a generic real state is not protected against sign problems
    psi = random_state(6, np.random.default_rng(8), real=True)
    raised = 0
    rng = np.random.default_rng(9)
    for _ in range(40):
        cfg = AuxFieldConfig.from_indices(2, *rng.integers(0, 64, 2))
        try:
            weight(cfg, psi, -3.0)
        except NonpositiveWeightError:
            raised += 1
    assert raised > 0
    with pytest.raises(ValueError):
        weight(AuxFieldConfig.ones(2), psi * 1j, -1.0)


def test_trace_dump(tmp_path):
    res = run_chains(McConfig(10, 25, 2, seed=3), TWO, PSI2, -1.0)
    paths = res.dump_traces(tmp_path / "g-1")
    assert len(paths) == 2
    with open(paths[1]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sweep", "weight", "O_K", "O_D", "O_P3"]
    assert len(rows) == 26 and rows[1][0] == "1"
    trace = res.chains[1].trace
    assert float(rows[25][3]) == pytest.approx(trace[24, 2], rel=1e-10)
    assert np.mean(trace[:, 1]) == pytest.approx(res.chains[1].means["K"])


def test_bad_configs_rejected():
    with pytest.raises(ValueError):
        AuxFieldConfig(np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        McConfig(n_chains=0)
    with pytest.raises(ValueError):
        build_tables(build_lattice("chain-open", 5), fermi_sea_state(build_lattice("chain-open", 5)), -1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.data())
def test_config_index_roundtrip(n_site, data):
    size = 1 << (3 * n_site)
    i1 = data.draw(st.integers(0, size - 1))
    i2 = data.draw(st.integers(0, size - 1))
    cfg = AuxFieldConfig.from_indices(n_site, i1, i2)
    assert cfg.indices() == (i1, i2)
    site, pair, layer = data.draw(st.integers(0, n_site - 1)), data.draw(st.integers(0, 2)), data.draw(st.integers(0, 1))
    f = cfg.flipped(site, pair, layer).indices()
    bit = 1 << (3 * site + pair)
    assert f == ((i1 ^ bit, i2) if layer == 0 else (i1, i2 ^ bit))
