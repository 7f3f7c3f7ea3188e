import numpy as np
import pytest

from gutzsim.model import (
    FermionTerm, ModelParams, build_lattice, d_eigenvalue, hamiltonian_terms, interaction_terms, kinetic_terms,
    triple_occupancy_terms,
)


@pytest.mark.parametrize("geometry,dims,n_site,n_edges", [
    ("chain-open", 4, 4, 3),
    ("chain-periodic", 4, 4, 4),
    ("chain-periodic", 2, 2, 1),  # both bonds join the same pair
    ("square-periodic", (2, 2), 4, 4),
    ("square-periodic", (3, 3), 9, 18),
    ("square-periodic", (4, 2), 8, 12),
])
def test_lattice_edges(geometry, dims, n_site, n_edges):
    lat = build_lattice(geometry, dims)
    assert lat.n_site == n_site
    assert len(lat.edges) == n_edges
    assert all(i < j for i, j in lat.edges)


def test_two_by_two_equals_periodic_four_chain_graph():
    sq = build_lattice("square-periodic", (2, 2)).hopping_matrix()
    ch = build_lattice("chain-periodic", 4).hopping_matrix()
    assert np.allclose(np.linalg.eigvalsh(sq), np.linalg.eigvalsh(ch))


@pytest.mark.parametrize("geometry,dims", [
    ("triangle", 3), ("chain-open", (2, 2)), ("square-periodic", 4), ("chain-open", 1), ("chain-open", 0),
])
def test_bad_lattices_rejected(geometry, dims):
    with pytest.raises(ValueError):
        build_lattice(geometry, dims)


def test_model_params_need_positive_hopping():
    with pytest.raises(ValueError):
        ModelParams(U=-1, J=0)


def test_term_counts_and_coefficients():
    lat = build_lattice("chain-open", 3)
    terms = hamiltonian_terms(lat, ModelParams(U=-2, J=0.5))
    hops = [t for t in terms if t.kind == "hop"]
    pairs = [t for t in terms if t.kind == "pair-density"]
    assert len(hops) == 2 * 3 and all(t.coefficient == -0.5 for t in hops)
    assert len(pairs) == 3 * 3 and all(t.coefficient == -2 for t in pairs)
    assert len(kinetic_terms(lat)) == 6 and len(interaction_terms(lat)) == 9
    assert len(triple_occupancy_terms(lat)) == 3


def test_malformed_terms_rejected():
    with pytest.raises(ValueError):
        FermionTerm("hop", (1, 1), (0,), 1.0)
    with pytest.raises(ValueError):
        FermionTerm("pair-density", (0,), (1, 1), 1.0)
    with pytest.raises(ValueError):
        FermionTerm("spin-flip", (0,), (0,), 1.0)


def test_d_eigenvalues():
    assert d_eigenvalue([(1, 1, 1), (0, 0, 0)]) == pytest.approx(1.5)
    assert d_eigenvalue([(1, 1, 0), (0, 0, 1)]) == pytest.approx(-0.5)
    assert d_eigenvalue([(1, 0, 0)]) == pytest.approx(-0.25)
