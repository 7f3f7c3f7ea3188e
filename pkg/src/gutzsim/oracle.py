"""Exact reference engines.

Everything here works on color-uniform register states and evaluates the
Gutzwiller operator as a diagonal, with no auxiliary fields or circuits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .encoding import jw_terms, uniform
from .model import LatticeSpec, ModelParams, hamiltonian_terms
from .statevector import StateVector, expectation_pauli, pauli_sum_sparse


def _as_array(state) -> np.ndarray:
    return state.amplitudes if isinstance(state, StateVector) else np.asarray(state)


def _n_site_of(amps: np.ndarray) -> int:
    n_qubits = int(round(math.log2(amps.shape[-1])))
    if n_qubits % 3:
        raise ValueError("register size must be a multiple of 3")
    return n_qubits // 3


@lru_cache(maxsize=8)
def occupation_table(n_site: int) -> np.ndarray:
    """Array ``occ[x, site, color]`` of mode occupations for every basis index (color-uniform)."""
    x = np.arange(2 ** (3 * n_site), dtype=np.int64)
    occ = np.empty((x.size, n_site, 3), dtype=np.int8)
    for c in range(3):
        for i in range(n_site):
            occ[:, i, c] = (x >> (c * n_site + i)) & 1
    return occ


@lru_cache(maxsize=8)
def d_table(n_site: int) -> np.ndarray:
    """Eigenvalue of D on every basis state (read-only)."""
    z = occupation_table(n_site).astype(float) - 0.5
    d = (z[:, :, 0] * z[:, :, 1] + z[:, :, 0] * z[:, :, 2] + z[:, :, 1] * z[:, :, 2]).sum(axis=1)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=8)
def triple_table(n_site: int) -> np.ndarray:
    t = occupation_table(n_site).all(axis=2).sum(axis=1).astype(float)
    t.setflags(write=False)
    return t


def apply_exp_gD(state, g: float) -> np.ndarray:
    """``exp(-g D)`` applied elementwise; the result is not normalized."""
    amps = _as_array(state)
    return amps * np.exp(-g * d_table(_n_site_of(amps)))


def normalization(state, g: float) -> float:
    """<psi0| exp(-2 g D) |psi0>."""
    amps = _as_array(state)
    return float(np.sum(np.abs(amps) ** 2 * np.exp(-2 * g * d_table(_n_site_of(amps)))))


def gutzwiller_state(state, g: float) -> StateVector:
    phi = apply_exp_gD(state, g)
    return StateVector(phi / np.linalg.norm(phi))


def gutzwiller_expectation_exact(observable, g: float, trial) -> float:
    """<psi0| e^{-gD} O e^{-gD} |psi0> / <psi0| e^{-2gD} |psi0> for a Pauli-string list ``O``."""
    return expectation_pauli(gutzwiller_state(trial, g), observable)


def diagonal_expectation(values: np.ndarray, g: float, trial) -> float:
    """Same as :func:`gutzwiller_expectation_exact` for an observable given by its diagonal."""
    amps = _as_array(trial)
    w = np.abs(amps) ** 2 * np.exp(-2 * g * d_table(_n_site_of(amps)))
    return float(np.dot(w, values) / w.sum())


def success_probability(trial, g: float) -> float:
    """p0 = exp(3/2 g N) <exp(-2gD)>."""
    amps = _as_array(trial)
    return math.exp(1.5 * g * _n_site_of(amps)) * normalization(amps, g)


def success_logderivative(g: float, trial) -> float:
    """d log p0 / d|g| = -3/2 N + 2 <D>_g."""
    amps = _as_array(trial)
    n = _n_site_of(amps)
    return -1.5 * n + 2.0 * diagonal_expectation(d_table(n), g, amps)


# Exact diagonalization -------------------------------------------------------

def sector_basis(n_site: int, per_color: tuple[int, int, int]) -> np.ndarray:
    """Sorted basis indices with the given particle number in each color block."""
    occ = occupation_table(n_site)
    keep = np.all(occ.sum(axis=1) == np.asarray(per_color), axis=1)
    return np.flatnonzero(keep)


def exact_ground_energy(lattice: LatticeSpec, U: float, J: float = 1.0, n_per_color: int | None = None) -> float:
    """Lowest eigenvalue of the JW-encoded Hamiltonian with ``n_per_color`` fermions of each color."""
    n = lattice.n_site
    if 3 * n > 24:
        raise ValueError("exact diagonalization limited to 24 modes")
    nf = n // 2 if n_per_color is None else n_per_color
    basis = sector_basis(n, (nf, nf, nf))
    strings = jw_terms(hamiltonian_terms(lattice, ModelParams(U=U, J=J)), uniform(n))
    h = pauli_sum_sparse(strings, 3 * n, basis)
    if h.shape[0] <= 2000:
        return float(np.linalg.eigvalsh(h.toarray().real)[0])
    from scipy.sparse.linalg import eigsh

    return float(eigsh(h.real, k=1, which="SA", tol=1e-12)[0][0])


# Two-site closed forms -------------------------------------------------------

@dataclass(frozen=True)
class ClosedFormSet:
    """Analytic two-site results for the half-filled Fermi sea (and BCS variants)."""

    U: float
    J: float = 1.0

    def energy(self, g: float) -> float:
        U, J = self.U, self.J
        return (-12 * J * math.cosh(g) - 3 * U * math.exp(-g) * math.sinh(2 * g)) / (
            math.exp(-3 * g) + 3 * math.exp(g))

    @property
    def g_opt(self) -> float:
        U, J = self.U, self.J
        return 0.5 * math.log((U + J + math.sqrt((U + J) ** 2 + 3 * J**2)) / (3 * J))

    @property
    def e_opt(self) -> float:
        U, J = self.U, self.J
        return 0.5 * (U - 2 * J - 2 * math.sqrt((U + J) ** 2 + 3 * J**2))

    @staticmethod
    def p0(g: float) -> float:
        return 0.25 + 0.75 * math.exp(4 * g)

    # BCS pieces; u, v are the k=0 coherence factors.
    def bcs_kinetic(self, g: float, u: float, v: float) -> float:
        """<psi0| e^{-gD} K e^{-gD} |psi0> (unnormalized)."""
        J = self.J
        return -3 * J * math.cosh(g) + 4 * J * u**2 * (math.cosh(g) + v**2 * math.sinh(g))

    def bcs_interaction(self, g: float, u: float, v: float) -> float:
        """<psi0| e^{-gD} U D e^{-gD} |psi0> (unnormalized)."""
        U = self.U
        return -0.75 * U * math.exp(-g) * math.sinh(2 * g) + 2 * u**2 * v**2 * U * math.cosh(g)

    @staticmethod
    def bcs_normalization(g: float, u: float, v: float) -> float:
        return 0.25 * (math.exp(-3 * g) + 3 * math.exp(g)) - 4 * u**2 * v**2 * math.sinh(g)

    def bcs_energy(self, g: float, u: float, v: float) -> float:
        return (self.bcs_kinetic(g, u, v) + self.bcs_interaction(g, u, v)) / self.bcs_normalization(g, u, v)


def two_site_closed_forms(U: float, J: float = 1.0) -> ClosedFormSet:
    if not J > 0:
        raise ValueError("J must be positive")
    return ClosedFormSet(U, J)
