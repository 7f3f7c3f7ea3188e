"""Trial states: Fermi seas prepared by Givens networks, BCS-like states built classically."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoding import QubitLabeling, qubit_index, uniform
from .model import LatticeSpec
from .statevector import FGIVENS, X, Circuit, StateVector, run_circuit

_DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class TrialStateSpec:
    """``kind`` is ``fermi-sea`` or ``bcs``.

    ``particles`` is the number of fermions per color for the Fermi sea and
    the color-3 filling for the BCS state; ``None`` means half filling
    (``n_site // 2``).
    """

    kind: str = "fermi-sea"
    particles: int | None = None
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fermi-sea", "bcs"):
            raise ValueError(f"unknown trial state kind {self.kind!r}")

    def filling(self, n_site: int) -> int:
        n = n_site // 2 if self.particles is None else self.particles
        if not 0 <= n <= n_site:
            raise ValueError(f"filling {n} outside [0, {n_site}]")
        return n


def single_particle_orbitals(lattice: LatticeSpec, J: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the hopping matrix, ascending.  Rows of the second array are orbitals.

    Inside a degenerate level the basis is made canonical: Gram-Schmidt over the
    columns of the level projector in site order, each vector signed so its
    first nonzero entry is positive, then sorted lexicographically.
    """
    h = lattice.hopping_matrix(J)
    w, v = np.linalg.eigh(h)
    energies, vectors = [], []
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[start] < _DEGENERACY_TOL:
            stop += 1
        block = v[:, start:stop]
        basis = _canonical_basis(block) if stop - start > 1 else [_fix_sign(block[:, 0])]
        energies.extend([float(np.mean(w[start:stop]))] * len(basis))
        vectors.extend(basis)
        start = stop
    return np.array(energies), np.array(vectors)


def _fix_sign(x: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(x) > 1e-12)
    return -x if nz.size and x[nz[0]] < 0 else x


def _canonical_basis(block: np.ndarray) -> list[np.ndarray]:
    proj = block @ block.T
    basis: list[np.ndarray] = []
    for col in proj.T:
        r = col.copy()
        for b in basis:
            r -= (b @ r) * b
        nrm = np.linalg.norm(r)
        if nrm > 1e-8:
            basis.append(r / nrm)
        if len(basis) == block.shape[1]:
            break
    basis = [_fix_sign(b) for b in basis]
    basis.sort(key=lambda b: tuple(np.round(b, 10)))
    return basis


def check_orthonormal_rows(Q: np.ndarray, tol: float = 1e-12) -> None:
    Q = np.atleast_2d(Q)
    if np.max(np.abs(Q @ Q.conj().T - np.eye(Q.shape[0])), initial=0.0) > tol:
        raise ValueError("orbital matrix rows are not orthonormal")


def givens_decomposition(Q: np.ndarray) -> list[tuple[int, int, float]]:
    """Column rotations ``(c-1, c, phi)`` that bring real orthonormal rows to ``[D | 0]``.

    Row operations are applied freely first (they only change the Slater
    determinant by an overall factor).  Row r then needs n_modes - n_f column
    rotations, so the total is n_f (n_modes - n_f).
    """
    Q = np.array(Q, dtype=float, copy=True)
    check_orthonormal_rows(Q)
    nf, m = Q.shape
    width = m - nf
    # Row rotations: zero Q[r, c] for c > r + width, sweeping columns from the right.
    for c in range(m - 1, width, -1):
        pivot = c - width
        for r in range(pivot):
            a, b = Q[pivot, c], Q[r, c]
            if abs(b) < 1e-15:
                continue
            rho = math.hypot(a, b)
            ca, sa = a / rho, b / rho
            Q[[pivot, r]] = np.array([[ca, sa], [-sa, ca]]) @ Q[[pivot, r]]
    rotations = []
    for r in range(nf):
        for c in range(r + width, r, -1):
            x, y = Q[r, c - 1], Q[r, c]
            phi = math.atan2(y, x)
            cs, sn = math.cos(phi), math.sin(phi)
            left, right = Q[:, c - 1].copy(), Q[:, c].copy()
            Q[:, c - 1] = cs * left + sn * right
            Q[:, c] = -sn * left + cs * right
            rotations.append((c - 1, c, phi))
    return rotations


def slater_givens_circuit(Q: np.ndarray, qubits: Sequence[int], n_qubits: int) -> Circuit:
    """Reference occupation of the first n_f modes, then the reversed rotation sequence.

    ``qubits[k]`` is the qubit holding column k of ``Q``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    nf = Q.shape[0] if Q.size else 0
    circ = Circuit(n_qubits)
    if nf == 0:
        return circ
    if Q.shape[1] != len(qubits):
        raise ValueError("need one qubit per orbital column")
    rotations = givens_decomposition(Q)
    circ.extend(X(qubits[k]) for k in range(nf))
    for left, right, phi in reversed(rotations):
        circ.append(FGIVENS(qubits[left], qubits[right], -phi))
    return circ


def fermi_sea_orbitals(lattice: LatticeSpec, n_per_color: int, J: float = 1.0) -> np.ndarray:
    _, vecs = single_particle_orbitals(lattice, J)
    return vecs[:n_per_color]


def fermi_sea_circuit(lattice: LatticeSpec, n_per_color: int | None = None, labeling: QubitLabeling | None = None,
                      J: float = 1.0) -> Circuit:
    n = lattice.n_site
    labeling = labeling or uniform(n)
    nf = n // 2 if n_per_color is None else n_per_color
    Q = fermi_sea_orbitals(lattice, nf, J)
    # reference occupations for every color go first: an X gate is a creation
    # operator only up to the parity of the qubits below it, which must be fixed
    per_color = [slater_givens_circuit(Q, [qubit_index(i, c, labeling) for i in range(n)], 3 * n)
                 for c in range(3)]
    circ = Circuit(3 * n)
    for part in per_color:
        circ.extend(g for g in part if g.kind == "X")
    for part in per_color:
        circ.extend(g for g in part if g.kind != "X")
    return circ


def fermi_sea_state(lattice: LatticeSpec, n_per_color: int | None = None, labeling: QubitLabeling | None = None,
                    J: float = 1.0) -> StateVector:
    return run_circuit(fermi_sea_circuit(lattice, n_per_color, labeling, J))


# Direct (oracle-side) construction by creation operators ---------------------

def apply_creation(amps: np.ndarray, coeffs: dict[int, complex]) -> np.ndarray:
    """``sum_q coeffs[q] c_q^dag`` applied to ``amps`` under the JW ordering of qubits."""
    n = int(round(math.log2(amps.size)))
    x = np.arange(amps.size, dtype=np.int64)
    out = np.zeros(amps.size, dtype=np.complex128)
    for q, c in coeffs.items():
        if c == 0:
            continue
        empty = (x >> q) & 1 == 0
        below = x & ((1 << q) - 1)
        parity = np.zeros_like(x)
        for b in range(q):
            parity ^= (below >> b) & 1
        src = x[empty]
        out[src | (1 << q)] += c * (1 - 2 * parity[empty]) * amps[src]
    return out


def slater_state(orbitals_per_color: Sequence[np.ndarray], labeling: QubitLabeling) -> StateVector:
    """Product of orbital creation operators on the vacuum (no circuit involved)."""
    n = labeling.n_site
    amps = np.zeros(2 ** (3 * n), dtype=np.complex128)
    amps[0] = 1.0
    for color, Q in enumerate(orbitals_per_color):
        for row in np.atleast_2d(Q):
            if row.size == 0:
                continue
            amps = apply_creation(amps, {qubit_index(i, color, labeling): row[i] for i in range(n)})
    nrm = np.linalg.norm(amps)
    if nrm < 1e-12:
        raise ValueError("orbitals are linearly dependent")
    return StateVector(amps / nrm, 3 * n)


def _momentum_orbitals(lattice: LatticeSpec, J: float):
    n = lattice.n_site
    r = np.arange(n)
    ks = 2 * np.pi * np.arange(n) / n
    phis = np.exp(1j * np.outer(ks, r)) / math.sqrt(n)
    h = lattice.hopping_matrix(J)
    eps = np.real(np.einsum("ki,ij,kj->k", phis.conj(), h, phis))
    return ks, phis, eps


def bcs_coherence(eps: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """(u_k, v_k) with u^2 = (1 + eps/E)/2, E = sqrt(eps^2 + delta^2); v carries the sign of delta."""
    E = np.sqrt(eps**2 + delta**2)
    u2 = 0.5 * (1.0 + eps / E)
    return np.sqrt(u2), np.sign(delta) * np.sqrt(1.0 - u2)


def prepare_bcs(lattice: LatticeSpec, delta: float, J: float = 1.0, color3_filling: int | None = None) -> StateVector:
    """Colors 1 and 2 paired as prod_k (u_k + v_k c^dag_{k,1} c^dag_{-k,2}); color 3 a Fermi sea.

    Built directly in the color-uniform labeling.  The dispersion is the
    diagonal of the lattice hopping matrix in the plane-wave basis.
    """
    n = lattice.n_site
    if lattice.geometry != "chain-periodic" or n % 2:
        raise ValueError("BCS trial state needs a periodic chain with an even number of sites")
    n3 = n // 2 if color3_filling is None else color3_filling
    lab = uniform(n)
    if abs(delta) < 1e-14:
        Q = fermi_sea_orbitals(lattice, n // 2, J)
        return slater_state([Q, Q, fermi_sea_orbitals(lattice, n3, J)], lab)
    ks, phis, eps = _momentum_orbitals(lattice, J)
    u, v = bcs_coherence(eps, delta)
    amps = np.zeros(2 ** (3 * n), dtype=np.complex128)
    amps[0] = 1.0
    for m in range(n):
        mk = (-m) % n
        pair = apply_creation(amps, {lab.qubit(i, 1): phis[mk, i] for i in range(n)})
        pair = apply_creation(pair, {lab.qubit(i, 0): phis[m, i] for i in range(n)})
        amps = u[m] * amps + v[m] * pair
    for row in fermi_sea_orbitals(lattice, n3, J):
        amps = apply_creation(amps, {lab.qubit(i, 2): row[i] for i in range(n)})
    amps /= np.linalg.norm(amps)
    big = np.argmax(np.abs(amps))
    amps *= abs(amps[big]) / amps[big]
    if np.max(np.abs(amps.imag)) < 1e-12:
        amps = amps.real.astype(np.complex128)
    return StateVector(amps, 3 * n)


def prepare_trial(lattice: LatticeSpec, spec: TrialStateSpec, J: float = 1.0) -> StateVector:
    if spec.kind == "fermi-sea":
        return fermi_sea_state(lattice, spec.filling(lattice.n_site), J=J)
    return prepare_bcs(lattice, spec.delta, J, spec.filling(lattice.n_site))
