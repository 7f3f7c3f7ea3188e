"""Lattices and the attractive SU(3) Hubbard Hamiltonian as fermionic terms.

Sites and colors are 0-based here; user-facing I/O (CLI, CSV) is 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

GEOMETRIES = ("chain-open", "chain-periodic", "square-periodic")
COLOR_PAIRS = ((0, 1), (0, 2), (1, 2))  # (12), (13), (23): fixed global order


@dataclass(frozen=True)
class LatticeSpec:
    geometry: str
    dims: tuple[int, ...]
    n_site: int = field(init=False)
    edges: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_site", _n_site(self.geometry, self.dims))
        object.__setattr__(self, "edges", _edges(self.geometry, self.dims))

    def hopping_matrix(self, J: float = 1.0):
        import numpy as np

        h = np.zeros((self.n_site, self.n_site))
        for i, j in self.edges:
            h[i, j] = h[j, i] = -J
        return h

    @property
    def label(self) -> str:
        return f"{self.geometry}:{'x'.join(map(str, self.dims))}"


@dataclass(frozen=True)
class ModelParams:
    U: float
    J: float = 1.0

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError("hopping amplitude J must be positive")


@dataclass(frozen=True)
class FermionTerm:
    """``kind`` is one of ``hop``, ``pair-density``, ``triple-density``."""

    kind: str
    sites: tuple[int, ...]
    colors: tuple[int, ...]
    coefficient: float

    def __post_init__(self):
        if self.kind == "hop":
            ok = len(self.sites) == 2 and self.sites[0] != self.sites[1] and len(self.colors) == 1
        elif self.kind == "pair-density":
            ok = len(self.sites) == 1 and len(self.colors) == 2 and self.colors[0] != self.colors[1]
        elif self.kind == "triple-density":
            ok = len(self.sites) == 1 and self.colors == (0, 1, 2)
        else:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if not ok:
            raise ValueError(f"malformed {self.kind} term: sites={self.sites} colors={self.colors}")


def _n_site(geometry: str, dims: tuple[int, ...]) -> int:
    if geometry not in GEOMETRIES:
        raise ValueError(f"unknown geometry {geometry!r}; expected one of {GEOMETRIES}")
    want = 2 if geometry == "square-periodic" else 1
    if len(dims) != want:
        raise ValueError(f"{geometry} needs {want} dimension(s), got {dims}")
    if any(int(d) != d or d < 1 for d in dims):
        raise ValueError(f"dimensions must be positive integers, got {dims}")
    if any(d < 2 for d in dims):
        raise ValueError(f"{geometry} needs every dimension >= 2, got {dims}")
    n = 1
    for d in dims:
        n *= d
    return n


def _edges(geometry: str, dims: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    bonds = set()
    if geometry == "chain-open":
        (L,) = dims
        bonds = {(i, i + 1) for i in range(L - 1)}
    elif geometry == "chain-periodic":
        (L,) = dims
        bonds = {tuple(sorted((i, (i + 1) % L))) for i in range(L)}
    else:
        Lx, Ly = dims
        for y in range(Ly):
            for x in range(Lx):
                s = x + Lx * y
                bonds.add(tuple(sorted((s, (x + 1) % Lx + Lx * y))))
                bonds.add(tuple(sorted((s, x + Lx * ((y + 1) % Ly)))))
    return tuple(sorted(bonds))


def build_lattice(geometry: str, dims) -> LatticeSpec:
    if isinstance(dims, int):
        dims = (dims,)
    return LatticeSpec(geometry, tuple(int(d) for d in dims))


def hamiltonian_terms(lattice: LatticeSpec, params: ModelParams) -> list[FermionTerm]:
    """Hopping terms (coefficient -J) then pair densities (coefficient U)."""
    return kinetic_terms(lattice, params.J) + [
        FermionTerm("pair-density", t.sites, t.colors, params.U * t.coefficient)
        for t in interaction_terms(lattice)
    ]


def kinetic_terms(lattice: LatticeSpec, J: float = 1.0) -> list[FermionTerm]:
    return [FermionTerm("hop", (i, j), (a,), -J) for (i, j) in lattice.edges for a in range(3)]


def interaction_terms(lattice: LatticeSpec) -> list[FermionTerm]:
    """The operator D: sum over sites and color pairs of (n_a - 1/2)(n_b - 1/2)."""
    return [FermionTerm("pair-density", (i,), ab, 1.0) for i in range(lattice.n_site) for ab in COLOR_PAIRS]


def triple_occupancy_terms(lattice: LatticeSpec) -> list[FermionTerm]:
    return [FermionTerm("triple-density", (i,), (0, 1, 2), 1.0) for i in range(lattice.n_site)]


def d_eigenvalue(occupations) -> float:
    """Eigenvalue of D on an occupation pattern ``occupations[site][color]`` in {0, 1}."""
    return sum((z[a] - 0.5) * (z[b] - 0.5) for z in occupations for a, b in combinations(range(3), 2))
