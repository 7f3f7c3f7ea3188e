"""Jordan-Wigner encoding of SU(3) Hubbard terms and the f-SWAP relabeling network.

Modes are ``(site, color)`` with both indices 0-based.  Two qubit orderings:

* ``color-uniform``     : all sites of color 0, then color 1, then color 2
* ``color-alternating`` : the three colors of site 0, then site 1, ...
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import FermionTerm

N_COLORS = 3
SCHEMES = ("color-uniform", "color-alternating")


@dataclass(frozen=True)
class QubitLabeling:
    scheme: str
    n_site: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown labeling scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.n_site < 1:
            raise ValueError("n_site must be positive")

    @property
    def n_qubits(self) -> int:
        return N_COLORS * self.n_site

    def qubit(self, site: int, color: int) -> int:
        return qubit_index(site, color, self)

    def mode(self, qubit: int) -> tuple[int, int]:
        """Inverse of :meth:`qubit`: ``(site, color)`` stored on ``qubit``."""
        if not 0 <= qubit < self.n_qubits:
            raise ValueError(f"qubit {qubit} out of range")
        if self.scheme == "color-uniform":
            return qubit % self.n_site, qubit // self.n_site
        return qubit // N_COLORS, qubit % N_COLORS


def uniform(n_site: int) -> QubitLabeling:
    return QubitLabeling("color-uniform", n_site)


def alternating(n_site: int) -> QubitLabeling:
    return QubitLabeling("color-alternating", n_site)


def qubit_index(site: int, color: int, labeling: QubitLabeling) -> int:
    n = labeling.n_site
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} sites")
    if not 0 <= color < N_COLORS:
        raise ValueError(f"color {color} out of range")
    if labeling.scheme == "color-uniform":
        return color * n + site
    return N_COLORS * site + color


class PauliString:
    """``coefficient * prod_q letter_q`` with identity on unlisted qubits.

    Letters are kept sorted by qubit, so equal operators compare and hash equal
    irrespective of coefficient (see :func:`simplify` for merging).
    """

    __slots__ = ("coefficient", "letters")

    def __init__(self, coefficient: complex, letters: dict[int, str] | Iterable[tuple[int, str]] = ()):
        items = dict(letters).items() if not isinstance(letters, dict) else letters.items()
        clean = []
        for q, l in items:
            l = l.upper()
            if l not in ("X", "Y", "Z", "I"):
                raise ValueError(f"bad Pauli letter {l!r}")
            if q < 0:
                raise ValueError("negative qubit index")
            if l != "I":
                clean.append((int(q), l))
        self.coefficient = complex(coefficient)
        self.letters: tuple[tuple[int, str], ...] = tuple(sorted(clean))

    @property
    def key(self) -> tuple[tuple[int, str], ...]:
        return self.letters

    def max_qubit(self) -> int:
        return max((q for q, _ in self.letters), default=-1)

    def __mul__(self, other: "PauliString") -> "PauliString":
        coef = self.coefficient * other.coefficient
        out = dict(self.letters)
        for q, b in other.letters:
            a = out.pop(q, "I")
            phase, c = _LETTER_PRODUCT[a, b]
            coef *= phase
            if c != "I":
                out[q] = c
        return PauliString(coef, out)

    def scaled(self, factor: complex) -> "PauliString":
        return PauliString(self.coefficient * factor, self.letters)

    def __eq__(self, other):
        return (isinstance(other, PauliString) and self.letters == other.letters
                and abs(self.coefficient - other.coefficient) < 1e-14)

    def __hash__(self):
        return hash(self.letters)

    def __repr__(self):
        body = " ".join(f"{l}{q}" for q, l in self.letters) or "I"
        return f"PauliString({self.coefficient:.6g}, {body})"


_LETTER_PRODUCT = {}
for _a in "IXYZ":
    _LETTER_PRODUCT[_a, "I"] = (1, _a)
    _LETTER_PRODUCT["I", _a] = (1, _a)
    _LETTER_PRODUCT[_a, _a] = (1, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _LETTER_PRODUCT[_a, _b] = (1j, _c)
    _LETTER_PRODUCT[_b, _a] = (-1j, _c)


def simplify(strings: Iterable[PauliString], tol: float = 1e-14) -> list[PauliString]:
    """Merge equal letter patterns and drop vanishing coefficients."""
    acc: dict = {}
    for p in strings:
        acc[p.letters] = acc.get(p.letters, 0j) + p.coefficient
    return [PauliString(c, dict(k)) for k, c in sorted(acc.items()) if abs(c) > tol]


def identity(coefficient: complex = 1.0) -> PauliString:
    return PauliString(coefficient, {})


def jw_number(site: int, color: int, labeling: QubitLabeling) -> list[PauliString]:
    q = qubit_index(site, color, labeling)
    return [identity(0.5), PauliString(-0.5, {q: "Z"})]


def jw_hop(site_i: int, site_j: int, color: int, labeling: QubitLabeling) -> list[PauliString]:
    """c_i^dag c_j + h.c.  ->  (XX + YY)/2 times Z on every qubit strictly between."""
    p = qubit_index(site_i, color, labeling)
    q = qubit_index(site_j, color, labeling)
    if p == q:
        raise ValueError("hopping needs two distinct sites")
    lo, hi = sorted((p, q))
    z = {l: "Z" for l in range(lo + 1, hi)}
    return [PauliString(0.5, {**z, lo: "X", hi: "X"}), PauliString(0.5, {**z, lo: "Y", hi: "Y"})]


def jw_pair_density(site: int, color_a: int, color_b: int, labeling: QubitLabeling) -> list[PauliString]:
    """(n_a - 1/2)(n_b - 1/2) = Z_a Z_b / 4."""
    if color_a == color_b:
        raise ValueError("pair density needs two distinct colors")
    qa = qubit_index(site, color_a, labeling)
    qb = qubit_index(site, color_b, labeling)
    return [PauliString(0.25, {qa: "Z", qb: "Z"})]


def jw_triple(site: int, labeling: QubitLabeling) -> list[PauliString]:
    """n_0 n_1 n_2 on one site: (I - Z)(I - Z)(I - Z)/8 expanded into 8 strings."""
    qs = [qubit_index(site, c, labeling) for c in range(N_COLORS)]
    out = []
    for mask in range(8):
        letters = {q: "Z" for k, q in enumerate(qs) if mask >> k & 1}
        sign = -1 if bin(mask).count("1") % 2 else 1
        out.append(PauliString(sign / 8.0, letters))
    return out


def jw_color_flip(site: int, color_a: int, color_b: int, labeling: QubitLabeling) -> list[PauliString]:
    """c_a^dag c_b - c_b^dag c_a (anti-Hermitian) as i(XY - YX)/2 with the parity string.

    The orientation follows the qubit order: a is taken as the lower qubit.
    """
    qa = qubit_index(site, color_a, labeling)
    qb = qubit_index(site, color_b, labeling)
    sgn = 1 if qa < qb else -1
    lo, hi = sorted((qa, qb))
    z = {l: "Z" for l in range(lo + 1, hi)}
    return [PauliString(0.5j * sgn, {**z, lo: "X", hi: "Y"}),
            PauliString(-0.5j * sgn, {**z, lo: "Y", hi: "X"})]


def jw_annihilation(site: int, color: int, labeling: QubitLabeling) -> list[PauliString]:
    """c -> (X + iY)/2 * prod_{l < q} Z_l."""
    q = qubit_index(site, color, labeling)
    z = {l: "Z" for l in range(q)}
    return [PauliString(0.5, {**z, q: "X"}), PauliString(0.5j, {**z, q: "Y"})]


def jw_creation(site: int, color: int, labeling: QubitLabeling) -> list[PauliString]:
    return [PauliString(p.coefficient.conjugate(), p.letters) for p in jw_annihilation(site, color, labeling)]


def jw_term(term: FermionTerm, labeling: QubitLabeling) -> list[PauliString]:
    if term.kind == "hop":
        (i, j), (a,) = term.sites, term.colors
        strings = jw_hop(i, j, a, labeling)
    elif term.kind == "pair-density":
        (i,), (a, b) = term.sites, term.colors
        strings = jw_pair_density(i, a, b, labeling)
    elif term.kind == "triple-density":
        (i,) = term.sites
        strings = jw_triple(i, labeling)
    else:  # pragma: no cover - FermionTerm validates kinds
        raise ValueError(term.kind)
    return [p.scaled(term.coefficient) for p in strings]


def jw_terms(terms: Iterable[FermionTerm], labeling: QubitLabeling) -> list[PauliString]:
    out: list[PauliString] = []
    for t in terms:
        out.extend(jw_term(t, labeling))
    return simplify(out)


# f-SWAP network ------------------------------------------------------------

@dataclass(frozen=True)
class SwapNetwork:
    """Adjacent transpositions ``(q, q+1)`` applied in order as f-SWAP gates."""

    swaps: tuple[tuple[int, int], ...]
    source: QubitLabeling
    target: QubitLabeling

    def __len__(self):
        return len(self.swaps)

    def reversed(self) -> "SwapNetwork":
        return SwapNetwork(tuple(reversed(self.swaps)), self.target, self.source)

    def gates(self):
        from .statevector import FSWAP

        return [FSWAP(q, q + 1) for q, _ in self.swaps]


def fswap_network(n_site: int, direction: str = "to-alternating") -> SwapNetwork:
    """Bubble sort between the two labelings.

    ``direction`` is ``"to-alternating"`` (color-uniform in, color-alternating
    out) or ``"to-uniform"``.  Length is exactly 3/2 n_site (n_site - 1).
    """
    if n_site < 1:
        raise ValueError("n_site must be positive")
    src, dst = uniform(n_site), alternating(n_site)
    if direction == "to-uniform":
        src, dst = dst, src
    elif direction != "to-alternating":
        raise ValueError(f"unknown direction {direction!r}")
    # position -> destination qubit of the mode currently sitting there
    order = [dst.qubit(*src.mode(q)) for q in range(src.n_qubits)]
    swaps = []
    for end in range(len(order) - 1, 0, -1):
        for q in range(end):
            if order[q] > order[q + 1]:
                order[q], order[q + 1] = order[q + 1], order[q]
                swaps.append((q, q + 1))
    return SwapNetwork(tuple(swaps), src, dst)


def relabel(strings: Sequence[PauliString], source: QubitLabeling, target: QubitLabeling) -> list[PauliString]:
    """Move single-qubit-supported observables (Z-type) between labelings.

    Only valid for strings made of ``Z`` letters, whose JW form does not
    depend on the ordering.
    """
    out = []
    for p in strings:
        if any(l != "Z" for _, l in p.letters):
            raise ValueError("relabel supports Z-only strings")
        out.append(PauliString(p.coefficient, {target.qubit(*source.mode(q)): "Z" for q, _ in p.letters}))
    return out
