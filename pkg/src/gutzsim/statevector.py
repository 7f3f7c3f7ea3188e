"""Dense statevector simulator.

Conventions
-----------
* Qubit 0 is the least-significant bit of the amplitude index.
* A multi-qubit gate matrix is written in the ket basis ``|x_t0 x_t1 ...>``
  of its *targets in the order given*, first target most significant.  For
  ``Givens(theta)`` on targets ``(a, b)`` this is the ordered basis
  ``(|00>, |01>, |10>, |11>)`` with ``|01>`` meaning ``a=0, b=1``.
* Amplitude arrays may carry leading batch axes, ``(..., 2**n)``; every kernel
  acts on the last axis only.  The batched form is used to push many states
  through the same gate at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .encoding import PauliString

MAX_QUBITS = 26

_SQRT1_2 = 1.0 / math.sqrt(2.0)

# gate kind -> number of target qubits
_ARITY = {
    "X": 1, "Y": 1, "Z": 1, "H": 1, "RX": 1, "RY": 1, "RZ": 1,
    "CNOT": 2, "CZ": 2, "SWAP": 2, "FSWAP": 2, "GIVENS": 2, "FGIVENS": 2,
    "CCZ": 3,
}
_N_PARAMS = {"RX": 1, "RY": 1, "RZ": 1, "GIVENS": 1, "FGIVENS": 1}


class QubitRangeError(ValueError):
    pass


class PostselectionError(RuntimeError):
    """Raised when a postselected branch has zero probability."""


@dataclass(frozen=True)
class Gate:
    """One gate record.

    ``controls`` turns any gate into its controlled version (all controls must
    read 1).  ``string`` lists the Jordan-Wigner parity qubits of an FGIVENS
    gate; they must lie strictly between the two targets.
    """

    kind: str
    targets: tuple[int, ...]
    params: tuple[float, ...] = ()
    controls: tuple[int, ...] = ()
    string: tuple[int, ...] = ()

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        object.__setattr__(self, "string", tuple(sorted(int(q) for q in self.string)))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != _ARITY[kind]:
            raise ValueError(f"{kind} acts on {_ARITY[kind]} qubit(s), got {self.targets}")
        if len(self.params) != _N_PARAMS.get(kind, 0):
            raise ValueError(f"{kind} takes {_N_PARAMS.get(kind, 0)} parameter(s)")
        if self.string and kind != "FGIVENS":
            raise ValueError("only FGIVENS carries a parity string")
        lo, hi = sorted(self.targets[:2]) if kind == "FGIVENS" else (0, 0)
        if any(not lo < q < hi for q in self.string):
            raise ValueError("FGIVENS string qubits must lie strictly between the targets")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"gate {kind} references a qubit twice: {self.qubits}")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.targets + self.controls + self.string

    def controlled(self, control: int) -> "Gate":
        return Gate(self.kind, self.targets, self.params, self.controls + (control,), self.string)

    def inverse(self) -> "Gate":
        k = self.kind
        if k in ("RX", "RY", "RZ", "GIVENS", "FGIVENS"):
            return Gate(k, self.targets, (-self.params[0],), self.controls, self.string)
        return self  # all remaining kinds are self-inverse


# Convenience constructors -------------------------------------------------

def X(q): return Gate("X", (q,))
def Y(q): return Gate("Y", (q,))
def Z(q): return Gate("Z", (q,))
def H(q): return Gate("H", (q,))
def RX(q, theta): return Gate("RX", (q,), (theta,))
def RY(q, theta): return Gate("RY", (q,), (theta,))
def RZ(q, theta): return Gate("RZ", (q,), (theta,))
def CNOT(c, t): return Gate("CNOT", (c, t))
def CZ(a, b): return Gate("CZ", (a, b))
def SWAP(a, b): return Gate("SWAP", (a, b))
def FSWAP(a, b): return Gate("FSWAP", (a, b))
def GIVENS(a, b, theta): return Gate("GIVENS", (a, b), (theta,))


def FGIVENS(a, b, theta, string: Iterable[int] | None = None):
    """Fermionic Givens rotation; by default the string is every qubit between a and b."""
    if string is None:
        lo, hi = sorted((a, b))
        string = range(lo + 1, hi)
    return Gate("FGIVENS", (a, b), (theta,), (), tuple(string))


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, gate: Gate):
        if any(q < 0 or q >= self.n_qubits for q in gate.qubits):
            raise QubitRangeError(f"{gate} out of range for {self.n_qubits} qubits")

    def append(self, gate: Gate) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def count(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.gates:
            name = ("C" * len(g.controls)) + g.kind
            out[name] = out.get(name, 0) + 1
        return out

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)


class StateVector:
    """Normalized dense state over ``n_qubits``.

    The constructor copies its input; gates then mutate ``amplitudes`` in place.
    """

    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None, *, normalized: bool = True,
                 _copy: bool = True):
        amps = np.array(amplitudes, dtype=np.complex128, copy=True) if _copy else amplitudes
        if n_qubits is None:
            n_qubits = int(round(math.log2(amps.shape[-1])))
        if amps.shape != (2**n_qubits,):
            raise ValueError(f"expected {2**n_qubits} amplitudes, got shape {amps.shape}")
        if n_qubits > MAX_QUBITS:
            raise QubitRangeError(f"{n_qubits} qubits exceeds the supported maximum of {MAX_QUBITS}")
        if normalized:
            nrm = np.linalg.norm(amps)
            if abs(nrm - 1.0) > 1e-10:
                raise ValueError(f"state not normalized (norm {nrm!r})")
        self.amplitudes = amps
        self.n_qubits = n_qubits

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        if n_qubits > MAX_QUBITS:
            raise QubitRangeError(f"{n_qubits} qubits exceeds the supported maximum of {MAX_QUBITS}")
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps, n_qubits, _copy=False)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps, n_qubits, _copy=False)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_qubits, normalized=False, _copy=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def extend(self, n_extra: int) -> "StateVector":
        """Tensor on ``n_extra`` fresh |0> qubits as the most significant qubits."""
        n = self.n_qubits + n_extra
        if n > MAX_QUBITS:
            raise QubitRangeError(f"{n} qubits exceeds the supported maximum of {MAX_QUBITS}")
        amps = np.zeros(2**n, dtype=np.complex128)
        amps[: self.amplitudes.size] = self.amplitudes
        return StateVector(amps, n, normalized=False, _copy=False)

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits}, norm={self.norm():.12f})"


# Kernels ------------------------------------------------------------------

def _tensor(amps: np.ndarray, n: int) -> np.ndarray:
    t = amps.reshape(amps.shape[:-1] + (2,) * n)
    if not np.shares_memory(t, amps):  # pragma: no cover - contiguous inputs only
        raise ValueError("amplitude array must be contiguous")
    return t


def _index(lead: int, n: int, fixed: dict[int, int]) -> tuple:
    idx: list = [slice(None)] * (lead + n)
    for q, b in fixed.items():
        idx[lead + n - 1 - q] = b
    return tuple(idx)


@lru_cache(maxsize=512)
def _parity_sign(lead: int, n: int, string: tuple[int, ...], fixed: tuple[int, ...]) -> np.ndarray:
    """(-1)**(occupation parity of ``string``) shaped to broadcast against a slice fixing ``fixed``."""
    shape = [1] * (lead + n)
    for q in string:
        shape[lead + n - 1 - q] = 2
    sign = np.ones(shape)
    for q in string:
        s = [1] * (lead + n)
        s[lead + n - 1 - q] = 2
        sign = sign * np.array([1.0, -1.0]).reshape(s)
    sub: list = [slice(None)] * (lead + n)
    for q in fixed:
        sub[lead + n - 1 - q] = 0
    return sign[tuple(sub)]


def _rotate_pair(t, lead, n, ctrl, a, b, c, s, string=()):
    """Two-level rotation |01> -> c|01> + s|10>, |10> -> c|10> - s|01> (targets a, b)."""
    i01 = _index(lead, n, {**ctrl, a: 0, b: 1})
    i10 = _index(lead, n, {**ctrl, a: 1, b: 0})
    if string:
        fixed = tuple(sorted({*ctrl, a, b}))
        s = s * _parity_sign(lead, n, tuple(string), fixed)
    x = t[i01].copy()
    t[i01] *= c
    t[i01] -= s * t[i10]
    t[i10] *= c
    t[i10] += s * x


def _apply_1q(t, lead, n, ctrl, q, m):
    i0 = _index(lead, n, {**ctrl, q: 0})
    i1 = _index(lead, n, {**ctrl, q: 1})
    x0 = t[i0].copy()
    t[i0] *= m[0, 0]
    t[i0] += m[0, 1] * t[i1]
    t[i1] *= m[1, 1]
    t[i1] += m[1, 0] * x0


def _swap_slices(t, ia, ib, phase_a=1.0, phase_b=1.0):
    x = t[ia].copy()
    t[ia] = phase_a * t[ib]
    t[ib] = phase_b * x


def rotation_matrix(kind: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    raise ValueError(kind)


_H = np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=complex)


def apply_gate_array(amps: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    """Apply ``gate`` in place to an amplitude array of shape ``(..., 2**n)``."""
    if any(q < 0 or q >= n for q in gate.qubits):
        raise QubitRangeError(f"{gate} out of range for {n} qubits")
    t = _tensor(amps, n)
    lead = amps.ndim - 1
    ctrl = {c: 1 for c in gate.controls}
    k = gate.kind
    tg = gate.targets
    if k in ("GIVENS", "FGIVENS"):
        th = gate.params[0]
        _rotate_pair(t, lead, n, ctrl, tg[0], tg[1], math.cos(th), math.sin(th),
                     gate.string if k == "FGIVENS" else ())
    elif k == "X" or k == "CNOT":
        q = tg[-1]
        if k == "CNOT":
            ctrl = {**ctrl, tg[0]: 1}
        _swap_slices(t, _index(lead, n, {**ctrl, q: 0}), _index(lead, n, {**ctrl, q: 1}))
    elif k == "Y":
        q = tg[0]
        _swap_slices(t, _index(lead, n, {**ctrl, q: 0}), _index(lead, n, {**ctrl, q: 1}), -1j, 1j)
    elif k == "Z":
        t[_index(lead, n, {**ctrl, tg[0]: 1})] *= -1
    elif k == "CZ":
        t[_index(lead, n, {**ctrl, tg[0]: 1, tg[1]: 1})] *= -1
    elif k == "CCZ":
        t[_index(lead, n, {**ctrl, tg[0]: 1, tg[1]: 1, tg[2]: 1})] *= -1
    elif k in ("SWAP", "FSWAP"):
        a, b = tg
        _swap_slices(t, _index(lead, n, {**ctrl, a: 0, b: 1}), _index(lead, n, {**ctrl, a: 1, b: 0}))
        if k == "FSWAP":
            t[_index(lead, n, {**ctrl, a: 1, b: 1})] *= -1
    elif k == "H":
        _apply_1q(t, lead, n, ctrl, tg[0], _H)
    elif k == "RZ":
        th = gate.params[0]
        t[_index(lead, n, {**ctrl, tg[0]: 0})] *= np.exp(-0.5j * th)
        t[_index(lead, n, {**ctrl, tg[0]: 1})] *= np.exp(0.5j * th)
    elif k in ("RX", "RY"):
        _apply_1q(t, lead, n, ctrl, tg[0], rotation_matrix(k, gate.params[0]))
    else:  # pragma: no cover - guarded by Gate.__post_init__
        raise ValueError(k)
    return amps


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    apply_gate_array(state.amplitudes, state.n_qubits, gate)
    return state


def run_circuit(circuit: Circuit, state: StateVector | None = None) -> StateVector:
    if state is None:
        state = StateVector.zero(circuit.n_qubits)
    if state.n_qubits != circuit.n_qubits:
        raise QubitRangeError(f"circuit has {circuit.n_qubits} qubits, state has {state.n_qubits}")
    for g in circuit.gates:
        apply_gate_array(state.amplitudes, state.n_qubits, g)
    return state


def gate_unitary(gates: Gate | Sequence[Gate], n: int) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix of a gate sequence (column j = image of basis state j)."""
    if isinstance(gates, Gate):
        gates = [gates]
    m = np.eye(2**n, dtype=np.complex128)  # rows are batch entries: m[j] = basis state j
    for g in gates:
        apply_gate_array(m, n, g)
    return m.T.copy()


# Pauli algebra on amplitudes ------------------------------------------------

def _pauli_masks(p: PauliString) -> tuple[int, int, int]:
    flip = phase_mask = n_y = 0
    for q, letter in p.letters:
        if letter in ("X", "Y"):
            flip |= 1 << q
        if letter in ("Y", "Z"):
            phase_mask |= 1 << q
        if letter == "Y":
            n_y += 1
    return flip, phase_mask, n_y


@lru_cache(maxsize=16)
def _basis_indices(n: int) -> np.ndarray:
    return np.arange(2**n, dtype=np.int64)


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    parity = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        parity ^= x & 1
        x >>= 1
    return parity


def apply_pauli_array(amps: np.ndarray, n: int, p: PauliString) -> np.ndarray:
    """Return ``coefficient * P @ amps`` (new array, batch axes allowed)."""
    flip, phase_mask, n_y = _pauli_masks(p)
    x = _basis_indices(n)
    sign = 1.0 - 2.0 * _popcount_parity(x & phase_mask)
    coef = p.coefficient * (1j) ** n_y
    out = np.empty_like(amps, dtype=np.complex128)
    # P|x> = coef * sign(x) |x ^ flip>
    out[..., x ^ flip] = coef * sign * amps
    return out


def pauli_sum_sparse(strings: Sequence[PauliString], n: int, basis: np.ndarray | None = None):
    """Sparse matrix of a Pauli sum, optionally restricted to the sorted basis subset ``basis``."""
    import scipy.sparse as sp

    x = _basis_indices(n) if basis is None else np.asarray(basis, dtype=np.int64)
    dim = x.size
    rows, cols, vals = [], [], []
    for p in strings:
        flip, phase_mask, n_y = _pauli_masks(p)
        y = x ^ flip
        val = p.coefficient * (1j) ** n_y * (1.0 - 2.0 * _popcount_parity(x & phase_mask))
        if basis is None:
            r = y
            keep = slice(None)
        else:
            r = np.searchsorted(x, y)
            r[r >= dim] = 0
            keep = x[r] == y
            r = r[keep]
        rows.append(r)
        cols.append(np.arange(dim)[keep])
        vals.append(np.broadcast_to(val, (dim,))[keep])
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dim, dim))
    m.sum_duplicates()
    return m


def expectation_pauli(state: StateVector | np.ndarray, strings: Sequence[PauliString],
                      *, tol: float = 1e-10) -> float:
    """Real expectation value of a Hermitian Pauli sum."""
    amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    n = int(round(math.log2(amps.shape[-1])))
    total = 0j
    for p in strings:
        total += np.vdot(amps, apply_pauli_array(amps, n, p))
    if abs(total.imag) > tol:
        raise ValueError(f"non-Hermitian observable: imaginary part {total.imag:.3e}")
    return float(total.real)


# Measurement ---------------------------------------------------------------

def _marginal_index(n: int, qubits: Sequence[int]) -> np.ndarray:
    x = _basis_indices(n)
    out = np.zeros_like(x)
    for pos, q in enumerate(qubits):
        out |= ((x >> q) & 1) << pos
    return out


def postselect(state: StateVector, qubits: Sequence[int], bitstring: str | Sequence[int],
               *, keep_qubits: bool = False) -> tuple[float, StateVector]:
    """Project ``qubits`` onto ``bitstring`` (``bitstring[k]`` is the value of ``qubits[k]``).

    Returns the branch probability and the renormalized state.  By default the
    postselected qubits are removed and the survivors keep their relative order.
    """
    bits = [int(b) for b in bitstring]
    if len(bits) != len(qubits) or len(set(qubits)) != len(qubits):
        raise ValueError("qubits must be distinct and match the bitstring length")
    n = state.n_qubits
    t = _tensor(state.amplitudes, n)
    idx = _index(0, n, dict(zip(qubits, bits)))
    branch = t[idx]
    prob = float(np.vdot(branch, branch).real)
    if prob <= 0.0:
        raise PostselectionError("postselected branch has zero probability")
    if keep_qubits:
        amps = np.zeros_like(state.amplitudes)
        _tensor(amps, n)[idx] = branch / math.sqrt(prob)
        return prob, StateVector(amps, n, normalized=False, _copy=False)
    return prob, StateVector(np.ascontiguousarray(branch).reshape(-1) / math.sqrt(prob),
                             n - len(qubits), normalized=False, _copy=False)


def marginal_probabilities(state: StateVector, qubits: Sequence[int]) -> np.ndarray:
    """Distribution over ``qubits``; outcome index has ``qubits[k]`` as bit k."""
    n = state.n_qubits
    t = _tensor(state.probabilities(), n)
    keep_axes = [n - 1 - q for q in qubits]
    other = tuple(ax for ax in range(n) if ax not in keep_axes)
    marg = t.sum(axis=other)  # remaining axes in increasing axis order
    remaining = sorted(keep_axes)
    # move axes so that qubits[k] becomes bit k (last axis = bit 0)
    order = [remaining.index(keep_axes[k]) for k in reversed(range(len(qubits)))]
    return np.transpose(marg, order).reshape(-1)


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """Counter-based (Philox) generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(seed))


def sample_counts(state: StateVector, n_shots: int, seed=None, qubits: Sequence[int] | None = None,
                  rng: np.random.Generator | None = None) -> dict[str, int]:
    """Multinomial shot histogram keyed by bitstring (most significant listed qubit first)."""
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    if qubits is None:
        qubits = list(range(state.n_qubits))
    probs = marginal_probabilities(state, qubits)
    probs = probs / probs.sum()
    rng = rng if rng is not None else make_rng(seed)
    counts = rng.multinomial(n_shots, probs)
    width = len(qubits)
    return {format(i, f"0{width}b"): int(c) for i, c in enumerate(counts) if c}


def dump_amplitudes(state: StateVector, path) -> None:
    """Write ``bitstring re im`` per basis state, 17 significant digits."""
    n = state.n_qubits
    with open(path, "w") as fh:
        for i, a in enumerate(state.amplitudes):
            fh.write(f"{i:0{n}b} {a.real:.16e} {a.imag:.16e}\n")
