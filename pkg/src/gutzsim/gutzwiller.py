"""Approach I: the Gutzwiller operator as a linear combination of fermionic Givens rotations.

Each (site, color pair) gets one ancilla.  With the ancilla sandwiched by
Hadamards, an unconditional FGivens(+lam) followed by an ancilla-controlled
FGivens(-2 lam) leaves (G(lam) + G(-lam))/2 on the ancilla-|0> branch, and
the product over all pairs is proportional to exp(-g D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .encoding import (
    PauliString, QubitLabeling, alternating, fswap_network, jw_color_flip, jw_terms, uniform,
)
from .model import COLOR_PAIRS, LatticeSpec, interaction_terms, kinetic_terms, triple_occupancy_terms
from .statevector import (
    CZ, FGIVENS, H, RX, RY, RZ, Circuit, Gate, StateVector, apply_gate_array, expectation_pauli,
    make_rng, marginal_probabilities, pauli_sum_sparse, postselect, run_circuit,
)


class RepulsiveCouplingError(ValueError):
    pass


class NonUnitaryObservableError(ValueError):
    pass


@dataclass(frozen=True)
class GutzwillerParams:
    g: float
    gamma: float
    lam: float


def hs_params(g: float) -> GutzwillerParams:
    """gamma = exp(-g/4)/2 and lam = arccos(exp(g/2)); requires g <= 0."""
    if g > 0:
        raise RepulsiveCouplingError(f"repulsive g unsupported (g = {g})")
    gamma = 0.5 * math.exp(-g / 4)
    lam = math.acos(min(1.0, math.exp(g / 2)))
    return GutzwillerParams(g, gamma, lam)


def hs_identity_check(g: float) -> float:
    """Max elementwise gap between both sides of the single-pair HS identity (two modes)."""
    p = hs_params(g)
    lab = uniform(1)
    flip = pauli_sum_sparse(jw_color_flip(0, 0, 1, lab), 3).toarray()
    # restrict the 3-mode operator to modes 0, 1 with mode 2 empty
    sub = [0, 1, 2, 3]
    A = flip[np.ix_(sub, sub)]
    rhs = p.gamma * (expm(p.lam * A) + expm(-p.lam * A))
    n0 = np.array([0, 1, 0, 1])
    n1 = np.array([0, 0, 1, 1])
    lhs = np.diag(np.exp(-g * (n0 - 0.5) * (n1 - 0.5)))
    return float(np.max(np.abs(lhs - rhs)))


# Observables ----------------------------------------------------------------

def standard_observables(lattice: LatticeSpec, J: float = 1.0,
                         labeling: QubitLabeling | None = None) -> dict[str, list[PauliString]]:
    """JW forms of K, D and P3 (summed over sites)."""
    lab = labeling or uniform(lattice.n_site)
    return {
        "K": jw_terms(kinetic_terms(lattice, J), lab),
        "D": jw_terms(interaction_terms(lattice), lab),
        "P3": jw_terms(triple_occupancy_terms(lattice), lab),
    }


# Circuit construction -----------------------------------------------------------

@dataclass
class LcuCircuitLayout:
    """Register qubits ``0 .. 3N-1`` (color-uniform at input and output), one ancilla per
    (site, pair) above them, and an optional Hadamard-test ancilla on top."""

    n_site: int
    params: GutzwillerParams
    circuit: Circuit
    register: tuple[int, ...]
    ancillas: tuple[int, ...]
    ht_ancilla: int | None = None
    pair_ancilla: dict = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits


def _pair_targets(site: int, pair: tuple[int, int], lab: QubitLabeling) -> tuple[int, int]:
    return lab.qubit(site, pair[0]), lab.qubit(site, pair[1])


def pair_block(site: int, pair: tuple[int, int], lam: float, ancilla: int, n_site: int) -> list[Gate]:
    """H, FGivens(+lam), controlled FGivens(-2 lam), H on the color-alternating register."""
    a, b = _pair_targets(site, pair, alternating(n_site))
    return [H(ancilla), FGIVENS(a, b, lam), FGIVENS(a, b, -2 * lam).controlled(ancilla), H(ancilla)]


def pair_block_decomposed(site: int, pair: tuple[int, int], lam: float, ancilla: int, n_site: int) -> list[Gate]:
    """Same operator as :func:`pair_block` from CZ, rotations and two controlled rotations.

    Givens(t) = V^dag CZ (Rx_a(t) Ry_b(t)) CZ V with V = Rx_a(pi/2) Rz_b(pi/2) Rx_b(-pi/2); the
    unconditional and controlled halves share V and one CZ pair, and the
    parity-string CZs are left uncontrolled.
    """
    a, b = _pair_targets(site, pair, alternating(n_site))
    string = [CZ(b, l) for l in range(min(a, b) + 1, max(a, b))]
    v = [RX(a, math.pi / 2), RX(b, -math.pi / 2), RZ(b, math.pi / 2)]
    v_dag = [RZ(b, -math.pi / 2), RX(b, math.pi / 2), RX(a, -math.pi / 2)]
    return ([H(ancilla)] + string + v + [CZ(a, b), RX(a, lam), RY(b, lam),
             RX(a, -2 * lam).controlled(ancilla), RY(b, -2 * lam).controlled(ancilla), CZ(a, b)]
            + v_dag + string + [H(ancilla)])


def build_lcu_circuit(n_site: int, g: float, trial: Circuit | None = None, *,
                      hadamard_ancilla: bool = False, decomposed: bool = False) -> LcuCircuitLayout:
    p = hs_params(g)
    nreg = 3 * n_site
    n_qubits = 2 * nreg + (1 if hadamard_ancilla else 0)
    circ = Circuit(n_qubits)
    if trial is not None:
        if trial.n_qubits != nreg:
            raise ValueError("trial circuit must act on the 3N register qubits")
        circ.extend(trial.gates)
    to_alt = fswap_network(n_site, "to-alternating")
    circ.extend(to_alt.gates())
    pair_ancilla = {}
    block = pair_block_decomposed if decomposed else pair_block
    for i in range(n_site):
        for k, pair in enumerate(COLOR_PAIRS):
            anc = nreg + 3 * i + k
            pair_ancilla[i, pair] = anc
            circ.extend(block(i, pair, p.lam, anc, n_site))
    circ.extend(to_alt.reversed().gates())
    return LcuCircuitLayout(
        n_site=n_site, params=p, circuit=circ, register=tuple(range(nreg)),
        ancillas=tuple(range(nreg, 2 * nreg)), ht_ancilla=2 * nreg if hadamard_ancilla else None,
        pair_ancilla=pair_ancilla,
    )


# Execution ------------------------------------------------------------------------

def lcu_postselect(trial: StateVector, g: float, *, reuse_ancilla: bool = True) -> tuple[float, StateVector]:
    """Run the Gutzwiller block on ``trial`` and keep the all-ancillas-|0> branch.

    ``reuse_ancilla=False`` simulates all 3N ancillas at once (6N qubits).
    ``reuse_ancilla=True`` measures one ancilla right after its block and
    recycles it, so only 3N + 1 qubits are live; the postselected state and the
    product of branch probabilities are identical.
    """
    nreg = trial.n_qubits
    n_site = nreg // 3
    p = hs_params(g)
    if not reuse_ancilla:
        layout = build_lcu_circuit(n_site, g)
        state = run_circuit(layout.circuit, trial.extend(nreg))
        return postselect(state, layout.ancillas, "0" * nreg)
    to_alt = fswap_network(n_site, "to-alternating")
    state = trial.extend(1)
    amps, n = state.amplitudes, state.n_qubits
    for gate in to_alt.gates():
        apply_gate_array(amps, n, gate)
    p0 = 1.0
    t = amps.reshape(2, -1)
    for i in range(n_site):
        for pair in COLOR_PAIRS:
            for gate in pair_block(i, pair, p.lam, nreg, n_site):
                apply_gate_array(amps, n, gate)
            prob = float(np.vdot(t[0], t[0]).real)
            if prob <= 0.0:
                from .statevector import PostselectionError

                raise PostselectionError("postselected branch has zero probability")
            p0 *= prob
            t[0] /= math.sqrt(prob)
            t[1] = 0.0
    reg = StateVector(np.ascontiguousarray(t[0]), nreg, normalized=False, _copy=False)
    for gate in to_alt.reversed().gates():
        apply_gate_array(reg.amplitudes, nreg, gate)
    return p0, reg


@dataclass
class Approach1Result:
    g: float
    p0: float
    expectations: dict[str, float]
    state: StateVector


def run_approach1(lattice: LatticeSpec, g: float, trial: StateVector,
                  observables: Mapping[str, Sequence[PauliString]] | None = None, *,
                  reuse_ancilla: bool = True) -> Approach1Result:
    """Exact mode: amplitude postselection, then expectations on the register."""
    if trial.n_qubits != 3 * lattice.n_site:
        raise ValueError("trial state does not match the lattice")
    if observables is None:
        observables = standard_observables(lattice)
    p0, reg = lcu_postselect(trial, g, reuse_ancilla=reuse_ancilla)
    values = {name: expectation_pauli(reg, strings) for name, strings in observables.items()}
    return Approach1Result(g, p0, values, reg)


# Hadamard test ------------------------------------------------------------------------

@dataclass(frozen=True)
class HadamardResult:
    value: float
    stderr: float
    p0: float
    n_effective: float


def _unitary_gates(observable, ht: int) -> tuple[list[Gate], complex]:
    if isinstance(observable, PauliString):
        c = observable.coefficient
        if abs(abs(c) - 1.0) > 1e-12:
            raise NonUnitaryObservableError(f"Pauli string with coefficient {c} is not unitary")
        gates = [Gate(l, (q,)).controlled(ht) for q, l in observable.letters]
        return gates, c
    if isinstance(observable, Gate):
        observable = [observable]
    return [g.controlled(ht) for g in observable], 1.0


def hadamard_test(trial: StateVector, g: float, observable, n_shots: int | None = None, *,
                  seed=None, rng: np.random.Generator | None = None,
                  reuse_ancilla: bool = True) -> HadamardResult:
    """Re <psi_g|O|psi_g> from one extra ancilla after the Gutzwiller block.

    ``observable`` is a unit-modulus PauliString or a gate sequence (e.g. the
    three-qubit controlled-CZ).  With ``n_shots=None`` the ancilla statistics
    are exact; otherwise shots are drawn and only the postselected ones count.
    """
    nreg = trial.n_qubits
    if reuse_ancilla:
        p0, reg = lcu_postselect(trial, g, reuse_ancilla=True)
        ht = nreg
        state = reg.extend(1)
        anc_qubits: tuple[int, ...] = ()
    else:
        layout = build_lcu_circuit(nreg // 3, g, hadamard_ancilla=True)
        ht = layout.ht_ancilla
        state = run_circuit(layout.circuit, trial.extend(nreg + 1))
        anc_qubits = layout.ancillas
        p0 = float(marginal_probabilities(state, anc_qubits)[0])
    gates, coef = _unitary_gates(observable, ht)
    for gate in [H(ht), *gates, H(ht)]:
        apply_gate_array(state.amplitudes, state.n_qubits, gate)
    # outcome index: bit k = value of (anc_qubits + (ht,))[k]
    probs = marginal_probabilities(state, anc_qubits + (ht,))
    zero_anc = 0
    pz0, pz1 = probs[zero_anc], probs[zero_anc | (1 << len(anc_qubits))]
    if reuse_ancilla:
        pz0, pz1 = p0 * pz0, p0 * pz1
    if n_shots is None:
        value = (pz0 - pz1) / p0
        return HadamardResult(float((coef * value).real), 0.0, p0, math.inf)
    rng = rng if rng is not None else make_rng(seed)
    n0, n1, _ = (int(c) for c in rng.multinomial(n_shots, [pz0, pz1, max(0.0, 1.0 - pz0 - pz1)]))
    n_eff = n0 + n1
    if n_eff == 0:
        return HadamardResult(math.nan, math.nan, 0.0, 0.0)
    mean = (n0 - n1) / n_eff
    err = math.sqrt(max(0.0, 1.0 - mean**2) / n_eff)
    return HadamardResult(float((coef * mean).real), err * abs(coef), n_eff / n_shots, float(n_eff))


def ccz_unitary(site: int, n_site: int) -> Gate:
    """The three-qubit controlled-CZ on one site; P3 at that site is (1 - <CCZ>)/2."""
    lab = uniform(n_site)
    return Gate("CCZ", tuple(lab.qubit(site, c) for c in range(3)))


# Direct measurement ---------------------------------------------------------------------

def measurement_settings(strings: Sequence[PauliString]) -> list[dict[int, str]]:
    """Greedy grouping into qubit-wise compatible single-qubit bases."""
    settings: list[dict[int, str]] = []
    for p in strings:
        for s in settings:
            if all(s.get(q, l) == l for q, l in p.letters):
                s.update(dict(p.letters))
                break
        else:
            settings.append(dict(p.letters))
    return settings


def _rotate_to_z(state: StateVector, basis: Mapping[int, str]) -> StateVector:
    out = state.copy()
    for q, l in sorted(basis.items()):
        if l == "X":
            apply_gate_array(out.amplitudes, out.n_qubits, H(q))
        elif l == "Y":
            apply_gate_array(out.amplitudes, out.n_qubits, RZ(q, -math.pi / 2))
            apply_gate_array(out.amplitudes, out.n_qubits, H(q))
    return out


def _eigenvalues(strings: Sequence[PauliString], n: int) -> np.ndarray:
    """Per basis outcome, the value of sum_p c_p prod_{q in p} (-1)^bit_q (after rotation)."""
    x = np.arange(2**n, dtype=np.int64)
    total = np.zeros(2**n)
    for p in strings:
        mask = 0
        for q, _ in p.letters:
            mask |= 1 << q
        parity = np.zeros_like(x)
        m = x & mask
        while np.any(m):
            parity ^= m & 1
            m >>= 1
        total += p.coefficient.real * (1 - 2 * parity)
    return total


@dataclass(frozen=True)
class MeasuredValue:
    value: float
    stderr: float


@dataclass(frozen=True)
class DirectResult:
    """Estimates per observable plus the postselection tally over all runs."""

    values: dict[str, MeasuredValue]
    n_success: int = 0
    n_runs: int = 0

    def __getitem__(self, name: str) -> MeasuredValue:
        return self.values[name]


def direct_measurement(register: StateVector, observables: Mapping[str, Sequence[PauliString]], p0: float = 1.0,
                       n_shots: int | None = None, *, seed=None,
                       rng: np.random.Generator | None = None) -> DirectResult:
    """Expectation values from computational-basis readout of the postselected register.

    Every measurement setting is a separate run of ``n_shots`` circuit
    executions of which a Binomial(n_shots, p0) number survive postselection.
    Settings are shared across observables.  Hermitian (real-coefficient)
    Pauli sums only.
    """
    all_strings = [p for strings in observables.values() for p in strings if p.letters]
    settings = measurement_settings(all_strings)
    assign = {}
    for name, strings in observables.items():
        for p in strings:
            if abs(p.coefficient.imag) > 1e-14:
                raise ValueError("direct measurement needs real coefficients")
            if not p.letters:
                continue
            for k, s in enumerate(settings):
                if all(s.get(q) == l for q, l in p.letters):
                    assign.setdefault((name, k), []).append(p)
                    break
    n = register.n_qubits
    if n_shots is not None:
        rng = rng if rng is not None else make_rng(seed)
    acc = {name: [sum(p.coefficient.real for p in strings if not p.letters), 0.0]
           for name, strings in observables.items()}
    n_success = 0
    for k, basis in enumerate(settings):
        probs = _rotate_to_z(register, basis).probabilities()
        probs = probs / probs.sum()
        if n_shots is None:
            for name in observables:
                if (name, k) in assign:
                    acc[name][0] += float(np.dot(probs, _eigenvalues(assign[name, k], n)))
            continue
        n_eff = int(rng.binomial(n_shots, p0))
        n_success += n_eff
        counts = rng.multinomial(n_eff, probs) if n_eff else np.zeros(probs.size, dtype=np.int64)
        for name in observables:
            if (name, k) not in assign:
                continue
            if n_eff == 0:
                acc[name] = [math.nan, math.nan]
                continue
            vals = _eigenvalues(assign[name, k], n)
            mean = float(np.dot(counts, vals) / n_eff)
            var = float(np.dot(counts, (vals - mean) ** 2) / n_eff)
            acc[name][0] += mean
            acc[name][1] += var / n_eff
    values = {name: MeasuredValue(v, math.sqrt(e)) for name, (v, e) in acc.items()}
    return DirectResult(values, n_success, 0 if n_shots is None else n_shots * len(settings))


def estimate_p0(n_success: int, n_shots: int) -> tuple[float, float, float]:
    """Sample mean, per-shot sample variance p - p^2, and standard error of the success rate."""
    p = n_success / n_shots
    var = p - p * p
    return p, var, math.sqrt(var / n_shots)


# Resources -----------------------------------------------------------------------------

CNOT_COST = {"CZ": 1, "CNOT": 1, "CRX": 2, "CRY": 2, "SWAP": 3, "FSWAP": 2, "GIVENS": 2}


@dataclass(frozen=True)
class GateCountReport:
    n_site: int
    gutzwiller_cnots: int
    gutzwiller_cnots_counted: int
    fswaps_per_network: int
    fswap_cnots: int
    trial_givens_bound: float
    trial_cnots_bound: float
    total: float

    @property
    def n_qubits(self) -> int:
        return 6 * self.n_site


def count_cnots(circuit: Circuit | Sequence[Gate]) -> int:
    total = 0
    for g in circuit:
        name = "C" * len(g.controls) + g.kind
        total += CNOT_COST.get(name, 0)
        if len(g.qubits) > 1 and name not in CNOT_COST and not name.startswith("CH"):
            raise ValueError(f"no CNOT cost for {name}")
    return total


def gate_counts(n_site: int) -> GateCountReport:
    """CNOT budget of the 6N-qubit circuit.

    Gutzwiller block: 8 CZ + 3 CRx + 3 CRy per site.  Each relabeling network
    has 3/2 N(N-1) f-SWAPs at 2 CNOTs each.  The Fermi sea takes at most
    3/4 N^2 Givens rotations at 2 CNOTs each.
    """
    if n_site < 1:
        raise ValueError("n_site must be positive")
    block = [gate for i in range(n_site) for k, pair in enumerate(COLOR_PAIRS)
             for gate in pair_block_decomposed(i, pair, 0.1, 3 * n_site + 3 * i + k, n_site)]
    counted = count_cnots(block)
    nswap = len(fswap_network(n_site))
    givens = 0.75 * n_site**2
    total = 20 * n_site + 2 * 2 * nswap + 2 * givens
    return GateCountReport(
        n_site=n_site, gutzwiller_cnots=20 * n_site, gutzwiller_cnots_counted=counted,
        fswaps_per_network=nswap, fswap_cnots=4 * nswap, trial_givens_bound=givens,
        trial_cnots_bound=2 * givens, total=total,
    )
