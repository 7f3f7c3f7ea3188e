"""Approach II: importance sampling over discrete auxiliary fields.

A configuration holds one +-1 field per (site, color pair, layer).  Layer 1
acts on the ket, layer 2 on the bra:

    W(s)   = <psi0| U(s2) U(s1) |psi0>
    N_O(s) = <psi0| U(s2) O U(s1) |psi0>

with U(s) the ordered product of FGivens(s lam) over sites and pairs
(12), (13), (23).  Since every field sum reproduces exp(-g D) exactly,
<O>_g = sum_s N_O(s) / sum_s W(s).

Weights and numerators for all configurations come from two per-layer
tables of propagated states (one matrix product each), so a Metropolis
proposal is a table lookup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .encoding import uniform
from .gutzwiller import hs_params, standard_observables
from .model import COLOR_PAIRS, LatticeSpec
from .oracle import d_table, occupation_table, triple_table
from .statevector import FGIVENS, Gate, H, StateVector, apply_gate_array, pauli_sum_sparse

OBSERVABLES = ("K", "D", "P3")
SWEEP_PAIR_ORDER = (0, 2, 1)  # pairs 12, 23, 13 during a sweep
WEIGHT_FLOOR = 1e-12
MAX_TABLE_SITES = 4


class NonpositiveWeightError(ArithmeticError):
    """A configuration weight fell to or below the positivity floor."""


@dataclass(frozen=True)
class AuxFieldConfig:
    """``s[site][pair][layer]`` in {+1, -1}; pair index follows (12), (13), (23)."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int8)
        if s.ndim != 3 or s.shape[1:] != (3, 2) or not np.all(np.abs(s) == 1):
            raise ValueError("auxiliary fields must have shape (n_site, 3, 2) with entries +-1")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def n_site(self) -> int:
        return self.s.shape[0]

    @classmethod
    def ones(cls, n_site: int) -> "AuxFieldConfig":
        return cls(np.ones((n_site, 3, 2), dtype=np.int8))

    @classmethod
    def from_indices(cls, n_site: int, i1: int, i2: int) -> "AuxFieldConfig":
        """Inverse of :meth:`indices`: bit 3*site + pair of each layer index set means s = -1."""
        s = np.empty((n_site, 3, 2), dtype=np.int8)
        for layer, idx in enumerate((i1, i2)):
            for i in range(n_site):
                for p in range(3):
                    s[i, p, layer] = -1 if (idx >> (3 * i + p)) & 1 else 1
        return cls(s)

    def indices(self) -> tuple[int, int]:
        out = []
        for layer in range(2):
            bits = (self.s[:, :, layer].reshape(-1) < 0).astype(np.int64)
            out.append(int(np.dot(bits, 1 << np.arange(bits.size))))
        return out[0], out[1]

    def flipped(self, site: int, pair: int, layer: int) -> "AuxFieldConfig":
        s = self.s.copy()
        s[site, pair, layer] *= -1
        return AuxFieldConfig(s)


@dataclass(frozen=True)
class McConfig:
    n_warmup: int = 2000
    n_measure: int = 2000
    n_chains: int = 16
    seed: int | np.random.SeedSequence = 0

    def __post_init__(self):
        if min(self.n_warmup, self.n_measure, self.n_chains) < 1:
            raise ValueError("n_warmup, n_measure and n_chains must be positive")
        if isinstance(self.seed, int) and self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class EstimatorRecord:
    """Per-chain means, pooled mean, and stderr = std(chain means, ddof=1) / sqrt(n_chains)."""

    chain_means: np.ndarray
    mean: float
    stderr: float

    @classmethod
    def from_chains(cls, chain_means) -> "EstimatorRecord":
        m = np.asarray(chain_means, dtype=float)
        err = float(np.std(m, ddof=1) / math.sqrt(m.size)) if m.size > 1 else math.nan
        return cls(m, float(m.mean()), err)


# Direct (per-configuration) evaluation ---------------------------------------------

def layer_gates(n_site: int, fields: np.ndarray, lam: float) -> list[Gate]:
    """FGivens(s lam) over sites, then pairs (12), (13), (23), in the color-uniform register."""
    lab = uniform(n_site)
    return [FGIVENS(lab.qubit(i, a), lab.qubit(i, b), float(fields[i, p]) * lam)
            for i in range(n_site) for p, (a, b) in enumerate(COLOR_PAIRS)]


def _real_amplitudes(trial) -> np.ndarray:
    amps = trial.amplitudes if isinstance(trial, StateVector) else np.asarray(trial)
    if np.max(np.abs(np.imag(amps)), initial=0.0) > 1e-12:
        raise ValueError("auxiliary-field sampling needs a real trial state")
    return np.ascontiguousarray(np.real(amps), dtype=float)


def _check_weight(w: float, config=None) -> float:
    if not w > WEIGHT_FLOOR:
        where = f" at config {config.indices()}" if config is not None else ""
        raise NonpositiveWeightError(f"nonpositive weight: phase-problem breach (W = {w:.3e}{where})")
    return w


def _propagate(config: AuxFieldConfig, trial, g: float) -> tuple[np.ndarray, np.ndarray, int]:
    psi0 = _real_amplitudes(trial)
    n_site = config.n_site
    lam = hs_params(g).lam
    n = 3 * n_site
    phi = psi0.copy()
    for gate in layer_gates(n_site, config.s[:, :, 0], lam):
        apply_gate_array(phi, n, gate)
    chi = psi0.copy()  # U(s2)^dag |psi0>
    for gate in reversed(layer_gates(n_site, config.s[:, :, 1], lam)):
        apply_gate_array(chi, n, gate.inverse())
    return phi, chi, n_site


def weight(config: AuxFieldConfig, trial, g: float) -> float:
    """<psi0| U(s2) U(s1) |psi0> by direct statevector propagation."""
    phi, chi, _ = _propagate(config, trial, g)
    return _check_weight(float(np.dot(chi, phi)), config)


def _lattice_needed():
    return ValueError("K needs the lattice; pass lattice=...")


def local_estimator(config: AuxFieldConfig, observable, trial, g: float, lattice: LatticeSpec | None = None,
                    J: float = 1.0) -> float:
    """N_O(s) / W(s) by direct propagation.

    ``observable`` is ``"I"``, ``"K"``, ``"D"``, ``"P3"`` or a list of Pauli strings.
    """
    phi, chi, n_site = _propagate(config, trial, g)
    w = _check_weight(float(np.dot(chi, phi)), config)
    if isinstance(observable, str):
        if observable == "I":
            return 1.0
        if observable == "K":
            if lattice is None:
                raise _lattice_needed()
            op = pauli_sum_sparse(standard_observables(lattice, J)["K"], 3 * n_site).real
            return float(np.dot(chi, op @ phi)) / w
        if observable == "D":
            return float(np.dot(chi, d_table(n_site) * phi)) / w
        if observable == "P3":
            return float(np.dot(chi, triple_table(n_site) * phi)) / w
        raise ValueError(f"unknown observable {observable!r}")
    op = pauli_sum_sparse(observable, 3 * n_site)
    return float(np.real(np.dot(chi, op @ phi))) / w


def hadamard_matrix_element(config: AuxFieldConfig, strings, trial, g: float) -> float:
    """Sum_p c_p Re <psi0|U(s2) P U(s1)|psi0> from exact Hadamard-test ancilla statistics.

    Hardware-style cross-check for two sites: an ancilla in |+> controls the
    whole layer-1 / Pauli / layer-2 sequence, and <Z_anc> gives the real part.
    """
    psi0 = _real_amplitudes(trial)
    n = int(round(math.log2(psi0.size)))
    if n > 6:
        raise ValueError("Hadamard cross-check is limited to two sites")
    lam = hs_params(g).lam
    anc = n
    total = 0.0
    for p in strings:
        state = np.zeros(2 ** (n + 1), dtype=np.complex128)
        state[: psi0.size] = psi0
        seq = [H(anc)]
        seq += [gt.controlled(anc) for gt in layer_gates(config.n_site, config.s[:, :, 0], lam)]
        seq += [Gate(l, (q,)).controlled(anc) for q, l in p.letters]
        seq += [gt.controlled(anc) for gt in layer_gates(config.n_site, config.s[:, :, 1], lam)]
        seq += [H(anc)]
        for gt in seq:
            apply_gate_array(state, n + 1, gt)
        prob = np.abs(state) ** 2
        z = prob[: psi0.size].sum() - prob[psi0.size:].sum()
        total += (p.coefficient * z).real if abs(p.coefficient.imag) < 1e-15 else float("nan")
    return float(total)


# Tables ------------------------------------------------------------------------------

def _sector(psi0: np.ndarray, n_site: int) -> np.ndarray:
    """Basis states with the trial state's total particle number (conserved by every field gate)."""
    nums = occupation_table(n_site).sum(axis=(1, 2))
    present = np.unique(nums[np.abs(psi0) > 1e-14])
    return np.flatnonzero(np.isin(nums, present))


def _layer_table(psi0: np.ndarray, n_site: int, lam: float, adjoint: bool) -> np.ndarray:
    """Rows are propagated states indexed by the layer's field bits (bit 3*site + pair -> gate)."""
    n = 3 * n_site
    lab = uniform(n_site)
    pairs = [(lab.qubit(i, a), lab.qubit(i, b)) for i in range(n_site) for (a, b) in COLOR_PAIRS]
    table = psi0[None, :].copy()
    order = range(len(pairs) - 1, -1, -1) if adjoint else range(len(pairs))
    for k in order:
        a, b = pairs[k]
        sgn = -1.0 if adjoint else 1.0
        plus = table.copy()
        apply_gate_array(plus, n, FGIVENS(a, b, sgn * lam))
        apply_gate_array(table, n, FGIVENS(a, b, -sgn * lam))
        # new field bit k; forward pass appends bits at the top, adjoint pass prepends at the bottom
        stacked = np.stack([plus, table], axis=0 if not adjoint else 1)
        table = stacked.reshape(-1, psi0.size)
    return table


@dataclass
class WeightTables:
    """W[i1, i2] and N_O[i1, i2] for every configuration of a lattice, trial state and g."""

    n_site: int
    g: float
    W: np.ndarray
    numerators: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_bits(self) -> int:
        return 3 * self.n_site

    def min_weight(self) -> float:
        return float(self.W.min())

    def check_positive(self) -> None:
        if not self.min_weight() > WEIGHT_FLOOR:
            i1, i2 = np.unravel_index(np.argmin(self.W), self.W.shape)
            raise NonpositiveWeightError(
                f"nonpositive weight: phase-problem breach (W = {self.W[i1, i2]:.3e} at config ({i1}, {i2}), g = {self.g})")

    def exact_expectations(self) -> dict[str, float]:
        z = self.W.sum()
        return {k: float(v.sum() / z) for k, v in self.numerators.items()}

    def probabilities(self) -> np.ndarray:
        return self.W / self.W.sum()


def build_tables(lattice: LatticeSpec, trial, g: float, J: float = 1.0,
                 observables: Sequence[str] = OBSERVABLES) -> WeightTables:
    n_site = lattice.n_site
    if n_site > MAX_TABLE_SITES:
        raise ValueError(f"configuration tables limited to {MAX_TABLE_SITES} sites")
    psi0 = _real_amplitudes(trial)
    if psi0.size != 2 ** (3 * n_site):
        raise ValueError("trial state does not match the lattice")
    lam = hs_params(g).lam
    cols = _sector(psi0, n_site)
    phi = _layer_table(psi0, n_site, lam, adjoint=False)
    chi = _layer_table(psi0, n_site, lam, adjoint=True)
    phi_s = np.ascontiguousarray(phi[:, cols])
    chi_s = np.ascontiguousarray(chi[:, cols])
    W = phi_s @ chi_s.T
    nums = {}
    for name in observables:
        if name == "D":
            op_phi = phi_s * d_table(n_site)[cols]
        elif name == "P3":
            op_phi = phi_s * triple_table(n_site)[cols]
        elif name == "K":
            op = pauli_sum_sparse(standard_observables(lattice, J)["K"], 3 * n_site).real.tocsr()
            op = op[cols][:, cols]
            op_phi = np.asarray((op @ phi_s.T).T)
        else:
            raise ValueError(f"unknown observable {name!r}")
        nums[name] = op_phi @ chi_s.T
    del phi, chi
    return WeightTables(n_site, g, W, nums)


# Metropolis ---------------------------------------------------------------------------

def sweep_schedule(n_site: int) -> np.ndarray:
    """(layer, bit) pairs in proposal order: sites, pairs 12, 23, 13, layers 1 then 2."""
    return np.array([(layer, 3 * i + p) for i in range(n_site) for p in SWEEP_PAIR_ORDER for layer in (0, 1)],
                    dtype=np.int64)


@numba.njit(cache=True)
def _sweeps(W, nums, i1, i2, schedule, uniforms, n_sweeps, record, trace, floor):
    """Run ``n_sweeps`` sweeps; when ``record`` store per-sweep (weight, local estimators).

    Stops early (last flag False) at a proposal whose weight is below -floor.
    """
    w = W[i1, i2]
    n_obs = nums.shape[0]
    accepted = 0
    zeros = 0
    u = 0
    for t in range(n_sweeps):
        for k in range(schedule.shape[0]):
            layer = schedule[k, 0]
            mask = 1 << schedule[k, 1]
            j1 = i1 ^ mask if layer == 0 else i1
            j2 = i2 ^ mask if layer == 1 else i2
            wn = W[j1, j2]
            if wn <= floor:
                if wn < -floor:
                    return j1, j2, accepted, zeros, False
                zeros += 1  # numerically zero weight: never accepted
            elif wn >= w or uniforms[u] * w < wn:
                i1, i2, w = j1, j2, wn
                accepted += 1
            u += 1
        if record:
            trace[t, 0] = w
            for o in range(n_obs):
                trace[t, 1 + o] = nums[o, i1, i2] / w
    return i1, i2, accepted, zeros, True


@numba.njit(cache=True)
def _histogram(W, i1, i2, schedule, uniforms, n_sweeps, counts, floor):
    w = W[i1, i2]
    u = 0
    for t in range(n_sweeps):
        for k in range(schedule.shape[0]):
            mask = 1 << schedule[k, 1]
            j1 = i1 ^ mask if schedule[k, 0] == 0 else i1
            j2 = i2 ^ mask if schedule[k, 0] == 1 else i2
            wn = W[j1, j2]
            if wn > floor and (wn >= w or uniforms[u] * w < wn):
                i1, i2, w = j1, j2, wn
            u += 1
        counts[i1, i2] += 1
    return i1, i2


def config_histogram(tables: WeightTables, n_sweeps: int, seed=None, chunk: int = 100_000) -> np.ndarray:
    """Visit counts of one chain, recorded after every sweep (no warmup)."""
    rng = np.random.Generator(np.random.Philox(seed))
    i1, i2 = _start(tables, rng)
    sched = sweep_schedule(tables.n_site)
    counts = np.zeros(tables.W.shape, dtype=np.int64)
    done = 0
    while done < n_sweeps:
        m = min(chunk, n_sweeps - done)
        i1, i2 = _histogram(tables.W, i1, i2, sched, rng.random(m * len(sched)), m, counts, WEIGHT_FLOOR)
        done += m
    return counts


def metropolis_sweep(config: AuxFieldConfig, tables: WeightTables, rng: np.random.Generator) -> AuxFieldConfig:
    """One sequential pass of single-field Metropolis proposals."""
    i1, i2 = config.indices()
    if not tables.W[i1, i2] > WEIGHT_FLOOR:
        _breach(tables, i1, i2)
    sched = sweep_schedule(tables.n_site)
    nums = np.zeros((0, 1, 1))
    j1, j2, _, _, ok = _sweeps(tables.W, nums, i1, i2, sched, rng.random(len(sched)), 1, False,
                               np.zeros((1, 1)), WEIGHT_FLOOR)
    if not ok:
        _breach(tables, j1, j2)
    return AuxFieldConfig.from_indices(tables.n_site, int(j1), int(j2))


def _breach(tables: WeightTables, i1: int, i2: int, chain: int | None = None):
    where = f"chain {chain}, " if chain is not None else ""
    raise NonpositiveWeightError(
        f"nonpositive weight: phase-problem breach ({where}config ({i1}, {i2}), W = {tables.W[i1, i2]:.3e}, g = {tables.g})")


@dataclass
class ChainResult:
    index: int
    means: dict[str, float]
    acceptance: float
    zero_weight_proposals: int
    trace: np.ndarray  # columns: weight, then local estimators in observable order


@dataclass
class McResult:
    g: float
    estimates: dict[str, EstimatorRecord]
    chains: list[ChainResult]

    @property
    def acceptance(self) -> float:
        return float(np.mean([c.acceptance for c in self.chains]))

    def dump_traces(self, path_prefix) -> list[str]:
        """Write ``<prefix>_chain<k>.csv`` with ``sweep, weight, O_K, O_D, O_P3``."""
        names = list(self.estimates)
        paths = []
        for ch in self.chains:
            path = f"{path_prefix}_chain{ch.index:02d}.csv"
            header = "sweep,weight," + ",".join(f"O_{n}" for n in names)
            sweeps = np.arange(1, ch.trace.shape[0] + 1)
            np.savetxt(path, np.column_stack([sweeps, ch.trace]), delimiter=",", header=header, comments="",
                       fmt=["%d"] + ["%.12e"] * ch.trace.shape[1])
            paths.append(path)
        return paths


def chain_seeds(master_seed, n_chains: int) -> list[np.random.SeedSequence]:
    """Chain k uses child k of SeedSequence(master_seed) (or of the given SeedSequence)."""
    if isinstance(master_seed, np.random.SeedSequence):
        # fresh copy: spawn() advances a counter on the original
        master_seed = np.random.SeedSequence(master_seed.entropy, spawn_key=master_seed.spawn_key)
    else:
        master_seed = np.random.SeedSequence(master_seed)
    return master_seed.spawn(n_chains)


def _start(tables: WeightTables, rng: np.random.Generator) -> tuple[int, int]:
    size = 1 << tables.n_bits
    for _ in range(1000):
        i1, i2 = (int(x) for x in rng.integers(0, size, 2))
        if tables.W[i1, i2] > WEIGHT_FLOOR:
            return i1, i2
    i1, i2 = np.unravel_index(np.argmax(tables.W), tables.W.shape)
    return int(i1), int(i2)


def run_chain(tables: WeightTables, mc: McConfig, seed: np.random.SeedSequence, names: Sequence[str],
              index: int = 0, nums: np.ndarray | None = None) -> ChainResult:
    """One chain from a uniformly drawn start with W above the floor.

    Proposals whose weight lies within +-WEIGHT_FLOOR of zero are rejected and
    counted; a weight below -WEIGHT_FLOOR aborts with diagnostics.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    if nums is None:
        nums = np.stack([tables.numerators[n] for n in names]) if names else np.zeros((0, 1, 1))
    i1, i2 = _start(tables, rng)
    sched = sweep_schedule(tables.n_site)
    trace = np.empty((mc.n_measure, 1 + len(names)))
    acc = zeros = 0
    for n_sweeps, record in ((mc.n_warmup, False), (mc.n_measure, True)):
        u = rng.random(n_sweeps * len(sched))
        i1, i2, a, z, ok = _sweeps(tables.W, nums, i1, i2, sched, u, n_sweeps, record, trace, WEIGHT_FLOOR)
        if not ok:
            _breach(tables, i1, i2, index)
        acc += a
        zeros += z
    means = {n: float(trace[:, 1 + k].mean()) for k, n in enumerate(names)}
    acceptance = acc / ((mc.n_warmup + mc.n_measure) * len(sched))
    return ChainResult(index, means, acceptance, zeros, trace)


def run_chains(mc: McConfig, lattice: LatticeSpec, trial, g: float, observables: Sequence[str] = OBSERVABLES,
               J: float = 1.0, tables: WeightTables | None = None) -> McResult:
    """Independent chains; measurements after every post-warmup sweep."""
    tables = tables if tables is not None else build_tables(lattice, trial, g, J, observables)
    names = list(observables)
    nums = np.stack([tables.numerators[n] for n in names]) if names else np.zeros((0, 1, 1))
    chains = [run_chain(tables, mc, s, names, k, nums) for k, s in enumerate(chain_seeds(mc.seed, mc.n_chains))]
    est = {n: EstimatorRecord.from_chains([c.means[n] for c in chains]) for n in names}
    return McResult(g, est, chains)


def enumerate_expectations(lattice: LatticeSpec, trial, g: float, J: float = 1.0) -> dict[str, float]:
    """Exhaustive sum over all 2^{6N} configurations (two sites or fewer)."""
    if lattice.n_site > 2:
        raise ValueError("exhaustive enumeration limited to n_site <= 2")
    t = build_tables(lattice, trial, g, J)
    t.check_positive()
    return t.exact_expectations()
