"""Experiment runner: g sweeps to CSV, plus a resource report.

Config files are flat ``key = value`` text with ``schema = 1``::

    schema = 1
    geometry = chain-open
    dims = 4
    U = -1
    g_grid = -4:0:17
    method = approach1-exact
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import oracle
from .gutzwiller import direct_measurement, gate_counts, lcu_postselect, run_approach1, standard_observables
from .model import LatticeSpec, build_lattice
from .sampling import McConfig, NonpositiveWeightError, build_tables, run_chains
from .statevector import MAX_QUBITS, make_rng
from .trialstate import TrialStateSpec, prepare_trial

METHODS = ("approach1-exact", "approach1-shots", "approach2-mc", "approach2-enum", "oracle")
SCHEMA_VERSION = 1
COLUMNS = ("g", "p0", "p0_err", "K", "K_err", "UD", "UD_err", "H", "H_err", "P3_per_site", "P3_per_site_err")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: str = "chain-open"
    dims: tuple[int, ...] = (2,)
    J: float = 1.0
    U: float = -1.0
    trial: str = "fermi-sea"
    delta: float = 0.0
    particles: int | None = None
    g_grid: tuple[float, ...] = (0.0,)
    method: str = "approach1-exact"
    n_shots: int = 100_000
    n_warmup: int = 2000
    n_measure: int = 2000
    n_chains: int = 16
    ancilla_mode: str = "reuse"
    seed: int = 0
    out: str | None = None
    trace_dir: str | None = None

    def lattice(self) -> LatticeSpec:
        return build_lattice(self.geometry, self.dims)

    def trial_spec(self) -> TrialStateSpec:
        return TrialStateSpec(self.trial, self.particles, self.delta)


def _parse_grid(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"g_grid range must be start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigError("g_grid count must be positive")
        return tuple(float(x) for x in np.linspace(start, stop, count))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.lower().replace(",", "x").split("x"))
    except ValueError as exc:
        raise ConfigError(f"bad dims {text!r}") from exc


_PARSERS = {
    "geometry": str, "dims": _parse_dims, "J": float, "U": float, "trial": str, "delta": float,
    "particles": int, "g_grid": _parse_grid, "method": str, "n_shots": int, "n_warmup": int,
    "n_measure": int, "n_chains": int, "ancilla_mode": str, "seed": int, "out": str, "trace_dir": str,
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    raw = dict(cp["experiment"])
    schema = raw.pop("schema", None)
    if schema is None:
        raise ConfigError("missing 'schema' key")
    if schema.strip() != str(SCHEMA_VERSION):
        raise ConfigError(f"unsupported schema {schema!r}; expected {SCHEMA_VERSION}")
    unknown = sorted(set(raw) - set(_PARSERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, text in raw.items():
        try:
            values[key] = _PARSERS[key](text.strip())
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {text!r}") from exc
    cfg = ExperimentConfig(**values)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def validate(cfg: ExperimentConfig) -> None:
    """Schema and capacity checks; raises ConfigError."""
    try:
        lat = cfg.lattice()
        spec = cfg.trial_spec()
        spec.filling(lat.n_site)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.J > 0:
        raise ConfigError("J must be positive")
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; expected one of {METHODS}")
    if not cfg.g_grid:
        raise ConfigError("empty g grid")
    if any(g > 0 for g in cfg.g_grid):
        raise ConfigError("g grid values must be <= 0")
    if cfg.ancilla_mode not in ("reuse", "full"):
        raise ConfigError("ancilla_mode must be 'reuse' or 'full'")
    if min(cfg.n_shots, cfg.n_warmup, cfg.n_measure, cfg.n_chains) < 1:
        raise ConfigError("n_shots, n_warmup, n_measure, n_chains must be positive")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative")
    if spec.kind == "bcs" and (cfg.geometry != "chain-periodic" or lat.n_site % 2):
        raise ConfigError("bcs trial needs chain-periodic geometry with an even number of sites")
    n = lat.n_site
    limits = {
        "oracle": 8, "approach1-exact": 8, "approach1-shots": 8, "approach2-mc": 4, "approach2-enum": 2,
    }
    if cfg.method.startswith("approach1") and cfg.ancilla_mode == "full":
        limits[cfg.method] = MAX_QUBITS // 6
    if n > limits[cfg.method]:
        raise ConfigError(f"capacity exceeded: {cfg.method} supports n_site <= {limits[cfg.method]}, got {n}")


# Running -------------------------------------------------------------------------------

@dataclass
class Row:
    g: float
    p0: float = math.nan
    p0_err: float = math.nan
    K: float = math.nan
    K_err: float = math.nan
    UD: float = math.nan
    UD_err: float = math.nan
    H: float = math.nan
    H_err: float = math.nan
    P3_per_site: float = math.nan
    P3_per_site_err: float = math.nan


def _exact_row(g, U, n_site, K, D, P3, p0=math.nan) -> Row:
    return Row(g, p0, 0.0 if not math.isnan(p0) else math.nan, K, 0.0, U * D, 0.0, K + U * D, 0.0,
               P3 / n_site, 0.0)


def evaluate_point(cfg: ExperimentConfig, lattice: LatticeSpec, trial, g: float,
                   seed: np.random.SeedSequence) -> Row:
    n, U = lattice.n_site, cfg.U
    obs = standard_observables(lattice, cfg.J)
    if cfg.method == "oracle":
        p0 = oracle.success_probability(trial, g)
        K = oracle.gutzwiller_expectation_exact(obs["K"], g, trial)
        D = oracle.diagonal_expectation(oracle.d_table(n), g, trial)
        P3 = oracle.diagonal_expectation(oracle.triple_table(n), g, trial)
        return _exact_row(g, U, n, K, D, P3, p0)
    if cfg.method == "approach1-exact":
        r = run_approach1(lattice, g, trial, obs, reuse_ancilla=cfg.ancilla_mode == "reuse")
        e = r.expectations
        return _exact_row(g, U, n, e["K"], e["D"], e["P3"], r.p0)
    if cfg.method == "approach1-shots":
        p0, reg = lcu_postselect(trial, g, reuse_ancilla=cfg.ancilla_mode == "reuse")
        res = direct_measurement(reg, obs, p0, cfg.n_shots, rng=make_rng(seed))
        K, D, P3 = res["K"], res["D"], res["P3"]
        p_hat = res.n_success / res.n_runs
        return Row(g, p_hat, math.sqrt((p_hat - p_hat**2) / res.n_runs), K.value, K.stderr,
                   U * D.value, abs(U) * D.stderr, K.value + U * D.value,
                   math.hypot(K.stderr, U * D.stderr), P3.value / n, P3.stderr / n)
    if cfg.method == "approach2-enum":
        t = build_tables(lattice, trial, g, cfg.J)
        t.check_positive()
        e = t.exact_expectations()
        return _exact_row(g, U, n, e["K"], e["D"], e["P3"])
    # approach2-mc
    tables = build_tables(lattice, trial, g, cfg.J)
    mc = McConfig(cfg.n_warmup, cfg.n_measure, cfg.n_chains, seed)
    res = run_chains(mc, lattice, trial, g, tables=tables)
    del tables
    if cfg.trace_dir:
        Path(cfg.trace_dir).mkdir(parents=True, exist_ok=True)
        res.dump_traces(Path(cfg.trace_dir) / f"g{g:+.6f}")
    K, D, P3 = (res.estimates[k] for k in ("K", "D", "P3"))
    h_chains = K.chain_means + U * D.chain_means
    h_err = float(np.std(h_chains, ddof=1) / math.sqrt(h_chains.size)) if h_chains.size > 1 else math.nan
    return Row(g, math.nan, math.nan, K.mean, K.stderr, U * D.mean, abs(U) * D.stderr,
               float(h_chains.mean()), h_err, P3.mean / n, P3.stderr / n)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[Row]:
    """One row per grid point, in grid order.  Point k draws from child k of SeedSequence(seed)."""
    validate(cfg)
    lattice = cfg.lattice()
    trial = prepare_trial(lattice, cfg.trial_spec(), cfg.J)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.g_grid))
    jobs = list(zip(cfg.g_grid, seeds))
    if threads <= 1:
        return [evaluate_point(cfg, lattice, trial, g, s) for g, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: evaluate_point(cfg, lattice, trial, *job), jobs))


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x) + 0.0)  # + 0.0 drops negative zero


def format_config(cfg: ExperimentConfig) -> list[str]:
    lines = [f"schema = {SCHEMA_VERSION}"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if f.name == "dims":
            v = "x".join(map(str, v))
        elif f.name == "g_grid":
            v = ",".join(repr(float(g)) for g in v)
        lines.append(f"{f.name} = {v}")
    return lines


def write_csv(rows: list[Row], cfg: ExperimentConfig, stream) -> None:
    stream.write("# gutzsim results\n")
    for line in format_config(cfg):
        stream.write(f"# {line}\n")
    stream.write(f"# git_revision = {git_revision()}\n")
    stream.write(",".join(COLUMNS) + "\n")
    for r in rows:
        d = asdict(r)
        stream.write(",".join(_fmt(d[c]) for c in COLUMNS) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a results file, keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[k]) for r in body]) for k, name in enumerate(header)}


# Resources -------------------------------------------------------------------------------

@dataclass(frozen=True)
class ResourceReport:
    n_site: int
    n_qubits: int
    gutzwiller_cnots: int
    fswaps_per_network: int
    fswap_cnots: int
    trial_cnots_bound: float
    total_cnots: float
    gate_fidelity: float
    circuit_fidelity: float
    p0: float
    epsilon: float
    n_shots: int


def shot_budget(p0: float, fidelity: float, epsilon: float) -> int:
    """ceil(1 / (p0 f^2 eps^2))."""
    for name, v in (("p0", p0), ("fidelity", fidelity), ("epsilon", epsilon)):
        if not 0 < v <= 1:
            raise ValueError(f"{name} must lie in (0, 1], got {v}")
    x = 1.0 / (p0 * fidelity**2 * epsilon**2)
    # guard against 10000.000000000002 style rounding
    return math.ceil(x - 1e-9 * x)


def resource_report(lattice: LatticeSpec, epsilon: float, fidelity: float | None = None, g: float = -1.0,
                    gate_fidelity: float = 0.999, p0: float | None = None, trial: TrialStateSpec | None = None,
                    J: float = 1.0) -> ResourceReport:
    """Gate counts and shot budget; ``fidelity`` defaults to gate_fidelity ** total_cnots.

    ``p0`` defaults to the oracle value for the half-filled Fermi sea at ``g``
    (needs n_site <= 8).
    """
    counts = gate_counts(lattice.n_site)
    f = gate_fidelity ** counts.total if fidelity is None else fidelity
    if p0 is None:
        if lattice.n_site > 8:
            raise ValueError("oracle p0 needs n_site <= 8; pass p0 explicitly")
        state = prepare_trial(lattice, trial or TrialStateSpec(), J)
        p0 = oracle.success_probability(state, g)
    return ResourceReport(
        n_site=lattice.n_site, n_qubits=6 * lattice.n_site, gutzwiller_cnots=counts.gutzwiller_cnots,
        fswaps_per_network=counts.fswaps_per_network, fswap_cnots=counts.fswap_cnots,
        trial_cnots_bound=counts.trial_cnots_bound, total_cnots=counts.total, gate_fidelity=gate_fidelity,
        circuit_fidelity=f, p0=p0, epsilon=epsilon, n_shots=shot_budget(p0, f, epsilon),
    )


# Entry point -------------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gutzsim", description="Gutzwiller-operator simulations on qubits.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="sweep g and write a results CSV")
    run.add_argument("--config", required=True, help="flat key = value config file")
    run.add_argument("--out", help="output CSV (default: config 'out' or stdout)")
    run.add_argument("--seed", type=int, help="master seed (overrides config)")
    run.add_argument("--threads", type=int, default=1, help="grid points evaluated concurrently")
    run.add_argument("--method", choices=METHODS, help="overrides config")
    res = sub.add_parser("resources", help="gate counts and shot budget")
    res.add_argument("--geometry", default="chain-open")
    res.add_argument("--dims", default="2")
    res.add_argument("--g", type=float, default=-1.0)
    res.add_argument("--epsilon", type=float, default=0.01)
    res.add_argument("--fidelity", type=float, help="circuit fidelity (default: gate fidelity ** CNOT count)")
    res.add_argument("--gate-fidelity", type=float, default=0.999)
    res.add_argument("--p0", type=float, help="success probability (default: oracle value at --g)")
    return ap


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.method is not None:
        overrides["method"] = args.method
    if args.out is not None:
        overrides["out"] = args.out
    cfg = replace(cfg, **overrides)
    validate(cfg)
    if args.threads < 1:
        raise ConfigError("--threads must be positive")
    rows = run_experiment(cfg, args.threads)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            write_csv(rows, cfg, fh)
    else:
        write_csv(rows, cfg, sys.stdout)
    return EXIT_OK


def _cmd_resources(args) -> int:
    try:
        lattice = build_lattice(args.geometry, _parse_dims(args.dims))
        rep = resource_report(lattice, args.epsilon, args.fidelity, args.g, args.gate_fidelity, args.p0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for k, v in asdict(rep).items():
        print(f"{k} = {v}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_resources(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonpositiveWeightError as exc:
        print(f"numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
