"""Shared reference operators.

Dense fermion operators are built here straight from Kronecker products so the
tests do not lean on the package's own Pauli-string or gate code.  Qubit q is
bit q of the basis index (qubit 0 least significant).
"""

import functools

import numpy as np
import pytest
import scipy.sparse as sp

I2 = np.eye(2)
Z2 = np.diag([1.0, -1.0])
LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1| : removes a fermion


def kron_ops(ops_by_qubit: dict, n: int) -> np.ndarray:
    """Tensor product with qubit n-1 as the leftmost factor."""
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, ops_by_qubit.get(q, I2))
    return out


@functools.lru_cache(maxsize=None)
def annihilator(q: int, n: int) -> np.ndarray:
    ops = {l: Z2 for l in range(q)}
    ops[q] = LOWER
    return kron_ops(ops, n)


def number_op(q: int, n: int) -> np.ndarray:
    c = annihilator(q, n)
    return c.conj().T @ c


@functools.lru_cache(maxsize=64)
def sparse_annihilator(q: int, n: int) -> sp.csr_matrix:
    """Same operator as annihilator() in CSR form, for registers too big to densify."""
    out = sp.identity(1, dtype=complex, format="csr")
    for l in reversed(range(n)):
        f = Z2 if l < q else LOWER if l == q else I2
        out = sp.kron(out, sp.csr_matrix(f), format="csr")
    return out


def sparse_number(q: int, n: int) -> sp.csr_matrix:
    c = sparse_annihilator(q, n)
    return (c.conj().T @ c).tocsr()


def random_state(n: int, rng, real=False) -> np.ndarray:
    v = rng.normal(size=2**n)
    if not real:
        v = v + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance_report(request):
    """Call with (number, title, passed, detail); lines are printed in the terminal summary."""
    lines = request.config._acceptance_lines

    def report(number, title, passed, detail=""):
        line = f"ACCEPTANCE {number} {title}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        lines.append((number, line))
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
