from __future__ import annotations

import numpy as np
import pytest

from gsqas.circuit_ir import Circuit, Gate, GATE_KINDS, task_preset


@pytest.fixture(scope="session")
def vqe_preset():
    return task_preset("VQE_TFIM")


@pytest.fixture(scope="session")
def vqc_preset():
    return task_preset("VQC_CE")


def random_circuit(n: int, depth: int, rng: np.random.Generator, kinds=None) -> Circuit:
    """Arbitrary gates on arbitrary qubits with random angles (wider than the preset spaces)."""
    kinds = [GATE_KINDS[k] for k in (kinds or GATE_KINDS)]
    gates = []
    for _ in range(depth):
        kind = kinds[rng.integers(len(kinds))]
        if kind.arity > n:
            continue
        qubits = tuple(int(q) for q in rng.choice(n, kind.arity, replace=False))
        theta = float(rng.uniform(-np.pi, np.pi)) if kind.parameterized else None
        gates.append(Gate(kind, qubits, theta))
    return Circuit(n, tuple(gates))


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return v / np.linalg.norm(v)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
