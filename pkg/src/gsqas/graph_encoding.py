"""Circuit -> (X, A) graph encoding with START/END nodes."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit_ir import Circuit, TaskPreset


@dataclass(frozen=True)
class CircuitGraph:
    """Node features ``X`` (type one-hot then qubit multi-hot) and binary adjacency ``A``.

    Node 0 is START, node ``N-1`` is END, gates sit in between in circuit order.
    """

    X: np.ndarray
    A: np.ndarray
    num_types: int
    task: str = ""

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def F(self) -> int:
        return self.X.shape[1]

    @property
    def type_block(self) -> np.ndarray:
        return self.X[:, : self.num_types]

    @property
    def position_block(self) -> np.ndarray:
        return self.X[:, self.num_types :]

    @property
    def type_index(self) -> np.ndarray:
        return self.type_block.argmax(axis=1)


def encode(c: Circuit, preset: TaskPreset) -> CircuitGraph:
    if c.n != preset.n:
        raise ValueError(f"circuit has {c.n} qubits, preset expects {preset.n}")
    type_of = {k.name: i for i, k in enumerate(preset.gate_set)}
    T = preset.num_types
    start, end = T - 2, T - 1
    N = len(c) + 2
    X = np.zeros((N, T + preset.n))
    A = np.zeros((N, N))
    X[0, start] = 1.0
    X[N - 1, end] = 1.0
    last = [0] * c.n  # node that last touched each wire
    for i, g in enumerate(c.gates, start=1):
        if g.kind.name not in type_of:
            raise ValueError(f"gate {g.kind.name} not in the {preset.task.value} gate set")
        X[i, type_of[g.kind.name]] = 1.0
        for q in g.qubits:
            if q < 0 or q >= c.n:
                raise ValueError(f"gate qubit {q} out of range")
            X[i, T + q] = 1.0
            A[last[q], i] = 1.0
            last[q] = i
    for q in range(c.n):
        A[last[q], N - 1] = 1.0
    return CircuitGraph(X, A, T, preset.task.value)


def symmetrize(A: np.ndarray) -> np.ndarray:
    return A + A.T


def stack_graphs(graphs: list[CircuitGraph]) -> tuple[np.ndarray, np.ndarray]:
    """Batch arrays ``X (B, N, F)`` and symmetrized ``A_hat (B, N, N)``."""
    if len({(g.N, g.F) for g in graphs}) != 1:
        raise ValueError("graphs in a batch must share N and F")
    X = np.stack([g.X for g in graphs])
    A = np.stack([g.A for g in graphs])
    return X, A + np.swapaxes(A, 1, 2)


def is_dag(A: np.ndarray) -> bool:
    indeg = A.sum(axis=0).astype(int)
    frontier = [i for i in range(len(A)) if indeg[i] == 0]
    seen = 0
    while frontier:
        i = frontier.pop()
        seen += 1
        for j in np.flatnonzero(A[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                frontier.append(j)
    return seen == len(A)


def dump_csv(g: CircuitGraph, preset: TaskPreset, x_path: str | Path, a_path: str | Path) -> None:
    names = preset.type_names
    labels = [names[t] for t in g.type_index]
    with open(x_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "kind", *names, *(f"q{q}" for q in range(preset.n))])
        for i, row in enumerate(g.X):
            w.writerow([i, labels[i], *(int(v) for v in row)])
    with open(a_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "kind", *range(g.N)])
        for i, row in enumerate(g.A):
            w.writerow([i, labels[i], *(int(v) for v in row)])
