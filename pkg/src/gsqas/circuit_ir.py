"""Circuit representation, gate registry, task presets and layerwise generation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string; character ``k`` acts on local qubit ``k``.

    Little-endian: local qubit 0 is the least significant bit of the basis index.
    """
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(_PAULI[ch], out)
    return out


@dataclass(frozen=True, eq=False)
class GateKind:
    """A gate type.

    Parameterized kinds are ``exp(-i * theta * G / 2)`` where ``G`` is the Pauli sum in
    ``generator`` (list of ``(coefficient, pauli-string)``). Non-parameterized kinds carry
    a fixed local ``matrix`` instead.
    """

    name: str
    arity: int
    parameterized: bool
    generator: tuple[tuple[float, str], ...] = ()
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __hash__(self) -> int:
        return hash(self.name)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GateKind) and other.name == self.name

    @cached_property
    def generator_matrix(self) -> np.ndarray:
        if not self.parameterized:
            raise ValueError(f"{self.name} has no generator")
        dim = 2**self.arity
        g = np.zeros((dim, dim), dtype=complex)
        for coeff, label in self.generator:
            g += coeff * pauli_matrix(label)
        return g

    @cached_property
    def generator_scale(self) -> float:
        """Scalar ``r`` with ``G @ G == r**2 * I``; half the eigen-gap of ``G``.

        Raises ``ValueError`` if the generator is not proportional to an involution.
        """
        g = self.generator_matrix
        evals = np.linalg.eigvalsh(g)
        r = (evals.max() - evals.min()) / 2.0
        if r <= 0 or not np.allclose(g @ g, r**2 * np.eye(len(g)), atol=1e-12):
            raise ValueError(f"generator of {self.name} is not involutory up to scale")
        return float(r)

    def local_unitary(self, theta: float | None = None) -> np.ndarray:
        if not self.parameterized:
            return self.matrix
        r = self.generator_scale
        p = self.generator_matrix / r
        return np.cos(r * theta / 2) * np.eye(len(p)) - 1j * np.sin(r * theta / 2) * p


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

GATE_KINDS: dict[str, GateKind] = {
    k.name: k
    for k in (
        GateKind("H", 1, False, matrix=_H),
        GateKind("Rx", 1, True, ((1.0, "X"),)),
        GateKind("Ry", 1, True, ((1.0, "Y"),)),
        GateKind("Rz", 1, True, ((1.0, "Z"),)),
        GateKind("XX", 2, True, ((1.0, "XX"),)),
        GateKind("YY", 2, True, ((1.0, "YY"),)),
        GateKind("ZZ", 2, True, ((1.0, "ZZ"),)),
        # sigma_0 sigma_0 + XX + YY + ZZ, i.e. twice the usual SWAP matrix
        GateKind("pSWAP", 2, True, ((1.0, "II"), (1.0, "XX"), (1.0, "YY"), (1.0, "ZZ"))),
    )
}


def gate_kind(name: str) -> GateKind:
    try:
        return GATE_KINDS[name]
    except KeyError:
        raise ValueError(f"unknown gate kind {name!r}") from None


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self) -> None:
        if len(self.qubits) != self.kind.arity:
            raise ValueError(f"{self.kind.name} acts on {self.kind.arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")
        if self.kind.parameterized and self.theta is None:
            object.__setattr__(self, "theta", 0.0)
        if not self.kind.parameterized and self.theta is not None:
            raise ValueError(f"{self.kind.name} takes no angle")


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if any(q < 0 or q >= self.n for q in g.qubits):
                raise ValueError(f"gate {g.kind.name}{g.qubits} out of range for n={self.n}")

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def num_params(self) -> int:
        return sum(g.kind.parameterized for g in self.gates)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([g.theta for g in self.gates if g.kind.parameterized], dtype=float)

    def with_thetas(self, thetas) -> Circuit:
        thetas = list(np.asarray(thetas, dtype=float))
        if len(thetas) != self.num_params:
            raise ValueError(f"expected {self.num_params} angles, got {len(thetas)}")
        it = iter(thetas)
        gates = [Gate(g.kind, g.qubits, float(next(it)) if g.kind.parameterized else None) for g in self.gates]
        return Circuit(self.n, tuple(gates))

    def structure(self) -> str:
        """Canonical structure string (angles ignored)."""
        return f"{self.n}|" + ";".join(f"{g.kind.name}:{','.join(map(str, g.qubits))}" for g in self.gates)

    def digest(self) -> str:
        return hashlib.sha1(self.structure().encode()).hexdigest()

    def to_dict(self) -> dict:
        gates = []
        for g in self.gates:
            d = {"k": g.kind.name, "q": list(g.qubits)}
            if g.kind.parameterized:
                d["theta"] = float(g.theta)
            gates.append(d)
        return {"n": self.n, "gates": gates}

    @classmethod
    def from_dict(cls, d: dict) -> Circuit:
        gates = tuple(
            Gate(gate_kind(g["k"]), tuple(int(q) for q in g["q"]), g.get("theta")) for g in d["gates"]
        )
        return cls(int(d["n"]), gates)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class Task(str, Enum):
    VQE_TFIM = "VQE_TFIM"
    VQC_CE = "VQC_CE"

    @classmethod
    def parse(cls, value: str | Task) -> Task:
        if isinstance(value, Task):
            return value
        key = str(value).upper()
        aliases = {"VQE": cls.VQE_TFIM, "VQC": cls.VQC_CE}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown task {value!r}") from None


@dataclass(frozen=True)
class TaskPreset:
    task: Task
    n: int
    gate_set: tuple[GateKind, ...]
    total_gates: int
    generated_layers: int
    start_with_hadamard_layer: bool

    def __post_init__(self) -> None:
        if self.n % 2:
            raise ValueError("layerwise generation needs an even qubit count")
        start = self.n if self.start_with_hadamard_layer else 0
        if start + self.generated_layers * (self.n // 2) != self.total_gates:
            raise ValueError("total_gates must equal start layer plus generated_layers * n/2")

    @property
    def type_names(self) -> tuple[str, ...]:
        return tuple(k.name for k in self.gate_set) + ("START", "END")

    @property
    def num_types(self) -> int:
        return len(self.gate_set) + 2

    @property
    def feature_dim(self) -> int:
        return self.num_types + self.n

    @property
    def num_nodes(self) -> int:
        return self.total_gates + 2

    def conforms(self, c: Circuit) -> bool:
        names = {k.name for k in self.gate_set}
        return c.n == self.n and len(c) == self.total_gates and all(g.kind.name in names for g in c.gates)


def task_preset(task: str | Task) -> TaskPreset:
    task = Task.parse(task)
    if task is Task.VQE_TFIM:
        kinds = ("H", "Rx", "Ry", "Rz", "XX", "YY", "ZZ")
        return TaskPreset(task, 6, tuple(map(gate_kind, kinds)), 36, 10, True)
    kinds = ("Rx", "Ry", "Rz", "XX", "YY", "ZZ", "pSWAP")
    return TaskPreset(task, 8, tuple(map(gate_kind, kinds)), 32, 8, False)


def layer_qubits(n: int, arity: int, odd: bool) -> list[tuple[int, ...]]:
    """Qubit targets of one layer: n/2 single-qubit slots or n/2 nearest-neighbour pairs (ring)."""
    if arity == 1:
        return [(q,) for q in range(1 if odd else 0, n, 2)]
    if odd:
        return [(q, (q + 1) % n) for q in range(1, n, 2)]
    return [(q, q + 1) for q in range(0, n, 2)]


def layerwise_generate(preset: TaskPreset, rng: np.random.Generator) -> Circuit:
    gates: list[Gate] = []
    if preset.start_with_hadamard_layer:
        gates.extend(Gate(GATE_KINDS["H"], (q,)) for q in range(preset.n))
    for _ in range(preset.generated_layers):
        kind = preset.gate_set[int(rng.integers(len(preset.gate_set)))]
        odd = bool(rng.integers(2))
        gates.extend(Gate(kind, qs) for qs in layer_qubits(preset.n, kind.arity, odd))
    return Circuit(preset.n, tuple(gates))


def generate_circuits(preset: TaskPreset, count: int, seed: int) -> list[Circuit]:
    rng = np.random.default_rng(seed)
    return [layerwise_generate(preset, rng) for _ in range(count)]


def circuit_depth(c: Circuit) -> int:
    level = [0] * c.n
    for g in c.gates:
        d = max(level[q] for q in g.qubits) + 1
        for q in g.qubits:
            level[q] = d
    return max(level, default=0)
