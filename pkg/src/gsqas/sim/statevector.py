"""Statevector kernels.

Every gate is applied in the form ``alpha * psi + beta * psi[g]`` where ``g`` is an
involutive index permutation of the basis. Parameterized gates are
``cos(r t/2) I - i sin(r t/2) P`` with ``P`` a signed permutation, and the Hadamard splits
into a diagonal part plus a bit flip. Amplitudes are little-endian (qubit 0 is the least
significant bit).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..circuit_ir import Circuit, Gate, GateKind, pauli_matrix

_NORM_TOL = 1e-10


def zero_state(n: int, batch: int | None = None) -> np.ndarray:
    shape = (2**n,) if batch is None else (batch, 2**n)
    psi = np.zeros(shape, dtype=complex)
    psi[..., 0] = 1.0
    return psi


def plus_state(n: int) -> np.ndarray:
    return np.full(2**n, 2 ** (-n / 2), dtype=complex)


def _local_index(y: np.ndarray, qubits: tuple[int, ...]) -> np.ndarray:
    loc = np.zeros_like(y)
    for k, q in enumerate(qubits):
        loc |= ((y >> q) & 1) << k
    return loc


def _replace_local(y: np.ndarray, qubits: tuple[int, ...], loc: np.ndarray) -> np.ndarray:
    x = y.copy()
    for k, q in enumerate(qubits):
        x &= ~(1 << q)
        x |= ((loc >> k) & 1) << q
    return x


def _monomial_embed(local: np.ndarray, qubits: tuple[int, ...], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Embed a local monomial matrix as ``(gather, coef)`` with ``(M psi)[y] = coef[y] * psi[gather[y]]``."""
    nz = np.abs(local) > 1e-12
    if not (nz.sum(axis=1) == 1).all():
        raise ValueError("local matrix is not monomial")
    src = nz.argmax(axis=1)
    y = np.arange(2**n)
    y_loc = _local_index(y, qubits)
    x_loc = src[y_loc]
    return _replace_local(y, qubits, x_loc), local[y_loc, x_loc]


@dataclass(frozen=True)
class CompiledGate:
    """Full-space form of one gate on ``n`` qubits."""

    parameterized: bool
    gather: np.ndarray
    coef: np.ndarray  # P[y, gather[y]] for parameterized kinds
    scale: float = 1.0  # r with G = r P
    diag: np.ndarray | None = None  # fixed gates: alpha
    offdiag: np.ndarray | None = None  # fixed gates: beta

    def alpha_beta(self, theta: float | None) -> tuple[np.ndarray | complex, np.ndarray]:
        if not self.parameterized:
            return self.diag, self.offdiag
        half = self.scale * theta / 2
        return np.cos(half), -1j * np.sin(half) * self.coef


@lru_cache(maxsize=None)
def _compile(kind: GateKind, qubits: tuple[int, ...], n: int) -> CompiledGate:
    if kind.parameterized:
        r = kind.generator_scale
        g, c = _monomial_embed(kind.generator_matrix / r, qubits, n)
        return CompiledGate(True, g, c, r)
    m = kind.matrix
    d = np.diag(np.diag(m))
    g, off = _monomial_embed(m - d, qubits, n)
    y = np.arange(2**n)
    diag = np.diag(m)[_local_index(y, qubits)]
    if np.any(g == y):
        raise ValueError(f"{kind.name}: off-diagonal part must move every basis state")
    return CompiledGate(False, g, np.ones(2**n, dtype=complex), 1.0, diag.astype(complex), off.astype(complex))


def compile_gate(g: Gate, n: int) -> CompiledGate:
    if any(q < 0 or q >= n for q in g.qubits):
        raise ValueError(f"gate qubits {g.qubits} out of range for n={n}")
    return _compile(g.kind, tuple(g.qubits), n)


def apply_gate(psi: np.ndarray, g: Gate, n: int | None = None) -> np.ndarray:
    """Apply ``g`` to a state or a stack of states (last axis is the amplitude axis)."""
    n = n if n is not None else int(np.log2(psi.shape[-1]))
    cg = compile_gate(g, n)
    alpha, beta = cg.alpha_beta(g.theta)
    return alpha * psi + beta * psi[..., cg.gather]


def run_circuit(c: Circuit, thetas=None, psi: np.ndarray | None = None) -> np.ndarray:
    if thetas is not None:
        c = c.with_thetas(thetas)
    psi = zero_state(c.n) if psi is None else np.asarray(psi, dtype=complex)
    if psi.shape[-1] != 2**c.n:
        raise ValueError(f"state dimension {psi.shape[-1]} does not match n={c.n}")
    for g in c.gates:
        psi = apply_gate(psi, g, c.n)
    return psi


# ---------------------------------------------------------------- observables


@dataclass(frozen=True)
class Observable:
    """Real linear combination of Pauli strings, each a mapping qubit -> 'X'|'Y'|'Z'."""

    terms: tuple[tuple[float, tuple[tuple[int, str], ...]], ...]

    @classmethod
    def from_terms(cls, terms) -> Observable:
        norm = []
        for coeff, ops in terms:
            if isinstance(ops, dict):
                ops = ops.items()
            ops = tuple(sorted((int(q), str(p)) for q, p in ops))
            if any(p not in "XYZ" or len(p) != 1 for _, p in ops):
                raise ValueError(f"bad Pauli term {ops}")
            norm.append((float(coeff), ops))
        return cls(tuple(norm))

    def __len__(self) -> int:
        return len(self.terms)

    def num_qubits(self) -> int:
        return max((q for _, ops in self.terms for q, _ in ops), default=-1) + 1

    def compiled(self, n: int) -> CompiledObservable:
        return _compile_observable(self, n)

    def matrix(self, n: int) -> np.ndarray:
        """Dense 2^n x 2^n matrix built from Kronecker products."""
        dim = 2**n
        out = np.zeros((dim, dim), dtype=complex)
        for coeff, ops in self.terms:
            label = ["I"] * n
            for q, p in ops:
                label[q] = p
            out += coeff * pauli_matrix("".join(label))
        return out


@dataclass(frozen=True)
class CompiledObservable:
    """``O psi = sum_m coef[m] * psi[y ^ flips[m]]``, terms grouped by flip mask."""

    flips: tuple[int, ...]
    coefs: tuple[np.ndarray, ...]
    gathers: tuple[np.ndarray, ...]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        for c, g in zip(self.coefs, self.gathers):
            out += c * psi[..., g]
        return out

    def expectation(self, psi: np.ndarray) -> np.ndarray:
        val = np.sum(psi.conj() * self.apply(psi), axis=-1)
        return val.real


@lru_cache(maxsize=None)
def _compile_observable(obs: Observable, n: int) -> CompiledObservable:
    y = np.arange(2**n)
    groups: dict[int, np.ndarray] = {}
    for coeff, ops in obs.terms:
        if any(q >= n for q, _ in ops):
            raise ValueError(f"observable term {ops} exceeds n={n}")
        flip = 0
        phase = np.ones(2**n, dtype=complex)
        # (P psi)[y] = phase(x) psi[x] with x = y ^ flip, phase from the source basis state x
        for q, p in ops:
            if p in "XY":
                flip |= 1 << q
        x = y ^ flip
        for q, p in ops:
            bit = (x >> q) & 1
            if p == "Z":
                phase = phase * (1 - 2 * bit)
            elif p == "Y":
                phase = phase * np.where(bit == 0, 1j, -1j)
        groups[flip] = groups.get(flip, 0) + coeff * phase
    flips = tuple(sorted(groups))
    return CompiledObservable(flips, tuple(groups[f] for f in flips), tuple(y ^ f for f in flips))


def expectation(psi: np.ndarray, obs: Observable) -> float | np.ndarray:
    n = int(np.log2(psi.shape[-1]))
    cobs = obs.compiled(n)
    val = np.sum(psi.conj() * cobs.apply(psi), axis=-1)
    if np.max(np.abs(np.imag(val))) > 1e-10:
        raise ValueError("observable expectation has an imaginary part; is it Hermitian?")
    val = np.real(val)
    return float(val) if np.ndim(val) == 0 else val


def z_signs(n: int) -> np.ndarray:
    """``(n, 2^n)`` table of Z eigenvalues: ``z[i, y] = (-1)^{bit_i(y)}``."""
    y = np.arange(2**n)
    return np.stack([1 - 2 * ((y >> i) & 1) for i in range(n)]).astype(float)


def z_expectations(psi: np.ndarray) -> np.ndarray:
    n = int(np.log2(psi.shape[-1]))
    return (np.abs(psi) ** 2) @ z_signs(n).T


def check_norm(psi: np.ndarray, tol: float = _NORM_TOL) -> None:
    norms = np.linalg.norm(psi, axis=-1)
    if np.max(np.abs(norms - 1.0)) > tol:
        raise AssertionError(f"state norm drifted: {norms}")
