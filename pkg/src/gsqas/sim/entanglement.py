"""Concentratable entanglement and a synthetic CE-filtered state generator."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..circuit_ir import Gate, gate_kind
from .statevector import compile_gate, zero_state

log = logging.getLogger(__name__)

MAX_CE_QUBITS = 8


def subset_purity(psi: np.ndarray, qubits: tuple[int, ...]) -> np.ndarray:
    """``Tr(rho_alpha^2)`` of the reduced state on ``qubits``; works on a stack of states."""
    psi = np.asarray(psi, dtype=complex)
    n = int(np.log2(psi.shape[-1]))
    if not qubits:
        return np.ones(psi.shape[:-1])
    lead = psi.shape[:-1]
    S = int(np.prod(lead, dtype=int))
    T = psi.reshape((S,) + (2,) * n)
    # qubit q is bit q of the index, i.e. tensor axis n-1-q after the stack axis
    keep = [1 + n - 1 - q for q in qubits]
    rest = [a for a in range(1, n + 1) if a not in keep]
    M = T.transpose([0, *keep, *rest]).reshape(S, 1 << len(keep), -1)
    # the smaller Gram matrix has the same non-zero spectrum
    G = M @ M.conj().transpose(0, 2, 1) if 2 * len(keep) <= n else M.conj().transpose(0, 2, 1) @ M
    return (np.abs(G) ** 2).sum(axis=(1, 2)).reshape(lead)


def concentratable_entanglement(psi: np.ndarray) -> float | np.ndarray:
    """``1 - 2^-n * sum over all qubit subsets of Tr(rho_alpha^2)``; the empty subset counts 1."""
    psi = np.asarray(psi, dtype=complex)
    n = int(np.log2(psi.shape[-1]))
    if 2**n != psi.shape[-1]:
        raise ValueError(f"state length {psi.shape[-1]} is not a power of two")
    if n > MAX_CE_QUBITS:
        raise ValueError(f"subset sweep limited to n <= {MAX_CE_QUBITS}, got {n}")
    total = np.zeros(psi.shape[:-1])
    for mask in range(1 << n):
        total = total + subset_purity(psi, tuple(q for q in range(n) if mask >> q & 1))
    ce = 1.0 - total / 2**n
    return float(ce) if ce.ndim == 0 else ce


def hardware_efficient_states(n: int, layers: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` states from Ry/Rz rotations on every qubit interleaved with ``layers`` ZZ brick layers.

    Rotation angles are uniform in [0, 2pi), ZZ angles uniform in [0, pi); layer ``l`` couples
    pairs starting at qubit ``l % 2`` with ring wrap-around.
    """
    psi = zero_state(n, count)
    ry, rz, zz = gate_kind("Ry"), gate_kind("Rz"), gate_kind("ZZ")

    def apply(kind, qubits, theta):
        cg = compile_gate(Gate(kind, qubits), n)
        alpha, beta = cg.alpha_beta(theta[:, None])
        return alpha * psi + beta * psi[:, cg.gather]

    for layer in range(layers + 1):
        for q in range(n):
            psi = apply(ry, (q,), rng.uniform(0, 2 * np.pi, count))
            psi = apply(rz, (q,), rng.uniform(0, 2 * np.pi, count))
        if layer == layers:
            break
        for q in range(layer % 2, n if n > 2 else 1, 2):
            psi = apply(zz, (q, (q + 1) % n), rng.uniform(0, np.pi, count))
    return psi


@dataclass
class CeDataset:
    states: np.ndarray
    ce: np.ndarray
    tried: int

    def __len__(self) -> int:
        return len(self.states)


class SamplingBudgetExceeded(RuntimeError):
    def __init__(self, achieved: int, wanted: int, tried: int):
        super().__init__(f"collected {achieved}/{wanted} states after {tried} candidates")
        self.achieved, self.wanted, self.tried = achieved, wanted, tried


def generate_ce_dataset(
    target_ce: float,
    count: int,
    tol: float,
    n: int,
    rng: np.random.Generator,
    max_layers: int = 4,
    max_tries: int = 200_000,
    chunk: int = 256,
    min_layers: int = 0,
) -> CeDataset:
    """Rejection-sample ``count`` states with ``|CE - target_ce| <= tol``.

    Each candidate draws its entangling-layer count uniformly from ``[min_layers, max_layers]``.
    Raises ``SamplingBudgetExceeded`` (carrying the achieved count) after ``max_tries`` candidates.
    """
    if not 0.0 <= target_ce < 1.0:
        raise ValueError("target CE must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if count < 0 or min_layers < 0 or max_layers < min_layers:
        raise ValueError("bad count or layer range")
    kept, kept_ce, tried = [], [], 0
    while sum(len(k) for k in kept) < count:
        if tried >= max_tries:
            raise SamplingBudgetExceeded(sum(len(k) for k in kept), count, tried)
        m = min(chunk, max_tries - tried)
        layers = rng.integers(min_layers, max_layers + 1, size=m)
        for L in np.unique(layers):
            states = hardware_efficient_states(n, int(L), int((layers == L).sum()), rng)
            ce = np.atleast_1d(concentratable_entanglement(states))
            ok = np.abs(ce - target_ce) <= tol
            kept.append(states[ok])
            kept_ce.append(ce[ok])
        tried += m
    states = np.concatenate(kept)[:count] if kept else np.zeros((0, 2**n), complex)
    ce = np.concatenate(kept_ce)[:count] if kept_ce else np.zeros(0)
    log.debug("CE %.3f: %d states from %d candidates", target_ce, count, tried)
    return CeDataset(states, ce, tried)
