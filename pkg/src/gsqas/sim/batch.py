"""Vectorized simulation of many same-shape circuits with adjoint gradients."""
from __future__ import annotations

import numpy as np

from ..circuit_ir import Circuit
from .statevector import CompiledObservable, compile_gate, zero_state


class CircuitBatch:
    """Stack of ``B`` circuits with equal qubit and gate counts.

    Angles are held as a ``(G, B)`` slot table; fixed-gate slots are ignored. Rows are
    computed independently, so a circuit's result does not depend on its batch mates.
    """

    def __init__(self, circuits: list[Circuit]):
        if not circuits:
            raise ValueError("empty batch")
        n, G = circuits[0].n, len(circuits[0])
        if any(c.n != n or len(c) != G for c in circuits):
            raise ValueError("batched circuits must share qubit and gate counts")
        B, D = len(circuits), 2**n
        self.n, self.G, self.B, self.D = n, G, B, D
        self.param_mask = np.zeros((G, B), dtype=bool)
        self.scale = np.ones((G, B))
        self.gather = np.empty((G, B, D), dtype=np.int64)
        self.coef = np.empty((G, B, D), dtype=complex)
        self.fixed_alpha = np.zeros((G, B, D), dtype=complex)
        self.fixed_beta = np.zeros((G, B, D), dtype=complex)
        for b, c in enumerate(circuits):
            for j, g in enumerate(c.gates):
                cg = compile_gate(g, n)
                self.gather[j, b] = cg.gather
                self.coef[j, b] = cg.coef
                if cg.parameterized:
                    self.param_mask[j, b] = True
                    self.scale[j, b] = cg.scale
                else:
                    self.fixed_alpha[j, b] = cg.diag
                    self.fixed_beta[j, b] = cg.offdiag
        self.num_params = self.param_mask.sum(axis=0)
        # flat gather indices into a (B, D) array and into a stacked (2, B, D) array
        rows = (np.arange(B) * D)[None, :, None]
        self._flat = self.gather + rows
        self._flat2 = np.stack([self._flat, self._flat + B * D], axis=1)

    def subset(self, rows: np.ndarray) -> CircuitBatch:
        sub = object.__new__(CircuitBatch)
        sub.n, sub.G, sub.D, sub.B = self.n, self.G, self.D, len(rows)
        for name in ("param_mask", "scale", "gather", "coef", "fixed_alpha", "fixed_beta"):
            setattr(sub, name, getattr(self, name)[:, rows])
        sub.num_params = self.num_params[rows]
        r = (np.arange(sub.B) * sub.D)[None, :, None]
        sub._flat = sub.gather + r
        sub._flat2 = np.stack([sub._flat, sub._flat + sub.B * sub.D], axis=1)
        return sub

    # angle layout -------------------------------------------------------------

    def pack(self, thetas: list[np.ndarray]) -> np.ndarray:
        """Per-circuit angle vectors -> ``(G, B)`` slot table."""
        table = np.zeros((self.G, self.B))
        for b, t in enumerate(thetas):
            t = np.asarray(t, dtype=float)
            if len(t) != self.num_params[b]:
                raise ValueError(f"circuit {b}: expected {self.num_params[b]} angles, got {len(t)}")
            table[self.param_mask[:, b], b] = t
        return table

    def unpack(self, table: np.ndarray) -> list[np.ndarray]:
        return [table[self.param_mask[:, b], b].copy() for b in range(self.B)]

    # kernels ------------------------------------------------------------------

    def _coefficients(self, table: np.ndarray):
        half = self.scale * table / 2
        cos, sin = np.cos(half), np.sin(half)
        alpha = np.where(self.param_mask[..., None], cos[..., None], self.fixed_alpha)
        beta = np.where(self.param_mask[..., None], (-1j * sin)[..., None] * self.coef, self.fixed_beta)
        flat_beta = beta.reshape(self.G, -1)
        beta_adj = np.conj(np.take_along_axis(flat_beta, self._flat.reshape(self.G, -1), axis=1))
        return alpha, beta, np.conj(alpha), beta_adj.reshape(beta.shape)

    def forward(self, table: np.ndarray, psi0: np.ndarray | None = None) -> np.ndarray:
        psi = zero_state(self.n, self.B) if psi0 is None else np.array(psi0, dtype=complex)
        alpha, beta, _, _ = self._coefficients(table)
        for j in range(self.G):
            psi = alpha[j] * psi + beta[j] * psi.ravel()[self._flat[j]]
        return psi

    def value_and_grad(self, table: np.ndarray, cobs: CompiledObservable, psi0: np.ndarray | None = None):
        """Energies ``(B,)`` and the ``(G, B)`` gradient table via the adjoint method."""
        psi = zero_state(self.n, self.B) if psi0 is None else np.array(psi0, dtype=complex)
        alpha, beta, alpha_adj, beta_adj = self._coefficients(table)
        for j in range(self.G):
            psi = alpha[j] * psi + beta[j] * psi.ravel()[self._flat[j]]
        lam = cobs.apply(psi)
        energy = np.sum(psi.conj() * lam, axis=-1).real
        grad = self._backward(psi, lam, alpha_adj, beta_adj)
        return energy, grad

    def _backward(self, psi, lam, alpha_adj, beta_adj) -> np.ndarray:
        grad = np.zeros((self.G, self.B))
        pair = np.stack([psi, lam])
        for j in range(self.G - 1, -1, -1):
            if self.param_mask[j].any():
                p_psi = self.coef[j] * pair[0].ravel()[self._flat[j]]
                inner = np.sum(pair[1].conj() * p_psi, axis=-1)
                grad[j] = np.where(self.param_mask[j], self.scale[j] * inner.imag, 0.0)
            pair = alpha_adj[j] * pair + beta_adj[j] * pair.ravel()[self._flat2[j]]
        return grad


def adjoint_gradient(c: Circuit, thetas, psi0: np.ndarray, cotangent_fn):
    """Adjoint gradient of one circuit applied to a stack of input states ``(S, 2^n)``.

    ``cotangent_fn(psi_out)`` returns ``(aux, lam)``; the gradient is summed over the stack.
    """
    c = c.with_thetas(thetas)
    ops = []
    for g in c.gates:
        cg = compile_gate(g, c.n)
        alpha, beta = cg.alpha_beta(g.theta)
        ops.append((cg, alpha, beta))
    psi = np.array(psi0, dtype=complex)
    for cg, alpha, beta in ops:
        psi = alpha * psi + beta * psi[..., cg.gather]
    aux, lam = cotangent_fn(psi)
    grads = []
    for cg, alpha, beta in reversed(ops):
        if cg.parameterized:
            inner = np.sum(lam.conj() * (cg.coef * psi[..., cg.gather]))
            grads.append(cg.scale * inner.imag)
        beta_adj = np.conj(beta[cg.gather]) if np.ndim(beta) else np.conj(beta)
        alpha_adj = np.conj(alpha)
        psi = alpha_adj * psi + beta_adj * psi[..., cg.gather]
        lam = alpha_adj * lam + beta_adj * lam[..., cg.gather]
    return aux, np.array(grads[::-1])
