"""TFIM Hamiltonian, exact diagonalization, energies, gradients and VQE training."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..circuit_ir import Circuit
from ..nn.optim import AdamState, adam_update
from .batch import CircuitBatch, adjoint_gradient
from .statevector import Observable, run_circuit, zero_state

TFIM_GROUND_ENERGY_6 = -7.7274066
MAX_DENSE_DIM = 4096


def tfim_hamiltonian(n: int) -> Observable:
    """Periodic chain ``sum_i Z_i Z_{i+1 mod n} + X_i``."""
    if n < 2:
        raise ValueError("TFIM needs at least 2 qubits")
    terms = [(1.0, {i: "Z", (i + 1) % n: "Z"}) for i in range(n)]
    terms += [(1.0, {i: "X"}) for i in range(n)]
    return Observable.from_terms(terms)


def exact_ground_energy(obs: Observable, n: int) -> float:
    if 2**n > MAX_DENSE_DIM:
        raise ValueError(f"dense diagonalization limited to 2^n <= {MAX_DENSE_DIM}")
    return float(np.linalg.eigvalsh(obs.matrix(n))[0])


def energy(c: Circuit, thetas, obs: Observable) -> float:
    thetas = np.asarray(thetas, dtype=float)
    if len(thetas) != c.num_params:
        raise ValueError(f"expected {c.num_params} angles, got {len(thetas)}")
    psi = run_circuit(c, thetas)
    return float(obs.compiled(c.n).expectation(psi))


def parameter_shift_grad(c: Circuit, thetas, obs: Observable) -> np.ndarray:
    """Two-point shift rule; shift and prefactor follow from each generator's eigen-gap."""
    thetas = np.asarray(thetas, dtype=float)
    if len(thetas) != c.num_params:
        raise ValueError(f"expected {c.num_params} angles, got {len(thetas)}")
    scales = [g.kind.generator_scale for g in c.gates if g.kind.parameterized]
    grad = np.empty(len(thetas))
    for k, r in enumerate(scales):
        shift = np.pi / (2 * r)
        plus, minus = thetas.copy(), thetas.copy()
        plus[k] += shift
        minus[k] -= shift
        grad[k] = r / 2 * (energy(c, plus, obs) - energy(c, minus, obs))
    return grad


def adjoint_energy_grad(c: Circuit, thetas, obs: Observable) -> tuple[float, np.ndarray]:
    cobs = obs.compiled(c.n)

    def cot(psi):
        lam = cobs.apply(psi)
        return float(np.sum(psi.conj() * lam).real), lam

    return adjoint_gradient(c, thetas, zero_state(c.n), cot)


@dataclass(frozen=True)
class VqeOptions:
    lr: float = 0.05
    tol: float = 1e-6
    patience: int = 20
    max_iters: int = 1000
    restarts: int = 1

    def to_dict(self) -> dict:
        return dict(lr=self.lr, tol=self.tol, patience=self.patience, max_iters=self.max_iters, restarts=self.restarts)


@dataclass
class VqeResult:
    energy: float
    theta: np.ndarray
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def initial_angles(num_params: int, seed: int, restart: int = 0) -> np.ndarray:
    rng = np.random.default_rng([seed, restart])
    return rng.uniform(0.0, 2 * np.pi, num_params)


def train_vqe(c: Circuit, obs: Observable, opts: VqeOptions = VqeOptions(), seed: int = 0) -> VqeResult:
    return train_vqe_many([c], obs, opts, [seed])[0]


def train_vqe_many(
    circuits: list[Circuit], obs: Observable, opts: VqeOptions = VqeOptions(), seeds: list[int] | None = None
) -> list[VqeResult]:
    """Train each circuit's angles independently (vectorized across circuits).

    Adam on exact gradients; a run stops once ``|dE| < tol`` held for ``patience``
    consecutive steps or after ``max_iters`` energy evaluations. The best energy seen is
    returned. With ``restarts > 1`` the lowest-energy restart wins.
    """
    if not circuits:
        return []
    seeds = list(range(len(circuits))) if seeds is None else list(seeds)
    best: list[VqeResult | None] = [None] * len(circuits)
    for restart in range(opts.restarts):
        inits = [initial_angles(c.num_params, s, restart) for c, s in zip(circuits, seeds)]
        results = _train_group(circuits, obs, opts, inits)
        for i, res in enumerate(results):
            if best[i] is None or res.energy < best[i].energy:
                best[i] = res
    return best


def _train_group(circuits, obs, opts: VqeOptions, inits) -> list[VqeResult]:
    out: list[VqeResult | None] = [None] * len(circuits)
    # group by shape so arbitrary circuits can be mixed
    groups: dict[tuple[int, int], list[int]] = {}
    for i, c in enumerate(circuits):
        groups.setdefault((c.n, len(c)), []).append(i)
    for idx in groups.values():
        batch = CircuitBatch([circuits[i] for i in idx])
        for i, res in zip(idx, _train_batch(batch, obs, opts, [inits[i] for i in idx])):
            out[i] = res
    return out


def _train_batch(batch: CircuitBatch, obs: Observable, opts: VqeOptions, inits) -> list[VqeResult]:
    cobs = obs.compiled(batch.n)
    B = batch.B
    table = batch.pack(inits)
    state = AdamState.zeros(table.shape, lr=opts.lr)
    best_e = np.full(B, np.inf)
    best_t = table.copy()
    prev_e = np.full(B, np.nan)
    calm = np.zeros(B, dtype=int)
    iters = np.zeros(B, dtype=int)
    converged = np.zeros(B, dtype=bool)
    history: list[list[float]] = [[] for _ in range(B)]

    rows = np.arange(B)  # global index of each row of the working batch
    live = np.ones(B, dtype=bool)
    sub, sub_table, sub_state = batch, table, state
    for _ in range(opts.max_iters):
        e, g = sub.value_and_grad(sub_table, cobs)
        idx, e_live = rows[live], e[live]
        iters[idx] += 1
        for i, val in zip(idx, e_live):
            history[i].append(float(val))
        improved = e_live < best_e[idx]
        best_e[idx] = np.where(improved, e_live, best_e[idx])
        best_t[:, idx] = np.where(improved[None, :], sub_table[:, live], best_t[:, idx])
        calm[idx] = np.where(np.abs(e_live - prev_e[idx]) < opts.tol, calm[idx] + 1, 0)
        prev_e[idx] = e_live
        done = calm[idx] >= opts.patience
        converged[idx[done]] = True
        live[np.flatnonzero(live)[done]] = False
        if not live.any():
            break
        sub_table = adam_update(sub_table, g, sub_state)
        # frozen rows keep computing until enough pile up to make compaction worthwhile
        if (~live).sum() >= max(1, sub.B // 4):
            sub = sub.subset(np.flatnonzero(live))
            sub_table = sub_table[:, live]
            sub_state = sub_state.select(live, axis=1)
            rows = rows[live]
            live = np.ones(len(rows), dtype=bool)
    thetas = batch.unpack(best_t)
    return [VqeResult(float(best_e[i]), thetas[i], int(iters[i]), bool(converged[i]), history[i]) for i in range(B)]


def dense_expectation(psi: np.ndarray, obs: Observable, n: int) -> float:
    """Reference ``<psi|M|psi>`` with the explicit 2^n x 2^n matrix."""
    return float(np.real(np.vdot(psi, obs.matrix(n) @ psi)))


__all__ = [
    "TFIM_GROUND_ENERGY_6",
    "VqeOptions",
    "VqeResult",
    "adjoint_energy_grad",
    "dense_expectation",
    "energy",
    "exact_ground_energy",
    "parameter_shift_grad",
    "tfim_hamiltonian",
    "train_vqe",
    "train_vqe_many",
]
