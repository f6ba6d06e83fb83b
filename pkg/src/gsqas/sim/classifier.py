"""Hybrid variational classifier: circuit, per-qubit Z readout, 16-unit ReLU head, softmax."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..circuit_ir import Circuit
from ..nn import Adam, Linear, Module, Tensor, cross_entropy_loss, no_grad, parameter
from ..nn.optim import AdamState, adam_update
from .batch import adjoint_gradient
from .entanglement import generate_ce_dataset
from .statevector import run_circuit, z_signs
from .vqe import initial_angles

log = logging.getLogger(__name__)


def measure_features(c: Circuit, theta, psi: np.ndarray) -> np.ndarray:
    """``m_i = <psi'|Z_i|psi'>`` for ``psi' = U(theta) psi``; ``psi`` may be a stack ``(S, 2^n)``."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != 2**c.n:
        raise ValueError(f"input dimension {psi.shape[-1]} does not match n={c.n}")
    out = run_circuit(c, theta, psi)
    return (np.abs(out) ** 2) @ z_signs(c.n).T


@dataclass
class CeTask:
    """Binary CE classification data: label 0 for the low-CE class, 1 for the high one."""

    train_states: np.ndarray
    train_labels: np.ndarray
    test_states: np.ndarray
    test_labels: np.ndarray
    targets: tuple[float, float]

    @property
    def n(self) -> int:
        return int(np.log2(self.train_states.shape[-1]))


def build_ce_task(
    n: int = 8, per_class: int = 400, targets: tuple[float, float] = (0.15, 0.45), tol: float = 0.01, seed: int = 0
) -> CeTask:
    """Sample both classes, then split each class half train / half test."""
    rng = np.random.default_rng(seed)
    states, labels = [], []
    for label, target in enumerate(targets):
        states.append(generate_ce_dataset(target, per_class, tol, n, rng).states)
        labels.append(np.full(per_class, label))
    X, y = np.concatenate(states), np.concatenate(labels)
    order = rng.permutation(len(X))
    train, test = np.sort(order[: len(X) // 2]), np.sort(order[len(X) // 2 :])
    return CeTask(X[train], y[train], X[test], y[test], tuple(targets))


class HybridHead(Module):
    def __init__(self, n: int, rng: np.random.Generator, hidden: int = 16, classes: int = 2):
        self.fc1 = Linear(n, hidden, rng)
        self.fc2 = Linear(hidden, classes, rng)

    def forward(self, m: Tensor) -> Tensor:
        return self.fc2(self.fc1(m).relu())  # logits; softmax lives in the loss


@dataclass(frozen=True)
class VqcOptions:
    lr: float = 0.05
    epochs: int = 200
    patience: int = 20
    tol: float = 1e-4
    hidden: int = 16

    def to_dict(self) -> dict:
        return dict(lr=self.lr, epochs=self.epochs, patience=self.patience, tol=self.tol, hidden=self.hidden)


@dataclass
class VqcResult:
    test_accuracy: float
    train_accuracy: float
    train_loss: float
    theta: np.ndarray
    epochs: int
    history: list[float] = field(default_factory=list, repr=False)


def _accuracy(c: Circuit, theta, head: HybridHead, states, labels) -> float:
    with no_grad():
        logits = head(Tensor(measure_features(c, theta, states))).data
    return float((logits.argmax(axis=1) == labels).mean())


def train_vqc(c: Circuit, task: CeTask, opts: VqcOptions = VqcOptions(), seed: int = 0) -> VqcResult:
    """Jointly train circuit angles and head with full-batch Adam on cross-entropy.

    The head gradient comes from the tensor engine; the circuit gradient is the adjoint of
    ``sum_s sum_i dL/dm_si <psi_s|Z_i|psi_s>``. Stops after ``patience`` epochs without a
    loss improvement larger than ``tol``; the lowest-loss parameters are scored on the test split.
    """
    if c.n != task.n:
        raise ValueError(f"circuit has {c.n} qubits, data has {task.n}")
    zs = z_signs(c.n)
    theta = initial_angles(c.num_params, seed)
    head = HybridHead(c.n, np.random.default_rng([seed, 1]), hidden=opts.hidden)
    head_opt = Adam(head.parameters(), lr=opts.lr)
    theta_state = AdamState.zeros(theta.shape, lr=opts.lr)
    y = task.train_labels

    def cotangent(psi_out):
        m = parameter((np.abs(psi_out) ** 2) @ zs.T)
        loss = cross_entropy_loss(head(m), y)
        head_opt.zero_grad()
        loss.backward()
        return loss.item(), (m.grad @ zs) * psi_out

    best = (np.inf, theta.copy(), head.state_dict())
    history, stale, epoch = [], 0, 0
    for epoch in range(1, opts.epochs + 1):
        loss, g = adjoint_gradient(c, theta, task.train_states, cotangent)
        history.append(loss)
        if loss < best[0] - opts.tol:
            stale = 0
        else:
            stale += 1
        if loss < best[0]:
            best = (loss, theta.copy(), head.state_dict())
        if stale >= opts.patience:
            break
        head_opt.step()
        if theta.size:
            theta = adam_update(theta, g, theta_state)
    loss, theta, state = best
    head.load_state_dict(state)
    return VqcResult(
        test_accuracy=_accuracy(c, theta, head, task.test_states, task.test_labels),
        train_accuracy=_accuracy(c, theta, head, task.train_states, y),
        train_loss=float(loss),
        theta=theta,
        epochs=epoch,
        history=history,
    )
