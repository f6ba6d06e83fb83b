from __future__ import annotations

import numpy as np
import pytest

from conftest import random_circuit, random_state
from gsqas.circuit_ir import Circuit, Gate, gate_kind
from gsqas.sim.batch import CircuitBatch, adjoint_gradient
from gsqas.sim.statevector import (
    Observable,
    apply_gate,
    check_norm,
    expectation,
    plus_state,
    run_circuit,
    z_expectations,
    zero_state,
)


def dense_apply(psi: np.ndarray, g: Gate, n: int) -> np.ndarray:
    """Independent oracle: contract the local unitary into the qubit tensor."""
    U = g.kind.local_unitary(g.theta)
    a = len(g.qubits)
    # local index bit k <-> g.qubits[k]; reshaped axes run from the most significant bit
    Ut = U.reshape((2,) * (2 * a))
    axes_out = [n - 1 - q for q in reversed(g.qubits)]
    T = psi.reshape((2,) * n)
    T = np.tensordot(Ut, T, axes=(list(range(a, 2 * a)), axes_out))
    T = np.moveaxis(T, list(range(a)), axes_out)
    return T.reshape(-1)


def dense_run(c: Circuit, psi=None) -> np.ndarray:
    psi = zero_state(c.n) if psi is None else psi
    for g in c.gates:
        psi = dense_apply(psi, g, c.n)
    return psi


def random_observable(n: int, rng) -> Observable:
    terms = []
    for _ in range(5):
        k = rng.integers(1, min(n, 3) + 1)
        qs = rng.choice(n, k, replace=False)
        terms.append((float(rng.normal()), {int(q): "XYZ"[rng.integers(3)] for q in qs}))
    return Observable.from_terms(terms)


def test_dense_oracle_sanity():
    # X on qubit 0 of |00> -> |01> (index 1); on qubit 1 -> index 2
    X = Gate(gate_kind("Rx"), (0,), np.pi)  # Rx(pi) = -iX
    psi = dense_apply(zero_state(2), X, 2)
    assert abs(psi[1]) == pytest.approx(1.0)
    psi = dense_apply(zero_state(2), Gate(gate_kind("Rx"), (1,), np.pi), 2)
    assert abs(psi[2]) == pytest.approx(1.0)


def test_statevector_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for trial in range(30):
        n = int(rng.integers(1, 6))
        c = random_circuit(n, 12, rng)
        psi0 = random_state(n, rng)
        np.testing.assert_allclose(run_circuit(c, psi=psi0), dense_run(c, psi0), atol=1e-12)


def test_hadamard_on_zero_gives_plus():
    c = Circuit(3, tuple(Gate(gate_kind("H"), (q,)) for q in range(3)))
    np.testing.assert_allclose(run_circuit(c), plus_state(3), atol=1e-15)


def test_apply_gate_on_stack():
    rng = np.random.default_rng(1)
    g = Gate(gate_kind("pSWAP"), (2, 0), 0.4)
    stack = np.stack([random_state(3, rng) for _ in range(4)])
    out = apply_gate(stack, g)
    for row_in, row_out in zip(stack, out):
        np.testing.assert_allclose(row_out, dense_apply(row_in, g, 3), atol=1e-13)


def test_norm_preserved_after_every_gate():
    rng = np.random.default_rng(2)
    c = random_circuit(5, 60, rng)
    psi = zero_state(5)
    for g in c.gates:
        psi = apply_gate(psi, g)
        check_norm(psi, 1e-10)


def test_check_norm_raises():
    with pytest.raises(AssertionError):
        check_norm(2 * zero_state(2))


def test_run_circuit_dimension_mismatch():
    with pytest.raises(ValueError):
        run_circuit(Circuit(2), psi=zero_state(3))


def test_expectation_matches_dense_matrix():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(1, 6))
        obs = random_observable(n, rng)
        psi = random_state(n, rng)
        # observable built independently from np.kron in little-endian order
        M = np.zeros((2**n, 2**n), complex)
        P = {"X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1, -1])}
        for coeff, ops in obs.terms:
            term = np.ones((1, 1))
            d = dict(ops)
            for q in range(n):
                term = np.kron(P[d[q]] if q in d else np.eye(2), term)
            M += coeff * term
        assert expectation(psi, obs) == pytest.approx(np.vdot(psi, M @ psi).real, abs=1e-10)


def test_expectation_rejects_non_hermitian_part():
    # a product of anticommuting terms is not representable; use a bare Y-phase mismatch instead
    obs = Observable.from_terms([(1.0, {0: "Y"})])
    psi = np.array([1, 1j]) / np.sqrt(2)
    assert expectation(psi, obs) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Observable.from_terms([(1.0, {0: "W"})])


def test_z_expectations_reference_states():
    np.testing.assert_allclose(z_expectations(zero_state(4)), np.ones(4))
    np.testing.assert_allclose(z_expectations(plus_state(4)), np.zeros(4), atol=1e-15)
    # |01> little-endian: qubit 0 is 1
    basis = np.zeros(4)
    basis[1] = 1
    np.testing.assert_allclose(z_expectations(basis), [-1, 1])


def test_batch_forward_matches_single_runs():
    rng = np.random.default_rng(4)
    circuits = [random_circuit(4, 10, rng) for _ in range(6)]
    circuits = [c for c in circuits if len(c) == 10]
    batch = CircuitBatch(circuits)
    table = batch.pack([c.thetas for c in circuits])
    out = batch.forward(table)
    for row, c in zip(out, circuits):
        np.testing.assert_allclose(row, run_circuit(c), atol=1e-13)
    np.testing.assert_array_equal(np.concatenate(batch.unpack(table)), np.concatenate([c.thetas for c in circuits]))


def test_batch_rejects_mixed_shapes():
    with pytest.raises(ValueError):
        CircuitBatch([Circuit(2), Circuit(3)])
    with pytest.raises(ValueError):
        CircuitBatch([])


def test_batch_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    circuits = [random_circuit(3, 8, rng) for _ in range(4)]
    obs = random_observable(3, rng)
    batch = CircuitBatch(circuits)
    table = batch.pack([c.thetas for c in circuits])
    e, grad = batch.value_and_grad(table, obs.compiled(3))
    h = 1e-6
    for j in range(batch.G):
        for b in range(batch.B):
            if not batch.param_mask[j, b]:
                assert grad[j, b] == 0
                continue
            tp, tm = table.copy(), table.copy()
            tp[j, b] += h
            tm[j, b] -= h
            fd = (obs.compiled(3).expectation(batch.forward(tp)[b]) - obs.compiled(3).expectation(batch.forward(tm)[b])) / (2 * h)
            assert grad[j, b] == pytest.approx(fd, abs=1e-7)
    for b, c in enumerate(circuits):
        assert e[b] == pytest.approx(expectation(run_circuit(c), obs), abs=1e-12)


def test_subset_keeps_rows():
    rng = np.random.default_rng(6)
    circuits = [random_circuit(2, 5, rng) for _ in range(5)]
    batch = CircuitBatch(circuits)
    table = batch.pack([c.thetas for c in circuits])
    rows = np.array([4, 1])
    np.testing.assert_allclose(batch.subset(rows).forward(table[:, rows]), batch.forward(table)[rows], atol=1e-14)


def test_adjoint_gradient_over_a_stack_of_inputs():
    """Gradient of sum_s <psi_s|O_s|psi_s> with per-state diagonal observables."""
    rng = np.random.default_rng(7)
    c = random_circuit(3, 10, rng, kinds=["Rx", "XX", "pSWAP", "H", "Ry"])
    inputs = np.stack([random_state(3, rng) for _ in range(5)])
    weights = rng.normal(size=(5, 8))

    def loss(theta):
        out = run_circuit(c, theta, inputs)
        return float(np.sum(weights * np.abs(out) ** 2))

    def cot(psi):
        return float(np.sum(weights * np.abs(psi) ** 2)), weights * psi

    val, grad = adjoint_gradient(c, c.thetas, inputs, cot)
    assert val == pytest.approx(loss(c.thetas))
    h = 1e-6
    for k in range(c.num_params):
        tp, tm = c.thetas.copy(), c.thetas.copy()
        tp[k] += h
        tm[k] -= h
        assert grad[k] == pytest.approx((loss(tp) - loss(tm)) / (2 * h), abs=1e-7)
