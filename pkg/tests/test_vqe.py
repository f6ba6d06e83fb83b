from __future__ import annotations

import numpy as np
import pytest

from conftest import random_circuit
from gsqas.circuit_ir import Circuit, Gate, gate_kind, generate_circuits
from gsqas.sim.statevector import Observable, run_circuit
from gsqas.sim.vqe import (
    TFIM_GROUND_ENERGY_6,
    VqeOptions,
    adjoint_energy_grad,
    dense_expectation,
    energy,
    exact_ground_energy,
    initial_angles,
    parameter_shift_grad,
    tfim_hamiltonian,
    train_vqe,
    train_vqe_many,
)

X = np.array([[0, 1], [1, 0]])
Z = np.diag([1.0, -1.0])
I2 = np.eye(2)


def test_tfim_two_sites_by_hand():
    # on a 2-ring both bonds are Z0 Z1, so H = 2 ZZ + X0 + X1 with ground energy -2 sqrt 2
    H = 2 * np.kron(Z, Z) + np.kron(I2, X) + np.kron(X, I2)
    np.testing.assert_allclose(tfim_hamiltonian(2).matrix(2), H)
    assert exact_ground_energy(tfim_hamiltonian(2), 2) == pytest.approx(-2 * np.sqrt(2), abs=1e-12)


def test_tfim_term_count_and_hermitian():
    obs = tfim_hamiltonian(6)
    assert len(obs) == 12
    M = obs.matrix(6)
    np.testing.assert_allclose(M, M.conj().T)


def test_tfim_six_qubit_ground_energy():
    assert exact_ground_energy(tfim_hamiltonian(6), 6) == pytest.approx(-7.72740661, abs=1e-6)
    assert TFIM_GROUND_ENERGY_6 == pytest.approx(-7.72740661, abs=1e-6)


def test_tfim_needs_two_qubits():
    with pytest.raises(ValueError):
        tfim_hamiltonian(1)


def test_exact_diagonalization_size_guard():
    with pytest.raises(ValueError):
        exact_ground_energy(tfim_hamiltonian(13), 13)


def test_energy_matches_dense_matrix():
    rng = np.random.default_rng(0)
    obs = tfim_hamiltonian(4)
    for _ in range(5):
        c = random_circuit(4, 15, rng)
        assert energy(c, c.thetas, obs) == pytest.approx(dense_expectation(run_circuit(c), obs, 4), abs=1e-10)


def test_adjoint_equals_parameter_shift_and_finite_differences():
    rng = np.random.default_rng(1)
    obs = tfim_hamiltonian(4)
    for kinds in (None, ["pSWAP", "Ry"], ["XX", "YY", "ZZ", "Rz"]):
        c = random_circuit(4, 14, rng, kinds=kinds)
        if c.num_params == 0:
            continue
        e, g_adj = adjoint_energy_grad(c, c.thetas, obs)
        g_ps = parameter_shift_grad(c, c.thetas, obs)
        h = 1e-6
        g_fd = np.array(
            [
                (energy(c, c.thetas + h * np.eye(c.num_params)[k], obs) - energy(c, c.thetas - h * np.eye(c.num_params)[k], obs)) / (2 * h)
                for k in range(c.num_params)
            ]
        )
        assert e == pytest.approx(energy(c, c.thetas, obs), abs=1e-12)
        np.testing.assert_allclose(g_adj, g_fd, atol=1e-7)
        np.testing.assert_allclose(g_ps, g_fd, atol=1e-7)


def test_single_rotation_reaches_minus_one():
    # <X> after Ry(theta)|0> is sin(theta); the minimum is -1
    c = Circuit(1, (Gate(gate_kind("Ry"), (0,), 0.0),))
    obs = Observable.from_terms([(1.0, {0: "X"})])
    res = train_vqe(c, obs, VqeOptions(lr=0.1, max_iters=500), seed=3)
    assert res.energy == pytest.approx(-1.0, abs=1e-4)
    assert np.sin(res.theta[0]) == pytest.approx(-1.0, abs=1e-4)


def test_variational_bound_and_progress(vqe_preset):
    obs = tfim_hamiltonian(6)
    circuits = generate_circuits(vqe_preset, 4, seed=2)
    for c, res in zip(circuits, train_vqe_many(circuits, obs, VqeOptions(max_iters=150), seeds=[0, 1, 2, 3])):
        assert res.energy >= TFIM_GROUND_ENERGY_6 - 1e-9
        assert res.energy <= res.history[0] + 1e-12
        assert res.energy == pytest.approx(min(res.history))
        # the returned angles reproduce the returned energy
        assert energy(c, res.theta, obs) == pytest.approx(res.energy, abs=1e-10)


def test_batched_training_is_bit_identical_to_single(vqe_preset):
    obs = tfim_hamiltonian(6)
    circuits = generate_circuits(vqe_preset, 5, seed=4)
    opts = VqeOptions(max_iters=60)
    many = train_vqe_many(circuits, obs, opts, seeds=[10, 11, 12, 13, 14])
    for c, s, res in zip(circuits, range(10, 15), many):
        single = train_vqe(c, obs, opts, seed=s)
        assert single.energy == res.energy
        np.testing.assert_array_equal(single.theta, res.theta)
        assert single.iterations == res.iterations


def test_mixed_shapes_are_grouped():
    rng = np.random.default_rng(5)
    obs = tfim_hamiltonian(3)
    circuits = [random_circuit(3, d, rng, kinds=["Ry", "ZZ"]) for d in (4, 7, 4, 9)]
    opts = VqeOptions(max_iters=30)
    many = train_vqe_many(circuits, obs, opts, seeds=[0, 1, 2, 3])
    for c, s, res in zip(circuits, range(4), many):
        assert train_vqe(c, obs, opts, seed=s).energy == res.energy


def test_restarts_never_worse():
    rng = np.random.default_rng(6)
    c = random_circuit(3, 10, rng, kinds=["Ry", "Rx", "ZZ"])
    obs = tfim_hamiltonian(3)
    one = train_vqe(c, obs, VqeOptions(max_iters=80, restarts=1), seed=7)
    three = train_vqe(c, obs, VqeOptions(max_iters=80, restarts=3), seed=7)
    assert three.energy <= one.energy


def test_early_stop_marks_convergence():
    c = Circuit(1, (Gate(gate_kind("Rz"), (0,), 0.0),))
    # Rz on |0> never changes <Z>: the energy is flat, so patience stops the run right away
    res = train_vqe(c, Observable.from_terms([(1.0, {0: "Z"})]), VqeOptions(patience=5, max_iters=1000))
    assert res.converged
    assert res.iterations == 6


def test_initial_angles_deterministic_and_in_range():
    a = initial_angles(20, 3)
    np.testing.assert_array_equal(a, initial_angles(20, 3))
    assert not np.array_equal(a, initial_angles(20, 3, restart=1))
    assert np.all((a >= 0) & (a < 2 * np.pi))


def test_empty_input():
    assert train_vqe_many([], tfim_hamiltonian(2)) == []
