"""Exact statevector simulation used for ground-truth labels."""
from .statevector import (
    Observable,
    apply_gate,
    expectation,
    plus_state,
    run_circuit,
    z_expectations,
    zero_state,
)
from .vqe import (
    TFIM_GROUND_ENERGY_6,
    VqeOptions,
    VqeResult,
    energy,
    exact_ground_energy,
    parameter_shift_grad,
    tfim_hamiltonian,
    train_vqe,
    train_vqe_many,
)
