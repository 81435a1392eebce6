"""Spin-glass simulation of interacting operational-loss processes."""
__version__ = "0.1.0"

from ._accel import backend_name
from .model import (
    CouplingMatrix,
    CouplingSpec,
    CouplingVariant,
    LossLedger,
    ModelInstance,
    SupportVector,
    Trajectory,
    UpdateMode,
    as_spins,
    delta_h_condition,
    hamiltonian,
    map_s_to_eta,
    run_trajectory,
    sample_couplings,
    step_asynchronous,
    step_synchronous,
    transform_model,
)
from .ensemble import ModelFamily, simulate_ensemble

__all__ = [
    "CouplingMatrix", "CouplingSpec", "CouplingVariant", "LossLedger", "ModelFamily", "ModelInstance",
    "SupportVector", "Trajectory", "UpdateMode", "as_spins", "backend_name", "delta_h_condition",
    "hamiltonian", "map_s_to_eta", "run_trajectory", "sample_couplings", "simulate_ensemble",
    "step_asynchronous", "step_synchronous", "transform_model",
]
