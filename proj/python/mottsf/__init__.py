"""Mean-field phase diagrams, steady states and emission spectra of coupled
Lambda-emitter nanocavities."""

from ._core import (
    DegenerateGroundState,
    DegenerateSteadyState,
    ModelParams,
    NumericError,
    critical_hopping,
    excitation_number,
    hamiltonian,
    lobe_boundaries,
    observables,
    order_parameter,
    self_consistent_steady_state,
    spectrum,
    steady_state,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateGroundState",
    "DegenerateSteadyState",
    "ModelParams",
    "NumericError",
    "critical_hopping",
    "excitation_number",
    "hamiltonian",
    "lobe_boundaries",
    "observables",
    "order_parameter",
    "self_consistent_steady_state",
    "spectrum",
    "steady_state",
    "sweep",
]
