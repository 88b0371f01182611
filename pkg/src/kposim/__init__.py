"""Conditional-driving Rzz gate simulator for Kerr-nonlinear parametric oscillators.

Units: times in ns, angular frequencies in rad/ns (hbar = 1).
"""
from .circuits import (CalibrationError, CircuitError, CouplingParams, GatePulseParams,
                       KpoParams, PumpTone, SimpleModelParams, ghz, mhz, to_ghz)
from .dynamics import (HAVE_COMPILED, SolverSettings, Trajectory, default_backend,
                       lindblad_propagate, schrodinger_propagate)
from .fock import (DensityMatrix, HilbertSpace, OperatorMatrix, StateVector, annihilation,
                   cat_pair_states, coherent_state, creation, number)
from .gate import GateOutcome, RzzSetup, run_rzz, standard_setup
from .integrators import PropagationError

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "CircuitError", "CouplingParams", "DensityMatrix", "GateOutcome",
    "GatePulseParams", "HAVE_COMPILED", "HilbertSpace", "KpoParams", "OperatorMatrix",
    "PropagationError", "PumpTone", "RzzSetup", "SimpleModelParams", "SolverSettings",
    "StateVector", "Trajectory", "annihilation", "cat_pair_states", "coherent_state",
    "creation", "default_backend", "ghz", "lindblad_propagate", "mhz", "number", "run_rzz",
    "schrodinger_propagate", "standard_setup", "to_ghz",
]
