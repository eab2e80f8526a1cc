"""Epidemic thresholds and dynamics of the adaptive-contact SAIS model on two-layer networks."""
__version__ = "0.1.0"

from .errors import (AcsaisError, BracketError, BudgetExceededError, ConvergenceError, InputValidationError,
                     IntegrationError, NotMConnectedError, PositiveConeError, PreconditionError, ZeroDenominatorError)
from .netcore import MultilayerNetwork, WeightedDigraph, is_m_connected, strongly_connected_components
from .spectral import classify_scenario, psi, spectral_triple
from .npf import AcsaisMap, ConcaveMap, acsais_threshold, solve_npf, sweep_threshold

__all__ = [
    "AcsaisError", "BracketError", "BudgetExceededError", "ConvergenceError", "InputValidationError",
    "IntegrationError", "NotMConnectedError", "PositiveConeError", "PreconditionError", "ZeroDenominatorError",
    "MultilayerNetwork", "WeightedDigraph", "is_m_connected", "strongly_connected_components",
    "classify_scenario", "psi", "spectral_triple", "AcsaisMap", "ConcaveMap", "acsais_threshold", "solve_npf",
    "sweep_threshold",
]
