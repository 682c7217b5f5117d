"""Design-based estimation for three-phase sampling designs."""

__version__ = "0.1.0"

from .designs import (
    SRSWOR,
    Bernoulli,
    Census,
    PhaseDesign,
    PhaseProbabilities,
    Population,
    StratifiedSRSWOR,
    SupportDistribution,
    Table,
    Unit,
    draw,
    enumerate_support,
    inclusion_probabilities,
)
from .estimator import (
    EstimateReport,
    ExpandedValues,
    NestedSample,
    ProbabilityChain,
    estimate,
    point_estimate,
    two_phase_estimate,
    variance_estimate,
)
from .oracle import arbitrary_constant_identity, enumerate_three_phase, expectation_check, monte_carlo

__all__ = [
    "SRSWOR",
    "Bernoulli",
    "Census",
    "EstimateReport",
    "ExpandedValues",
    "NestedSample",
    "PhaseDesign",
    "PhaseProbabilities",
    "Population",
    "ProbabilityChain",
    "StratifiedSRSWOR",
    "SupportDistribution",
    "Table",
    "Unit",
    "arbitrary_constant_identity",
    "draw",
    "enumerate_support",
    "enumerate_three_phase",
    "estimate",
    "expectation_check",
    "inclusion_probabilities",
    "monte_carlo",
    "point_estimate",
    "two_phase_estimate",
    "variance_estimate",
]
