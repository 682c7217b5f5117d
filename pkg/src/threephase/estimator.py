"""Three-phase Horvitz-Thompson estimation of a population total.

A three-phase design draws ``S`` from ``U``, then ``R`` from ``S`` and
finally ``F`` from ``R``.  In a two-phase survey with non-response, ``F`` is
the set of respondents and the third phase models the response mechanism.

The point estimator weights each unit of ``F`` by the product of its three
inclusion probabilities.  The variance estimator is a sum of three quadratic
forms over *ordered* pairs ``(k, p)`` of ``F`` (diagonal included), each
divided by ``pi_{kp|R}``:

* term 1 estimates the first-phase variance, kernel ``Delta_akp / (pi_akp pi_kp|S)``
  applied to first-phase expanded values;
* term 2 estimates the expected second-phase variance, kernel
  ``Delta_kp|S / pi_kp|S`` applied to second-phase expanded values;
* term 3 estimates the expected third-phase variance, kernel ``Delta_kp|R``
  applied to fully expanded values.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .designs import (
    Census,
    Frame,
    PhaseDesign,
    PhaseProbabilities,
    Population,
    UnitId,
    as_frame,
    inclusion_probabilities,
)
from .errors import DataIntegrityError, VarianceUndefinedError


@dataclass(frozen=True)
class NestedSample:
    """Realized samples ``F <= R <= S``."""

    S: Frame
    R: Frame
    F: Frame

    def __post_init__(self):
        S, R, F = as_frame(self.S), as_frame(self.R), as_frame(self.F)
        if not set(R) <= set(S):
            raise DataIntegrityError("phase-2 sample R is not contained in S")
        if not set(F) <= set(R):
            raise DataIntegrityError("phase-3 sample F is not contained in R")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "F", F)


def _empty_phase() -> PhaseProbabilities:
    return PhaseProbabilities((), np.empty(0), np.empty((0, 0)))


@dataclass(frozen=True)
class CompositeProbabilities:
    """Phase probabilities aligned on a common unit list, with the composite quantities.

    Arrays indexed ``[k]`` or ``[k, p]`` follow the order of ``units``.
    """

    units: Frame
    pi_a: np.ndarray
    pi_a2: np.ndarray
    pi_s: np.ndarray
    pi_s2: np.ndarray
    pi_r: np.ndarray
    pi_r2: np.ndarray

    @cached_property
    def delta_a(self) -> np.ndarray:
        return self.pi_a2 - np.outer(self.pi_a, self.pi_a)

    @cached_property
    def delta_s(self) -> np.ndarray:
        return self.pi_s2 - np.outer(self.pi_s, self.pi_s)

    @cached_property
    def delta_r(self) -> np.ndarray:
        return self.pi_r2 - np.outer(self.pi_r, self.pi_r)

    @cached_property
    def pi_star(self) -> np.ndarray:
        return self.pi_a * self.pi_s

    @cached_property
    def pi_star2(self) -> np.ndarray:
        return self.pi_a2 * self.pi_s2

    @cached_property
    def delta_star(self) -> np.ndarray:
        return self.pi_star2 - np.outer(self.pi_star, self.pi_star)

    @cached_property
    def pi_sharp(self) -> np.ndarray:
        return self.pi_star * self.pi_r

    @cached_property
    def pi_sharp2(self) -> np.ndarray:
        return self.pi_star2 * self.pi_r2

    @cached_property
    def delta_sharp(self) -> np.ndarray:
        # Not used by the estimators; exposed for completeness.
        return self.pi_sharp2 - np.outer(self.pi_sharp, self.pi_sharp)

    @cached_property
    def breve_delta_a(self) -> np.ndarray:
        return self.delta_a / self.pi_a2

    @cached_property
    def breve_delta_star(self) -> np.ndarray:
        """First-phase ``Delta_akp`` over the two-phase joint probability ``pi*_kp``."""
        return self.delta_a / self.pi_star2

    @cached_property
    def breve_delta_s(self) -> np.ndarray:
        return self.delta_s / self.pi_s2


@dataclass(frozen=True)
class ProbabilityChain:
    """Inclusion probabilities of the three phases.

    ``phase1`` is unconditional (on ``U``), ``phase2`` is conditional on the
    realized ``S`` and ``phase3`` conditional on the realized ``R``.
    """

    phase1: PhaseProbabilities
    phase2: PhaseProbabilities
    phase3: PhaseProbabilities

    def composite(self, units: Iterable[UnitId] | None = None) -> CompositeProbabilities:
        units = self.phase3.units if units is None else as_frame(units)
        arrays = []
        for phase in (self.phase1, self.phase2, self.phase3):
            pos = phase.positions(units)
            arrays += [phase.first[pos], phase.joint[pos[:, None], pos]]
        return CompositeProbabilities(units, *arrays)

    @classmethod
    def from_designs(
        cls,
        designs: Sequence[PhaseDesign],
        frame: Iterable[UnitId],
        sample: NestedSample,
    ) -> ProbabilityChain:
        """Evaluate three designs on ``U``, then conditionally on ``S`` and ``R``.

        An empty parent sample gives an empty conditional phase.
        """
        d1, d2, d3 = designs
        phase1 = inclusion_probabilities(d1, frame)
        phase2 = inclusion_probabilities(d2, sample.S) if sample.S else _empty_phase()
        phase3 = inclusion_probabilities(d3, sample.R) if sample.R else _empty_phase()
        return cls(phase1, phase2, phase3)


@dataclass(frozen=True)
class ExpandedValues:
    """Expanded ``y`` values after one, two and three phases, aligned on ``units``."""

    units: Frame
    y: np.ndarray
    first: np.ndarray
    second: np.ndarray
    third: np.ndarray

    @classmethod
    def compute(cls, probs: CompositeProbabilities, y: np.ndarray) -> ExpandedValues:
        first = y / probs.pi_a
        second = first / probs.pi_s
        third = second / probs.pi_r
        return cls(probs.units, y, first, second, third)


@dataclass(frozen=True)
class EstimateReport:
    point: float
    variance: float
    term1: float
    term2: float
    term3: float
    warnings: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "point": self.point,
            "variance": self.variance,
            "terms": {"term1": self.term1, "term2": self.term2, "term3": self.term3},
            "warnings": list(self.warnings),
        }


def _values(y, units: Frame) -> np.ndarray:
    if isinstance(y, Population):
        y = y.values
    if isinstance(y, Mapping):
        try:
            return np.array([float(y[k]) for k in units], dtype=float)
        except KeyError as exc:
            raise DataIntegrityError(f"no y value for unit {exc.args[0]!r}") from None
    y = np.asarray(y, dtype=float)
    if y.shape != (len(units),):
        raise DataIntegrityError(f"expected {len(units)} y values aligned with F, got shape {y.shape}")
    return y


def _sum(a: np.ndarray) -> float:
    return math.fsum(a.ravel().tolist())


def point_estimate(sample: NestedSample, chain: ProbabilityChain, y) -> float:
    """Three-phase estimator of the total: ``sum_{k in F} y_k / pi#_k``.

    ``y`` is a :class:`Population`, a mapping ``unit -> y`` or an array aligned
    with ``sample.F``.  Returns ``0.0`` for an empty ``F``.
    """
    if not sample.F:
        return 0.0
    probs = chain.composite(sample.F)
    return _sum(ExpandedValues.compute(probs, _values(y, sample.F)).third)


def _check_pairs(units: Frame, matrix: np.ndarray, name: str) -> None:
    if matrix.min() > 0:
        return
    bad = np.argwhere(~(matrix > 0))
    if len(bad):
        i, j = bad[0]
        pair = (units[i], units[j])
        raise VarianceUndefinedError(f"{name} is zero or missing for pair {pair!r}", pair=pair)


def variance_estimate(sample: NestedSample, chain: ProbabilityChain, y) -> EstimateReport:
    """Point estimate and design-unbiased variance estimate with its three terms.

    Negative variance estimates are returned unchanged, with a warning.

    Raises
    ------
    VarianceUndefinedError
        If ``pi_akp``, ``pi_kp|S`` or ``pi_kp|R`` is zero for some pair of ``F``.
    """
    F = sample.F
    if not F:
        return EstimateReport(0.0, 0.0, 0.0, 0.0, 0.0, ("F is empty; estimate and variance are 0",))
    probs = chain.composite(F)
    for matrix, name in ((probs.pi_a2, "pi_akp"), (probs.pi_s2, "pi_kp|S"), (probs.pi_r2, "pi_kp|R")):
        _check_pairs(F, matrix, name)
    ex = ExpandedValues.compute(probs, _values(y, F))
    term1 = _sum(probs.breve_delta_star * np.outer(ex.first, ex.first) / probs.pi_r2)
    term2 = _sum(probs.breve_delta_s * np.outer(ex.second, ex.second) / probs.pi_r2)
    term3 = _sum(probs.delta_r * np.outer(ex.third, ex.third) / probs.pi_r2)
    variance = term1 + term2 + term3
    warnings = []
    if variance < 0:
        warnings.append(f"negative variance estimate {variance!r}")
    if len(F) == 1:
        warnings.append("F has a single unit; off-diagonal pair sums are empty")
    return EstimateReport(_sum(ex.third), variance, term1, term2, term3, tuple(warnings))


def two_phase_estimate(
    S: Iterable[UnitId],
    R: Iterable[UnitId],
    phase1: PhaseProbabilities,
    phase2: PhaseProbabilities,
    y,
) -> EstimateReport:
    """Two-phase estimator: the three-phase one with a census third phase and ``F = R``."""
    R = as_frame(R)
    phase3 = inclusion_probabilities(Census(), R) if R else _empty_phase()
    return variance_estimate(NestedSample(S, R, R), ProbabilityChain(phase1, phase2, phase3), y)


def estimate(
    population: Population,
    designs: Sequence[PhaseDesign],
    sample: NestedSample,
) -> EstimateReport:
    """Evaluate the designs on a realized sample and run :func:`variance_estimate`."""
    if not set(sample.S) <= set(population.ids):
        raise DataIntegrityError("S contains units outside the population")
    chain = ProbabilityChain.from_designs(designs, population.ids, sample)
    return variance_estimate(sample, chain, population)
