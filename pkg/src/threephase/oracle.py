"""Exact design expectations by exhaustive enumeration, plus seeded Monte Carlo.

On a small population every ``(S, R, F)`` triple with positive probability is
listed together with ``P(S) P(R|S) P(F|R)``.  Expectations over that list are
exact up to floating-point rounding, which turns the unbiasedness claims of
the three-phase estimators into checkable identities.
"""

from __future__ import annotations

import math
import os
from collections.abc import Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .designs import (
    ENUMERATION_CAP,
    Frame,
    PhaseDesign,
    PhaseProbabilities,
    Population,
    draw,
    enumerate_support,
    inclusion_probabilities,
)
from .errors import EnumerationTooLargeError
from .estimator import (
    EstimateReport,
    NestedSample,
    ProbabilityChain,
    _empty_phase,
    variance_estimate,
)

MAX_OUTCOMES = 10**7
LINEAR_TOL = 1e-10
QUADRATIC_TOL = 1e-9
IDENTITY_TOL = 1e-11


def _fsum_dot(p, x) -> float:
    return math.fsum(a * b for a, b in zip(p, x))


def rel_gap(lhs: float, rhs: float) -> float:
    """``|lhs - rhs| / |rhs|``, falling back to the absolute gap when ``rhs == 0``."""
    gap = abs(lhs - rhs)
    return gap / abs(rhs) if rhs != 0 else gap


@dataclass(frozen=True)
class DecompositionTerms:
    """``t# - T`` split into the error of each phase."""

    A_S: float
    B_R: float
    C_F: float

    @property
    def total(self) -> float:
        return self.A_S + self.B_R + self.C_F


@dataclass(frozen=True)
class Outcome:
    sample: NestedSample
    probability: float
    report: EstimateReport
    decomposition: DecompositionTerms


@dataclass(frozen=True)
class OutcomeDistribution:
    """Full joint support of a three-phase design on a population.

    Besides the outcomes it carries the closed-form phase variances:
    ``var_a`` is ``Var(A_S)``; ``phase2_terms`` pairs ``P(S)`` with
    ``Var_S(B_R)``; ``phase3_terms`` pairs ``P(S) P(R|S)`` with ``Var_R(C_F)``.
    """

    population: Population
    outcomes: tuple[Outcome, ...]
    var_a: float
    phase2_terms: tuple[tuple[float, float], ...]
    phase3_terms: tuple[tuple[float, float], ...]

    def __len__(self) -> int:
        return len(self.outcomes)

    @property
    def probabilities(self) -> list[float]:
        return [o.probability for o in self.outcomes]

    def expectation(self, values: Sequence[float]) -> float:
        return _fsum_dot(self.probabilities, values)


@dataclass(frozen=True)
class _Node:
    """One ``(S, R)`` pair with its conditional probabilities and the support of ``F``."""

    S: Frame
    p_S: float
    phase2: PhaseProbabilities
    R: Frame
    p_R: float
    phase3: PhaseProbabilities
    support3: list


def _conditional(design: PhaseDesign, frame: Frame, cap: int):
    if not frame:
        return _empty_phase(), [((), 1.0)]
    return inclusion_probabilities(design, frame), list(enumerate_support(design, frame, cap))


def _walk(population: Population, designs: Sequence[PhaseDesign], cap: int, max_outcomes: int) -> Iterator[_Node]:
    d1, d2, d3 = designs
    count = 0
    for S, p_S in enumerate_support(d1, population.ids, cap):
        phase2, support2 = _conditional(d2, S, cap)
        for R, p_R in support2:
            phase3, support3 = _conditional(d3, R, cap)
            count += len(support3)
            if count > max_outcomes:
                raise EnumerationTooLargeError(
                    f"joint support exceeds {max_outcomes} outcomes; use monte_carlo instead"
                )
            yield _Node(S, p_S, phase2, R, p_R, phase3, support3)


def _quadratic(delta: np.ndarray, x: np.ndarray) -> float:
    return math.fsum((delta * np.outer(x, x)).ravel().tolist())


def enumerate_three_phase(
    population: Population,
    designs: Sequence[PhaseDesign],
    cap: int = ENUMERATION_CAP,
    max_outcomes: int = MAX_OUTCOMES,
) -> OutcomeDistribution:
    """Enumerate every ``(S, R, F)`` with its probability and per-outcome statistics.

    Raises
    ------
    EnumerationTooLargeError
        If ``N`` exceeds ``cap`` or the joint support exceeds ``max_outcomes``.
    """
    phase1 = inclusion_probabilities(designs[0], population.ids)
    y = population.values
    T = population.T
    var_a = _quadratic(phase1.delta, population.y_of(phase1.units) / phase1.first)

    outcomes = []
    phase2_terms: dict[Frame, tuple[float, float]] = {}
    phase3_terms = []
    for node in _walk(population, designs, cap, max_outcomes):
        breve_S = population.y_of(node.S) / phase1.first[phase1.positions(node.S)]
        sum_S = math.fsum(breve_S.tolist())
        star_S = breve_S / node.phase2.first
        if node.S not in phase2_terms:
            phase2_terms[node.S] = (node.p_S, _quadratic(node.phase2.delta, star_S))
        star_R = star_S[node.phase2.positions(node.R)]
        sum_R = math.fsum(star_R.tolist())
        sharp_R = star_R / node.phase3.first
        phase3_terms.append((node.p_S * node.p_R, _quadratic(node.phase3.delta, sharp_R)))

        chain = ProbabilityChain(phase1, node.phase2, node.phase3)
        for F, p_F in node.support3:
            sample = NestedSample(node.S, node.R, F)
            report = variance_estimate(sample, chain, y)
            decomposition = DecompositionTerms(sum_S - T, sum_R - sum_S, report.point - sum_R)
            outcomes.append(Outcome(sample, node.p_S * node.p_R * p_F, report, decomposition))

    return OutcomeDistribution(
        population,
        tuple(outcomes),
        var_a,
        tuple(phase2_terms.values()),
        tuple(phase3_terms),
    )


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    rel_gap: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_gap < self.tolerance

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "rel_gap": self.rel_gap, "pass": self.passed}


def _check(name, lhs, rhs, tol) -> Check:
    return Check(name, lhs, rhs, rel_gap(lhs, rhs), tol)


@dataclass(frozen=True)
class ExpectationReport:
    """Design moments of the estimators and the identities they should satisfy."""

    T: float
    expected_point: float
    variance: float
    expected_variance_estimate: float
    var_a: float
    expected_var_b: float
    expected_var_c: float
    checks: tuple[Check, ...]

    @property
    def components_total(self) -> float:
        return self.var_a + self.expected_var_b + self.expected_var_c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def as_dict(self) -> dict:
        return {
            "T": self.T,
            "expected_point": self.expected_point,
            "variance": self.variance,
            "expected_variance_estimate": self.expected_variance_estimate,
            "components": {
                "var_A_S": self.var_a,
                "E_var_B_R": self.expected_var_b,
                "E_var_C_F": self.expected_var_c,
            },
            "checks": [c.as_dict() for c in self.checks],
            "pass": self.passed,
        }


def expectation_check(
    dist: OutcomeDistribution,
    linear_tol: float = LINEAR_TOL,
    quadratic_tol: float = QUADRATIC_TOL,
    identity_tol: float = IDENTITY_TOL,
) -> ExpectationReport:
    """Exact design moments of ``t#`` and of the variance estimator.

    ``Var(t#)`` is computed from the outcome distribution and compared both to
    ``E[V]`` and to the sum of the closed-form phase variances.  Each term of
    the variance estimator is also compared to the phase variance it targets.
    """
    T = dist.population.T
    probs = dist.probabilities
    points = [o.report.point for o in dist.outcomes]
    mean = _fsum_dot(probs, points)
    variance = _fsum_dot(probs, [(t - mean) ** 2 for t in points])
    e_v = dist.expectation([o.report.variance for o in dist.outcomes])
    e_b = math.fsum(p * v for p, v in dist.phase2_terms)
    e_c = math.fsum(p * v for p, v in dist.phase3_terms)

    worst = max(
        dist.outcomes,
        key=lambda o: abs(o.decomposition.total - (o.report.point - T)) / max(abs(o.report.point), abs(T), 1e-300),
    )
    scale = max(abs(worst.report.point), abs(T))
    decomposition_gap = abs(worst.decomposition.total - (worst.report.point - T)) / scale if scale else 0.0

    checks = (
        _check("probability_total", math.fsum(probs), 1.0, identity_tol),
        Check("decomposition", worst.decomposition.total, worst.report.point - T, decomposition_gap, identity_tol),
        _check("unbiased_point", mean, T, linear_tol),
        _check("unbiased_variance", e_v, variance, quadratic_tol),
        _check("variance_decomposition", variance, dist.var_a + e_b + e_c, quadratic_tol),
        _check("term1_vs_var_A_S", dist.expectation([o.report.term1 for o in dist.outcomes]), dist.var_a, quadratic_tol),
        _check("term2_vs_E_var_B_R", dist.expectation([o.report.term2 for o in dist.outcomes]), e_b, quadratic_tol),
        _check("term3_vs_E_var_C_F", dist.expectation([o.report.term3 for o in dist.outcomes]), e_c, quadratic_tol),
    )
    return ExpectationReport(T, mean, variance, e_v, dist.var_a, e_b, e_c, checks)


@dataclass(frozen=True)
class IdentityReport:
    """Both ends and intermediate steps of the arbitrary-constant identity.

    ``lhs`` is ``E{E_S[E(sum_F c_kp / pi_kp|R | R)]}``; ``expected_over_R``
    and ``expected_over_S`` are the intermediate expectations of
    ``sum_R c_kp`` and ``sum_S pi_kp|S c_kp``; ``rhs`` is ``sum_U pi*_kp c_kp``.
    """

    lhs: float
    expected_over_R: float
    expected_over_S: float
    rhs: float
    joint_star: np.ndarray = field(repr=False)

    @property
    def rel_gap(self) -> float:
        return rel_gap(self.lhs, self.rhs)


def arbitrary_constant_identity(
    population: Population,
    designs: Sequence[PhaseDesign],
    c: np.ndarray,
    cap: int = ENUMERATION_CAP,
) -> IdentityReport:
    """Check ``E[sum_F c_kp / pi_kp|R] = sum_U pi*_kp c_kp`` for a constant matrix ``c``.

    ``c`` is an ``N x N`` array aligned with ``population.ids``; ordered pairs
    including the diagonal are summed.  ``pi*_kp`` is accumulated directly as
    ``sum_{S containing k,p} P(S) pi_kp|S``, which equals ``pi_akp pi_kp|S``
    whenever the conditional second-phase probabilities do not depend on ``S``.
    """
    c = np.asarray(c, dtype=float)
    N = population.N
    if c.shape != (N, N):
        raise ValueError(f"c must have shape {(N, N)}, got {c.shape}")
    index = {k: i for i, k in enumerate(population.ids)}

    lhs_terms, r_terms, s_terms = [], [], []
    seen_S = set()
    joint_star_terms = [[[] for _ in range(N)] for _ in range(N)]
    for node in _walk(population, designs, cap, MAX_OUTCOMES):
        for F, p_F in node.support3:
            if F:
                pos_F = [index[k] for k in F]
                i3 = node.phase3.positions(F)
                pi_r2 = node.phase3.joint[np.ix_(i3, i3)]
                value = math.fsum((c[np.ix_(pos_F, pos_F)] / pi_r2).ravel().tolist())
                lhs_terms.append(node.p_S * node.p_R * p_F * value)
        pos_R = [index[k] for k in node.R]
        r_terms.append(node.p_S * node.p_R * math.fsum(c[np.ix_(pos_R, pos_R)].ravel().tolist()))
        if node.S not in seen_S:
            seen_S.add(node.S)
            pos_S = [index[k] for k in node.S]
            pi_s2 = node.phase2.joint
            s_terms.append(node.p_S * math.fsum((pi_s2 * c[np.ix_(pos_S, pos_S)]).ravel().tolist()))
            for a, i in enumerate(pos_S):
                for b, j in enumerate(pos_S):
                    joint_star_terms[i][j].append(node.p_S * pi_s2[a, b])

    joint_star = np.array([[math.fsum(t) for t in row] for row in joint_star_terms]).reshape(N, N)
    rhs = math.fsum((joint_star * c).ravel().tolist())
    return IdentityReport(math.fsum(lhs_terms), math.fsum(r_terms), math.fsum(s_terms), rhs, joint_star)


def sarndal_swensson_variance(
    S: Frame,
    R: Frame,
    phase1: PhaseProbabilities,
    phase2: PhaseProbabilities,
    y,
) -> tuple[float, float]:
    """Two-phase variance estimator of Sarndal and Swensson (1987), coded from scratch.

    Returns the first-phase and second-phase components::

        sum_R sum_R Delta_akp / pi*_kp  * (y_k / pi_ak)(y_p / pi_ap)
      + sum_R sum_R Delta_kp|S / pi_kp|S * (y_k / pi*_k)(y_p / pi*_p)

    Independent of :mod:`threephase.estimator` apart from the probability
    containers; used to cross-check the three-phase estimator with a census
    third phase.
    """
    if not R:
        return 0.0, 0.0
    first_terms, second_terms = [], []
    for k in R:
        for p in R:
            pi_ak, pi_ap, pi_akp = phase1.pi(k), phase1.pi(p), phase1.pi2(k, p)
            pi_ks, pi_ps, pi_kps = phase2.pi(k), phase2.pi(p), phase2.pi2(k, p)
            yk, yp = float(y[k]), float(y[p])
            breve_k, breve_p = yk / pi_ak, yp / pi_ap
            star_k, star_p = breve_k / pi_ks, breve_p / pi_ps
            first_terms.append((pi_akp - pi_ak * pi_ap) / (pi_akp * pi_kps) * (breve_k * breve_p))
            second_terms.append((pi_kps - pi_ks * pi_ps) / pi_kps * (star_k * star_p))
    return math.fsum(first_terms), math.fsum(second_terms)


@dataclass(frozen=True)
class MonteCarloReport:
    reps: int
    seed: int
    T: float
    points: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)

    @property
    def mean_point(self) -> float:
        return math.fsum(self.points.tolist()) / self.reps

    @property
    def mean_variance(self) -> float:
        return math.fsum(self.variances.tolist()) / self.reps

    def _central(self, x: np.ndarray, power: int) -> float:
        mean = math.fsum(x.tolist()) / self.reps
        return math.fsum(((x - mean) ** power).tolist())

    @property
    def empirical_variance(self) -> float:
        if self.reps < 2:
            return 0.0
        return self._central(self.points, 2) / (self.reps - 1)

    @property
    def se_point(self) -> float:
        return math.sqrt(self.empirical_variance / self.reps)

    @property
    def se_variance(self) -> float:
        if self.reps < 2:
            return 0.0
        return math.sqrt(self._central(self.variances, 2) / (self.reps - 1) / self.reps)

    @property
    def se_empirical_variance(self) -> float:
        m2 = self._central(self.points, 2) / self.reps
        m4 = self._central(self.points, 4) / self.reps
        return math.sqrt(max(m4 - m2 * m2, 0.0) / self.reps)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se_variance, self.se_empirical_variance)

    def as_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "T": self.T,
            "mean_point": self.mean_point,
            "se_point": self.se_point,
            "mean_variance": self.mean_variance,
            "se_variance": self.se_variance,
            "empirical_variance": self.empirical_variance,
            "se_empirical_variance": self.se_empirical_variance,
            "combined_se": self.combined_se,
        }


def replicate_rng(seed: int, rep: int) -> np.random.Generator:
    """Random stream of replicate ``rep``; depends only on ``(seed, rep)``."""
    return np.random.default_rng([seed, rep])


def _simulate_range(population, designs, phase1, seed, start, stop):
    d1, d2, d3 = designs
    y = population.values
    out = np.empty((stop - start, 2))
    for i, rep in enumerate(range(start, stop)):
        rng = replicate_rng(seed, rep)
        S = draw(d1, population.ids, rng)
        R = draw(d2, S, rng) if S else ()
        F = draw(d3, R, rng) if R else ()
        sample = NestedSample(S, R, F)
        if F:
            chain = ProbabilityChain(
                phase1,
                inclusion_probabilities(d2, S),
                inclusion_probabilities(d3, R),
            )
            report = variance_estimate(sample, chain, y)
            out[i] = report.point, report.variance
        else:
            out[i] = 0.0, 0.0
    return out


def monte_carlo(
    population: Population,
    designs: Sequence[PhaseDesign],
    reps: int,
    seed: int,
    workers: int = 1,
) -> MonteCarloReport:
    """Simulate ``reps`` independent three-phase draws.

    Replicate ``r`` always uses :func:`replicate_rng` ``(seed, r)`` and results
    are stored by replicate index, so the report is identical for any number
    of ``workers``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    phase1 = inclusion_probabilities(designs[0], population.ids)
    workers = max(1, min(workers, reps))
    if workers == 1:
        results = _simulate_range(population, designs, phase1, seed, 0, reps)
    else:
        bounds = np.linspace(0, reps, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_simulate_range, population, designs, phase1, seed, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            results = np.concatenate([f.result() for f in futures])
    return MonteCarloReport(reps, seed, population.T, results[:, 0].copy(), results[:, 1].copy())


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
