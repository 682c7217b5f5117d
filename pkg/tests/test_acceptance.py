"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists
PASS/FAIL per criterion.
"""

import functools
import time

import numpy as np
import pytest
from conftest import FIXTURE_TRIPLES, homogeneous_frame, random_jas_alus_frame

from threephase.designs import SRSWOR, Bernoulli, Census, Population, StratifiedSRSWOR, draw, inclusion_probabilities
from threephase.estimator import NestedSample, estimate, two_phase_estimate, variance_estimate
from threephase.jas_alus import (
    JasAlusFrame,
    Segment,
    Substratum,
    jas_alus_probability_map,
    special_case_vij,
    var_t1,
    var_t2prime_hat,
)
from threephase.oracle import (
    arbitrary_constant_identity,
    enumerate_three_phase,
    expectation_check,
    monte_carlo,
    rel_gap,
    sarndal_swensson_variance,
)

JAS_FRAMES = 100
MC_REPS = 100_000
MC_SEED = 20240917


@functools.cache
def _enumerated():
    """Exact moments of every fixture triple plus the time it took to get them."""
    out = {}
    for name, (pop, designs) in FIXTURE_TRIPLES.items():
        start = time.perf_counter()
        out[name] = expectation_check(enumerate_three_phase(pop, designs)), time.perf_counter() - start
    return out


@functools.cache
def _jas_frames():
    rng = np.random.default_rng(606)
    return tuple(random_jas_alus_frame(rng, max_strata=3, max_substrata=3, max_alus=6) for _ in range(JAS_FRAMES))


def test_criterion_01_point_unbiased(record_criterion):
    with record_criterion("1", "E[t#] = T on enumerated fixtures, 1e-10"):
        start = time.perf_counter()
        results = _enumerated()
        assert len(results) >= 5
        for name, (report, _) in results.items():
            gap = abs(report.expected_point - report.T) / abs(report.T)
            assert gap < 1e-10, f"{name}: gap {gap:.3e}"
        elapsed = time.perf_counter() - start
        assert elapsed < 5, f"took {elapsed:.2f}s"


def test_criterion_02_variance_estimator_unbiased(record_criterion):
    with record_criterion("2", "E[V] = Var(t#) on enumerated fixtures, 1e-9"):
        results = _enumerated()
        for name, (report, _) in results.items():
            assert report.variance > 0, name
            gap = abs(report.expected_variance_estimate - report.variance) / report.variance
            assert gap < 1e-9, f"{name}: gap {gap:.3e}"
        elapsed = sum(t for _, t in results.values())
        assert elapsed < 10, f"took {elapsed:.2f}s"


def test_criterion_03_variance_decomposition(record_criterion):
    with record_criterion("3", "Var(t#) = Var(A_S) + E Var_S(B_R) + E E_S Var_R(C_F), 1e-9"):
        for name, (report, _) in _enumerated().items():
            gap = abs(report.components_total - report.variance) / report.variance
            assert gap < 1e-9, f"{name}: gap {gap:.3e}"


def test_criterion_04_arbitrary_constant_identity(record_criterion):
    with record_criterion("4", "arbitrary-constant identity, 20 random c on N=4, 1e-10"):
        pop, designs = FIXTURE_TRIPLES["srs-srs-bern_N4"]
        rng = np.random.default_rng(404)
        gaps = []
        for _ in range(20):
            idr = arbitrary_constant_identity(pop, designs, rng.uniform(-1, 1, (pop.N, pop.N)))
            gaps.append(idr.rel_gap)
        assert max(gaps) < 1e-10, f"worst gap {max(gaps):.3e}"


def _two_phase_fixture(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(4, 9))
    strata = ["A" if k < N // 2 else "B" for k in range(N)]
    pop = Population.from_values(rng.normal(10, 5, N).tolist(), strata)

    def pick(frame_size):
        kind = rng.integers(0, 3)
        if kind == 0:
            return SRSWOR(int(rng.integers(2, frame_size + 1)))
        if kind == 1:
            return Bernoulli(float(rng.uniform(0.3, 1.0)))
        return None

    first = pick(N) or StratifiedSRSWOR.for_population(pop, {"A": 2, "B": 2})
    while True:
        S = draw(first, pop.ids, rng)
        if len(S) >= 2:
            break
    second = pick(len(S)) or SRSWOR(len(S) - 1)
    while True:
        R = draw(second, S, rng)
        if R:
            return pop, (first, second), S, R


def test_criterion_05_two_phase_reduction(record_criterion):
    with record_criterion("5", "Census third phase: term3 = 0 and two-phase terms bit-for-bit, 10 fixtures"):
        for seed in range(10):
            pop, (first, second), S, R = _two_phase_fixture(seed)
            report = estimate(pop, [first, second, Census()], NestedSample(S, R, R))
            assert report.term3 == 0.0
            p1 = inclusion_probabilities(first, pop.ids)
            p2 = inclusion_probabilities(second, S)
            t1, t2 = sarndal_swensson_variance(S, R, p1, p2, pop.values)
            assert report.term1 + report.term2 == t1 + t2, f"seed {seed}"
            assert (report.term1, report.term2) == (t1, t2), f"seed {seed}"
            assert two_phase_estimate(S, R, p1, p2, pop) == report


def test_criterion_06_five_term_equals_simplified(record_criterion):
    with record_criterion("6", "five-term = simplified on 100 random JAS-ALUS frames, 1e-12"):
        start = time.perf_counter()
        frames = _jas_frames()
        for idx, frame in enumerate(frames):
            for pairs in ("ordered", "printed"):
                v = var_t2prime_hat(frame, pairs)
                assert rel_gap(v.five_term_total, v.total) < 1e-12, f"frame {idx} ({pairs})"
        elapsed = time.perf_counter() - start
        assert elapsed < 2, f"took {elapsed:.2f}s"


def test_criterion_07_special_case(record_criterion):
    with record_criterion("7", "homogeneous frame V_ij = 15300 (closed form and general), census 0"):
        assert special_case_vij(1, 1, 1, 4, 10) == 0.0
        assert var_t2prime_hat(homogeneous_frame(e=1.0, a=1.0, r=1.0)).total == 0.0

        closed = special_case_vij(2, 3, 1.5, 4, 10)
        general = var_t2prime_hat(homogeneous_frame(e=2.0, a=3.0, r=1.5, n_prime=4, c=10.0)).total
        assert rel_gap(closed, general) < 1e-12
        assert rel_gap(closed, 15300.0) < 1e-12, (
            f"unbiased (ordered-pair) estimator gives {closed:.12g}, not 15300; "
            "15300 is the unordered-pair value, which is biased"
        )


def test_criterion_08_cross_module(record_criterion):
    with record_criterion("8", "var_t2prime_hat = variance_estimate via probability map, 100 frames, 1e-12"):
        for idx, frame in enumerate(_jas_frames()):
            sample, chain, y = jas_alus_probability_map(frame)
            general = variance_estimate(sample, chain, y).variance
            direct = var_t2prime_hat(frame).total
            assert rel_gap(general, direct) < 1e-12, f"frame {idx}: {general!r} vs {direct!r}"


def test_criterion_09_kott(record_criterion):
    with record_criterion("9", "Kott variance: equal totals 0, e = 1 gives 0, hand fixture 2.0"):
        equal = JasAlusFrame(
            (
                Substratum(1, 1, 3.0, 1.0, 3, 0, tuple(Segment(k, True, (0.25, 0.5)) for k in range(3))),
                Substratum(1, 2, 5.0, 1.0, 2, 0, tuple(Segment(k, True, (0.7,)) for k in range(2))),
            )
        )
        assert var_t1(equal) == 0.0
        census = JasAlusFrame((Substratum(1, 1, 1.0, 1.0, 2, 0, (Segment(1, True, (0.1,)), Segment(2, True, (0.9,)))),))
        assert var_t1(census) == 0.0
        hand = JasAlusFrame((Substratum(1, 1, 2.0, 1.0, 2, 0, (Segment(1, True, (1.0, 1.0)), Segment(2, True, (1.0, 1.0, 1.0)))),))
        assert rel_gap(var_t1(hand), 2.0) < 1e-12


@functools.cache
def _monte_carlo():
    pop = Population.from_values(np.arange(1.0, 21.0).tolist())
    designs = (SRSWOR(12), SRSWOR(8), Bernoulli(0.7))
    runs = []
    for workers in (1, 2):
        start = time.perf_counter()
        runs.append((monte_carlo(pop, designs, MC_REPS, MC_SEED, workers=workers), time.perf_counter() - start))
    return pop, runs


def test_criterion_10_monte_carlo(record_criterion):
    with record_criterion("10", "Monte Carlo N=20, 1e5 reps: |mean - T| < 3 SE, bit-for-bit reproducible"):
        pop, runs = _monte_carlo()
        # two independent runs, one serial and one split across two worker processes
        (first, t1), (second, t2) = runs
        assert abs(first.mean_point - pop.T) < 3 * first.se_point, (first.mean_point, first.se_point)
        assert np.array_equal(first.points, second.points)
        assert np.array_equal(first.variances, second.variances)
        assert max(t1, t2) < 30, f"slowest run {max(t1, t2):.1f}s"


def test_monte_carlo_variance_estimator_agrees():
    pop, runs = _monte_carlo()
    mc = runs[0][0]
    assert abs(mc.mean_variance - mc.empirical_variance) < 3 * mc.combined_se


@pytest.mark.parametrize("name", sorted(FIXTURE_TRIPLES))
def test_fixture_terms_target_phase_variances(name):
    report, _ = _enumerated()[name]
    for check in ("term1_vs_var_A_S", "term2_vs_E_var_B_R", "term3_vs_E_var_C_F"):
        assert report.check(check).passed, check
