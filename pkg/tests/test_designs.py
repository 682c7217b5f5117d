import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threephase.designs import (
    SRSWOR,
    Bernoulli,
    Census,
    Population,
    StratifiedSRSWOR,
    Table,
    Unit,
    draw,
    enumerate_support,
    inclusion_probabilities,
)
from threephase.errors import (
    DataIntegrityError,
    EnumerationTooLargeError,
    InvalidDesignError,
    UnsupportedEnumerationError,
)


def test_population_orders_units_and_totals():
    pop = Population((Unit(3, 1.5), Unit(1, 2.0), Unit(2, -0.5)))
    assert pop.ids == (1, 2, 3)
    assert pop.N == 3
    assert pop.T == 3.0


def test_population_rejects_duplicate_ids():
    with pytest.raises(DataIntegrityError):
        Population((Unit(1, 1.0), Unit(1, 2.0)))


class TestInclusionProbabilities:
    def test_srswor_two_of_four(self):
        probs = inclusion_probabilities(SRSWOR(2), [1, 2, 3, 4])
        np.testing.assert_allclose(probs.first, 0.5)
        off = probs.joint[~np.eye(4, dtype=bool)]
        np.testing.assert_allclose(off, 1 / 6)
        np.testing.assert_allclose(probs.delta[~np.eye(4, dtype=bool)], -1 / 12)

    def test_census(self):
        probs = inclusion_probabilities(Census(), ["a", "b", "c"])
        assert np.all(probs.first == 1.0)
        assert np.all(probs.joint == 1.0)
        assert np.all(probs.delta == 0.0)

    def test_bernoulli(self):
        probs = inclusion_probabilities(Bernoulli(0.5), [1, 2, 3])
        assert probs.pi2(1, 2) == 0.25
        off = ~np.eye(3, dtype=bool)
        assert np.all(probs.delta[off] == 0.0)
        assert np.all(np.diag(probs.delta) == 0.25)

    def test_stratified(self):
        strata = {1: "A", 2: "A", 3: "A", 4: "B", 5: "B"}
        probs = inclusion_probabilities(StratifiedSRSWOR({"A": 2, "B": 1}, strata), strata)
        assert probs.pi(1) == pytest.approx(2 / 3)
        assert probs.pi(4) == 0.5
        assert probs.pi2(1, 2) == pytest.approx(1 / 3)
        assert probs.pi2(4, 5) == 0.0
        assert probs.pi2(1, 4) == pytest.approx(1 / 3)
        assert probs.delta[0, 3] == pytest.approx(0.0, abs=1e-15)

    def test_stratified_ignores_strata_absent_from_frame(self):
        design = StratifiedSRSWOR({"A": 1, "B": 1}, {1: "A", 2: "A", 3: "B"})
        probs = inclusion_probabilities(design, [1, 2])
        np.testing.assert_allclose(probs.first, [0.5, 0.5])

    def test_pi_kk_equals_pi_k(self):
        for design in (SRSWOR(3), Bernoulli(0.3), Census()):
            probs = inclusion_probabilities(design, range(5))
            assert np.array_equal(np.diag(probs.joint), probs.first)
            assert np.array_equal(probs.joint, probs.joint.T)

    def test_table_is_returned_verbatim(self):
        first = np.array([0.5, 0.5, 0.5, 0.5])
        joint = np.full((4, 4), 1 / 6)
        np.fill_diagonal(joint, first)
        probs = inclusion_probabilities(Table((4, 3, 2, 1), first, joint), [1, 2, 3, 4])
        assert np.array_equal(probs.joint, joint)

    @pytest.mark.parametrize(
        "joint_patch",
        [
            {(0, 1): 0.1},  # asymmetric
            {(0, 1): 0.0, (1, 0): 0.0},  # zero pair probability
            {(0, 1): 0.9, (1, 0): 0.9},  # above min(pi_k, pi_p)
        ],
    )
    def test_table_validation(self, joint_patch):
        first = np.array([0.5, 0.5, 0.5])
        joint = np.full((3, 3), 0.2)
        np.fill_diagonal(joint, first)
        for (i, j), v in joint_patch.items():
            joint[i, j] = v
        with pytest.raises(InvalidDesignError):
            Table((1, 2, 3), first, joint)

    def test_srswor_too_large(self):
        with pytest.raises(InvalidDesignError):
            inclusion_probabilities(SRSWOR(5), [1, 2, 3])

    def test_bernoulli_probability_range(self):
        with pytest.raises(InvalidDesignError):
            inclusion_probabilities(Bernoulli(0.0), [1, 2])
        with pytest.raises(InvalidDesignError):
            inclusion_probabilities(Bernoulli({1: 0.5}), [1, 2])


class TestSupport:
    def test_srswor_one_of_two(self):
        support = enumerate_support(SRSWOR(1), ["a", "b"])
        assert list(support) == [(("a",), 0.5), (("b",), 0.5)]

    def test_bernoulli_includes_empty_sample(self):
        support = enumerate_support(Bernoulli(0.5), ["a", "b"])
        assert len(support) == 4
        assert ((), 0.25) in list(support)
        assert all(p == 0.25 for _, p in support)

    def test_srswor_two_of_four(self):
        support = enumerate_support(SRSWOR(2), [1, 2, 3, 4])
        assert len(support) == 6
        assert all(p == pytest.approx(1 / 6) for _, p in support)
        for k in (1, 2, 3, 4):
            assert math.fsum(p for s, p in support if k in s) == pytest.approx(0.5, abs=1e-12)

    def test_bernoulli_certain_units_drop_zero_outcomes(self):
        support = enumerate_support(Bernoulli({1: 1.0, 2: 0.5}), [1, 2])
        assert sorted(s for s, _ in support) == [(1,), (1, 2)]

    def test_cap(self):
        with pytest.raises(EnumerationTooLargeError):
            enumerate_support(Census(), range(13))
        assert len(enumerate_support(Census(), range(13), cap=13)) == 1

    def test_table_not_enumerable(self):
        table = Table((1,), np.array([0.5]), np.array([[0.5]]))
        with pytest.raises(UnsupportedEnumerationError):
            enumerate_support(table, [1])


designs = st.one_of(
    st.integers(1, 6).map(SRSWOR),
    st.floats(0.05, 1.0).map(Bernoulli),
    st.just(Census()),
    st.tuples(st.integers(1, 3), st.integers(1, 3)).map(
        lambda s: StratifiedSRSWOR({"A": s[0], "B": s[1]}, {k: "A" if k < 3 else "B" for k in range(7)})
    ),
)


@settings(max_examples=60, deadline=None)
@given(design=designs, m=st.integers(6, 7))
def test_marginals_of_support_match_closed_forms(design, m):
    frame = list(range(m))
    support = enumerate_support(design, frame)
    probs = inclusion_probabilities(design, frame)
    marg = support.marginal()
    np.testing.assert_allclose(marg.joint, probs.joint, rtol=0, atol=1e-12)
    assert support.expected_size() == pytest.approx(probs.first.sum(), abs=1e-12)


def test_draw_census_and_certain_bernoulli():
    assert draw(Census(), [3, 1, 2], seed=0) == (1, 2, 3)
    assert draw(Bernoulli(1.0), [1, 2, 3], seed=0) == (1, 2, 3)


def test_draw_is_reproducible():
    a = [draw(SRSWOR(3), range(10), seed=s) for s in range(20)]
    b = [draw(SRSWOR(3), range(10), seed=s) for s in range(20)]
    assert a == b


def test_draw_srswor_empirical_inclusion():
    rng = np.random.default_rng(2024)
    frame = [1, 2, 3, 4]
    probs = inclusion_probabilities(SRSWOR(2), frame)
    counts = dict.fromkeys(frame, 0)
    reps = 100_000
    for _ in range(reps):
        for k in draw(SRSWOR(2), frame, rng):
            counts[k] += 1
    for k in frame:
        assert abs(counts[k] / reps - probs.pi(k)) < 0.005


def test_draw_stratified_respects_sizes():
    design = StratifiedSRSWOR({"A": 2, "B": 1}, {1: "A", 2: "A", 3: "A", 4: "B", 5: "B"})
    for seed in range(10):
        s = draw(design, [1, 2, 3, 4, 5], seed)
        assert sum(k <= 3 for k in s) == 2 and sum(k > 3 for k in s) == 1
