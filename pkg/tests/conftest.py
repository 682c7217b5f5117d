from __future__ import annotations

import contextlib
import time

import numpy as np
import pytest

from threephase.designs import SRSWOR, Bernoulli, Census, Population, StratifiedSRSWOR
from threephase.jas_alus import JasAlusFrame, Segment, Substratum

_CRITERIA: dict[str, tuple[str, str]] = {}


def _fixture_triples():
    """Design triples on N in {3, 4, 6} with positive pair probabilities in every phase."""
    p4 = Population.from_values([1.0, 2.0, 3.0, 4.0])
    p3 = Population.from_values([2.0, 5.0, 11.0])
    p6 = Population.from_values([3.0, 1.0, 4.0, 1.0, 5.0, 9.0], strata=list("AAABBB"))
    p6b = Population.from_values([2.5, 7.0, 1.0, 8.0, 2.0, 6.5], strata=list("AAAABB"))
    p4b = Population.from_values([0.5, -1.0, 3.0, 2.0])
    strat = lambda pop, sizes: StratifiedSRSWOR.for_population(pop, sizes)
    return {
        "srs-srs-bern_N4": (p4, (SRSWOR(3), SRSWOR(2), Bernoulli(0.5))),
        "bern-bern-census_N3": (p3, (Bernoulli(0.6), Bernoulli(0.7), Census())),
        "census-strat-bern_N6": (
            p6,
            (Census(), strat(p6, {"A": 2, "B": 2}), Bernoulli({1: 0.9, 2: 0.5, 3: 0.7, 4: 0.6, 5: 0.8, 6: 0.4})),
        ),
        "strat-srs-bern_N6": (p6b, (strat(p6b, {"A": 3, "B": 2}), SRSWOR(4), Bernoulli(0.8))),
        "strat-census-strat_N6": (p6, (strat(p6, {"A": 3, "B": 2}), Census(), strat(p6, {"A": 2, "B": 2}))),
        "census-srs-srs_N4": (p4b, (Census(), SRSWOR(3), SRSWOR(2))),
    }


FIXTURE_TRIPLES = _fixture_triples()


@pytest.fixture(params=sorted(FIXTURE_TRIPLES), ids=sorted(FIXTURE_TRIPLES))
def triple(request):
    return FIXTURE_TRIPLES[request.param]


def random_jas_alus_frame(rng: np.random.Generator, max_strata=3, max_substrata=3, max_alus=6) -> JasAlusFrame:
    """Random valid frame; at least one substratum has two or more ALUS segments."""
    while True:
        subs = []
        for i in range(1, rng.integers(1, max_strata + 1) + 1):
            for j in range(1, rng.integers(1, max_substrata + 1) + 1):
                n_prime = int(rng.integers(0, max_alus + 1))
                n_acc = int(rng.integers(0, 4))
                segs = []
                for k in range(n_prime + n_acc):
                    tracts = tuple(rng.uniform(0, 1, rng.integers(0, 5)).tolist())
                    alus = k < n_prime
                    segs.append(Segment(k + 1, not alus, tracts, float(rng.uniform(1, 3)) if alus else None))
                e, a = float(rng.uniform(1, 6)), float(rng.uniform(1, 4))
                subs.append(Substratum(i, j, e, a, len(segs) + int(rng.integers(0, 3)), n_prime, tuple(segs)))
        frame = JasAlusFrame(tuple(subs))
        if any(s.n_prime >= 2 and any(seg.total > 0 for seg in s.alus) for s in frame.substrata):
            return frame


def homogeneous_frame(e=2.0, a=3.0, r=1.5, n_prime=4, c=10.0) -> JasAlusFrame:
    """One substratum whose ALUS segments all have response factor ``r`` and total ``c``."""
    tracts = (c / 20,) * 20
    segs = tuple(Segment(k + 1, False, tracts, r) for k in range(n_prime))
    return JasAlusFrame((Substratum(1, 1, e, a, 2 * n_prime, n_prime, segs),))


@pytest.fixture
def record_criterion():
    """Context manager recording the pass/fail outcome of an acceptance criterion."""

    @contextlib.contextmanager
    def record(number: str, title: str):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            _CRITERIA[number] = ("FAIL", f"{title} ({time.perf_counter() - start:.2f}s): {str(exc).splitlines()[0][:160]}")
            raise
        _CRITERIA[number] = ("PASS", f"{title} ({time.perf_counter() - start:.2f}s)")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=int):
        status, text = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {text}")
