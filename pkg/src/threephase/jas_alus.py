"""June Area Survey (JAS) and its Annual Land Utilization Survey (ALUS) follow-on.

The JAS is a stratified sample of land segments; each segment holds tracts
with a tract-to-farm ratio ``t`` whose sum estimates the number of farms.
Segments with accurate JAS information contribute through the usual expanded
JAS total ``T1'``.  The remaining segments are subsampled for ALUS and
re-measured, subject to non-response, giving ``T2'``::

    T2 = T1' + sum_ij e_ij a_ij sum_k r_ijk c_ijk,      c_ijk = sum_m t_ijkm

where ``e`` is the JAS expansion factor, ``a`` the ALUS subsampling expansion
factor and ``r`` the inverse response probability of a segment.

The variance estimator of ``T2'`` is the three-phase estimator specialised to
SRSWOR within substrata (JAS and ALUS) followed by Bernoulli response.  Its
cross-segment term sums over pairs of segments.  With ``pairs="ordered"``
(the default) each unordered pair counts twice, which is the reading under
which the estimator is design-unbiased and agrees with
:func:`threephase.estimator.variance_estimate`.  ``pairs="printed"`` counts
each unordered pair once.  That is how the closed forms are often written
down, but the resulting estimator is biased; the option is kept for
comparison with numbers computed that way.
"""

from __future__ import annotations

import math
from collections.abc import Hashable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .designs import PhaseProbabilities
from .errors import DataIntegrityError, InvalidDesignError
from .estimator import NestedSample, ProbabilityChain

PairConvention = Literal["ordered", "printed"]
_PAIR_WEIGHT = {"ordered": 2.0, "printed": 1.0}


def _pair_weight(pairs: str) -> float:
    try:
        return _PAIR_WEIGHT[pairs]
    except KeyError:
        raise ValueError(f"pairs must be 'ordered' or 'printed', got {pairs!r}") from None


@dataclass(frozen=True)
class Segment:
    """One JAS segment.

    ``accurate`` segments enter ``T1'``; the others are ALUS-sampled and need
    a response expansion factor ``r`` (shared by all tracts of the segment).
    """

    segment: Hashable
    accurate: bool
    tracts: tuple[float, ...] = ()
    r: float | None = None

    @property
    def total(self) -> float:
        return math.fsum(self.tracts)


@dataclass(frozen=True)
class Substratum:
    stratum: Hashable
    substratum: Hashable
    e: float
    a: float
    n: int
    n_prime: int
    segments: tuple[Segment, ...] = ()

    @property
    def key(self) -> tuple:
        return (self.stratum, self.substratum)

    @property
    def accurate(self) -> tuple[Segment, ...]:
        return tuple(s for s in self.segments if s.accurate)

    @property
    def alus(self) -> tuple[Segment, ...]:
        return tuple(s for s in self.segments if not s.accurate)

    def validate(self) -> None:
        where = f"substratum {self.key!r}"
        if not (self.e >= 1 and self.a >= 1 and math.isfinite(self.e) and math.isfinite(self.a)):
            raise DataIntegrityError(f"{where}: expansion factors e and a must be finite and >= 1")
        if len(self.segments) > self.n:
            raise DataIntegrityError(f"{where}: {len(self.segments)} segments listed but n = {self.n}")
        if len(self.alus) != self.n_prime:
            raise DataIntegrityError(f"{where}: {len(self.alus)} ALUS segments listed but n_prime = {self.n_prime}")
        if len({s.segment for s in self.segments}) != len(self.segments):
            raise DataIntegrityError(f"{where}: duplicate segment ids")
        for s in self.segments:
            if any(not 0 <= t <= 1 for t in s.tracts):
                raise DataIntegrityError(f"{where}, segment {s.segment!r}: tract-to-farm ratios must lie in [0, 1]")
            if not s.accurate:
                if s.r is None:
                    raise DataIntegrityError(f"{where}, segment {s.segment!r}: ALUS segment has no response factor r")
                if not (s.r >= 1 and math.isfinite(s.r)):
                    raise DataIntegrityError(f"{where}, segment {s.segment!r}: r must be finite and >= 1")


@dataclass(frozen=True)
class JasAlusFrame:
    """Strata and substrata of the JAS with their segments and tracts.

    Segments not listed in a substratum (fewer than ``n``) are JAS segments
    without farm tracts and count as zero totals.
    """

    substrata: tuple[Substratum, ...]

    def __post_init__(self):
        subs = tuple(sorted(self.substrata, key=lambda s: s.key))
        if len({s.key for s in subs}) != len(subs):
            raise DataIntegrityError("duplicate (stratum, substratum) entries")
        for s in subs:
            s.validate()
        object.__setattr__(self, "substrata", subs)


def t1_estimate(frame: JasAlusFrame, accurate_only: bool = False) -> float:
    """JAS total ``T1 = sum_ij e_ij sum_k c_ijk``; ``accurate_only`` gives ``T1'``."""
    terms = []
    for sub in frame.substrata:
        segments = sub.accurate if accurate_only else sub.segments
        terms.extend(sub.e * seg.total for seg in segments)
    return math.fsum(terms)


def var_t1(frame: JasAlusFrame, accurate_only: bool = False) -> float:
    """Kott's variance of the JAS estimator under stratified SRSWOR.

    ``sum_ij (1 - 1/e_ij) / (1 - 1/n_ij) * sum_k (c'_ijk - mean_k c'_ijk)^2``
    with ``c' = e c``.  With ``accurate_only`` the inaccurate segments count as
    zeros, i.e. ``T1'`` is treated as a domain total of the JAS sample.

    Raises
    ------
    InvalidDesignError
        For a substratum with ``e > 1`` and ``n < 2``.
    """
    contributions = []
    for sub in frame.substrata:
        if sub.e == 1:
            continue
        if sub.n < 2:
            raise InvalidDesignError(
                f"substratum {sub.key!r}: n = {sub.n} leaves 1 - 1/n = 0 in the variance denominator"
            )
        expanded = [sub.e * seg.total if (seg.accurate or not accurate_only) else 0.0 for seg in sub.segments]
        expanded += [0.0] * (sub.n - len(expanded))
        mean = math.fsum(expanded) / sub.n
        ss = math.fsum((c - mean) ** 2 for c in expanded)
        contributions.append((1 - 1 / sub.e) / (1 - 1 / sub.n) * ss)
    return math.fsum(contributions)


def t2_prime(frame: JasAlusFrame) -> float:
    """ALUS part ``T2' = sum_ij e_ij a_ij sum_k r_ijk c_ijk``."""
    return math.fsum(sub.e * sub.a * seg.r * seg.total for sub in frame.substrata for seg in sub.alus)


@dataclass(frozen=True)
class PointEstimates:
    T1prime: float
    T2prime: float

    @property
    def T2(self) -> float:
        return self.T1prime + self.T2prime


def t2_estimate(frame: JasAlusFrame) -> PointEstimates:
    """``T2 = T1' + T2'``."""
    return PointEstimates(t1_estimate(frame, accurate_only=True), t2_prime(frame))


def _pair_products(x: list[float]) -> float:
    return math.fsum(x[k] * x[p] for k in range(len(x)) for p in range(k + 1, len(x)))


@dataclass(frozen=True)
class SubstratumVariance:
    stratum: Hashable
    substratum: Hashable
    v_ij: float
    five_term: float


@dataclass(frozen=True)
class T2PrimeVariance:
    """Variance estimate of ``T2'``, its per-substratum parts and the five-term total."""

    total: float
    five_term_total: float
    contributions: tuple[SubstratumVariance, ...]
    warnings: tuple[str, ...] = field(default=())


def var_t2prime_hat(frame: JasAlusFrame, pairs: PairConvention = "ordered") -> T2PrimeVariance:
    """Design-based variance estimate of ``T2'``, in simplified and five-term form.

    The simplified form per substratum is::

        sum_k a e r_k (a e r_k - 1) c_k^2
          + w * e a (1 - e a) / (n' - 1) * sum_{k<p} (r_k c_k)(r_p c_p)

    with ``w = 2`` for ``pairs="ordered"`` and ``w = 1`` for ``"printed"``.
    The five-term form keeps the three phases' diagonal and cross parts apart
    and must agree with the simplified one.  Substrata with a single ALUS
    segment have no pairs, so their cross term is skipped with a warning.
    """
    w = _pair_weight(pairs)
    contributions = []
    warnings = []
    for sub in frame.substrata:
        segs = sub.alus
        e, a, n1 = sub.e, sub.a, sub.n_prime
        c = [s.total for s in segs]
        r = [s.r for s in segs]
        rc = [rk * ck for rk, ck in zip(r, c)]
        diag = math.fsum(a * e * rk * (a * e * rk - 1) * ck**2 for rk, ck in zip(r, c))
        five = [
            a * e * (e - 1) * math.fsum(rk * ck**2 for rk, ck in zip(r, c)),
            e**2 * a * (a - 1) * math.fsum(rk * ck**2 for rk, ck in zip(r, c)),
            e**2 * a**2 * math.fsum(rk * (rk - 1) * ck**2 for rk, ck in zip(r, c)),
        ]
        cross = 0.0
        if n1 == 1:
            warnings.append(f"substratum {sub.key!r}: n_prime = 1, cross-segment term skipped")
        elif n1 >= 2:
            pp = w * _pair_products(rc) / (n1 - 1)
            cross = e * a * (1 - e * a) * pp
            five += [e * a * (1 - e) * pp, e**2 * a * (1 - a) * pp]
        contributions.append(SubstratumVariance(sub.stratum, sub.substratum, diag + cross, math.fsum(five)))
    return T2PrimeVariance(
        math.fsum(v.v_ij for v in contributions),
        math.fsum(v.five_term for v in contributions),
        tuple(contributions),
        tuple(warnings),
    )


def special_case_vij(e: float, a: float, r: float, n_prime: int, c: float, pairs: PairConvention = "ordered") -> float:
    """Closed-form ``V_ij`` when all ALUS segments share ``r`` and segment total ``c``.

    ``ordered``: ``e a r n' (r - 1) c^2``; ``printed``: ``e a r n' [r (e a + 1) - 2] c^2 / 2``.
    Both are nonnegative for ``e, a, r >= 1``.
    """
    if not (e >= 1 and a >= 1 and r >= 1):
        raise InvalidDesignError("expansion factors e, a, r must be >= 1")
    if n_prime < 2:
        raise InvalidDesignError("the special case needs n_prime >= 2")
    if c < 0:
        raise DataIntegrityError("segment total c must be >= 0")
    if _pair_weight(pairs) == 2.0:
        return e * a * r * n_prime * (r - 1) * c**2
    return 0.5 * e * a * r * n_prime * (r * (e * a + 1) - 2) * c**2


def jas_alus_probability_map(frame: JasAlusFrame) -> tuple[NestedSample, ProbabilityChain, dict]:
    """Inclusion probabilities of the ALUS segments as a three-phase design.

    Within a substratum the JAS is treated as SRSWOR of ``n' a`` segments out
    of ``n' a e`` and ALUS as SRSWOR of ``n'`` out of ``n' a``; response is
    Bernoulli with probability ``1/r`` per segment.  Pairs from different
    substrata are independent in the first two phases.

    Returns the sample (``S = R = F`` = ALUS segments, which is all the
    variance estimator looks at), the probability chain and ``y`` as segment
    totals, ready for :func:`threephase.estimator.variance_estimate`.
    Unit ids are ``(stratum, substratum, segment)``.
    """
    units, sub_of, r, y = [], [], [], {}
    for sub in frame.substrata:
        for seg in sub.alus:
            uid = (sub.stratum, sub.substratum, seg.segment)
            units.append(uid)
            sub_of.append(sub)
            r.append(seg.r)
            y[uid] = seg.total
    m = len(units)
    e = np.array([s.e for s in sub_of])
    a = np.array([s.a for s in sub_of])
    r = np.array(r, dtype=float)

    pi_a, pi_s, pi_r = 1 / e, 1 / a, 1 / r
    pi_a2, pi_s2, pi_r2 = np.outer(pi_a, pi_a), np.outer(pi_s, pi_s), np.outer(pi_r, pi_r)
    for k in range(m):
        for p in range(m):
            sub = sub_of[k]
            if k == p or sub is not sub_of[p]:
                continue
            n1, ek, ak = sub.n_prime, sub.e, sub.a
            pi_a2[k, p] = (n1 * ak - 1) / (ek * (n1 * ak * ek - 1))
            pi_s2[k, p] = (n1 - 1) / (ak * (n1 * ak - 1))
    for mat, first in ((pi_a2, pi_a), (pi_s2, pi_s), (pi_r2, pi_r)):
        np.fill_diagonal(mat, first)

    frame_units = tuple(units)
    chain = ProbabilityChain(
        PhaseProbabilities(frame_units, pi_a, pi_a2),
        PhaseProbabilities(frame_units, pi_s, pi_s2),
        PhaseProbabilities(frame_units, pi_r, pi_r2),
    )
    return NestedSample(frame_units, frame_units, frame_units), chain, y


@dataclass(frozen=True)
class JasAlusReport:
    T1: float
    VarT1: float
    T1prime: float
    VarT1prime: float
    T2prime: float
    variance_t2prime: T2PrimeVariance
    pairs: str

    @property
    def T2(self) -> float:
        return self.T1prime + self.T2prime

    @property
    def VarT2(self) -> float:
        """``Var(T1') + Var(T2')``; segments are independent across the two parts."""
        return self.VarT1prime + self.variance_t2prime.total

    def as_dict(self) -> dict:
        v = self.variance_t2prime
        return {
            "T1": self.T1,
            "VarT1": self.VarT1,
            "T1prime": self.T1prime,
            "VarT1prime": self.VarT1prime,
            "T2prime": self.T2prime,
            "T2": self.T2,
            "VarT2prime_hat": v.total,
            "VarT2prime_hat_five_term": v.five_term_total,
            "VarT2": self.VarT2,
            "pairs": self.pairs,
            "substrata": [{"i": c.stratum, "j": c.substratum, "v_ij": c.v_ij} for c in v.contributions],
            "warnings": list(v.warnings),
        }


def jas_alus_report(frame: JasAlusFrame, pairs: PairConvention = "ordered") -> JasAlusReport:
    points = t2_estimate(frame)
    return JasAlusReport(
        T1=t1_estimate(frame),
        VarT1=var_t1(frame),
        T1prime=points.T1prime,
        VarT1prime=var_t1(frame, accurate_only=True),
        T2prime=points.T2prime,
        variance_t2prime=var_t2prime_hat(frame, pairs),
        pairs=pairs,
    )
