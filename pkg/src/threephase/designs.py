"""Sampling designs for a single phase and their inclusion probabilities.

Every design is applied to a *frame*, the set of unit ids it samples from.
For the first phase the frame is the whole population; for later phases it is
the sample realized by the previous phase, so the same design object yields
conditional probabilities such as ``pi_{k|S}``.

Units are always handled in ascending id order, which makes every sum and
every report reproducible.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import (
    DataIntegrityError,
    EnumerationTooLargeError,
    InvalidDesignError,
    UnsupportedEnumerationError,
)

UnitId = Hashable
Frame = tuple  # sorted tuple of unit ids

ENUMERATION_CAP = 12
SUPPORT_TOLERANCE = 1e-12


def as_frame(units: Iterable[UnitId]) -> Frame:
    """Return ``units`` as a sorted, duplicate-free tuple."""
    units = list(units)
    frame = tuple(sorted(set(units)))
    if len(frame) != len(units):
        raise DataIntegrityError("frame contains duplicate unit ids")
    return frame


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Unit:
    unit_id: UnitId
    y: float
    stratum: Hashable | None = None


@dataclass(frozen=True)
class Population:
    """A finite population ``U`` with study values ``y_k``.

    Units are stored in ascending ``unit_id`` order regardless of input order.
    """

    units: tuple[Unit, ...]

    def __post_init__(self):
        units = tuple(sorted(self.units, key=lambda u: u.unit_id))
        ids = [u.unit_id for u in units]
        if len(set(ids)) != len(ids):
            raise DataIntegrityError("unit ids must be unique")
        for u in units:
            if not math.isfinite(u.y):
                raise DataIntegrityError(f"unit {u.unit_id!r} has non-finite y")
        object.__setattr__(self, "units", units)

    @classmethod
    def from_values(cls, y: Sequence[float], strata: Sequence | None = None) -> Population:
        """Build a population with ids ``1..N``."""
        if strata is None:
            strata = [None] * len(y)
        if len(strata) != len(y):
            raise DataIntegrityError("strata and y differ in length")
        return cls(tuple(Unit(k + 1, float(v), s) for k, (v, s) in enumerate(zip(y, strata))))

    @property
    def N(self) -> int:
        return len(self.units)

    @cached_property
    def T(self) -> float:
        return math.fsum(u.y for u in self.units)

    @cached_property
    def ids(self) -> Frame:
        return tuple(u.unit_id for u in self.units)

    @cached_property
    def values(self) -> dict[UnitId, float]:
        return {u.unit_id: u.y for u in self.units}

    @cached_property
    def strata(self) -> dict[UnitId, Hashable]:
        return {u.unit_id: u.stratum for u in self.units if u.stratum is not None}

    def y_of(self, units: Iterable[UnitId]) -> np.ndarray:
        vals = self.values
        return np.array([vals[k] for k in units], dtype=float)


@dataclass(frozen=True)
class PhaseProbabilities:
    """First- and second-order inclusion probabilities of one phase.

    ``joint`` is the full symmetric matrix of ``pi_kp`` over ``units`` with
    ``pi_kk = pi_k`` on the diagonal.
    """

    units: Frame
    first: np.ndarray
    joint: np.ndarray

    @cached_property
    def index(self) -> dict[UnitId, int]:
        return {k: i for i, k in enumerate(self.units)}

    @cached_property
    def delta(self) -> np.ndarray:
        """``Delta_kp = pi_kp - pi_k pi_p``."""
        return self.joint - np.outer(self.first, self.first)

    @property
    def first_order(self) -> dict[UnitId, float]:
        return dict(zip(self.units, self.first.tolist()))

    def pi(self, k: UnitId) -> float:
        return float(self.first[self.index[k]])

    def pi2(self, k: UnitId, p: UnitId) -> float:
        return float(self.joint[self.index[k], self.index[p]])

    def positions(self, units: Iterable[UnitId]) -> np.ndarray:
        index = self.index
        try:
            return np.array([index[k] for k in units], dtype=np.intp)
        except KeyError as exc:
            raise DataIntegrityError(f"no inclusion probability for unit {exc.args[0]!r}") from None

    def restrict(self, units: Iterable[UnitId]) -> PhaseProbabilities:
        units = as_frame(units)
        pos = self.positions(units)
        return PhaseProbabilities(units, self.first[pos], self.joint[pos[:, None], pos])


@dataclass(frozen=True)
class SupportDistribution:
    """Every sample with positive probability under a design on a frame."""

    frame: Frame
    outcomes: tuple[tuple[Frame, float], ...]

    def __post_init__(self):
        total = math.fsum(p for _, p in self.outcomes)
        if abs(total - 1.0) > SUPPORT_TOLERANCE:
            raise InvalidDesignError(f"support probabilities sum to {total!r}, not 1")
        if any(p <= 0 for _, p in self.outcomes):
            raise InvalidDesignError("support contains a non-positive probability")
        if len({s for s, _ in self.outcomes}) != len(self.outcomes):
            raise InvalidDesignError("support contains repeated samples")

    def __len__(self) -> int:
        return len(self.outcomes)

    def __iter__(self):
        return iter(self.outcomes)

    def expected_size(self) -> float:
        return math.fsum(p * len(s) for s, p in self.outcomes)

    def marginal(self) -> PhaseProbabilities:
        """Inclusion probabilities obtained by summing ``P(s)`` over ``s`` containing each unit/pair."""
        index = {k: i for i, k in enumerate(self.frame)}
        m = len(self.frame)
        terms = [[[] for _ in range(m)] for _ in range(m)]
        for sample, p in self.outcomes:
            pos = [index[k] for k in sample]
            for i in pos:
                for j in pos:
                    terms[i][j].append(p)
        joint = np.array([[math.fsum(t) for t in row] for row in terms]).reshape(m, m)
        return PhaseProbabilities(self.frame, np.diag(joint).copy(), joint)


class PhaseDesign:
    """Base class for single-phase designs."""

    enumerable = True

    def validate(self, frame: Frame) -> None:
        if not frame:
            raise InvalidDesignError(f"{self!r} applied to an empty frame")

    def probabilities(self, frame: Frame) -> PhaseProbabilities:
        raise NotImplementedError

    def sample(self, frame: Frame, rng: np.random.Generator) -> Frame:
        raise NotImplementedError

    def support(self, frame: Frame) -> Iterable[tuple[Frame, float]]:
        raise UnsupportedEnumerationError(f"{type(self).__name__} designs cannot be enumerated")


def _srswor_matrix(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    first = np.full(m, n / m)
    off = n * (n - 1) / (m * (m - 1)) if m > 1 else 0.0
    joint = np.full((m, m), off)
    np.fill_diagonal(joint, first)
    return first, joint


@dataclass(frozen=True)
class SRSWOR(PhaseDesign):
    """Simple random sampling of ``n`` units without replacement."""

    n: int

    def validate(self, frame):
        super().validate(frame)
        if not 0 < self.n <= len(frame):
            raise InvalidDesignError(f"SRSWOR(n={self.n}) needs 0 < n <= {len(frame)} (frame size)")

    def probabilities(self, frame):
        return PhaseProbabilities(frame, *_srswor_matrix(len(frame), self.n))

    def sample(self, frame, rng):
        pos = np.sort(rng.choice(len(frame), size=self.n, replace=False))
        return tuple(frame[i] for i in pos)

    def support(self, frame):
        p = 1.0 / math.comb(len(frame), self.n)
        for s in itertools.combinations(frame, self.n):
            yield s, p


@dataclass(frozen=True)
class StratifiedSRSWOR(PhaseDesign):
    """Independent SRSWOR within strata.

    ``strata`` maps unit id to stratum label and ``sizes`` maps label to the
    number of units drawn.  Strata with no unit in the frame are ignored, which
    lets the same design act conditionally on an earlier-phase sample.
    """

    sizes: Mapping[Hashable, int]
    strata: Mapping[UnitId, Hashable] = field(repr=False)

    @classmethod
    def for_population(cls, population: Population, sizes: Mapping[Hashable, int]) -> StratifiedSRSWOR:
        return cls(dict(sizes), population.strata)

    def groups(self, frame: Frame) -> dict[Hashable, list[UnitId]]:
        groups: dict[Hashable, list[UnitId]] = {}
        for k in frame:
            if k not in self.strata:
                raise InvalidDesignError(f"unit {k!r} has no stratum label")
            groups.setdefault(self.strata[k], []).append(k)
        return dict(sorted(groups.items(), key=lambda kv: str(kv[0])))

    def validate(self, frame):
        super().validate(frame)
        for label, members in self.groups(frame).items():
            if label not in self.sizes:
                raise InvalidDesignError(f"no sample size given for stratum {label!r}")
            n = self.sizes[label]
            if not 0 < n <= len(members):
                raise InvalidDesignError(
                    f"stratum {label!r}: n_h={n} must satisfy 0 < n_h <= {len(members)}"
                )

    def probabilities(self, frame):
        index = {k: i for i, k in enumerate(frame)}
        first = np.empty(len(frame))
        for label, members in self.groups(frame).items():
            first[[index[k] for k in members]] = self.sizes[label] / len(members)
        joint = np.outer(first, first)
        for label, members in self.groups(frame).items():
            pos = np.array([index[k] for k in members])
            joint[np.ix_(pos, pos)] = _srswor_matrix(len(members), self.sizes[label])[1]
        return PhaseProbabilities(frame, first, joint)

    def sample(self, frame, rng):
        chosen = []
        for label, members in self.groups(frame).items():
            pos = rng.choice(len(members), size=self.sizes[label], replace=False)
            chosen.extend(members[i] for i in pos)
        return as_frame(chosen)

    def support(self, frame):
        per_stratum = [
            list(SRSWOR(self.sizes[label]).support(tuple(members)))
            for label, members in self.groups(frame).items()
        ]
        for combo in itertools.product(*per_stratum):
            yield as_frame(itertools.chain.from_iterable(s for s, _ in combo)), math.prod(p for _, p in combo)


@dataclass(frozen=True)
class Bernoulli(PhaseDesign):
    """Independent selection of each unit with probability ``p`` (scalar or per-unit map).

    Realized samples may be empty.
    """

    p: Union[float, Mapping[UnitId, float]]

    def probs(self, frame: Frame) -> np.ndarray:
        if isinstance(self.p, Mapping):
            missing = [k for k in frame if k not in self.p]
            if missing:
                raise InvalidDesignError(f"no Bernoulli probability for unit {missing[0]!r}")
            return np.array([float(self.p[k]) for k in frame])
        return np.full(len(frame), float(self.p))

    def validate(self, frame):
        super().validate(frame)
        p = self.probs(frame)
        if not np.all((p > 0) & (p <= 1)):
            raise InvalidDesignError("Bernoulli probabilities must lie in (0, 1]")

    def probabilities(self, frame):
        p = self.probs(frame)
        joint = np.outer(p, p)
        np.fill_diagonal(joint, p)
        return PhaseProbabilities(frame, p, joint)

    def sample(self, frame, rng):
        hits = rng.random(len(frame)) < self.probs(frame)
        return tuple(k for k, h in zip(frame, hits) if h)

    def support(self, frame):
        p = self.probs(frame).tolist()
        for mask in itertools.product((False, True), repeat=len(frame)):
            prob = math.prod(pk if m else 1.0 - pk for pk, m in zip(p, mask))
            if prob > 0:
                yield tuple(k for k, m in zip(frame, mask) if m), prob


@dataclass(frozen=True)
class Census(PhaseDesign):
    """Every unit of the frame is taken with certainty."""

    def probabilities(self, frame):
        m = len(frame)
        return PhaseProbabilities(frame, np.ones(m), np.ones((m, m)))

    def sample(self, frame, rng):
        return frame

    def support(self, frame):
        yield frame, 1.0


@dataclass(frozen=True, eq=False)
class Table(PhaseDesign):
    """User-supplied inclusion probabilities.

    ``first`` holds ``pi_k`` for ``units`` and ``joint`` the symmetric
    ``pi_kp`` matrix.  Zero joint probabilities are rejected because the
    variance estimator divides by them.
    """

    units: Frame
    first: np.ndarray
    joint: np.ndarray

    enumerable = False

    def __post_init__(self):
        units = tuple(self.units)
        first = np.asarray(self.first, dtype=float)
        joint = np.asarray(self.joint, dtype=float)
        m = len(units)
        if len(set(units)) != m:
            raise InvalidDesignError("Table units must be unique")
        if first.shape != (m,) or joint.shape != (m, m):
            raise InvalidDesignError("Table shapes do not match the unit list")
        if not np.array_equal(joint, joint.T):
            raise InvalidDesignError("Table joint matrix is not symmetric")
        if not np.array_equal(np.diag(joint), first):
            raise InvalidDesignError("Table joint diagonal must equal first-order probabilities")
        if not np.all((first > 0) & (first <= 1)):
            raise InvalidDesignError("Table first-order probabilities must lie in (0, 1]")
        if np.any(joint <= 0):
            raise InvalidDesignError("Table joint probabilities must be positive")
        if np.any(joint > np.minimum.outer(first, first)):
            raise InvalidDesignError("Table joint probability exceeds min(pi_k, pi_p)")
        order = sorted(range(m), key=lambda i: units[i])
        object.__setattr__(self, "units", tuple(units[i] for i in order))
        object.__setattr__(self, "first", first[order])
        object.__setattr__(self, "joint", joint[np.ix_(order, order)])

    def validate(self, frame):
        super().validate(frame)
        missing = set(frame) - set(self.units)
        if missing:
            raise InvalidDesignError(f"Table has no entry for unit {sorted(missing)[0]!r}")

    def probabilities(self, frame):
        return PhaseProbabilities(self.units, self.first, self.joint).restrict(frame)

    def sample(self, frame, rng):
        raise UnsupportedEnumerationError("Table designs carry probabilities only and cannot be drawn")


def inclusion_probabilities(design: PhaseDesign, frame: Iterable[UnitId]) -> PhaseProbabilities:
    """First- and second-order inclusion probabilities of ``design`` on ``frame``.

    Raises
    ------
    InvalidDesignError
        If the design cannot be applied to the frame (e.g. ``SRSWOR`` with
        ``n`` larger than the frame).
    """
    frame = as_frame(frame)
    design.validate(frame)
    return design.probabilities(frame)


def draw(design: PhaseDesign, frame: Iterable[UnitId], seed=None) -> Frame:
    """Draw one sample; ``seed`` is a ``numpy.random.Generator`` or anything ``default_rng`` accepts."""
    frame = as_frame(frame)
    design.validate(frame)
    return design.sample(frame, as_rng(seed))


def enumerate_support(design: PhaseDesign, frame: Iterable[UnitId], cap: int = ENUMERATION_CAP) -> SupportDistribution:
    """List every sample with positive probability and its probability."""
    frame = as_frame(frame)
    if not design.enumerable:
        raise UnsupportedEnumerationError(f"{type(design).__name__} designs cannot be enumerated")
    if len(frame) > cap:
        raise EnumerationTooLargeError(
            f"frame of {len(frame)} units exceeds the enumeration cap of {cap}; use Monte Carlo"
        )
    design.validate(frame)
    return SupportDistribution(frame, tuple(design.support(frame)))
