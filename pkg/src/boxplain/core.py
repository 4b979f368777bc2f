"""Feature spaces, points, rules, rule families, and explanation schemes.

Conventions
-----------
* A point is a plain tuple of values aligned with the space's features
  (float for continuous, int for integer, str for categorical).
* Continuous rule constraints are open intervals. Rules are clipped to the
  feature's closed domain and treated as relatively open: an endpoint that
  reaches the domain bound is closed there, so the full-domain box is the
  whole space. This is the subspace topology on a bounded domain.
* Integer constraints are inclusive ranges, categorical constraints are
  non-empty value subsets; both are exact-membership sets.
* Float comparisons use an absolute tolerance of ``ATOL`` (1e-9).
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Optional, Sequence, Union

from .errors import (
    Condition2ViolationError,
    NotEnumerableError,
    StructuralError,
    UnsupportedShapeError,
)

ATOL = 1e-9

#: Number of uniform cuts assumed per bounded continuous feature when a box
#: family carries no explicit cut grid for it.
DEFAULT_CUTS = 20

Value = Union[float, int, str]
Point = tuple


def _lt(a: float, b: float) -> bool:
    """a strictly below b, beyond tolerance."""
    return a < b - ATOL


def _eq(a: float, b: float) -> bool:
    return abs(a - b) <= ATOL


# ---------------------------------------------------------------------------
# Feature specs and spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuousFeature:
    """A real-valued feature on the closed domain [lower, upper].

    Either bound may be infinite; the feature is *bounded* only when both
    are finite.
    """

    name: str
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise StructuralError(f"feature {self.name}: NaN bound")
        if not self.lower < self.upper:
            raise StructuralError(
                f"feature {self.name}: lower {self.lower} must be < upper {self.upper}"
            )

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def valid_value(self, v) -> bool:
        return (
            isinstance(v, (int, float))
            and not isinstance(v, bool)
            and not math.isnan(v)
            and self.lower - ATOL <= v <= self.upper + ATOL
        )


@dataclass(frozen=True)
class IntegerFeature:
    """An integer feature on the inclusive range [lo, hi]."""

    name: str
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise StructuralError(f"feature {self.name}: lo {self.lo} > hi {self.hi}")

    @property
    def bounded(self) -> bool:
        return True

    @property
    def count(self) -> int:
        return self.hi - self.lo + 1

    def valid_value(self, v) -> bool:
        return isinstance(v, int) and not isinstance(v, bool) and self.lo <= v <= self.hi


@dataclass(frozen=True)
class CategoricalFeature:
    """A finite symbolic feature; ``values`` fixes the declaration order."""

    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise StructuralError(f"feature {self.name}: empty value set")
        if len(set(self.values)) != len(self.values):
            raise StructuralError(f"feature {self.name}: duplicate values")

    @property
    def bounded(self) -> bool:
        return True

    def valid_value(self, v) -> bool:
        return v in self.values


FeatureSpec = Union[ContinuousFeature, IntegerFeature, CategoricalFeature]


@dataclass(frozen=True)
class FeatureSpace:
    """An ordered list of features; the product of their domains is X."""

    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise StructuralError("a feature space needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise StructuralError(f"duplicate feature names: {names}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise StructuralError(f"no feature named {name!r}")

    @property
    def all_continuous(self) -> bool:
        return all(isinstance(f, ContinuousFeature) for f in self.features)

    @property
    def is_finite(self) -> bool:
        """True when every feature is integer or categorical."""
        return not any(isinstance(f, ContinuousFeature) for f in self.features)

    @property
    def has_unbounded_feature(self) -> bool:
        return any(not f.bounded for f in self.features)

    def size(self) -> int:
        if not self.is_finite:
            raise StructuralError("size() is defined only for finite spaces")
        n = 1
        for f in self.features:
            n *= f.count if isinstance(f, IntegerFeature) else len(f.values)
        return n

    def enumerate_points(self) -> Iterator[Point]:
        """All points of a finite space, lexicographic in feature order."""
        if not self.is_finite:
            raise StructuralError("cannot enumerate a space with continuous features")
        axes = []
        for f in self.features:
            if isinstance(f, IntegerFeature):
                axes.append(range(f.lo, f.hi + 1))
            else:
                axes.append(f.values)
        return itertools.product(*axes)

    def validate_point(self, x: Sequence[Value]) -> Point:
        x = tuple(x)
        if len(x) != len(self.features):
            raise StructuralError(
                f"point has {len(x)} values, space has {len(self.features)} features"
            )
        for f, v in zip(self.features, x):
            if not f.valid_value(v):
                raise StructuralError(f"value {v!r} outside domain of feature {f.name!r}")
        return x


# ---------------------------------------------------------------------------
# Per-feature constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    """A continuous constraint: (lo, hi) with per-endpoint openness.

    Closed endpoints only arise where a rule is clipped to the domain or
    from decision-tree preimage boxes, whose split boundary belongs to the
    left branch.
    """

    lo: float
    hi: float
    lo_open: bool = True
    hi_open: bool = True

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise StructuralError("NaN interval endpoint")
        if self.lo > self.hi or (
            _eq(self.lo, self.hi) and (self.lo_open or self.hi_open)
        ):
            raise StructuralError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, v: float) -> bool:
        if self.lo_open:
            if not v > self.lo + ATOL:
                return False
        elif v < self.lo - ATOL:
            return False
        if self.hi_open:
            if not v < self.hi - ATOL:
                return False
        elif v > self.hi + ATOL:
            return False
        return True

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def issubset(self, other: "Interval") -> bool:
        if self.lo < other.lo - ATOL:
            return False
        if _eq(self.lo, other.lo) and other.lo_open and not self.lo_open:
            return False
        if self.hi > other.hi + ATOL:
            return False
        if _eq(self.hi, other.hi) and other.hi_open and not self.hi_open:
            return False
        return True

    def intersection(self, other: "Interval") -> Optional["Interval"]:
        if _eq(self.lo, other.lo):
            lo, lo_open = self.lo, self.lo_open or other.lo_open
        elif self.lo > other.lo:
            lo, lo_open = self.lo, self.lo_open
        else:
            lo, lo_open = other.lo, other.lo_open
        if _eq(self.hi, other.hi):
            hi, hi_open = self.hi, self.hi_open or other.hi_open
        elif self.hi < other.hi:
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        if lo > hi or (_eq(lo, hi) and (lo_open or hi_open)):
            return None
        return Interval(lo, hi, lo_open, hi_open)


@dataclass(frozen=True)
class IntRange:
    """An integer constraint: the inclusive range [lo, hi]."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise StructuralError(f"empty integer range [{self.lo}, {self.hi}]")

    def contains(self, v: int) -> bool:
        return self.lo <= v <= self.hi

    @property
    def count(self) -> int:
        return self.hi - self.lo + 1

    def issubset(self, other: "IntRange") -> bool:
        return self.lo >= other.lo and self.hi <= other.hi

    def intersection(self, other: "IntRange") -> Optional["IntRange"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return IntRange(lo, hi) if lo <= hi else None


@dataclass(frozen=True)
class Members:
    """A categorical constraint: a non-empty subset of the feature's values."""

    values: frozenset

    def __post_init__(self):
        object.__setattr__(self, "values", frozenset(self.values))
        if not self.values:
            raise StructuralError("empty categorical constraint")

    def contains(self, v: str) -> bool:
        return v in self.values

    @property
    def count(self) -> int:
        return len(self.values)

    def issubset(self, other: "Members") -> bool:
        return self.values <= other.values

    def intersection(self, other: "Members") -> Optional["Members"]:
        common = self.values & other.values
        return Members(common) if common else None


Constraint = Union[Interval, IntRange, Members]


def _constraint_sort_key(space: FeatureSpace, c: Constraint):
    if isinstance(c, Interval):
        return (c.lo, c.hi)
    if isinstance(c, IntRange):
        return (c.lo, c.hi)
    return tuple(sorted(c.values))


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxRule:
    """An axis-aligned box: one constraint per feature."""

    space: FeatureSpace
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) != len(self.space.features):
            raise StructuralError("constraint arity does not match space")
        for f, c in zip(self.space.features, self.constraints):
            ok = (
                isinstance(f, ContinuousFeature)
                and isinstance(c, Interval)
                or isinstance(f, IntegerFeature)
                and isinstance(c, IntRange)
                or isinstance(f, CategoricalFeature)
                and isinstance(c, Members)
            )
            if not ok:
                raise StructuralError(
                    f"constraint {c!r} has the wrong kind for feature {f.name!r}"
                )

    def __str__(self):
        parts = []
        for f, c in zip(self.space.features, self.constraints):
            if isinstance(c, Interval):
                lb = "[" if not c.lo_open else "("
                rb = "]" if not c.hi_open else ")"
                parts.append(f"{f.name} in {lb}{c.lo:g}, {c.hi:g}{rb}")
            elif isinstance(c, IntRange):
                parts.append(f"{f.name} in [{c.lo}, {c.hi}]")
            else:
                parts.append(f"{f.name} in {{{', '.join(sorted(c.values))}}}")
        return " and ".join(parts)


@dataclass(frozen=True)
class BallRule:
    """An open Euclidean ball; defined only on all-continuous spaces."""

    space: FeatureSpace
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.space.all_continuous:
            raise StructuralError("ball rules require an all-continuous space")
        object.__setattr__(self, "center", self.space.validate_point(self.center))
        if not self.radius > 0:
            raise StructuralError("ball radius must be positive")

    def __str__(self):
        c = ", ".join(f"{v:g}" for v in self.center)
        return f"ball(center=({c}), radius={self.radius:g})"


@dataclass(frozen=True)
class SetRule:
    """An explicit subset of a finite space, stored as point indices into
    the space's lexicographic enumeration."""

    space: FeatureSpace
    indices: frozenset

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(self.indices))
        if not self.space.is_finite:
            raise StructuralError("set rules require a finite space")
        if not self.indices:
            raise StructuralError("a set rule must be non-empty")
        n = self.space.size()
        if any(not (0 <= i < n) for i in self.indices):
            raise StructuralError("set rule index out of range")

    def points(self) -> list[Point]:
        all_points = list(self.space.enumerate_points())
        return [all_points[i] for i in sorted(self.indices)]

    def __str__(self):
        return "{" + ", ".join(str(i) for i in sorted(self.indices)) + "}"


Rule = Union[BoxRule, BallRule, SetRule]


def open_box(space: FeatureSpace, *specs) -> BoxRule:
    """Build a box rule from per-feature shorthand, clipping to the domain.

    Shorthand per feature kind: continuous -> (lo, hi) open interval,
    integer -> (lo, hi) inclusive, categorical -> iterable of values.
    A continuous endpoint at or beyond the domain bound becomes closed
    (the rule is relatively open in the closed domain).
    """
    if len(specs) != len(space.features):
        raise StructuralError("one constraint spec per feature required")
    constraints = []
    for f, s in zip(space.features, specs):
        if isinstance(f, ContinuousFeature):
            lo, hi = s
            lo, lo_open = (f.lower, False) if lo <= f.lower + ATOL else (float(lo), True)
            hi, hi_open = (f.upper, False) if hi >= f.upper - ATOL else (float(hi), True)
            constraints.append(Interval(lo, hi, lo_open, hi_open))
        elif isinstance(f, IntegerFeature):
            lo, hi = s
            constraints.append(IntRange(max(int(lo), f.lo), min(int(hi), f.hi)))
        else:
            vals = frozenset(s)
            if not vals <= set(f.values):
                raise StructuralError(f"values {vals} outside feature {f.name!r}")
            constraints.append(Members(vals))
    return BoxRule(space, tuple(constraints))


def full_box(space: FeatureSpace) -> BoxRule:
    """The whole domain as a box rule."""
    specs = []
    for f in space.features:
        if isinstance(f, ContinuousFeature):
            specs.append((f.lower, f.upper))
        elif isinstance(f, IntegerFeature):
            specs.append((f.lo, f.hi))
        else:
            specs.append(f.values)
    return open_box(space, *specs)


def contains(rule: Rule, x: Sequence[Value]) -> bool:
    """Membership of a point in a rule's region."""
    x = rule.space.validate_point(x)
    if isinstance(rule, BoxRule):
        return all(c.contains(v) for c, v in zip(rule.constraints, x))
    if isinstance(rule, BallRule):
        d = math.dist(x, rule.center)
        return d < rule.radius - ATOL
    if isinstance(rule, SetRule):
        return _point_index(rule.space, x) in rule.indices
    raise UnsupportedShapeError(f"unknown rule shape {type(rule).__name__}")


def _point_index(space: FeatureSpace, x: Point) -> int:
    """Index of x in the lexicographic enumeration of a finite space."""
    idx = 0
    for f, v in zip(space.features, x):
        if isinstance(f, IntegerFeature):
            k, n = v - f.lo, f.count
        else:
            k, n = f.values.index(v), len(f.values)
        idx = idx * n + k
    return idx


def intersect(a: Rule, b: Rule) -> Optional[Rule]:
    """Exact intersection of two box (or set) rules; None when empty.

    Ball intersections are not balls; use shrink_witness for a refining
    rule inside the overlap of two balls.
    """
    if a.space != b.space:
        raise StructuralError("rules live on different spaces")
    if isinstance(a, BallRule) or isinstance(b, BallRule):
        raise UnsupportedShapeError("ball intersections are not balls")
    if isinstance(a, SetRule) and isinstance(b, SetRule):
        common = a.indices & b.indices
        return SetRule(a.space, common) if common else None
    if isinstance(a, BoxRule) and isinstance(b, BoxRule):
        out = []
        for ca, cb in zip(a.constraints, b.constraints):
            c = ca.intersection(cb)
            if c is None:
                return None
            out.append(c)
        return BoxRule(a.space, tuple(out))
    raise UnsupportedShapeError("cannot intersect a box rule with a set rule")


def box_issubset(inner: BoxRule, outer: BoxRule) -> bool:
    """Per-dimension containment check for box rules."""
    return all(
        ci.issubset(co) for ci, co in zip(inner.constraints, outer.constraints)
    )


# ---------------------------------------------------------------------------
# Rule families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxFamily:
    """Axis-aligned open boxes.

    ``cuts`` maps continuous feature names to sorted interior cut values;
    a bounded continuous feature with no entry gets DEFAULT_CUTS uniform
    cuts, an unbounded one is not enumerable without an entry. With
    ``bounded_only`` every generated rule carries finite bounds on every
    feature, so its coverage under a length-based measure is finite.

    ``min_side`` is a minimum per-dimension side length (integer features:
    value count; continuous: width). The default 0 imposes nothing.
    Positive values generally break the refinement condition; the family
    then serves as a negative control for verify_scalable.
    """

    bounded_only: bool = True
    cuts: tuple = ()
    min_side: float = 0.0

    def __post_init__(self):
        if isinstance(self.cuts, Mapping):
            norm = tuple(sorted((k, tuple(v)) for k, v in self.cuts.items()))
        else:
            norm = tuple(sorted((k, tuple(v)) for k, v in self.cuts))
        for name, vals in norm:
            if any(not va < vb for va, vb in zip(vals, vals[1:])):
                raise StructuralError(f"cuts for {name!r} must be strictly increasing")
        object.__setattr__(self, "cuts", norm)

    def cuts_for(self, feature: ContinuousFeature) -> tuple[float, ...]:
        """Effective cut grid for one continuous feature."""
        for name, vals in self.cuts:
            if name == feature.name:
                if vals and (vals[0] <= feature.lower or vals[-1] >= feature.upper):
                    raise StructuralError(
                        f"cuts for {feature.name!r} must lie strictly inside its bounds"
                    )
                return vals
        if feature.bounded:
            w = (feature.upper - feature.lower) / (DEFAULT_CUTS + 1)
            return tuple(feature.lower + i * w for i in range(1, DEFAULT_CUTS + 1))
        raise NotEnumerableError(
            f"unbounded feature {feature.name!r} has no cut grid"
        )

    def endpoints_for(self, feature: ContinuousFeature) -> list[float]:
        """Candidate interval endpoints: cuts plus usable domain bounds."""
        pts = list(self.cuts_for(feature))
        if self.bounded_only:
            if math.isfinite(feature.lower):
                pts.insert(0, feature.lower)
            if math.isfinite(feature.upper):
                pts.append(feature.upper)
        else:
            pts.insert(0, feature.lower)
            pts.append(feature.upper)
        return pts

    def _axis_constraints(self, f: FeatureSpec) -> list[Constraint]:
        if isinstance(f, ContinuousFeature):
            pts = self.endpoints_for(f)
            out = []
            for i, lo in enumerate(pts):
                for hi in pts[i + 1 :]:
                    if hi - lo < self.min_side - ATOL:
                        continue
                    lo_c = lo if math.isfinite(lo) else f.lower
                    hi_c = hi if math.isfinite(hi) else f.upper
                    out.append(
                        Interval(
                            max(lo_c, f.lower),
                            min(hi_c, f.upper),
                            lo_open=lo > f.lower + ATOL,
                            hi_open=hi < f.upper - ATOL,
                        )
                    )
            return out
        if isinstance(f, IntegerFeature):
            return [
                IntRange(lo, hi)
                for lo in range(f.lo, f.hi + 1)
                for hi in range(lo, f.hi + 1)
                if hi - lo + 1 >= self.min_side
            ]
        # categorical: every non-empty subset, in binary-counting order of
        # the declared values
        out = []
        vals = f.values
        for mask in range(1, 1 << len(vals)):
            sub = frozenset(v for i, v in enumerate(vals) if mask >> i & 1)
            if len(sub) >= self.min_side:
                out.append(Members(sub))
        return out

    def enumerate_rules(self, space: FeatureSpace) -> Iterator[BoxRule]:
        axes = [self._axis_constraints(f) for f in space.features]
        for combo in itertools.product(*axes):
            yield BoxRule(space, combo)

    def accepts(self, rule: Rule, space: FeatureSpace) -> bool:
        """Whether the family itself generates this rule."""
        if not isinstance(rule, BoxRule) or rule.space != space:
            return False
        for f, c in zip(space.features, rule.constraints):
            if isinstance(c, Interval):
                pts = self.endpoints_for(f)
                if not any(_eq(c.lo, p) for p in pts) and math.isfinite(c.lo):
                    return False
                if not any(_eq(c.hi, p) for p in pts) and math.isfinite(c.hi):
                    return False
                if self.bounded_only and (
                    not math.isfinite(c.lo) or not math.isfinite(c.hi)
                ):
                    return False
                if c.length < self.min_side - ATOL:
                    return False
            elif isinstance(c, IntRange):
                if c.count < self.min_side:
                    return False
            elif isinstance(c, Members):
                if c.count < self.min_side:
                    return False
        return True

    def seed_rule(self, space: FeatureSpace, x: Point) -> Optional[BoxRule]:
        """Smallest generated box containing x; None when no box does."""
        x = space.validate_point(x)
        constraints = []
        for f, v in zip(space.features, x):
            if isinstance(f, ContinuousFeature):
                pts = self.endpoints_for(f)
                below = [p for p in pts if _lt(p, v)]
                above = [p for p in pts if _lt(v, p)]
                lo = below[-1] if below else (-math.inf if not self.bounded_only else None)
                hi = above[0] if above else (math.inf if not self.bounded_only else None)
                if lo is None or hi is None:
                    return None
                if hi - lo < self.min_side - ATOL:
                    # widen symmetrically along the endpoint grid
                    cand = None
                    for p_lo in reversed([p for p in pts if p <= lo + ATOL]):
                        for p_hi in [p for p in pts if p >= hi - ATOL]:
                            if p_hi - p_lo >= self.min_side - ATOL:
                                cand = (p_lo, p_hi)
                                break
                        if cand:
                            break
                    if cand is None:
                        return None
                    lo, hi = cand
                constraints.append(
                    Interval(
                        max(lo, f.lower),
                        min(hi, f.upper),
                        lo_open=lo > f.lower + ATOL,
                        hi_open=hi < f.upper - ATOL,
                    )
                )
            elif isinstance(f, IntegerFeature):
                lo = hi = v
                while hi - lo + 1 < self.min_side:
                    if hi < f.hi:
                        hi += 1
                    elif lo > f.lo:
                        lo -= 1
                    else:
                        return None
                constraints.append(IntRange(lo, hi))
            else:
                sub = {v}
                for extra in f.values:
                    if len(sub) >= self.min_side:
                        break
                    sub.add(extra)
                if len(sub) < self.min_side:
                    return None
                constraints.append(Members(frozenset(sub)))
        return BoxRule(space, tuple(constraints))


@dataclass(frozen=True)
class BallFamily:
    """Open Euclidean balls on an all-continuous space.

    Always bounded; not enumerable (there is no grid of balls), so the
    family supports witnesses and membership but not search or topology
    generation.
    """

    @property
    def bounded_only(self) -> bool:
        return True

    def enumerate_rules(self, space: FeatureSpace) -> Iterator[Rule]:
        raise NotEnumerableError("ball families cannot be enumerated")

    def accepts(self, rule: Rule, space: FeatureSpace) -> bool:
        return isinstance(rule, BallRule) and rule.space == space

    def seed_rule(self, space: FeatureSpace, x: Point):
        raise UnsupportedShapeError(
            "ball families have no smallest ball; search uses boxes or explicit bases"
        )


@dataclass(frozen=True)
class ExplicitBasis:
    """An explicit list of point sets over a finite space, by point index.

    The sets must jointly cover the space; that is checked wherever the
    family meets a concrete space (verify_scalable, topology generation,
    scheme validation) since the family alone does not know the space size.
    """

    sets: tuple[frozenset, ...]

    def __post_init__(self):
        norm = tuple(frozenset(s) for s in self.sets)
        if not norm:
            raise StructuralError("an explicit basis needs at least one set")
        if any(not s for s in norm):
            raise StructuralError("explicit basis sets must be non-empty")
        object.__setattr__(self, "sets", norm)

    @property
    def bounded_only(self) -> bool:
        return True

    @classmethod
    def from_point_sets(cls, space: FeatureSpace, point_sets) -> "ExplicitBasis":
        """Build from sets given as point value-tuples instead of indices."""
        idx_sets = []
        for s in point_sets:
            idx_sets.append(
                frozenset(_point_index(space, space.validate_point(p)) for p in s)
            )
        return cls(tuple(idx_sets))

    def covers(self, space: FeatureSpace) -> bool:
        union = set().union(*self.sets)
        return union == set(range(space.size()))

    def enumerate_rules(self, space: FeatureSpace) -> Iterator[SetRule]:
        for s in self.sets:
            yield SetRule(space, s)

    def accepts(self, rule: Rule, space: FeatureSpace) -> bool:
        return isinstance(rule, SetRule) and rule.indices in set(self.sets)

    def seed_rule(self, space: FeatureSpace, x: Point) -> Optional[SetRule]:
        """Smallest basis set containing x (ties: first in basis order)."""
        i = _point_index(space, space.validate_point(x))
        best = None
        for s in self.sets:
            if i in s and (best is None or len(s) < len(best)):
                best = s
        return SetRule(space, best) if best is not None else None


RuleFamily = Union[BoxFamily, BallFamily, ExplicitBasis]


def enumerate_basic(family: RuleFamily, space: FeatureSpace) -> Iterator[Rule]:
    """Every rule the family generates on this space, in lexicographic
    order over constraint tuples (basis order for explicit bases)."""
    return family.enumerate_rules(space)


def shrink_witness(family: RuleFamily, a1: Rule, a2: Rule, x: Point) -> Rule:
    """A family rule containing x inside a1's and a2's overlap.

    Boxes: the intersection itself when the family generates it, otherwise
    the first enumerated rule that fits. Balls: the ball at x touching the
    nearer of the two spheres. Explicit bases: the smallest basic set
    containing x inside the intersection. Raises Condition2ViolationError
    with the offending triple when no witness exists.
    """
    if not (contains(a1, x) and contains(a2, x)):
        raise StructuralError("x must lie in both rules")
    if isinstance(family, BallFamily):
        if not (isinstance(a1, BallRule) and isinstance(a2, BallRule)):
            raise UnsupportedShapeError("ball family witnesses need ball inputs")
        r = min(
            a1.radius - math.dist(x, a1.center),
            a2.radius - math.dist(x, a2.center),
        )
        if r <= ATOL:
            raise Condition2ViolationError(a1, a2, x)
        return BallRule(a1.space, x, r)
    if isinstance(family, ExplicitBasis):
        space = a1.space
        i = _point_index(space, space.validate_point(x))
        target = a1.indices & a2.indices
        best = None
        for s in family.sets:
            if i in s and s <= target and (best is None or len(s) < len(best)):
                best = s
        if best is None:
            raise Condition2ViolationError(a1, a2, x)
        return SetRule(space, best)
    # box family
    inter = intersect(a1, a2)
    if inter is None:
        raise Condition2ViolationError(a1, a2, x)
    if family.accepts(inter, a1.space):
        return inter
    for r in family.enumerate_rules(a1.space):
        if contains(r, x) and box_issubset(r, inter):
            return r
    raise Condition2ViolationError(a1, a2, x)


# ---------------------------------------------------------------------------
# Scalability verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    passed: bool
    witness: Optional[tuple] = None


@dataclass(frozen=True)
class ScalabilityReport:
    """Outcome of the two family conditions: joint cover, and refinement
    at every shared point. Witnesses are the first failures found."""

    condition1: ConditionReport
    condition2: ConditionReport

    @property
    def passed(self) -> bool:
        return self.condition1.passed and self.condition2.passed


def _probe_points(family: RuleFamily, space: FeatureSpace) -> list[Point]:
    """A finite set of points standing in for the space in family checks.

    Finite spaces contribute every point. Continuous features contribute
    their endpoint grid, the midpoints between consecutive endpoints, and
    a probe beyond each open end so uncovered tails are witnessed.
    """
    if space.is_finite:
        return list(space.enumerate_points())
    axes = []
    for f in space.features:
        if isinstance(f, ContinuousFeature):
            pts = sorted(
                p for p in family.endpoints_for(f) if math.isfinite(p)
            ) if isinstance(family, BoxFamily) else []
            if not pts:
                raise NotEnumerableError(
                    f"no finite probe grid for feature {f.name!r}"
                )
            vals = set(pts)
            for a, b in zip(pts, pts[1:]):
                vals.add((a + b) / 2)
            if not math.isfinite(f.lower):
                vals.add(pts[0] - 1.0)
            if not math.isfinite(f.upper):
                vals.add(pts[-1] + 1.0)
            axes.append(sorted(vals))
        elif isinstance(f, IntegerFeature):
            axes.append(list(range(f.lo, f.hi + 1)))
        else:
            axes.append(list(f.values))
    return list(itertools.product(*axes))


def verify_scalable(family: RuleFamily, space: FeatureSpace) -> ScalabilityReport:
    """Check that the family covers the space and refines at every shared
    point, returning the first counterexample on failure.

    On finite spaces the check is exhaustive; with continuous features it
    runs on the endpoint/midpoint probe grid.
    """
    rules = list(enumerate_basic(family, space))
    probes = _probe_points(family, space)

    cond1 = ConditionReport(True)
    for x in probes:
        if not any(contains(r, x) for r in rules):
            cond1 = ConditionReport(False, witness=(x,))
            break

    cond2 = ConditionReport(True)
    done = False
    for i, a1 in enumerate(rules):
        if done:
            break
        for a2 in rules[i:]:
            if isinstance(a1, SetRule):
                overlap = a1.indices & a2.indices
                if not overlap:
                    continue
            elif isinstance(a1, BoxRule):
                if intersect(a1, a2) is None:
                    continue
                if family.accepts(intersect(a1, a2), space):
                    continue  # the intersection itself witnesses every x
            shared = [x for x in probes if contains(a1, x) and contains(a2, x)]
            for x in shared:
                try:
                    shrink_witness(family, a1, a2, x)
                except Condition2ViolationError:
                    cond2 = ConditionReport(False, witness=(a1, a2, x))
                    done = True
                    break
            if done:
                break
    return ScalabilityReport(cond1, cond2)


# ---------------------------------------------------------------------------
# Explanation schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplanationScheme:
    """The triple fixing what counts as an explanation: a feature space,
    a rule family over it, and a coverage measure on it."""

    space: FeatureSpace
    family: RuleFamily
    measure: object  # a measure from boxplain.measures

    def __post_init__(self):
        v = getattr(self.measure, "validate_for_space", None)
        if v is not None:
            v(self.space)
        if isinstance(self.family, ExplicitBasis):
            if not self.space.is_finite:
                raise StructuralError("explicit bases require a finite space")
            if not self.family.covers(self.space):
                raise StructuralError(
                    "explicit basis does not cover the space (condition 1)"
                )
        if isinstance(self.family, BallFamily) and not self.space.all_continuous:
            raise StructuralError("ball families require an all-continuous space")
