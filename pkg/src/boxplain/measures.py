"""Coverage measures over rules, rule-restricted sampling, and fidelity.

Coverage is an extended nonnegative real: +inf is a legitimate value (a
rule left unbounded in an unbounded feature under a length-based measure),
never an error. Fidelity of a rule A at a point x is the measure fraction
of A sharing x's label, and 0 when A itself has measure zero; on rules of
infinite measure it is an error rather than a number.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .classifiers import Classifier, DecisionTree, LinearClassifier, tree_preimage
from .core import (
    ATOL,
    BallRule,
    BoxRule,
    CategoricalFeature,
    ContinuousFeature,
    FeatureSpace,
    IntegerFeature,
    Interval,
    IntRange,
    Members,
    Point,
    Rule,
    SetRule,
    contains,
    intersect,
)
from .errors import (
    InfiniteMeasureError,
    NotExactlyComputableError,
    StructuralError,
    ZeroMeasureError,
)

SeedLike = Union[int, np.random.SeedSequence]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


# ---------------------------------------------------------------------------
# Measure kinds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountingMeasure:
    """Point count; defined on finite spaces."""

    def validate_for_space(self, space: FeatureSpace):
        if not space.is_finite:
            raise StructuralError("counting measure needs a finite space")


@dataclass(frozen=True)
class LebesgueMeasure:
    """Product measure: interval length on continuous features times member
    count on discrete ones."""

    def validate_for_space(self, space: FeatureSpace):
        pass


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Total weight of dataset points; weights default to 1 each."""

    points: tuple
    weights: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(tuple(p) for p in self.points))
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != len(self.points):
                raise StructuralError("one weight per dataset point required")
            if any(v < 0 or not math.isfinite(v) for v in w):
                raise StructuralError("weights must be nonnegative and finite")
            object.__setattr__(self, "weights", w)

    def weight_array(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self.points))
        return np.asarray(self.weights)

    def validate_for_space(self, space: FeatureSpace):
        for p in self.points:
            space.validate_point(p)


@dataclass(frozen=True)
class WeightedFiniteMeasure:
    """One nonnegative weight per point of a finite space, aligned with the
    space's lexicographic enumeration."""

    space: FeatureSpace
    weights: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if not self.space.is_finite:
            raise StructuralError("weighted measure needs a finite space")
        if len(w) != self.space.size():
            raise StructuralError(
                f"need {self.space.size()} weights, got {len(w)}"
            )
        if any(v < 0 or not math.isfinite(v) for v in w):
            raise StructuralError("weights must be nonnegative and finite")
        object.__setattr__(self, "weights", w)

    def validate_for_space(self, space: FeatureSpace):
        if space != self.space:
            raise StructuralError("measure bound to a different space")


CoverageMeasure = Union[
    CountingMeasure, LebesgueMeasure, EmpiricalMeasure, WeightedFiniteMeasure
]


def load_dataset_csv(path, space: FeatureSpace) -> EmpiricalMeasure:
    """Read an empirical dataset: header row of feature names (any order),
    one column per feature, optional 'weight' column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise StructuralError(f"{path}: empty dataset")
        missing = set(space.names) - set(reader.fieldnames)
        if missing:
            raise StructuralError(f"{path}: missing columns {sorted(missing)}")
        points, weights = [], []
        has_weight = "weight" in reader.fieldnames
        for row in reader:
            vals = []
            for f in space.features:
                raw = row[f.name]
                if isinstance(f, ContinuousFeature):
                    vals.append(float(raw))
                elif isinstance(f, IntegerFeature):
                    vals.append(int(raw))
                else:
                    vals.append(raw)
            points.append(space.validate_point(vals))
            if has_weight:
                weights.append(float(row["weight"]))
    return EmpiricalMeasure(tuple(points), tuple(weights) if has_weight else None)


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------


def _box_members(rule: BoxRule):
    """Iterate the finite-space points inside a box rule."""
    axes = []
    for f, c in zip(rule.space.features, rule.constraints):
        if isinstance(c, IntRange):
            axes.append(range(c.lo, c.hi + 1))
        elif isinstance(c, Members):
            axes.append([v for v in f.values if v in c.values])
        else:
            raise StructuralError("continuous constraint on a finite space")
    return itertools.product(*axes)


def rule_members(rule: Rule) -> list[Point]:
    """All points of a finite space inside a rule."""
    if isinstance(rule, SetRule):
        return rule.points()
    if isinstance(rule, BoxRule):
        return list(_box_members(rule))
    raise StructuralError("ball rules cannot exist on a finite space")


def _ball_volume(rule: BallRule) -> float:
    d = len(rule.center)
    for f, c in zip(rule.space.features, rule.center):
        if c - rule.radius < f.lower - ATOL or c + rule.radius > f.upper + ATOL:
            raise NotExactlyComputableError(
                "ball protrudes outside the domain; its clipped volume has no "
                "closed form"
            )
    return math.pi ** (d / 2) * rule.radius**d / math.gamma(d / 2 + 1)


def coverage(measure: CoverageMeasure, rule: Rule) -> float:
    """The measure of a rule's region; +inf when a length-based measure
    meets an unbounded constraint."""
    if isinstance(measure, CountingMeasure):
        if isinstance(rule, SetRule):
            return float(len(rule.indices))
        n = 1
        for c in rule.constraints:
            if isinstance(c, Interval):
                raise StructuralError("counting measure on a continuous constraint")
            n *= c.count
        return float(n)
    if isinstance(measure, LebesgueMeasure):
        if isinstance(rule, BallRule):
            return _ball_volume(rule)
        if isinstance(rule, SetRule):
            return float(len(rule.indices))  # no continuous factor: counting
        total = 1.0
        for c in rule.constraints:
            total *= c.length if isinstance(c, Interval) else c.count
            if math.isinf(total):
                return math.inf
        return total
    if isinstance(measure, EmpiricalMeasure):
        w = measure.weight_array()
        return float(
            sum(wi for p, wi in zip(measure.points, w) if contains(rule, p))
        )
    if isinstance(measure, WeightedFiniteMeasure):
        members = rule_members(rule)
        all_points = {p: i for i, p in enumerate(measure.space.enumerate_points())}
        return float(sum(measure.weights[all_points[p]] for p in members))
    raise StructuralError(f"unknown measure kind {type(measure).__name__}")


# ---------------------------------------------------------------------------
# Sampling restricted to a rule
# ---------------------------------------------------------------------------


def _sample_box_array(rule: BoxRule, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in an all-continuous box, as an (n, d) float array."""
    lo = np.array([c.lo for c in rule.constraints])
    hi = np.array([c.hi for c in rule.constraints])
    return rng.uniform(lo, hi, size=(n, len(lo)))


def _sample_ball_array(rule: BallRule, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in a ball (unit-direction times scaled radius),
    rejection-resampled against the domain when the ball protrudes."""
    d = len(rule.center)
    center = np.asarray(rule.center)
    lower = np.array([f.lower for f in rule.space.features])
    upper = np.array([f.upper for f in rule.space.features])
    out = np.empty((0, d))
    while len(out) < n:
        m = max(n - len(out), 16)
        v = rng.standard_normal((m, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = rule.radius * rng.random(m) ** (1.0 / d)
        pts = center + v * r[:, None]
        ok = np.all((pts >= lower) & (pts <= upper), axis=1)
        out = np.vstack([out, pts[ok]])
    return out[:n]


def _finite_support(measure: CoverageMeasure, rule: Rule):
    """(points, weights) of the measure's support inside the rule."""
    if isinstance(measure, CountingMeasure):
        members = rule_members(rule)
        return members, np.ones(len(members))
    if isinstance(measure, WeightedFiniteMeasure):
        index = {p: i for i, p in enumerate(measure.space.enumerate_points())}
        members = rule_members(rule)
        return members, np.array([measure.weights[index[p]] for p in members])
    if isinstance(measure, EmpiricalMeasure):
        w = measure.weight_array()
        pairs = [
            (p, wi) for p, wi in zip(measure.points, w) if contains(rule, p)
        ]
        return [p for p, _ in pairs], np.array([wi for _, wi in pairs])
    raise StructuralError("measure has no finite support")


def sample_in_rule(
    measure: CoverageMeasure, rule: Rule, n: int, seed: SeedLike
) -> list[Point]:
    """n points inside the rule, distributed per the measure restricted to
    it; reproducible per seed."""
    return [tuple(p) for p in sample_array(measure, rule, n, seed)]


def sample_array(
    measure: CoverageMeasure, rule: Rule, n: int, seed: SeedLike
):
    """Like sample_in_rule but keeps all-continuous samples as one float
    matrix; the estimation hot path."""
    rng = _rng(seed)
    if isinstance(measure, LebesgueMeasure):
        cov = coverage(measure, rule)
        if math.isinf(cov):
            raise InfiniteMeasureError("cannot sample an unbounded rule")
        if cov <= 0:
            raise ZeroMeasureError("rule has measure zero")
        if isinstance(rule, BallRule):
            return _sample_ball_array(rule, n, rng)
        if rule.space.all_continuous:
            return _sample_box_array(rule, n, rng)
        cols = []
        for f, c in zip(rule.space.features, rule.constraints):
            if isinstance(c, Interval):
                cols.append(rng.uniform(c.lo, c.hi, n).tolist())
            elif isinstance(c, IntRange):
                cols.append([int(v) for v in rng.integers(c.lo, c.hi + 1, n)])
            else:
                vals = [v for v in f.values if v in c.values]
                cols.append([str(v) for v in rng.choice(vals, n)])
        return [tuple(col[i] for col in cols) for i in range(n)]
    points, weights = _finite_support(measure, rule)
    total = float(weights.sum())
    if not points or total <= 0:
        raise ZeroMeasureError("no measure support inside the rule")
    idx = rng.choice(len(points), size=n, p=weights / total)
    return [points[i] for i in idx]


# ---------------------------------------------------------------------------
# Fidelity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FidelityEstimate:
    """A sampled fidelity with a one-sided Hoeffding lower bound."""

    estimate: float
    lower_bound: float
    sample_count: int
    confidence: float

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise StructuralError("confidence must be in (0, 1)")
        if self.sample_count <= 0:
            raise StructuralError("sample_count must be positive")
        if self.lower_bound > self.estimate + ATOL:
            raise StructuralError("lower bound above the estimate")


def hoeffding_radius(n: int, confidence: float) -> float:
    """One-sided deviation radius: P(mean underestimates by more) <= 1-confidence."""
    return math.sqrt(math.log(1.0 / (1.0 - confidence)) / (2.0 * n))


def _halfspace_box_fraction(
    rule: BoxRule, weights: Sequence[float], bias: float
) -> float:
    """Volume fraction of an all-continuous box where w.x + b > 0.

    Reduces to the unit cube and applies corner inclusion-exclusion on the
    complement constraint sum(a_i t_i) <= c with a_i > 0.
    """
    alphas, c = [], -bias  # complementary region: w.x <= -b
    for w, con in zip(weights, rule.constraints):
        a = w * con.length
        c -= w * con.lo
        if a > 0:
            alphas.append(a)
        elif a < 0:
            c -= a  # substitute t -> 1 - t
            alphas.append(-a)
    if not alphas:
        below = 1.0 if c >= 0 else 0.0
        return 1.0 - below
    k = len(alphas)
    norm = math.factorial(k) * math.prod(alphas)
    below = 0.0
    for mask in range(1 << k):
        s = c - sum(a for i, a in enumerate(alphas) if mask >> i & 1)
        if s > 0:
            below += (-1) ** bin(mask).count("1") * s**k
    below = min(max(below / norm, 0.0), 1.0)
    return 1.0 - below


def fidelity_exact(
    scheme, f: Classifier, rule: Rule, x: Point
) -> float:
    """The exact label-agreement fraction of a rule at a point.

    Available when the measure has finite support (counting, weighted,
    empirical), or under a length-based measure when the classifier is
    linear or a decision tree and the rule is a box. Zero-measure rules
    have fidelity 0 by convention; infinite-measure rules are an error.
    """
    measure = scheme.measure
    denom = coverage(measure, rule)
    if math.isinf(denom):
        raise InfiniteMeasureError("fidelity is undefined on infinite coverage")
    if denom <= 0:
        return 0.0
    target = f.evaluate(x)
    if isinstance(measure, (CountingMeasure, WeightedFiniteMeasure, EmpiricalMeasure)):
        points, weights = _finite_support(measure, rule)
        if not points:
            return 0.0
        labels = f.evaluate_batch(points)
        num = float(sum(w for lab, w in zip(labels, weights) if lab == target))
        return num / denom
    if not isinstance(rule, BoxRule):
        raise NotExactlyComputableError(
            "exact fidelity under a length measure needs a box rule"
        )
    if isinstance(f, LinearClassifier):
        frac = _halfspace_box_fraction(rule, f.weights, f.bias)
        return frac if target == f.labels[1] else 1.0 - frac
    if isinstance(f, DecisionTree):
        num = 0.0
        for box in tree_preimage(f, target):
            part = intersect(rule, box)
            if part is not None:
                num += coverage(measure, part)
        return min(num / denom, 1.0)
    raise NotExactlyComputableError(
        f"no exact method for {type(f).__name__} under a length measure"
    )


def fidelity_estimate(
    scheme,
    f: Classifier,
    rule: Rule,
    x: Point,
    n: int,
    confidence: float = 0.95,
    seed: SeedLike = 0,
) -> FidelityEstimate:
    """Monte Carlo fidelity: the agreement frequency over n samples drawn
    from the measure restricted to the rule, with its Hoeffding lower
    confidence bound. Deterministic given the seed."""
    if n <= 0:
        raise StructuralError("sample budget must be positive")
    target = f.evaluate(x)
    samples = sample_array(scheme.measure, rule, n, seed)
    if isinstance(f, LinearClassifier) and isinstance(samples, np.ndarray):
        agree = f.batch_indices(samples) == (1 if target == f.labels[1] else 0)
        est = float(agree.mean())
    else:
        labels = f.evaluate_batch(samples)
        est = sum(1 for lab in labels if lab == target) / n
    radius = hoeffding_radius(n, confidence)
    lower = min(max(est - radius, 0.0), 1.0)
    return FidelityEstimate(est, lower, n, confidence)
