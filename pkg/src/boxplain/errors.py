"""Semantic exception hierarchy.

Every failure mode callers are expected to branch on gets its own class;
plain ValueError/TypeError never escape the public API.
"""

from __future__ import annotations


class BoxplainError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(BoxplainError, ValueError):
    """Inputs violate a structural contract: arity mismatch, value outside
    its feature's domain, vote outside the label set, and the like."""


class UnsupportedShapeError(BoxplainError):
    """The operation is not defined for this rule shape or family kind
    (e.g. intersecting balls, facet-expanding a set rule)."""


class NotEnumerableError(BoxplainError):
    """The rule family cannot be enumerated on this space (unbounded
    continuous feature with no cut grid, or a ball family)."""


class Condition2ViolationError(BoxplainError):
    """No rule in the family refines the given intersection at the given
    point. Carries the counterexample triple."""

    def __init__(self, a1, a2, x):
        self.a1 = a1
        self.a2 = a2
        self.x = x
        super().__init__(
            f"no rule in the family contains {x!r} inside the intersection "
            f"of {a1!r} and {a2!r}"
        )


class Principle2ViolationError(BoxplainError):
    """An unbounded rule family was combined with a measure that can assign
    infinite coverage: unbounded rules then all share coverage +inf and
    cannot be compared ("incomparable infinite coverages")."""


class InfiniteMeasureError(BoxplainError):
    """The rule has infinite coverage; the requested quantity is undefined."""


class ZeroMeasureError(BoxplainError):
    """The rule has zero coverage; cannot sample or estimate inside it."""


class NotExactlyComputableError(BoxplainError):
    """No exact method is available for this measure/classifier combination;
    use the Monte Carlo estimate instead."""


class ExternalClassifierError(BoxplainError):
    """The external classifier process failed, timed out, or returned a
    malformed response. Carries the raw payload when one exists."""

    def __init__(self, message, payload=None):
        self.payload = payload
        super().__init__(message)


class ParseError(BoxplainError, ValueError):
    """A configuration document (scheme, model, dataset) is malformed.
    Carries the path of the offending field."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
