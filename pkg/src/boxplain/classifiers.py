"""Classifiers: total functions from points to labels.

Built-ins (linear, decision tree, table, voting ensemble) are immutable and
vectorized; the blackbox adapter wraps an external process speaking a
line-delimited JSON batch protocol and memoizes per exact point so repeated
evaluation stays deterministic within a run.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    ATOL,
    BoxRule,
    CategoricalFeature,
    ContinuousFeature,
    FeatureSpace,
    IntegerFeature,
    Interval,
    IntRange,
    Members,
    Point,
    StructuralError,
    full_box,
)
from .errors import ExternalClassifierError, ParseError, UnsupportedShapeError

Label = Union[int, str]


def majority_vote(votes: Sequence[Label], label_set: Sequence[Label]) -> Label:
    """The most common label; ties go to the earliest label in label_set.

    Invariant under permutation of the votes.
    """
    if not votes:
        raise StructuralError("cannot take a majority of zero votes")
    order = {lab: i for i, lab in enumerate(label_set)}
    counts = [0] * len(label_set)
    for v in votes:
        if v not in order:
            raise StructuralError(f"vote {v!r} outside label set {list(label_set)!r}")
        counts[order[v]] += 1
    best = max(range(len(label_set)), key=lambda i: (counts[i], -i))
    return tuple(label_set)[best]


def _as_float_matrix(points, space: FeatureSpace) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points
    return np.asarray(points, dtype=float)


@dataclass(frozen=True)
class LinearClassifier:
    """Threshold on a linear score: the second label iff w.x + b > 0."""

    space: FeatureSpace
    weights: tuple[float, ...]
    bias: float
    labels: tuple[Label, Label] = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.space.all_continuous:
            raise StructuralError("linear classifiers need all-continuous features")
        if len(self.weights) != len(self.space.features):
            raise StructuralError("one weight per feature required")
        if len(self.labels) != 2:
            raise StructuralError("a linear classifier has exactly two labels")

    @property
    def label_set(self) -> tuple[Label, ...]:
        return self.labels

    def evaluate(self, x: Point) -> Label:
        x = self.space.validate_point(x)
        score = sum(w * v for w, v in zip(self.weights, x)) + self.bias
        return self.labels[1] if score > 0 else self.labels[0]

    def evaluate_batch(self, points) -> list[Label]:
        m = _as_float_matrix(points, self.space)
        pos = m @ np.asarray(self.weights) + self.bias > 0
        return [self.labels[1] if p else self.labels[0] for p in pos]

    def batch_indices(self, points) -> np.ndarray:
        """Label indices as an array; the hot path for estimation."""
        m = _as_float_matrix(points, self.space)
        return (m @ np.asarray(self.weights) + self.bias > 0).astype(np.int8)


@dataclass(frozen=True)
class Leaf:
    label: Label


@dataclass(frozen=True)
class Split:
    """Internal node: numeric features test ``x[feature] <= threshold``,
    categorical ones test ``x[feature] in subset``; true goes left."""

    feature: int
    left: "Node"
    right: "Node"
    threshold: Optional[float] = None
    subset: Optional[frozenset] = None

    def __post_init__(self):
        if (self.threshold is None) == (self.subset is None):
            raise StructuralError("a split needs exactly one of threshold/subset")


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class DecisionTree:
    space: FeatureSpace
    root: Node
    labels: tuple[Label, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        self._validate(self.root)

    def _validate(self, node: Node):
        if isinstance(node, Leaf):
            if node.label not in self.labels:
                raise StructuralError(f"leaf label {node.label!r} not in label set")
            return
        f = self.space.features[node.feature]
        if node.threshold is not None:
            if isinstance(f, CategoricalFeature):
                raise StructuralError(f"threshold split on categorical {f.name!r}")
            lo = f.lower if isinstance(f, ContinuousFeature) else f.lo
            hi = f.upper if isinstance(f, ContinuousFeature) else f.hi
            if not lo - ATOL <= node.threshold <= hi + ATOL:
                raise StructuralError(
                    f"threshold {node.threshold} outside bounds of {f.name!r}"
                )
        else:
            if not isinstance(f, CategoricalFeature):
                raise StructuralError(f"subset split on non-categorical {f.name!r}")
            if not node.subset <= set(f.values):
                raise StructuralError(f"subset split outside values of {f.name!r}")
        self._validate(node.left)
        self._validate(node.right)

    @property
    def label_set(self) -> tuple[Label, ...]:
        return self.labels

    def evaluate(self, x: Point) -> Label:
        x = self.space.validate_point(x)
        node = self.root
        while isinstance(node, Split):
            v = x[node.feature]
            if node.threshold is not None:
                node = node.left if v <= node.threshold else node.right
            else:
                node = node.left if v in node.subset else node.right
        return node.label

    def evaluate_batch(self, points) -> list[Label]:
        if self.space.all_continuous:
            m = _as_float_matrix(points, self.space)
            out = np.empty(len(m), dtype=object)
            self._fill(self.root, m, np.arange(len(m)), out)
            return list(out)
        return [self.evaluate(tuple(p)) for p in points]

    def _fill(self, node: Node, m: np.ndarray, idx: np.ndarray, out: np.ndarray):
        if len(idx) == 0:
            return
        if isinstance(node, Leaf):
            out[idx] = node.label
            return
        mask = m[idx, node.feature] <= node.threshold
        self._fill(node.left, m, idx[mask], out)
        self._fill(node.right, m, idx[~mask], out)


def tree_preimage(f: DecisionTree, y: Label) -> list[BoxRule]:
    """Disjoint boxes whose union is exactly the preimage of y.

    Numeric split boundaries go to the left box ([lo, t] left, (t, hi]
    right), so every point of the domain lands in exactly one box across
    all labels. Boxes come out in left-first path order.
    """
    if not isinstance(f, DecisionTree):
        raise UnsupportedShapeError("tree_preimage needs a decision tree")
    out: list[BoxRule] = []

    def walk(node: Node, box: BoxRule):
        if isinstance(node, Leaf):
            if node.label == y:
                out.append(box)
            return
        c = box.constraints[node.feature]
        feat = f.space.features[node.feature]
        if node.threshold is not None:
            t = node.threshold
            if isinstance(feat, ContinuousFeature):
                left = c.intersection(Interval(-math.inf, t, True, False))
                right = c.intersection(Interval(t, math.inf, True, True))
                # re-clip to the closed domain
                if left is not None and left.lo <= feat.lower + ATOL:
                    left = Interval(feat.lower, left.hi, False, left.hi_open)
                if right is not None and right.hi >= feat.upper - ATOL:
                    right = Interval(right.lo, feat.upper, right.lo_open, False)
            else:
                t_floor = math.floor(t)
                left = c.intersection(IntRange(feat.lo, t_floor)) if t_floor >= feat.lo else None
                right = (
                    c.intersection(IntRange(t_floor + 1, feat.hi))
                    if t_floor + 1 <= feat.hi
                    else None
                )
        else:
            left = c.intersection(Members(frozenset(node.subset))) if node.subset else None
            rest = frozenset(feat.values) - node.subset
            right = c.intersection(Members(rest)) if rest else None
        for child, cc in ((node.left, left), (node.right, right)):
            if cc is None:
                continue
            cons = list(box.constraints)
            cons[node.feature] = cc
            walk(child, BoxRule(f.space, tuple(cons)))

    walk(f.root, full_box(f.space))
    return out


@dataclass(frozen=True)
class TableClassifier:
    """An explicit lookup table, total on a finite space."""

    space: FeatureSpace
    table: tuple  # ((point, label), ...) in any order
    labels: tuple[Label, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        norm = tuple((self.space.validate_point(p), lab) for p, lab in self.table)
        object.__setattr__(self, "table", norm)
        lookup = dict(norm)
        if len(lookup) != len(norm):
            raise StructuralError("duplicate points in table")
        for p in self.space.enumerate_points():
            if p not in lookup:
                raise StructuralError(f"table is not total: missing {p!r}")
        for _, lab in norm:
            if lab not in self.labels:
                raise StructuralError(f"table label {lab!r} not in label set")
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def from_function(cls, space: FeatureSpace, fn, labels) -> "TableClassifier":
        rows = tuple((p, fn(p)) for p in space.enumerate_points())
        return cls(space, rows, tuple(labels))

    @property
    def label_set(self) -> tuple[Label, ...]:
        return self.labels

    def evaluate(self, x: Point) -> Label:
        x = self.space.validate_point(x)
        return self._lookup[x]

    def evaluate_batch(self, points) -> list[Label]:
        return [self._lookup[self.space.validate_point(tuple(p))] for p in points]


@dataclass(frozen=True)
class VotingEnsemble:
    """Majority vote over member classifiers sharing a space and label set."""

    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise StructuralError("an ensemble needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            if tuple(m.label_set) != tuple(first.label_set):
                raise StructuralError("ensemble members must share the label set")
            if m.space != first.space:
                raise StructuralError("ensemble members must share the space")

    @property
    def space(self) -> FeatureSpace:
        return self.members[0].space

    @property
    def label_set(self) -> tuple[Label, ...]:
        return tuple(self.members[0].label_set)

    def evaluate(self, x: Point) -> Label:
        votes = [m.evaluate(x) for m in self.members]
        return majority_vote(votes, self.label_set)

    def evaluate_batch(self, points) -> list[Label]:
        labs = self.label_set
        order = {lab: i for i, lab in enumerate(labs)}
        member_votes = [m.evaluate_batch(points) for m in self.members]
        n = len(member_votes[0])
        counts = np.zeros((n, len(labs)), dtype=np.int32)
        for votes in member_votes:
            for row, v in enumerate(votes):
                counts[row, order[v]] += 1
        picks = counts.argmax(axis=1)  # argmax takes the first max: label order
        return [labs[i] for i in picks]


class BlackboxClassifier:
    """Adapter around an external classifier process.

    Protocol: one request per line on stdin, a JSON array of points (each a
    JSON array of feature values); one response per line on stdout, a JSON
    array of labels of the same length and order. Any malformed response,
    timeout, or early exit raises ExternalClassifierError with the raw
    payload. Responses are memoized per exact value tuple, and access to
    the child is serialized, so evaluation is deterministic within a run.
    """

    def __init__(
        self,
        space: FeatureSpace,
        labels: Sequence[Label],
        cmd: Sequence[str],
        timeout: float = 5.0,
        batch_size: int = 256,
    ):
        self.space = space
        self.labels = tuple(labels)
        self.cmd = list(cmd)
        self.timeout = timeout
        self.batch_size = int(batch_size)
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._lock = threading.Lock()
        self._memo: dict[Point, Label] = {}

    @property
    def label_set(self) -> tuple[Label, ...]:
        return self.labels

    def _ensure_proc(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ExternalClassifierError(f"cannot start {self.cmd!r}: {e}") from e

        def pump(proc, q):
            for line in proc.stdout:
                q.put(line)
            q.put(None)

        self._lines = queue.Queue()
        threading.Thread(
            target=pump, args=(self._proc, self._lines), daemon=True
        ).start()

    def _round_trip(self, batch: list[Point]) -> list[Label]:
        self._ensure_proc()
        request = json.dumps([list(p) for p in batch])
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ExternalClassifierError(f"classifier process died: {e}") from e
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ExternalClassifierError(
                f"no response within {self.timeout}s", payload=request
            )
        if line is None:
            raise ExternalClassifierError("classifier process closed its output")
        try:
            response = json.loads(line)
        except json.JSONDecodeError:
            raise ExternalClassifierError("non-JSON response line", payload=line)
        if not isinstance(response, list) or len(response) != len(batch):
            raise ExternalClassifierError(
                f"expected {len(batch)} labels, got {response!r}", payload=line
            )
        for lab in response:
            if lab not in self.labels:
                raise ExternalClassifierError(
                    f"label {lab!r} outside declared label set", payload=line
                )
        return response

    def evaluate_batch(self, points) -> list[Label]:
        pts = [self.space.validate_point(tuple(p)) for p in points]
        with self._lock:
            todo = []
            seen = set()
            for p in pts:
                if p not in self._memo and p not in seen:
                    todo.append(p)
                    seen.add(p)
            for i in range(0, len(todo), self.batch_size):
                chunk = todo[i : i + self.batch_size]
                for p, lab in zip(chunk, self._round_trip(chunk)):
                    self._memo[p] = lab
            return [self._memo[p] for p in pts]

    def evaluate(self, x: Point) -> Label:
        return self.evaluate_batch([x])[0]

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


Classifier = Union[
    LinearClassifier, DecisionTree, TableClassifier, VotingEnsemble, BlackboxClassifier
]


def evaluate(f: Classifier, x: Point) -> Label:
    """Apply a classifier to one point."""
    return f.evaluate(x)


# ---------------------------------------------------------------------------
# Model documents
# ---------------------------------------------------------------------------


def _parse_node(doc, space: FeatureSpace, path: str) -> Node:
    if not isinstance(doc, dict):
        raise ParseError("tree node must be an object", path)
    if "leaf" in doc:
        return Leaf(doc["leaf"])
    if "split" not in doc:
        raise ParseError("tree node needs 'leaf' or 'split'", path)
    s = doc["split"]
    name = s.get("feature")
    if name not in space.names:
        raise ParseError(f"unknown feature {name!r}", path + ".split.feature")
    fi = space.names.index(name)
    for side in ("left", "right"):
        if side not in doc:
            raise ParseError(f"split missing {side!r} child", path)
    left = _parse_node(doc["left"], space, path + ".left")
    right = _parse_node(doc["right"], space, path + ".right")
    if "threshold" in s:
        return Split(fi, left, right, threshold=float(s["threshold"]))
    if "subset" in s:
        return Split(fi, left, right, subset=frozenset(s["subset"]))
    raise ParseError("split needs 'threshold' or 'subset'", path + ".split")


def load_model(document: dict, space: FeatureSpace) -> Classifier:
    """Build a classifier from its JSON document.

    Schema violations raise ParseError carrying the offending path.
    """
    if not isinstance(document, dict) or "type" not in document:
        raise ParseError("model document needs a 'type' field", "$")
    kind = document["type"]
    try:
        if kind == "linear":
            return LinearClassifier(
                space,
                tuple(document["weights"]),
                float(document["bias"]),
                tuple(document.get("labels", (0, 1))),
            )
        if kind == "tree":
            root_doc = document.get("root", document.get("nodes"))
            if root_doc is None:
                raise ParseError("tree model needs a 'root' node", "$.root")
            root = _parse_node(root_doc, space, "$.root")
            labels = document.get("labels")
            if labels is None:
                labels = _leaf_labels(root)
            return DecisionTree(space, root, tuple(labels))
        if kind == "table":
            rows = document["rows"]
            table = tuple((tuple(r[:-1]), r[-1]) for r in rows)
            labels = document.get("labels")
            if labels is None:
                seen = []
                for _, lab in table:
                    if lab not in seen:
                        seen.append(lab)
                labels = seen
            return TableClassifier(space, table, tuple(labels))
        if kind == "ensemble":
            members = tuple(
                load_model(m, space) for m in document["members"]
            )
            return VotingEnsemble(members)
        if kind == "blackbox":
            if "labels" not in document:
                raise ParseError("blackbox model must declare 'labels'", "$.labels")
            return BlackboxClassifier(
                space,
                tuple(document["labels"]),
                document["cmd"],
                timeout=document.get("timeout_ms", 5000) / 1000.0,
                batch_size=document.get("batch", 256),
            )
    except ParseError:
        raise
    except KeyError as e:
        raise ParseError(f"missing field {e.args[0]!r}", f"$.{e.args[0]}") from e
    except StructuralError as e:
        raise ParseError(str(e), "$") from e
    raise ParseError(f"unknown model type {kind!r}", "$.type")


def _leaf_labels(node: Node) -> list[Label]:
    out: list[Label] = []

    def walk(n):
        if isinstance(n, Leaf):
            if n.label not in out:
                out.append(n.label)
        else:
            walk(n.left)
            walk(n.right)

    walk(node)
    return out
