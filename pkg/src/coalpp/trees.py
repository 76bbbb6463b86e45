"""Ultrametric coalescent trees and their serializations.

A CPP tree on n tips is stored as its stem age and the leaf-order node
heights H_1..H_{n-1}, where H_i is the depth at which leaf i and leaf i+1
diverge. The coalescent times T_2 > ... > T_n are the descending order
statistics of the heights. Serializers: Newick (leaves labelled L1..Ln in
CPP order) and a segment list for plotting (leaves at integer x).

Ties among heights (probability zero, but possible after rounding) are broken
by leaf index: the leftmost maximal height splits first.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, NewickParseError

__all__ = ["CoalescentTree", "to_newick", "parse_newick", "plot_coordinates", "segments_json"]

_INF_STEM_FLAG = "[&stem=inf]"


@dataclass(frozen=True)
class CoalescentTree:
    """An ultrametric tree: stem age, and node heights in CPP leaf order."""

    stem_age: float
    heights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "heights", tuple(float(h) for h in self.heights))
        if not self.stem_age > 0:
            raise DomainError(f"stem age must be positive, got {self.stem_age}")
        for h in self.heights:
            if not 0.0 < h < self.stem_age:
                raise DomainError(
                    f"node height {h} outside (0, stem_age={self.stem_age})"
                )

    @property
    def n(self) -> int:
        """Leaf count."""
        return len(self.heights) + 1

    @cached_property
    def times(self) -> tuple[float, ...]:
        """Coalescent times (T_2, ..., T_n): heights in descending order."""
        return tuple(sorted(self.heights, reverse=True))

    def coalescent_time(self, k: int) -> float:
        """T_k for k = 2..n (k=1 returns the stem age)."""
        if k == 1:
            return self.stem_age
        if not 2 <= k <= self.n:
            raise DomainError(f"need 2 <= k <= n={self.n}, got k={k}")
        return self.times[k - 2]


def _split_index(heights, a: int, b: int) -> int:
    """Index of the root boundary for leaves a..b: leftmost maximal height."""
    best = a
    for i in range(a + 1, b):
        if heights[i] > heights[best]:
            best = i
    return best


def _newick_node(heights, a: int, b: int, parent_height: float, precision: int, out: list) -> None:
    # Emit the subtree spanning leaves a..b (inclusive), with a branch of
    # length parent_height - own_height.
    if a == b:
        out.append(f"L{a + 1}:{parent_height:.{precision}f}")
        return
    i = _split_index(heights, a, b)
    h = heights[i]
    out.append("(")
    _newick_node(heights, a, i, h, precision, out)
    out.append(",")
    _newick_node(heights, i + 1, b, h, precision, out)
    out.append(")")
    out.append(f":{parent_height - h:.{precision}f}")


def to_newick(tree: CoalescentTree, precision: int = 12) -> str:
    """Serialize to Newick with branch lengths in time units.

    A finite stem age appears as the root branch (e.g. ``((L1:0.4,L2:0.4):0.6);``).
    An infinite stem emits the subtree rooted at T_2 prefixed with the flag
    comment ``[&stem=inf]``, which :func:`parse_newick` recognizes.
    """
    if tree.n == 1:
        if math.isinf(tree.stem_age):
            return f"{_INF_STEM_FLAG}L1:0;"
        return f"L1:{tree.stem_age:.{precision}f};"
    out: list[str] = []
    if math.isinf(tree.stem_age):
        root_h = max(tree.heights)
        _newick_node(tree.heights, 0, tree.n - 1, root_h, precision, out)
        body = "".join(out)
        # strip the zero-length root branch emitted by the recursion
        body = body.rsplit(":", 1)[0]
        return f"{_INF_STEM_FLAG}{body};"
    out.append("(")
    _newick_node(tree.heights, 0, tree.n - 1, tree.stem_age, precision, out)
    out.append(");")
    return "".join(out)


_LABEL_RE = re.compile(r"[^\s,():;\[\]]+")
_NUMBER_RE = re.compile(r"[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?")


class _NewickParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise NewickParseError(msg, self.pos)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}, found {self.peek()!r}")
        self.pos += 1

    def parse_node(self):
        """Returns (children, label, branch_length); leaf has children = []."""
        children = []
        if self.peek() == "(":
            self.pos += 1
            children.append(self.parse_node())
            while self.peek() == ",":
                self.pos += 1
                children.append(self.parse_node())
            self.expect(")")
        m = _LABEL_RE.match(self.text, self.pos)
        label = ""
        if m:
            label = m.group(0)
            self.pos = m.end()
        length = 0.0
        if self.peek() == ":":
            self.pos += 1
            m = _NUMBER_RE.match(self.text, self.pos)
            if not m:
                self.error("expected branch length after ':'")
            length = float(m.group(0))
            self.pos = m.end()
        if not children and not label:
            self.error("empty node: expected a label or subtree")
        return children, label, length


def parse_newick(text: str) -> CoalescentTree:
    """Inverse of :func:`to_newick`; input must be ultrametric within 1e-9 * height."""
    raw = text.strip()
    infinite = raw.startswith(_INF_STEM_FLAG)
    if infinite:
        raw = raw[len(_INF_STEM_FLAG):]
    parser = _NewickParser(raw)
    root = parser.parse_node()
    if parser.peek() != ";":
        parser.error("expected ';' at end of tree")
    parser.pos += 1
    if parser.pos != len(raw):
        parser.error("trailing characters after ';'")

    leaf_depths: list[float] = []
    boundaries: list[float] = []  # depth of the LCA between consecutive leaves

    def walk(node, depth: float):
        children, label, length = node
        depth += length
        if not children:
            leaf_depths.append(depth)
            return
        for idx, child in enumerate(children):
            if idx > 0:
                boundaries.append(depth)
            walk(child, depth)

    walk(root, 0.0)
    height = max(leaf_depths)
    tol = 1e-9 * max(height, 1.0)
    for d in leaf_depths:
        if abs(d - height) > tol:
            raise NewickParseError(
                f"non-ultrametric input: leaf depths {d} vs {height} differ by more than {tol}",
                len(raw),
            )
    heights = tuple(height - b for b in boundaries)
    try:
        if infinite:
            return CoalescentTree(math.inf, heights)
        # the top branch carries stem_age - T_2; leaf depth already includes it
        return CoalescentTree(height, heights)
    except DomainError as exc:
        raise NewickParseError(f"invalid tree geometry: {exc}", len(raw)) from exc


def plot_coordinates(tree: CoalescentTree, stem_display: float | None = None):
    """Line segments rendering the ultrametric tree.

    Returns a list of (x1, y1, x2, y2) with leaves at integer x (0..n-1, CPP
    order) and y in time units: 2n-1 vertical segments (each node up to its
    parent) and n-1 horizontals (each internal node across its children). An
    infinite stem age requires ``stem_display``, the depth at which to
    truncate the root branch.
    """
    top = tree.stem_age
    if math.isinf(top):
        if stem_display is None:
            raise DomainError("infinite stem age: pass stem_display to truncate the root branch")
        if tree.heights and not stem_display > max(tree.heights):
            raise DomainError("stem_display must exceed the root height")
        top = float(stem_display)
    segments: list[tuple[float, float, float, float]] = []

    def layout(a: int, b: int, parent_y: float) -> float:
        # returns x of the subtree root; emits its vertical and horizontals
        if a == b:
            x = float(a)
            segments.append((x, 0.0, x, parent_y))
            return x
        i = _split_index(tree.heights, a, b)
        h = tree.heights[i]
        xl = layout(a, i, h)
        xr = layout(i + 1, b, h)
        x = 0.5 * (xl + xr)
        segments.append((xl, h, xr, h))
        segments.append((x, h, x, parent_y))
        return x

    layout(0, tree.n - 1, top)
    return segments


def segments_json(tree: CoalescentTree, stem_display: float | None = None) -> str:
    """JSON segment list: {"segments": [[x1,y1,x2,y2], ...], "n": ..., "stem_age": ...}.

    An infinite stem age serializes as null, with the truncation depth under
    "stem_display".
    """
    segs = plot_coordinates(tree, stem_display)
    stem = None if math.isinf(tree.stem_age) else tree.stem_age
    payload = {
        "segments": [list(s) for s in segs],
        "n": tree.n,
        "stem_age": stem,
    }
    if stem is None:
        payload["stem_display"] = stem_display
    return json.dumps(payload)
