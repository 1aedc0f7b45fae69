"""Attention masks as directed graphs.

Edge convention: ``(j, i)`` in the edge set means token ``i`` attends to
token ``j`` (``j`` is a direct context for ``i``).  Reachability follows edge
direction, so a *center* node is one whose information reaches every token
through chains of attention.  The neighbor set of ``i`` is
``N_i = {k : (k, i) in E}``.

Node indices are 0-based in this module.  User-facing I/O (edge files, CLI,
JSON) is 1-based; conversion happens in :func:`load_edge_file`,
:func:`MaskClassification.to_dict` and the harness.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

MASK_KINDS = (
    "complete",
    "causal",
    "sliding_window",
    "unidirectional_sliding_window",
    "custom",
)


class MaskError(ValueError):
    """Invalid mask construction input."""


class SelfLoopError(MaskError):
    """Assumption A1 (every token attends to itself) does not hold."""

    def __init__(self, node: int):
        self.node = node
        super().__init__(f"A1 violated: node {node + 1} has no self-loop")


@dataclass(frozen=True)
class MaskGraph:
    n: int
    edges: frozenset  # of (j, i) pairs, 0-based

    def __post_init__(self):
        if self.n < 1:
            raise MaskError("mask needs at least one node (n >= 1)")
        for j, i in self.edges:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise MaskError(f"edge ({j + 1}, {i + 1}) out of range for n={self.n}")

    @property
    def neighbors(self) -> tuple:
        """In-neighbor lists: ``neighbors[i]`` is the sorted tuple N_i."""
        nb = [[] for _ in range(self.n)]
        for j, i in self.edges:
            nb[i].append(j)
        return tuple(tuple(sorted(x)) for x in nb)

    @property
    def successors(self) -> tuple:
        """Out-lists along edge direction: tokens that attend to ``j``."""
        out = [[] for _ in range(self.n)]
        for j, i in self.edges:
            out[j].append(i)
        return tuple(tuple(sorted(x)) for x in out)

    def allowed(self) -> np.ndarray:
        """Boolean N x N matrix with ``allowed[i, j]`` true iff (j, i) in E.

        This is the sparsity pattern of the attention matrix.
        """
        m = np.zeros((self.n, self.n), dtype=bool)
        for j, i in self.edges:
            m[i, j] = True
        return m

    def has_edge(self, j: int, i: int) -> bool:
        return (j, i) in self.edges

    def with_edges(self, extra: Iterable[tuple]) -> "MaskGraph":
        return MaskGraph(self.n, self.edges | frozenset(extra))


def _window_edges(n: int, back: int, forward: int) -> frozenset:
    return frozenset(
        (j, i) for i in range(n) for j in range(max(0, i - back), min(n, i + forward + 1))
    )


def build_mask(kind: str, n: int, width: Optional[int] = None, edges=None) -> MaskGraph:
    """Construct one of the standard masks, or a custom one from 0-based edges.

    Every built-in kind contains all self-loops; ``custom`` takes the edge
    list as given.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MaskError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if kind == "complete":
        e = frozenset((j, i) for i in range(n) for j in range(n))
    elif kind == "causal":
        e = frozenset((j, i) for i in range(n) for j in range(i + 1))
    elif kind in ("sliding_window", "unidirectional_sliding_window"):
        w = 1 if width is None else width
        if not isinstance(w, (int, np.integer)) or w < 1:
            raise MaskError(f"window width must be >= 1, got {w!r}")
        fwd = int(w) if kind == "sliding_window" else 0
        e = _window_edges(n, int(w), fwd)
    elif kind == "custom":
        if edges is None:
            raise MaskError("custom mask needs an edge list")
        e = frozenset((int(j), int(i)) for j, i in edges)
    else:
        raise MaskError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    return MaskGraph(n, e)


def load_edge_file(path) -> MaskGraph:
    """Read a custom mask: first line ``n``, then one ``j i`` pair per line (1-based)."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MaskError(f"{path}: empty mask file")
    try:
        n = int(lines[0])
        pairs = []
        for ln in lines[1:]:
            j, i = ln.split()
            pairs.append((int(j) - 1, int(i) - 1))
    except ValueError as exc:
        raise MaskError(f"{path}: malformed mask file ({exc})") from None
    return build_mask("custom", n, edges=pairs)


def write_edge_file(g: MaskGraph, path) -> None:
    body = "\n".join(f"{j + 1} {i + 1}" for j, i in sorted(g.edges))
    Path(path).write_text(f"{g.n}\n{body}\n")


def assert_a1(g: MaskGraph) -> None:
    """Raise :class:`SelfLoopError` at the first node without a self-loop."""
    for i in range(g.n):
        if (i, i) not in g.edges:
            raise SelfLoopError(i)


def bfs_distances(g: MaskGraph, source: int) -> list:
    """Directed hop counts from ``source`` following edge direction; -1 if unreachable."""
    succ = g.successors
    dist = [-1] * g.n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


@dataclass(frozen=True)
class MaskClassification:
    n: int
    has_self_loops: bool
    strongly_connected: bool
    quasi_strongly_connected: bool
    center_nodes: tuple  # 0-based
    radius: Optional[int]
    diameter: Optional[int]

    @property
    def center_count(self) -> int:
        return len(self.center_nodes)

    def to_dict(self) -> dict:
        """JSON-ready view with 1-based node ids."""
        return {
            "n": self.n,
            "has_self_loops": self.has_self_loops,
            "strongly_connected": self.strongly_connected,
            "quasi_strongly_connected": self.quasi_strongly_connected,
            "center_nodes": [c + 1 for c in self.center_nodes],
            "center_count": self.center_count,
            "radius": self.radius,
            "diameter": self.diameter,
        }


def classify(g: MaskGraph) -> MaskClassification:
    dists = [bfs_distances(g, s) for s in range(g.n)]
    centers = tuple(s for s in range(g.n) if min(dists[s]) >= 0)
    strong = len(centers) == g.n
    radius = min(max(dists[c]) for c in centers) if centers else None
    diameter = max(max(row) for row in dists) if strong else None
    return MaskClassification(
        n=g.n,
        has_self_loops=all((i, i) in g.edges for i in range(g.n)),
        strongly_connected=strong,
        quasi_strongly_connected=bool(centers),
        center_nodes=centers,
        radius=radius,
        diameter=diameter,
    )

