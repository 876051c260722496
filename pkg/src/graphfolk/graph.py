"""Undirected social graph stored as compressed adjacency (CSR).

Edge lists are read as directed (source, target) pairs of external id
strings, optionally pruned by target in-degree, then symmetrized into a
simple undirected graph with dense vertex indices. Neighbor lists are kept
sorted so "the x-th lowest-indexed neighbor" is a direct array lookup.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_text_writer

Edge = tuple[str, str]


class EdgeListParseError(ValueError):
    """Malformed edge-list line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyGraphError(ValueError):
    """Raised when no usable edges remain to build a graph from."""


@dataclass
class Graph:
    """Simple undirected graph over dense vertex indices.

    offsets[v] .. offsets[v+1] delimits v's slice of `neighbors`; each
    slice is sorted ascending and duplicate-free. `ids[v]` is the external
    id of vertex v and `index` inverts it.
    """

    offsets: np.ndarray
    neighbors: np.ndarray
    ids: list[str]
    index: dict[str, int] = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.offsets) - 1

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.neighbors) // 2

    def degree(self, v: int) -> int:
        if not 0 <= v < self.num_vertices:
            raise IndexError(f"vertex {v} out of range (|V|={self.num_vertices})")
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors_of(self, v: int) -> np.ndarray:
        if not 0 <= v < self.num_vertices:
            raise IndexError(f"vertex {v} out of range (|V|={self.num_vertices})")
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors_of(u)
        i = np.searchsorted(nbrs, v)
        return i < len(nbrs) and nbrs[i] == v


def load_edge_list(path: str | Path, delimiter: str | None = None) -> list[Edge]:
    """Parse a text edge list into directed (source, target) pairs.

    One edge per line, two fields split on `delimiter` (None = any run of
    whitespace). Lines starting with '#' and blank lines are skipped.
    Duplicate lines are preserved; deduplication happens in build_undirected.
    """
    edges: list[Edge] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(delimiter)
            if len(fields) != 2:
                raise EdgeListParseError(
                    f"expected 2 fields, got {len(fields)}: {line!r}", lineno
                )
            src, dst = fields[0].strip(), fields[1].strip()
            if not src or not dst:
                raise EdgeListParseError(f"empty id in {line!r}", lineno)
            edges.append((src, dst))
    return edges


def save_edge_list(edges: Iterable[Edge], path: str | Path, delimiter: str = " ") -> None:
    with atomic_text_writer(path) as fh:
        for src, dst in edges:
            fh.write(f"{src}{delimiter}{dst}\n")


def prune_by_in_degree(
    edges: Sequence[Edge], min_in: int, keep: Iterable[str] = ()
) -> list[Edge]:
    """Drop edges whose target is followed by fewer than `min_in` sources.

    In-degree is counted on the directed input (duplicate lines count).
    Sources are never removed by this rule. Ids in `keep` are retained as
    targets regardless of in-degree (protects labeled seed users).
    """
    if min_in < 0:
        raise ValueError("min_in must be >= 0")
    protected = set(keep)
    in_degree = Counter(dst for _, dst in edges)
    return [
        (src, dst)
        for src, dst in edges
        if in_degree[dst] >= min_in or dst in protected
    ]


def load_id_file(path: str | Path) -> set[str]:
    """Read a protected-id file: one external id per line, '#' comments allowed."""
    ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                ids.add(line)
    return ids


def build_undirected(edges: Sequence[Edge]) -> Graph:
    """Symmetrize a directed edge list into a simple undirected Graph.

    Every (u, v) contributes both directions; duplicates collapse and
    self-loops are dropped. Dense indices follow first-seen order of
    external ids among the surviving edges, so ingestion is deterministic.
    """
    if not edges:
        raise EmptyGraphError("edge list is empty")

    index: dict[str, int] = {}
    ids: list[str] = []
    pairs: list[tuple[int, int]] = []
    for src, dst in edges:
        if src == dst:
            continue
        for name in (src, dst):
            if name not in index:
                index[name] = len(ids)
                ids.append(name)
        u, v = index[src], index[dst]
        pairs.append((u, v))
        pairs.append((v, u))

    if not pairs:
        raise EmptyGraphError("no edges remain after dropping self-loops")

    arr = np.array(pairs, dtype=np.int64)
    # sort by (source, target), then collapse duplicate directed pairs
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    arr = arr[order]
    dedup = np.ones(len(arr), dtype=bool)
    dedup[1:] = (arr[1:] != arr[:-1]).any(axis=1)
    arr = arr[dedup]

    n = len(ids)
    counts = np.bincount(arr[:, 0], minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    neighbors = arr[:, 1].astype(np.int32)
    return Graph(offsets=offsets, neighbors=neighbors, ids=ids, index=index)


def degree(g: Graph, v: int) -> int:
    """Vertex degree: the number of distinct neighbors of v."""
    return g.degree(v)


def undirected_edges(g: Graph) -> list[Edge]:
    """Emit each undirected edge once as (id_u, id_v) with u < v by index."""
    out: list[Edge] = []
    for u in range(g.num_vertices):
        for v in g.neighbors_of(u):
            if u < v:
                out.append((g.ids[u], g.ids[int(v)]))
    return out
