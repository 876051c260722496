"""Random-walk corpus generation: the "sentences" the embedding trains on.

Each step samples an integer x uniformly from {1..D_v} and moves to the
x-th lowest-indexed neighbor of the current vertex. Walks are generated
one independent RNG stream per walk index, so corpora are reproducible
and order-independent under parallel generation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_text_writer
from .graph import Graph


@dataclass
class WalkConfig:
    walk_length: int = 80
    walks_per_vertex: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 1:
            raise ValueError("walk_length must be >= 1")
        if self.walks_per_vertex < 1:
            raise ValueError("walks_per_vertex must be >= 1")


@dataclass
class WalkCorpus:
    """Vertex-index walk sequences plus the index -> external id mapping."""

    walks: list[np.ndarray]
    ids: list[str]

    @property
    def vocab_size(self) -> int:
        return len(self.ids)

    def token_count(self) -> int:
        return sum(len(w) for w in self.walks)


def random_walk(g: Graph, start: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """Walk `length` vertices from `start`, moving to a uniform neighbor each step.

    A degree-0 vertex ends the walk early (isolated start yields [start]).
    """
    if not 0 <= start < g.num_vertices:
        raise IndexError(f"start vertex {start} out of range")
    if length < 1:
        raise ValueError("length must be >= 1")
    walk = np.empty(length, dtype=np.int32)
    walk[0] = start
    if length == 1:
        return walk
    offsets = g.offsets
    neighbors = g.neighbors
    # one uniform draw per potential step; x-th lowest neighbor = floor(u * D_v)
    u = rng.random(length - 1)
    cur = start
    for t in range(1, length):
        lo = offsets[cur]
        deg = offsets[cur + 1] - lo
        if deg == 0:
            return walk[:t]
        cur = int(neighbors[lo + int(u[t - 1] * deg)])
        walk[t] = cur
    return walk


def _walk_rng(seed: int, walk_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(walk_index,)))


def generate_corpus(g: Graph, cfg: WalkConfig) -> WalkCorpus:
    """Run cfg.walks_per_vertex walks from every vertex.

    Walk i * walks_per_vertex + k starts at vertex i; identical (graph,
    seed) inputs give bit-identical corpora.
    """
    if g.num_vertices == 0:
        raise ValueError("graph has no vertices")
    walks: list[np.ndarray] = []
    for v in range(g.num_vertices):
        for k in range(cfg.walks_per_vertex):
            w = v * cfg.walks_per_vertex + k
            walks.append(random_walk(g, v, cfg.walk_length, _walk_rng(cfg.seed, w)))
    return WalkCorpus(walks=walks, ids=list(g.ids))


def save_corpus(corpus: WalkCorpus, path: str | Path) -> None:
    """One walk per line, space-separated external ids."""
    ids = corpus.ids
    with atomic_text_writer(path) as fh:
        for walk in corpus.walks:
            fh.write(" ".join(ids[v] for v in walk))
            fh.write("\n")


def load_corpus(path: str | Path) -> WalkCorpus:
    """Read a corpus file back; vocabulary indices follow first-seen order."""
    index: dict[str, int] = {}
    ids: list[str] = []
    walks: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            tokens = raw.split()
            if not tokens:
                continue
            row = np.empty(len(tokens), dtype=np.int32)
            for i, tok in enumerate(tokens):
                if tok not in index:
                    index[tok] = len(ids)
                    ids.append(tok)
                row[i] = index[tok]
            walks.append(row)
    return WalkCorpus(walks=walks, ids=ids)
