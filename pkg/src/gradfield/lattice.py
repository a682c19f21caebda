"""Lattice geometry: the graph G = (Z^d, E) with generator set Gamma,
finite regions and their boundaries, and the even sublattice.

Vertices are tuples of Python ints.  Regions keep a lexicographically
sorted vertex list (deterministic iteration) plus a hash set (O(1)
membership).  Everything here is immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import NotGenerating, NotSymmetric, ZeroInGenerators

Vertex = tuple[int, ...]


def _as_vertex(v) -> Vertex:
    return tuple(int(c) for c in v)


@dataclass(frozen=True)
class LatticeGraph:
    """The graph (Z^d, E) with symmetric generator set Gamma.

    ``embedding`` is set only for graphs obtained by linearly re-indexing a
    sublattice of Z^d (columns of the matrix map graph coordinates to
    ambient coordinates); it is None for graphs living on Z^d directly.
    """

    d: int
    generators: tuple[Vertex, ...]
    embedding: Optional[tuple[tuple[int, ...], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "_gen_arr", np.array(self.generators, dtype=np.int64))

    @property
    def gen_arr(self) -> np.ndarray:
        return self._gen_arr

    @property
    def degree(self) -> int:
        return len(self.generators)

    def neighbors(self, x: Vertex) -> list[Vertex]:
        """Neighbor set of x, always x + Gamma in generator order."""
        return [tuple(a + b for a, b in zip(x, g)) for g in self.generators]

    @property
    def is_nearest_neighbor(self) -> bool:
        return all(sum(abs(c) for c in g) == 1 for g in self.generators)

    def embedding_matrix(self) -> Optional[np.ndarray]:
        if self.embedding is None:
            return None
        return np.array(self.embedding, dtype=np.int64)

    def to_ambient(self, x: Vertex) -> Vertex:
        """Map graph coordinates to ambient Z^d coordinates."""
        if self.embedding is None:
            return _as_vertex(x)
        return _as_vertex(self.embedding_matrix() @ np.array(x, dtype=np.int64))

    def from_ambient(self, x: Vertex) -> Vertex:
        if self.embedding is None:
            return _as_vertex(x)
        sol = np.linalg.solve(self.embedding_matrix().astype(float),
                              np.array(x, dtype=float))
        out = np.rint(sol).astype(np.int64)
        if not np.array_equal(self.embedding_matrix() @ out,
                              np.array(x, dtype=np.int64)):
            raise ValueError(f"{x} is not a vertex of this sublattice")
        return _as_vertex(out)


class Region:
    """A finite vertex set of a LatticeGraph with deterministic iteration."""

    def __init__(self, graph: LatticeGraph, vertices: Iterable[Vertex]):
        self.graph = graph
        self.vertices: tuple[Vertex, ...] = tuple(sorted({_as_vertex(v) for v in vertices}))
        self._index = {v: i for i, v in enumerate(self.vertices)}

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __contains__(self, v) -> bool:
        return _as_vertex(v) in self._index

    def __eq__(self, other):
        return isinstance(other, Region) and self.vertices == other.vertices

    def __repr__(self):
        return f"Region({len(self)} vertices)"

    def index(self, v: Vertex) -> int:
        return self._index[_as_vertex(v)]

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.int64)

    def union(self, other: "Region") -> "Region":
        return Region(self.graph, self.vertices + other.vertices)

    def difference(self, other: Iterable[Vertex]) -> "Region":
        drop = {_as_vertex(v) for v in other}
        return Region(self.graph, (v for v in self.vertices if v not in drop))

    def serialize(self) -> str:
        """One vertex per line, space-separated coordinates, sorted."""
        return "\n".join(" ".join(str(c) for c in v) for v in self.vertices) + "\n"

    @classmethod
    def deserialize(cls, graph: LatticeGraph, text: str) -> "Region":
        verts = [tuple(int(c) for c in line.split())
                 for line in text.strip().splitlines() if line.strip()]
        return cls(graph, verts)


def build_lattice(d: int, generators: Sequence[Sequence[int]]) -> LatticeGraph:
    """Validate and construct the lattice graph.

    Gamma must avoid 0, be closed under negation, and additively generate
    Z^d; the last point is checked by a BFS over Gamma-steps that must
    reach every unit vector within word length 4*max|gamma|_1.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not generators:
        raise ValueError("generator set must be nonempty")
    gens = tuple(sorted({_as_vertex(g) for g in generators}))
    zero = (0,) * d
    if any(len(g) != d for g in gens):
        raise ValueError("generator dimension mismatch")
    if zero in gens:
        raise ZeroInGenerators("0 is not allowed in the generator set")
    gen_set = set(gens)
    for g in gens:
        if tuple(-c for c in g) not in gen_set:
            raise NotSymmetric(f"generator set is not closed under negation: {g}")
    _check_generating(d, gens)
    return LatticeGraph(d=d, generators=gens)


def _check_generating(d: int, gens: tuple[Vertex, ...]) -> None:
    cap = 4 * max(sum(abs(c) for c in g) for g in gens)
    units = {tuple(int(i == j) for j in range(d)) for i in range(d)}
    seen = {(0,) * d}
    frontier = [(0,) * d]
    remaining = set(units)
    remaining -= seen
    for _ in range(cap):
        if not remaining:
            return
        nxt = []
        for x in frontier:
            for g in gens:
                y = tuple(a + b for a, b in zip(x, g))
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        remaining -= seen
        frontier = nxt
    if remaining:
        raise NotGenerating(
            f"generators do not reach unit vectors {sorted(remaining)} "
            f"within word length {cap}")


def ball(graph: LatticeGraph, center: Vertex, radius: int,
         metric: str = "graph") -> Region:
    """Closed ball around center in the requested metric.

    metric 'graph' uses the word metric of Gamma; 'ell1'/'ellinf' use the
    coordinate norms of the graph's own coordinate system.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    center = _as_vertex(center)
    if metric == "graph":
        seen = {center}
        frontier = [center]
        for _ in range(radius):
            nxt = []
            for x in frontier:
                for y in graph.neighbors(x):
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            frontier = nxt
        return Region(graph, seen)
    if metric == "ell1":
        pts = []
        rng = range(-radius, radius + 1)
        for off in product(rng, repeat=graph.d):
            if sum(abs(c) for c in off) <= radius:
                pts.append(tuple(c + o for c, o in zip(center, off)))
        return Region(graph, pts)
    if metric == "ellinf":
        rng = range(-radius, radius + 1)
        pts = [tuple(c + o for c, o in zip(center, off))
               for off in product(rng, repeat=graph.d)]
        return Region(graph, pts)
    raise ValueError(f"unknown metric {metric!r}")


def box(graph: LatticeGraph, lo: Sequence[int], hi: Sequence[int]) -> Region:
    """Axis-aligned box {x : lo <= x <= hi} (inclusive)."""
    ranges = [range(int(a), int(b) + 1) for a, b in zip(lo, hi)]
    return Region(graph, product(*ranges))


def boundary(graph: LatticeGraph, region: Region, kind: str = "outer") -> Region:
    """Outer/inner vertex boundary or closure of a finite region."""
    if kind == "outer":
        out = set()
        for x in region:
            for z in graph.neighbors(x):
                if z not in region:
                    out.add(z)
        return Region(graph, out)
    if kind == "inner":
        inner = [x for x in region
                 if any(z not in region for z in graph.neighbors(x))]
        return Region(graph, inner)
    if kind == "closure":
        return region.union(boundary(graph, region, "outer"))
    raise ValueError(f"unknown boundary kind {kind!r}")


def even_sublattice(d: int) -> LatticeGraph:
    """The even sublattice graph with generator set {x : |x|_1 = 2}.

    The vertex set {x in Z^d : sum x_i even} is re-indexed to Z^d through
    the fixed basis (2e_1, e_1+e_2, ..., e_1+e_d); the returned graph's
    generators are the pre-images of the |x|_1 = 2 vectors.
    """
    if d < 2:
        raise ValueError("even sublattice needs d >= 2")
    basis = np.zeros((d, d), dtype=np.int64)
    basis[0, 0] = 2
    for j in range(1, d):
        basis[0, j] = 1
        basis[j, j] = 1
    inv = np.linalg.inv(basis.astype(float))
    gens = []
    for off in product(range(-2, 3), repeat=d):
        if sum(abs(c) for c in off) == 2:
            pre = inv @ np.array(off, dtype=float)
            pre_int = np.rint(pre).astype(np.int64)
            assert np.array_equal(basis @ pre_int, np.array(off, dtype=np.int64))
            gens.append(tuple(int(c) for c in pre_int))
    graph = build_lattice(d, gens)
    return LatticeGraph(d=d, generators=graph.generators,
                        embedding=tuple(tuple(int(c) for c in row) for row in basis))


def even_gamma(d: int) -> list[Vertex]:
    """The ambient-coordinate generator set {x in Z^d : |x|_1 = 2}."""
    return [off for off in product(range(-2, 3), repeat=d)
            if sum(abs(c) for c in off) == 2]


def is_fstar(region: Region) -> tuple[bool, Optional[Vertex]]:
    """F* predicate: every even vertex of the region has all its 2d nearest
    neighbors inside the region.  Returns (verdict, violating vertex)."""
    d = region.graph.d
    units = [tuple(int(i == j) for j in range(d)) for i in range(d)]
    for x in region:
        if sum(x) % 2 != 0:
            continue
        for u in units:
            for s in (1, -1):
                y = tuple(a + s * b for a, b in zip(x, u))
                if y not in region:
                    return False, x
    return True, None


def fstar_closure(region: Region) -> Region:
    """Smallest superset in F*: add the nearest neighbors of every even
    vertex (new odd vertices never trigger the predicate again)."""
    d = region.graph.d
    units = [tuple(int(i == j) for j in range(d)) for i in range(d)]
    verts = set(region.vertices)
    for x in region:
        if sum(x) % 2 != 0:
            continue
        for u in units:
            for s in (1, -1):
                verts.add(tuple(a + s * b for a, b in zip(x, u)))
    return Region(region.graph, verts)


def graph_distance(graph: LatticeGraph, x: Vertex, y: Vertex,
                   cutoff: Optional[int] = None) -> int:
    """Word-metric distance; exact |.|_1 shortcut on the nearest-neighbor
    lattice, BFS otherwise (with optional cutoff)."""
    x, y = _as_vertex(x), _as_vertex(y)
    diff = tuple(b - a for a, b in zip(x, y))
    if graph.is_nearest_neighbor:
        return sum(abs(c) for c in diff)
    if diff == (0,) * graph.d:
        return 0
    seen = {(0,) * graph.d}
    frontier = [(0,) * graph.d]
    dist = 0
    while frontier:
        dist += 1
        if cutoff is not None and dist > cutoff:
            break
        nxt = []
        for v in frontier:
            for g in graph.generators:
                w = tuple(a + b for a, b in zip(v, g))
                if w == diff:
                    return dist
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    raise ValueError("distance exceeds cutoff")
