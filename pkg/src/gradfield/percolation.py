"""Level-set percolation: cluster labeling, connectivity and crossing
estimators, chemical distance, proper tree embeddings, and the one-step
renormalization bookkeeping.

Scales: L_k = base * R^k.  Strict mode uses the analysis constants
(base 100, R >= 100^2, ball multiplier 10), which are astronomically
large; desk-scale runs shrink (base, multiplier) while preserving every
ratio constraint, and record the deviation in their reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (BudgetExceeded, NoEmbeddingExists, NotAdapted)
from .decoupling import ConstantsConfig, MonotoneEvent
from .lattice import LatticeGraph, Region, Vertex, ball
from .potentials import BoundaryCondition, FieldConfig
from .rng import stream
from .sampler import SampleStream, gaussian_exact_sample


# ---------------------------------------------------------------------------
# sampler handles

@dataclass
class SamplerHandle:
    """Uniform interface the estimators draw samples through."""

    graph: LatticeGraph
    region: Region
    draw: Callable[[int, int, int], SampleStream]  # (n, seed, stream_id)
    label: str = "custom"


def gaussian_handle(graph: LatticeGraph, region: Region,
                    stiffness: float = 1.0,
                    bc: Optional[BoundaryCondition] = None) -> SamplerHandle:
    bc = bc or BoundaryCondition.constant(0.0)
    return SamplerHandle(
        graph, region,
        draw=lambda n, seed, sid: gaussian_exact_sample(
            graph, region, bc, stiffness=stiffness, n=n, seed=seed,
            stream_id=sid),
        label="gaussian_exact")


# ---------------------------------------------------------------------------
# clusters

class ClusterLabeling:
    """Union-find labeling of the occupied set {phi >= h} in a region."""

    def __init__(self, region: Region, occupied: np.ndarray,
                 labels: np.ndarray):
        self.region = region
        self.occupied = occupied
        self.labels = labels  # root region-index per occupied site, -1 else
        roots, counts = np.unique(labels[labels >= 0], return_counts=True)
        self.sizes = dict(zip(roots.tolist(), counts.tolist()))

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    def same_cluster(self, x: Vertex, y: Vertex) -> bool:
        ix, iy = self.region.index(x), self.region.index(y)
        return self.labels[ix] >= 0 and self.labels[ix] == self.labels[iy]


def _find(parent: np.ndarray, i: int) -> int:
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def clusters(field: FieldConfig, h: float) -> ClusterLabeling:
    region = field.region
    graph = region.graph
    occ = field.heights >= h
    n = len(region)
    parent = np.arange(n)
    for i, x in enumerate(region.vertices):
        if not occ[i]:
            continue
        for y in graph.neighbors(x):
            if y in region:
                j = region.index(y)
                if occ[j]:
                    ri, rj = _find(parent, i), _find(parent, j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    labels = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if occ[i]:
            labels[i] = _find(parent, i)
    return ClusterLabeling(region, occ, labels)


def clusters_bfs(field: FieldConfig, h: float) -> ClusterLabeling:
    """Flood-fill reference labeling; oracle for the union-find version."""
    region = field.region
    graph = region.graph
    occ = field.heights >= h
    n = len(region)
    labels = np.full(n, -1, dtype=np.int64)
    for start in range(n):
        if not occ[start] or labels[start] >= 0:
            continue
        comp = [start]
        labels[start] = start
        queue = [start]
        while queue:
            i = queue.pop()
            for y in graph.neighbors(region.vertices[i]):
                if y in region:
                    j = region.index(y)
                    if occ[j] and labels[j] < 0:
                        labels[j] = start
                        comp.append(j)
                        queue.append(j)
        root = min(comp)
        for i in comp:
            labels[i] = root
    return ClusterLabeling(region, occ, labels)


def chemical_distance(labeling: ClusterLabeling, x: Vertex, y: Vertex):
    """BFS distance inside the occupied set; math.inf when disconnected."""
    region = labeling.region
    graph = region.graph
    ix, iy = region.index(x), region.index(y)
    if labeling.labels[ix] < 0 or labeling.labels[iy] < 0:
        return math.inf
    if labeling.labels[ix] != labeling.labels[iy]:
        return math.inf
    if ix == iy:
        return 0
    dist = {ix: 0}
    frontier = [ix]
    while frontier:
        nxt = []
        for i in frontier:
            for z in graph.neighbors(region.vertices[i]):
                if z in region:
                    j = region.index(z)
                    if labeling.labels[j] >= 0 and j not in dist:
                        dist[j] = dist[i] + 1
                        if j == iy:
                            return dist[j]
                        nxt.append(j)
        frontier = nxt
    return math.inf


# ---------------------------------------------------------------------------
# connectivity / crossing estimators

def connectivity(handle: SamplerHandle, x: Vertex, y: Vertex, h: float,
                 n: int, seed: int = 0):
    """mu(x <-> y in the level set at h), Monte Carlo."""
    s = handle.draw(n, seed, 0)
    hits = 0
    for i in range(n):
        lab = clusters(s[i], h)
        if tuple(x) == tuple(y):
            hits += int(lab.labels[s.region.index(x)] >= 0)
        else:
            hits += int(lab.same_cluster(x, y))
    p = hits / n
    return p, math.sqrt(max(p * (1 - p), 1e-12) / n)


def crossing_indicator(field: FieldConfig, center: Vertex, L: int,
                       h: float) -> bool:
    """1{B_L(center) <-> boundary of B_2L(center) in the level set}.

    Balls are ell-infinity boxes; the crossing target is the shell at
    ell-infinity distance exactly 2L.
    """
    region = field.region
    graph = region.graph
    center = tuple(center)
    occ = field.heights >= h
    for v in ball(graph, center, 2 * L, metric="ellinf"):
        if v not in region:
            raise ValueError("B(center, 2L) must lie inside the region")
    start = []
    for v in ball(graph, center, L, metric="ellinf"):
        i = region.index(v)
        if occ[i]:
            start.append(i)
    seen = set(start)
    frontier = list(start)
    while frontier:
        nxt = []
        for i in frontier:
            v = region.vertices[i]
            if max(abs(a - b) for a, b in zip(v, center)) >= 2 * L:
                return True
            for z in graph.neighbors(v):
                if max(abs(a - b) for a, b in zip(z, center)) > 2 * L:
                    continue
                if z in region:
                    j = region.index(z)
                    if occ[j] and j not in seen:
                        seen.add(j)
                        nxt.append(j)
        frontier = nxt
    return False


def crossing_probability(handle: SamplerHandle, center: Vertex, L: int,
                         h: float, n: int, seed: int = 0):
    s = handle.draw(n, seed, 0)
    hits = sum(int(crossing_indicator(s[i], center, L, h)) for i in range(n))
    p = hits / n
    return p, math.sqrt(max(p * (1 - p), 1e-12) / n)


# ---------------------------------------------------------------------------
# proper embeddings

def _l1(a: Vertex, b: Vertex) -> int:
    return sum(abs(x - y) for x, y in zip(a, b))


@dataclass
class ProperEmbedding:
    x0: Vertex
    n: int
    R: int
    base: int
    ball_mult: int
    variant: str  # Xi | XiStar
    tau: dict  # node string -> vertex
    d: int
    strict: bool = True

    def scale(self, depth: int) -> int:
        """L_{n - depth}: the scale attached to tree depth ``depth``."""
        return self.base * self.R ** (self.n - depth)

    def ball_radius(self, depth: int) -> int:
        return self.ball_mult * self.scale(depth)

    def leaves(self) -> list[str]:
        return [format(i, f"0{self.n}b") if self.n else ""
                for i in range(2 ** self.n)]

    def tilde_ball(self, node: str, graph: LatticeGraph) -> Region:
        return ball(graph, self.tau[node], self.ball_radius(len(node)),
                    metric="ell1")


def validate_embedding(emb: ProperEmbedding) -> bool:
    """Re-check every structural constraint from scratch."""
    if emb.tau[""] != tuple(emb.x0):
        return False
    if len(emb.tau) != 2 ** (emb.n + 1) - 1:
        return False
    for node, v in emb.tau.items():
        L = emb.scale(len(node))
        if any(c % L != 0 for c in v):
            return False
    for k in range(emb.n):
        for idx in range(2 ** k):
            m = format(idx, f"0{k}b") if k else ""
            cp, c0, c1 = emb.tau[m], emb.tau[m + "0"], emb.tau[m + "1"]
            L_p, L_c = emb.scale(k), emb.scale(k + 1)
            r_p, r_c = emb.ball_mult * L_p, emb.ball_mult * L_c
            if _l1(c0, cp) + r_c > r_p or _l1(c1, cp) + r_c > r_p:
                return False
            if _l1(c0, c1) - 2 * r_c < L_p / emb.base:
                return False
            if emb.variant == "XiStar" and 1 <= k < emb.n:
                L_cc = emb.scale(k + 1)
                if _l1(c0, cp) > L_cc + L_p:
                    return False
                if _l1(c1, cp) > L_cc + 1.5 * L_p:
                    return False
    return True


def _child_offsets(L_p: int, L_c: int, ball_mult: int, d: int):
    """Grid range (in child-scale units) allowed by the containment rule."""
    reach = ball_mult * (L_p - L_c)
    return reach // L_c


def proper_embeddings(x0: Vertex, n: int, R: int, graph: LatticeGraph,
                      variant: str = "Xi", mode: str = "sample",
                      k: int = 1, seed: int = 0, budget: int = 10000,
                      strict: bool = True, base: int = 100,
                      ball_mult: int = 10) -> list[ProperEmbedding]:
    """Proper embeddings of the depth-n binary tree based at x0.

    mode 'sample' returns k embeddings found by rejection sampling;
    mode 'enumerate' returns all embeddings, raising BudgetExceeded once
    more than ``budget`` would be produced.
    """
    if variant not in ("Xi", "XiStar"):
        raise ValueError("variant must be Xi or XiStar")
    if strict:
        base, ball_mult = 100, 10
        if R < 100 ** 2:
            raise ValueError("strict mode needs R >= 100^2; "
                             "pass strict=False for desk-scale runs")
    x0 = tuple(x0)
    d = graph.d
    proto = ProperEmbedding(x0=x0, n=n, R=R, base=base, ball_mult=ball_mult,
                            variant=variant, tau={}, d=d, strict=strict)
    L_top = proto.scale(0)
    if any(c % L_top != 0 for c in x0):
        raise NoEmbeddingExists(f"base {x0} is not on the top-scale grid "
                                f"{L_top}Z^d")
    if n == 0:
        emb = ProperEmbedding(x0=x0, n=0, R=R, base=base,
                              ball_mult=ball_mult, variant=variant,
                              tau={"": x0}, d=d, strict=strict)
        return [emb] * (k if mode == "sample" else 1)

    def pair_ok(cp, c0, c1, depth):
        L_p, L_c = proto.scale(depth), proto.scale(depth + 1)
        r_c = ball_mult * L_c
        if _l1(c0, cp) + r_c > ball_mult * L_p:
            return False
        if _l1(c1, cp) + r_c > ball_mult * L_p:
            return False
        if _l1(c0, c1) - 2 * r_c < L_p / base:
            return False
        if variant == "XiStar" and 1 <= depth < n:
            if _l1(c0, cp) > L_c + L_p:
                return False
            if _l1(c1, cp) > L_c + 1.5 * L_p:
                return False
        return True

    def feasible(depth):
        # deterministic witness: symmetric children along the first axis,
        # scanning inward so tighter XiStar proximity bounds are honored
        L_p, L_c = proto.scale(depth), proto.scale(depth + 1)
        reach = _child_offsets(L_p, L_c, ball_mult, d)
        zero = (0,) * d
        for r in range(reach, 0, -1):
            off = tuple([r * L_c] + [0] * (d - 1))
            c0 = tuple(-o for o in off)
            if pair_ok(zero, c0, off, depth):
                return True
        return False

    for depth in range(n):
        if not feasible(depth):
            raise NoEmbeddingExists(
                f"no child placement at depth {depth} for (n={n}, R={R}, "
                f"base={base}, ball_mult={ball_mult})")

    if mode == "sample":
        gen = stream(seed, 0)
        out = []
        attempts = 0
        while len(out) < k:
            attempts += 1
            if attempts > 1000 * k:
                raise NoEmbeddingExists("rejection sampling failed; "
                                        "geometry too tight")
            tau = {"": x0}
            ok = True
            for depth in range(n):
                L_p, L_c = proto.scale(depth), proto.scale(depth + 1)
                reach = _child_offsets(L_p, L_c, ball_mult, d)
                for idx in range(2 ** depth):
                    m = format(idx, f"0{depth}b") if depth else ""
                    cp = tau[m]
                    placed = False
                    for _ in range(500):
                        o0 = gen.integers(-reach, reach + 1, size=d) * L_c
                        o1 = gen.integers(-reach, reach + 1, size=d) * L_c
                        c0 = tuple(int(a + b) for a, b in zip(cp, o0))
                        c1 = tuple(int(a + b) for a, b in zip(cp, o1))
                        if pair_ok(cp, c0, c1, depth):
                            tau[m + "0"], tau[m + "1"] = c0, c1
                            placed = True
                            break
                    if not placed:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            emb = ProperEmbedding(x0=x0, n=n, R=R, base=base,
                                  ball_mult=ball_mult, variant=variant,
                                  tau=tau, d=d, strict=strict)
            if validate_embedding(emb):
                out.append(emb)
        return out

    if mode == "enumerate":
        out = []

        def place(depth_nodes, tau):
            if not depth_nodes:
                emb = ProperEmbedding(x0=x0, n=n, R=R, base=base,
                                      ball_mult=ball_mult, variant=variant,
                                      tau=dict(tau), d=d, strict=strict)
                out.append(emb)
                if len(out) > budget:
                    raise BudgetExceeded(
                        f"more than {budget} embeddings exist")
                return
            m = depth_nodes[0]
            depth = len(m)
            L_p, L_c = proto.scale(depth), proto.scale(depth + 1)
            reach = _child_offsets(L_p, L_c, ball_mult, d)
            cp = tau[m]
            from itertools import product as iproduct
            rng = range(-reach, reach + 1)
            for o0 in iproduct(rng, repeat=d):
                c0 = tuple(a + b * L_c for a, b in zip(cp, o0))
                for o1 in iproduct(rng, repeat=d):
                    c1 = tuple(a + b * L_c for a, b in zip(cp, o1))
                    if pair_ok(cp, c0, c1, depth):
                        tau[m + "0"], tau[m + "1"] = c0, c1
                        children = [m + "0", m + "1"] if depth + 1 < n else []
                        place(depth_nodes[1:] + children, tau)
                        del tau[m + "0"], tau[m + "1"]

        place([""], {"": x0})
        return out

    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# renormalization step

def eps_n(constants: ConstantsConfig, n: int, R: int) -> float:
    """Smallest admissible sprinkling at step n: c14 [2^{2n}/R^{n+1}]^{1/2}."""
    return constants.c14 * math.sqrt(2.0 ** (2 * n) / R ** (n + 1))


def delta_n(constants: ConstantsConfig, n: int, R: int) -> float:
    """One-step error: exp(-c15 sqrt(R)^{n+1})."""
    return math.exp(-constants.c15 * math.sqrt(R) ** (n + 1))


def renorm_step_check(handle: SamplerHandle, tau: ProperEmbedding,
                      leaf_events: dict, h: float, eps: float,
                      n_samples: int, constants: Optional[ConstantsConfig] = None,
                      seed: int = 0) -> dict:
    """One-step renormalization inequality on leaf events of a depth-(n+1)
    embedding: mu(all leaves at h) vs product of the two half-tree
    probabilities at h - eps, plus delta_n."""
    constants = constants or ConstantsConfig()
    step = tau.n - 1  # Lemma index n for a depth n+1 embedding
    if step < 0:
        raise ValueError("embedding must have depth at least 1")
    e_min = eps_n(constants, step, tau.R)
    if eps < e_min:
        raise ValueError(f"eps = {eps} below eps_n = {e_min}")
    leaves = tau.leaves()
    for m in leaves:
        if m not in leaf_events:
            raise ValueError(f"missing event for leaf {m}")
        allowed = tau.tilde_ball(m, handle.graph)
        for s in leaf_events[m].support:
            if s not in allowed:
                raise NotAdapted(f"event support {s} escapes the ball of "
                                 f"leaf {m}")
    left = [m for m in leaves if m.startswith("0")]
    right = [m for m in leaves if m.startswith("1")]
    all_event = MonotoneEvent.all_of(*[leaf_events[m] for m in leaves])
    left_event = MonotoneEvent.all_of(*[leaf_events[m] for m in left])
    right_event = MonotoneEvent.all_of(*[leaf_events[m] for m in right])

    def est(event, level, sid):
        s = handle.draw(n_samples, seed, sid)
        v = event.evaluate_batch(s.fields, handle.region, level)
        p = float(np.mean(v))
        return p, math.sqrt(max(p * (1 - p), 1e-12) / n_samples)

    lhs, lhs_se = est(all_event, h, 0)
    p0, p0_se = est(left_event, h - eps, 1)
    p1, p1_se = est(right_event, h - eps, 2)
    dn = delta_n(constants, step, tau.R)
    rhs = p0 * p1 + dn
    rhs_se = math.sqrt((p0 * p1_se) ** 2 + (p1 * p0_se) ** 2)
    ok = lhs <= rhs + 3.0 * math.sqrt(lhs_se ** 2 + rhs_se ** 2)
    return {"lhs": lhs, "lhs_se": lhs_se, "p_left": p0, "p_right": p1,
            "delta_n": dn, "rhs": rhs, "rhs_se": rhs_se,
            "eps": eps, "eps_n": e_min, "h": h, "R": tau.R,
            "strict_scales": tau.strict, "pass": bool(ok)}


def h_plus_scan(handle: SamplerHandle, h_grid: Sequence[float],
                L_grid: Sequence[int], n: int, seed: int = 0,
                center: Optional[Vertex] = None) -> dict:
    """Crossing probabilities over an (h, L) grid with stretched
    exponential decay fits log p = log c - c' L^rho per level h.

    Shared samples across the h grid make the estimates exactly monotone
    in h per seed.  No threshold location is claimed.
    """
    center = tuple(center) if center is not None else (0,) * handle.graph.d
    # ascending h is required for the early break below
    h_grid = sorted(h_grid)
    L_grid = list(L_grid)
    s = handle.draw(n, seed, 0)
    p = np.zeros((len(h_grid), len(L_grid)))
    for j, L in enumerate(L_grid):
        for i_s in range(n):
            f = s[i_s]
            for i, h in enumerate(h_grid):
                if crossing_indicator(f, center, L, h):
                    p[i, j] += 1
                else:
                    break  # monotone in h: once failed, higher h fail too
    p /= n
    fits = []
    for i, h in enumerate(h_grid):
        row = p[i]
        mask = row > 0
        if np.count_nonzero(mask) >= 3 and np.any(row < 1):
            from scipy.optimize import curve_fit
            Ls = np.array(L_grid, dtype=float)[mask]
            ys = np.log(row[mask])
            try:
                popt, _ = curve_fit(
                    lambda L, logc, cp, rho: logc - cp * L ** rho,
                    Ls, ys, p0=(0.0, 0.5, 0.5),
                    bounds=([-10, 0, 0.01], [10, 50, 1.0]), maxfev=5000)
                resid = ys - (popt[0] - popt[1] * Ls ** popt[2])
                fits.append({"h": h, "log_c": float(popt[0]),
                             "c_prime": float(popt[1]),
                             "rho": float(popt[2]),
                             "rms_residual": float(np.sqrt(np.mean(resid ** 2)))})
            except RuntimeError:
                fits.append({"h": h, "fit_failed": True})
        else:
            fits.append({"h": h, "fit_skipped": True})
    return {"h_grid": h_grid, "L_grid": L_grid, "p": p.tolist(),
            "fits": fits, "n": n, "seed": seed}
