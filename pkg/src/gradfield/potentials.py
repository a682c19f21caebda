"""Potential families, Hamiltonians and their derivatives.

Two conventions fixed here and used everywhere else:

* The energy of a field on a finite region Lambda sums the pair potential
  over unordered edges with at least one endpoint in Lambda.  Terms that
  depend only on boundary values shift the energy by a constant and cancel
  in the Gibbs density; they are dropped.
* ``conductance`` returns the negative mixed second derivative of the
  Hamiltonian (no inverse-temperature factor); samplers multiply the
  energy by beta themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import (EllipticityViolation, NonFiniteEnergy, PotentialError,
                     QuadratureFailure)
from .lattice import LatticeGraph, Region, Vertex


# ---------------------------------------------------------------------------
# boundary conditions and field configurations

class BoundaryCondition:
    """Height values outside the region; total on every vertex queried."""

    def __init__(self, fn: Callable[[Vertex], float], label: str = "custom"):
        self._fn = fn
        self.label = label

    @classmethod
    def constant(cls, c: float = 0.0) -> "BoundaryCondition":
        return cls(lambda v: float(c), label=f"const({c})")

    @classmethod
    def from_mapping(cls, values: Mapping[Vertex, float],
                     default: Optional[float] = None) -> "BoundaryCondition":
        values = {tuple(k): float(v) for k, v in values.items()}

        def fn(v):
            v = tuple(v)
            if v in values:
                return values[v]
            if default is None:
                raise KeyError(f"boundary condition undefined at {v}")
            return default

        return cls(fn, label="mapping")

    @classmethod
    def linear(cls, coeffs) -> "BoundaryCondition":
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(lambda v: float(coeffs @ np.asarray(v, dtype=float)),
                   label=f"linear({coeffs.tolist()})")

    def value(self, v: Vertex) -> float:
        return float(self._fn(tuple(v)))

    def shifted(self, c: float) -> "BoundaryCondition":
        return BoundaryCondition(lambda v: self.value(v) + c,
                                 label=f"{self.label}+{c}")

    def negated(self) -> "BoundaryCondition":
        return BoundaryCondition(lambda v: -self.value(v),
                                 label=f"-{self.label}")


@dataclass
class FieldConfig:
    """Heights on a finite region together with a boundary condition.

    ``heights[i]`` belongs to ``region.vertices[i]``.
    """

    region: Region
    heights: np.ndarray
    bc: BoundaryCondition

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        if self.heights.shape != (len(self.region),):
            raise ValueError("heights do not match region size")
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("non-finite heights")

    def value(self, v: Vertex) -> float:
        v = tuple(v)
        if v in self.region:
            return float(self.heights[self.region.index(v)])
        return self.bc.value(v)

    @classmethod
    def zeros(cls, region: Region,
              bc: Optional[BoundaryCondition] = None) -> "FieldConfig":
        return cls(region, np.zeros(len(region)), bc or BoundaryCondition.constant())


# ---------------------------------------------------------------------------
# two-body potentials

@dataclass(frozen=True)
class TwoBody:
    """A symmetric two-body potential V with first and second derivatives.

    ``c0`` is the declared ellipticity constant (c0^-1 <= V'' <= c0) for
    convex families.  ``growth`` = (A, B) certifies V(eta) >= A eta^2 - B,
    which controls quadrature truncation for the even-sublattice reduction.
    ``decomposition`` optionally carries {"U": TwoBody, "g": ., "gp": .,
    "gpp": .} for a convex-plus-perturbation split V = U + g.
    """

    name: str
    v: Callable[[np.ndarray], np.ndarray]
    vp: Callable[[np.ndarray], np.ndarray]
    vpp: Callable[[np.ndarray], np.ndarray]
    convex: bool
    c0: Optional[float]
    growth: tuple[float, float]
    beta: float = 1.0
    decomposition: Optional[dict] = None
    params: tuple = ()

    kind = "two_body"

    def with_beta(self, beta: float) -> "TwoBody":
        if beta <= 0:
            raise ValueError("beta must be positive")
        return replace(self, beta=float(beta))


def quadratic(stiffness: float = 1.0, beta: float = 1.0) -> TwoBody:
    """V(eta) = stiffness * eta^2 / 2 (the Gaussian free field)."""
    k = float(stiffness)
    if k <= 0:
        raise ValueError("stiffness must be positive")
    return TwoBody(
        name="quadratic",
        v=lambda e: 0.5 * k * np.square(e),
        vp=lambda e: k * np.asarray(e, dtype=float),
        vpp=lambda e: np.full_like(np.asarray(e, dtype=float), k),
        convex=True,
        c0=max(k, 1.0 / k),
        growth=(k / 2.0, 0.0),
        beta=beta,
        params=(("stiffness", k),),
    )


def log_cosh(beta: float = 1.0) -> TwoBody:
    """V(eta) = eta^2/2 + log cosh eta; uniformly convex with 1 <= V'' <= 2."""
    def v(e):
        e = np.asarray(e, dtype=float)
        # log cosh without overflow
        return 0.5 * e * e + np.abs(e) + np.log1p(np.exp(-2.0 * np.abs(e))) - math.log(2.0)

    return TwoBody(
        name="log_cosh",
        v=v,
        vp=lambda e: np.asarray(e, dtype=float) + np.tanh(e),
        vpp=lambda e: 1.0 + 1.0 / np.square(np.cosh(np.minimum(np.abs(e), 350.0))),
        convex=True,
        c0=2.0,
        growth=(0.5, 0.0),
        beta=beta,
    )


def double_well(beta: float = 1.0) -> TwoBody:
    """exp(-V) = (eta^2 + 1/2) exp(-eta^2): a non-convex double well.

    Decomposes as U(eta) = eta^2 (uniformly convex) plus
    g(eta) = -log(eta^2 + 1/2); g'' is integrable though not compactly
    supported, which the window scan treats by truncation.
    """
    def g(e):
        e = np.asarray(e, dtype=float)
        return -np.log(e * e + 0.5)

    def gp(e):
        e = np.asarray(e, dtype=float)
        return -2.0 * e / (e * e + 0.5)

    def gpp(e):
        e = np.asarray(e, dtype=float)
        q = e * e + 0.5
        return -(1.0 - 2.0 * e * e) / (q * q)

    return TwoBody(
        name="double_well",
        v=lambda e: np.square(e) + g(e),
        vp=lambda e: 2.0 * np.asarray(e, dtype=float)
        - 2.0 * np.asarray(e, dtype=float) / (np.square(e) + 0.5),
        vpp=lambda e: 2.0 + gpp(e),
        convex=False,
        c0=None,
        growth=(0.5, 2.0),
        beta=beta,
        decomposition={"U": quadratic(2.0), "g": g, "gp": gp, "gpp": gpp},
    )


BUILTIN_POTENTIALS = {
    "quadratic": quadratic,
    "log_cosh": log_cosh,
    "double_well": double_well,
}


def from_config(kind: str, beta: float = 1.0, **params) -> TwoBody:
    """Named built-in potentials with numeric parameters."""
    if kind not in BUILTIN_POTENTIALS:
        raise PotentialError(f"unknown potential kind {kind!r}; "
                             f"choose from {sorted(BUILTIN_POTENTIALS)}")
    return BUILTIN_POTENTIALS[kind](**params).with_beta(beta)


# ---------------------------------------------------------------------------
# vectorized lattice system for energy/gradient evaluation

class LatticeSystem:
    """Precomputed neighbor tables for a (graph, region, bc) triple.

    ``nbr_idx[i, j]`` is the region index of vertex i's j-th neighbor, or
    -1 when that neighbor lies outside; ``nbr_out[i, j]`` then holds its
    boundary value.  ``weight`` is 1/2 on interior ordered edges (each
    unordered edge appears twice) and 1 on boundary edges.
    """

    def __init__(self, graph: LatticeGraph, region: Region, bc: BoundaryCondition):
        self.graph = graph
        self.region = region
        self.bc = bc
        n, g = len(region), graph.degree
        self.nbr_idx = np.full((n, g), -1, dtype=np.int64)
        self.nbr_out = np.zeros((n, g), dtype=float)
        for i, x in enumerate(region.vertices):
            for j, y in enumerate(graph.neighbors(x)):
                if y in region:
                    self.nbr_idx[i, j] = region.index(y)
                else:
                    self.nbr_out[i, j] = bc.value(y)
        self.inside = self.nbr_idx >= 0
        self.weight = np.where(self.inside, 0.5, 1.0)

    def neighbor_values(self, phi: np.ndarray) -> np.ndarray:
        vals = np.where(self.inside, phi[np.maximum(self.nbr_idx, 0)], self.nbr_out)
        return vals

    def energy_grad(self, potential: TwoBody, phi: np.ndarray):
        """(H(phi), dH/dphi) without the beta factor."""
        eta = phi[:, None] - self.neighbor_values(phi)
        energy = float(np.sum(self.weight * potential.v(eta)))
        grad = np.sum(potential.vp(eta), axis=1)
        return energy, grad

    def energy(self, potential: TwoBody, phi: np.ndarray) -> float:
        eta = phi[:, None] - self.neighbor_values(phi)
        return float(np.sum(self.weight * potential.v(eta)))


def hamiltonian_and_grad(potential, graph: LatticeGraph, field: FieldConfig):
    """Energy H^xi_Lambda(phi) (up to a bc-only constant) and its gradient.

    For many-body effective potentials see evenred.EvenModel, which owns
    the geometry needed to assemble them.
    """
    if getattr(potential, "kind", None) != "two_body":
        raise PotentialError("hamiltonian_and_grad handles two-body potentials; "
                             "use evenred.EvenModel for the effective even family")
    system = LatticeSystem(graph, field.region, field.bc)
    energy, grad = system.energy_grad(potential, field.heights)
    if not (np.isfinite(energy) and np.all(np.isfinite(grad))):
        raise NonFiniteEnergy("Hamiltonian evaluation overflowed")
    return energy, grad


def conductance(potential, graph: LatticeGraph, field: FieldConfig,
                edge: tuple[Vertex, Vertex]) -> float:
    """a_{x,y}(phi) = -d^2 H / dphi_x dphi_y for an edge of E_Lambda."""
    x, y = tuple(edge[0]), tuple(edge[1])
    diff = tuple(b - a for a, b in zip(x, y))
    if diff not in potential_edge_set(graph):
        raise ValueError(f"{x}->{y} is not an edge of the graph")
    if x not in field.region:
        raise ValueError("edge must have its first endpoint in the region")
    if getattr(potential, "kind", None) == "effective_even":
        return potential.conductance_ambient(graph, field, x, y)
    a = float(potential.vpp(np.array([field.value(y) - field.value(x)]))[0])
    if potential.convex and potential.c0 is not None:
        lo, hi = 1.0 / potential.c0, potential.c0
        if a < lo - 1e-9 or a > hi + 1e-9:
            raise EllipticityViolation(
                f"conductance {a} outside [{lo}, {hi}] for convex potential "
                f"{potential.name}")
    return a


def potential_edge_set(graph: LatticeGraph) -> frozenset:
    return frozenset(graph.generators)


def check_convexity(potential, lo: float = -20.0, hi: float = 20.0,
                    step: float = 0.01, n_probes: int = 2000,
                    seed: int = 0) -> dict:
    """Grid report of the conductance range.

    Two-body: min/max of V'' on the grid.  Effective even family:
    Monte Carlo probes of the summed pair conductance for both even-edge
    types (one resp. two shared odd vertices).
    """
    if getattr(potential, "kind", None) == "effective_even":
        return potential.convexity_probe(lo, hi, n_probes, seed)
    grid = np.arange(lo, hi + step / 2, step)
    vals = potential.vpp(grid)
    violations = grid[vals <= 0.0]
    return {
        "c0_lower": float(np.min(vals)),
        "c0_upper": float(np.max(vals)),
        "violations": [float(v) for v in violations[:100]],
        "n_violations": int(violations.size),
        "grid": (float(lo), float(hi), float(step)),
    }


# ---------------------------------------------------------------------------
# even-sublattice effective potential

class EffectiveEven:
    """The many-body potential obtained by integrating out one odd site.

    tilde_V((eta_i)_{i in U}) = -log int exp(-beta sum_i V(eta_i - s)) ds
    with |U| = 2d.  Quadratic bases admit a closed form; everything else
    goes through adaptive Simpson quadrature on a truncated domain chosen
    from the growth certificate V >= A eta^2 - B.
    """

    kind = "effective_even"
    convex = None  # decided empirically via convexity_probe
    c0 = None

    _TAIL_LOG = 46.0  # integrand below e^-46 of its peak outside truncation

    def __init__(self, base: TwoBody, beta: float, d: int, tol: float = 1e-8):
        if base.kind != "two_body":
            raise PotentialError("effective potential needs a two-body base")
        A, B = base.growth
        if A <= 0:
            raise PotentialError("base potential lacks a quadratic growth bound")
        if tol <= 0:
            raise ValueError("tol must be positive")
        self.base = base
        self.beta = float(beta)
        self.d = int(d)
        self.k = 2 * self.d
        self.tol = float(tol)
        self.name = f"effective_even({base.name})"
        self._quadratic_stiffness = None
        if base.name == "quadratic":
            self._quadratic_stiffness = dict(base.params)["stiffness"]

    # -- closed form for the Gaussian base ---------------------------------

    def _closed_form(self, etas: np.ndarray) -> np.ndarray:
        kap, k, b = self._quadratic_stiffness, self.k, self.beta
        s1 = np.sum(etas, axis=1)
        s2 = np.sum(np.square(etas), axis=1)
        return 0.5 * b * kap * (s2 - s1 * s1 / k) - 0.5 * math.log(
            2.0 * math.pi / (b * kap * k))

    def _closed_form_grad(self, etas: np.ndarray) -> np.ndarray:
        kap, k, b = self._quadratic_stiffness, self.k, self.beta
        return b * kap * (etas - np.sum(etas, axis=1)[:, None] / k)

    # -- quadrature --------------------------------------------------------

    def _s_grid(self, etas: np.ndarray, n: int) -> np.ndarray:
        A, B = self.base.growth
        emax = float(np.max(np.abs(etas))) if etas.size else 0.0
        s_star = emax + math.sqrt((self._TAIL_LOG + self.beta * self.k * B)
                                  / (self.beta * A))
        return np.linspace(-s_star, s_star, n)

    def _log_integrand(self, etas: np.ndarray, s: np.ndarray) -> np.ndarray:
        # shape (m, n_s)
        diff = etas[:, :, None] - s[None, None, :]
        return -self.beta * np.sum(self.base.v(diff), axis=1)

    def _simpson(self, vals: np.ndarray, h: float) -> np.ndarray:
        w = np.ones(vals.shape[-1])
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return np.sum(vals * w, axis=-1) * h / 3.0

    def value(self, etas: np.ndarray) -> np.ndarray:
        """tilde_V row-wise on an (m, 2d) array of gradient vectors."""
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        if etas.shape[1] != self.k:
            raise ValueError(f"expected {self.k} gradient entries per row")
        if self._quadratic_stiffness is not None:
            return self._closed_form(etas)
        return self._quadrature(etas)[0]

    def _quadrature(self, etas: np.ndarray, with_grad: bool = False,
                    with_cov: Optional[tuple[int, int]] = None):
        prev = None
        n = 129
        while n <= (1 << 15) + 1:
            s = self._s_grid(etas, n)
            h = s[1] - s[0]
            logf = self._log_integrand(etas, s)
            m = np.max(logf, axis=1, keepdims=True)
            f = np.exp(logf - m)
            integral = self._simpson(f, h)
            val = -(m[:, 0] + np.log(integral))
            if prev is not None and np.max(np.abs(val - prev)) <= self.tol:
                grad = cov = None
                if with_grad:
                    vp = self.base.vp(etas[:, :, None] - s[None, None, :])
                    norm = integral[:, None]
                    grad = self.beta * self._simpson(f[:, None, :] * vp, h) / norm
                if with_cov is not None:
                    i, j = with_cov
                    vpi = self.base.vp(etas[:, i, None] - s[None, :])
                    vpj = self.base.vp(etas[:, j, None] - s[None, :])
                    ei = self._simpson(f * vpi, h) / integral
                    ej = self._simpson(f * vpj, h) / integral
                    eij = self._simpson(f * vpi * vpj, h) / integral
                    cov = self.beta ** 2 * (eij - ei * ej)
                return val, grad, cov
            prev = val
            n = 2 * (n - 1) + 1
        raise QuadratureFailure(
            f"effective potential quadrature did not reach tol={self.tol}")

    def value_and_grad(self, etas: np.ndarray):
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        if self._quadratic_stiffness is not None:
            return self._closed_form(etas), self._closed_form_grad(etas)
        val, grad, _ = self._quadrature(etas, with_grad=True)
        return val, grad

    def pair_conductance(self, etas: np.ndarray, i: int, j: int) -> np.ndarray:
        """-d^2 tilde_V / d eta_i d eta_j = beta^2 Cov_s(V'(eta_i-s), V'(eta_j-s))."""
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        if self._quadratic_stiffness is not None:
            kap = self._quadratic_stiffness
            return np.full(etas.shape[0], self.beta * kap / self.k)
        _, _, cov = self._quadrature(etas, with_cov=(i, j))
        return cov

    def convexity_probe(self, lo: float, hi: float, n_probes: int,
                        seed: int) -> dict:
        """MC estimate of the conductance range over random gradient vectors.

        Probes both even-edge types: an axis edge (x - z = 2 e_a) shares one
        odd vertex, a diagonal edge (x - z = e_a + e_b) shares two.
        """
        from .rng import stream
        gen = stream(seed, 0)
        etas = gen.uniform(lo, hi, size=(n_probes, self.k))
        single = self.pair_conductance(etas, 0, 1)
        etas2 = gen.uniform(lo, hi, size=(n_probes, self.k))
        double = self.pair_conductance(etas, 0, 2) + \
            self.pair_conductance(etas2, 1, 3)
        both = np.concatenate([single, double])
        violations = both[both <= 0.0]
        return {
            "c0_lower": float(np.min(both)),
            "c0_upper": float(np.max(both)),
            "violations": [float(v) for v in violations[:100]],
            "n_violations": int(violations.size),
            "grid": (float(lo), float(hi), None),
            "n_probes": int(n_probes),
        }

    def conductance_ambient(self, graph: LatticeGraph, field: FieldConfig,
                            x: Vertex, z: Vertex) -> float:
        """Summed conductance across an even-graph edge on an actual field.

        Sums beta^2 Cov_s(V'(phi_x - s), V'(phi_z - s)) over odd ambient
        vertices adjacent to both endpoints.
        """
        ax = np.array(graph.to_ambient(x), dtype=np.int64)
        az = np.array(graph.to_ambient(z), dtype=np.int64)
        d = len(ax)
        units = np.vstack([np.eye(d, dtype=np.int64), -np.eye(d, dtype=np.int64)])
        shared = [tuple(ax + u) for u in units
                  if np.sum(np.abs(ax + u - az)) == 1]
        total = 0.0
        for y in shared:
            ya = np.array(y, dtype=np.int64)
            nbrs = [tuple(ya + u) for u in units]
            vals = np.array([field.value(graph.from_ambient(v)) for v in nbrs])
            i = nbrs.index(tuple(ax))
            j = nbrs.index(tuple(az))
            total += float(self.pair_conductance(vals[None, :], i, j)[0])
        return total


def effective_even_potential(base: TwoBody, beta: float, tol: float = 1e-8,
                             d: int = 3) -> EffectiveEven:
    """Assemble the effective even-sublattice potential for a two-body base."""
    return EffectiveEven(base, beta=beta, d=d, tol=tol)
