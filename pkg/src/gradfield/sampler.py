"""Samplers for the finite-volume gradient Gibbs measure.

Three MCMC methods plus an exact Gaussian oracle:

* heatbath: sequential exact single-site conditional draws, vectorized
  over a greedy coloring of the region (same-color sites are conditionally
  independent).  Non-Gaussian conditionals are drawn by rejection from a
  Gaussian envelope built from the curvature bounds, which is exact.
* mala: Euler-Maruyama proposals corrected by a Metropolis step, so the
  chain is exactly invariant for the target.  The step size is auto-tuned
  during burn-in and frozen afterwards.
* langevin: the uncorrected discretization, biased O(dt); used where the
  walk-in-environment needs the raw dynamics.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import (DivergedChain, MethodUnsupported, RegionTooLarge,
                     TooFewSamples)
from .lattice import LatticeGraph, Region, graph_distance
from .potentials import (BoundaryCondition, FieldConfig, LatticeSystem,
                         TwoBody)
from .rng import state_of, stream

DIVERGENCE_GUARD = 1e6


@dataclass
class SampleStream:
    """Ordered field samples with the metadata needed to reproduce them."""

    region: Region
    bc: BoundaryCondition
    fields: np.ndarray  # (n_samples, |region|)
    meta: dict = dc_field(default_factory=dict)

    def __len__(self):
        return self.fields.shape[0]

    def __getitem__(self, i: int) -> FieldConfig:
        return FieldConfig(self.region, self.fields[i], self.bc)

    def heights_at(self, v) -> np.ndarray:
        return self.fields[:, self.region.index(v)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k} = {self.meta[k]}\n")
        buf.write(",".join("v" + "_".join(map(str, v))
                           for v in self.region.vertices) + "\n")
        for row in self.fields:
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        return buf.getvalue()


@dataclass
class ChainState:
    field: FieldConfig
    step_count: int
    rng_state: dict
    method: str


def _color_classes(graph: LatticeGraph, region: Region) -> list[np.ndarray]:
    """Greedy coloring; same-color vertices are never graph-adjacent."""
    colors = np.full(len(region), -1, dtype=np.int64)
    for i, x in enumerate(region.vertices):
        used = {colors[region.index(y)] for y in graph.neighbors(x)
                if y in region and colors[region.index(y)] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return [np.flatnonzero(colors == c) for c in range(int(colors.max()) + 1)]


def _region_diameter(graph: LatticeGraph, region: Region) -> int:
    arr = region.as_array()
    return max(1, int(np.sum(np.max(arr, axis=0) - np.min(arr, axis=0))))


class _TwoBodyChain:
    """Shared machinery for the MCMC methods on a two-body potential."""

    def __init__(self, potential: TwoBody, graph: LatticeGraph, region: Region,
                 bc: BoundaryCondition):
        self.potential = potential
        self.beta = potential.beta
        self.system = LatticeSystem(graph, region, bc)
        self.n = len(region)
        self.deg = graph.degree

    def grad(self, phi: np.ndarray) -> np.ndarray:
        eta = phi[:, None] - self.system.neighbor_values(phi)
        return np.sum(self.potential.vp(eta), axis=1)

    def energy(self, phi: np.ndarray) -> float:
        return self.system.energy(self.potential, phi)

    # -- heat bath ---------------------------------------------------------

    def _site_mode(self, nvals: np.ndarray) -> np.ndarray:
        """Root of sum_j V'(phi - n_j) = 0 per row, by bisection.

        The map is strictly increasing for convex V, and the root lies
        between min and max of the neighbor values.
        """
        lo = np.min(nvals, axis=1).copy()
        hi = np.max(nvals, axis=1).copy()
        pad = np.maximum(1.0, hi - lo)
        lo -= 0.01 * pad
        hi += 0.01 * pad
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            val = np.sum(self.potential.vp(mid[:, None] - nvals), axis=1)
            hi = np.where(val > 0, mid, hi)
            lo = np.where(val > 0, lo, mid)
        return 0.5 * (lo + hi)

    def heatbath_sweep(self, phi: np.ndarray, classes, gen) -> None:
        pot, beta, deg = self.potential, self.beta, self.deg
        quadratic = pot.name == "quadratic"
        kappa = dict(pot.params).get("stiffness") if quadratic else None
        for idx in classes:
            nvals = self.system.neighbor_values(phi)[idx]
            if quadratic:
                mean = np.mean(nvals, axis=1)
                sd = 1.0 / math.sqrt(beta * kappa * deg)
                phi[idx] = mean + sd * gen.standard_normal(idx.size)
                continue
            # rejection from the Gaussian envelope given by the lower
            # curvature bound lambda = beta * deg / c0
            mode = self._site_mode(nvals)
            lam = beta * deg / pot.c0
            sd = 1.0 / math.sqrt(lam)
            f0 = beta * np.sum(pot.v(mode[:, None] - nvals), axis=1)
            out = np.empty(idx.size)
            todo = np.arange(idx.size)
            while todo.size:
                prop = mode[todo] + sd * gen.standard_normal(todo.size)
                f = beta * np.sum(pot.v(prop[:, None] - nvals[todo]), axis=1)
                delta = f - f0[todo] - 0.5 * lam * np.square(prop - mode[todo])
                accept = gen.random(todo.size) < np.exp(-np.maximum(delta, 0.0))
                out[todo[accept]] = prop[accept]
                todo = todo[~accept]
            phi[idx] = out


def _run_mala(gradf: Callable, energyf: Callable, n_sites: int, beta: float,
              dt0: float, n_samples: int, burn_in: int, thinning: int,
              gen, phi0: np.ndarray, adjust: bool = True):
    """MALA (or, with adjust=False, plain Langevin) on -beta*H."""
    phi = phi0.copy()
    dt = dt0
    g = gradf(phi)
    e = energyf(phi)
    out = np.empty((n_samples, n_sites))
    got = 0
    accepted = 0
    window = 0
    step = 0
    total = burn_in + n_samples * thinning
    accept_trace = []
    while got < n_samples:
        drift = -beta * g
        noise = gen.standard_normal(n_sites)
        prop = phi + dt * drift + math.sqrt(2.0 * dt) * noise
        if adjust:
            gp = gradf(prop)
            ep = energyf(prop)
            fwd = prop - phi - dt * drift
            back = phi - prop - dt * (-beta * gp)
            log_alpha = -beta * (ep - e) \
                - (np.dot(back, back) - np.dot(fwd, fwd)) / (4.0 * dt)
            if math.log(max(gen.random(), 1e-300)) < log_alpha:
                phi, g, e = prop, gp, ep
                accepted += 1
            window += 1
            if adjust and step < burn_in and window == 50:
                rate = accepted / window
                if rate < 0.5:
                    dt *= 0.8
                elif rate > 0.7:
                    dt *= 1.25
                accept_trace.append(rate)
                accepted = 0
                window = 0
        else:
            phi = prop
            g = gradf(phi)
        if np.max(np.abs(phi)) > DIVERGENCE_GUARD:
            raise DivergedChain(f"height exceeded guard {DIVERGENCE_GUARD}")
        step += 1
        if step > burn_in and (step - burn_in) % thinning == 0:
            out[got] = phi
            got += 1
        if step > 100 * max(total, 1):
            raise DivergedChain("chain failed to collect samples")
    return out, dt


def sample_gibbs(potential, graph: LatticeGraph, region: Region,
                 bc: BoundaryCondition, method: str, n_samples: int,
                 burn_in: Optional[int] = None, thinning: int = 1,
                 seed: int = 0, dt: Optional[float] = None,
                 stream_id: int = 0,
                 init: Optional[np.ndarray] = None) -> SampleStream:
    """MCMC samples from the Gibbs measure on the region with boundary bc.

    ``method`` is one of heatbath, mala, langevin.  Heat bath requires a
    potential with validated convexity.  Identical (seed, parameters)
    always yield bit-identical streams.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    kind = getattr(potential, "kind", None)
    if kind == "effective_even":
        from .evenred import EvenModel
        model = EvenModel(potential, graph, region, bc)
        return model.sample(method, n_samples, burn_in, thinning, seed,
                            dt=dt, stream_id=stream_id)
    if kind != "two_body":
        raise MethodUnsupported(f"cannot sample potential kind {kind!r}")
    if method == "heatbath" and not potential.convex:
        raise MethodUnsupported(
            "heat bath needs a validated convex potential; "
            "use langevin for the nonconvex direct model")
    if burn_in is None:
        burn_in = 10 * _region_diameter(graph, region) ** 2
    chain = _TwoBodyChain(potential, graph, region, bc)
    gen = stream(seed, stream_id)
    phi = np.zeros(chain.n) if init is None else np.asarray(init, float).copy()
    meta = {"method": method, "seed": seed, "stream_id": stream_id,
            "burn_in": burn_in, "thinning": thinning,
            "n_samples": n_samples, "potential": potential.name,
            "beta": potential.beta}
    if method == "heatbath":
        classes = _color_classes(graph, region)
        out = np.empty((n_samples, chain.n))
        got = 0
        for sweep in range(burn_in + n_samples * thinning):
            chain.heatbath_sweep(phi, classes, gen)
            if np.max(np.abs(phi)) > DIVERGENCE_GUARD:
                raise DivergedChain(f"height exceeded guard {DIVERGENCE_GUARD}")
            if sweep >= burn_in and (sweep - burn_in + 1) % thinning == 0:
                out[got] = phi
                got += 1
        return SampleStream(region, bc, out, meta)
    if method in ("mala", "langevin"):
        c0 = potential.c0 if potential.c0 else 2.0
        dt0 = dt if dt is not None else 0.5 / (potential.beta * c0 * 2 * graph.degree)
        out, dt_final = _run_mala(
            chain.grad, chain.energy, chain.n, potential.beta, dt0,
            n_samples, burn_in, thinning, gen, phi,
            adjust=(method == "mala"))
        meta["dt"] = dt_final
        return SampleStream(region, bc, out, meta)
    raise MethodUnsupported(f"unknown method {method!r}")


def killed_covariance(graph: LatticeGraph, region: Region,
                      stiffness: float = 1.0, beta: float = 1.0) -> np.ndarray:
    """Exact covariance of the killed Gaussian field: (beta k (deg I - A))^-1.

    Computed by sparse solves; equals the rate-1 killed Green matrix
    divided by the degree (and by beta*stiffness).
    """
    from .srw import GreenOperator
    G = GreenOperator(graph, region).matrix(region.vertices)
    return G / (graph.degree * stiffness * beta)


def gaussian_exact_sample(graph: LatticeGraph, region: Region,
                          bc: BoundaryCondition, stiffness: float = 1.0,
                          n: int = 1, seed: int = 0, beta: float = 1.0,
                          stream_id: int = 0) -> SampleStream:
    """Exact draws of the killed Gaussian free field on the region.

    Mean is the discrete-harmonic extension of bc; covariance is the
    inverse of beta*stiffness*(deg I - A) on the region.
    """
    nv = len(region)
    if nv > 4000:
        raise RegionTooLarge(f"{nv} vertices exceeds the dense guard (4000)")
    deg = graph.degree
    Q = np.zeros((nv, nv))
    b = np.zeros(nv)
    for i, x in enumerate(region.vertices):
        Q[i, i] = deg
        for y in graph.neighbors(x):
            if y in region:
                Q[i, region.index(y)] -= 1.0
            else:
                b[i] += bc.value(y)
    scale = beta * stiffness
    mean = np.linalg.solve(Q, b)  # scale cancels in the mean
    L = np.linalg.cholesky(scale * Q)
    gen = stream(seed, stream_id)
    z = gen.standard_normal((n, nv))
    fields = mean[None, :] + np.linalg.solve(L.T, z.T).T
    meta = {"method": "gaussian_exact", "seed": seed, "stream_id": stream_id,
            "stiffness": stiffness, "beta": beta, "n_samples": n}
    return SampleStream(region, bc, fields, meta)


def estimate_observable(stream_obj: SampleStream,
                        f: Callable[[FieldConfig], float]):
    """Batch-means estimate (mean, stderr, autocorrelation time)."""
    n = len(stream_obj)
    if n < 10:
        raise TooFewSamples("need at least 10 samples")
    vals = np.array([float(f(stream_obj[i])) for i in range(n)])
    n_batches = max(10, min(50, int(math.sqrt(n))))
    m = n // n_batches
    if m < 1:
        raise TooFewSamples("fewer than 10 batches available")
    trimmed = vals[: n_batches * m].reshape(n_batches, m)
    batch_means = trimmed.mean(axis=1)
    mean = float(vals.mean())
    stderr = float(batch_means.std(ddof=1) / math.sqrt(n_batches))
    var = float(vals.var(ddof=1))
    act = 1.0 if var == 0.0 else max(1.0, stderr ** 2 * n / var)
    return mean, stderr, act
