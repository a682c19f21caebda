"""Even-sublattice reduction: integrating out the odd heights.

For a region in F* (every even vertex keeps all its nearest neighbors
inside), summing out each odd height independently turns the two-body
model into a many-body model on the even sublattice whose interactions
live on cliques of the 2d even neighbors of each odd vertex.  The even
marginals of the two models agree exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MethodUnsupported, NotFStar
from .lattice import (LatticeGraph, Region, Vertex, boundary, even_sublattice,
                      is_fstar)
from .potentials import (BoundaryCondition, EffectiveEven, FieldConfig,
                         TwoBody, check_convexity, effective_even_potential)
from .rng import stream
from .sampler import SampleStream, _run_mala, gaussian_exact_sample


@dataclass
class EvenReduction:
    lam: Region                 # ambient region, in F*
    lam_e: Region               # even part, in even-graph coordinates
    lam_o: Region               # odd part, ambient coordinates
    boundary_even: Region       # even-graph outer boundary of lam_e
    even_graph: LatticeGraph
    valid: bool
    violating: Optional[Vertex] = None


def even_projection(x: Vertex) -> Vertex:
    """x if even, else the even neighbor x + e1 (level-set projection)."""
    x = tuple(x)
    if sum(x) % 2 == 0:
        return x
    return (x[0] + 1,) + x[1:]


def reduce_region(lam: Region, d: int) -> EvenReduction:
    """Split an F* region into its even model geometry.

    Checks the F* predicate, re-indexes the even part to even-graph
    coordinates, and computes the even-graph boundary (which equals the
    ambient outer boundary for F* regions; verified by callers' tests).
    """
    ok, bad = is_fstar(lam)
    eg = even_sublattice(d)
    even_amb = [v for v in lam if sum(v) % 2 == 0]
    odd_amb = [v for v in lam if sum(v) % 2 == 1]
    lam_e = Region(eg, [eg.from_ambient(v) for v in even_amb])
    lam_o = Region(lam.graph, odd_amb)
    bnd = boundary(eg, lam_e, "outer")
    red = EvenReduction(lam=lam, lam_e=lam_e, lam_o=lam_o,
                        boundary_even=bnd, even_graph=eg, valid=ok,
                        violating=bad)
    if not ok:
        raise NotFStar(bad)
    return red


class EvenModel:
    """The effective Gibbs model on an even-graph region.

    Cliques are the odd ambient vertices with at least one even neighbor
    in the region; even neighbors outside the region take their value
    from the boundary condition (queried in even-graph coordinates).
    """

    def __init__(self, potential: EffectiveEven, graph: LatticeGraph,
                 region: Region, bc: BoundaryCondition):
        if potential.kind != "effective_even":
            raise ValueError("EvenModel needs an effective even potential")
        if graph.embedding is None:
            raise ValueError("EvenModel needs the even-sublattice graph")
        self.potential = potential
        self.graph = graph
        self.region = region
        self.bc = bc
        d = graph.d
        self.d = d
        units = [tuple(int(i == j) for j in range(d)) for i in range(d)]
        self.units = units + [tuple(-u for u in e) for e in units]
        # collect cliques: odd ambient vertices adjacent to the region
        ambient = {graph.to_ambient(v): i for i, v in enumerate(region.vertices)}
        odd_seen = {}
        for av in ambient:
            for u in self.units:
                y = tuple(a + b for a, b in zip(av, u))
                odd_seen.setdefault(y, None)
        self.cliques = sorted(odd_seen)
        k = 2 * d
        nc = len(self.cliques)
        self.slot_idx = np.full((nc, k), -1, dtype=np.int64)
        self.slot_out = np.zeros((nc, k))
        for ci, y in enumerate(self.cliques):
            for si, u in enumerate(self.units):
                z = tuple(a + b for a, b in zip(y, u))
                if z in ambient:
                    self.slot_idx[ci, si] = ambient[z]
                else:
                    self.slot_out[ci, si] = bc.value(graph.from_ambient(z))
        self.inside = self.slot_idx >= 0

    def _etas(self, phi: np.ndarray) -> np.ndarray:
        return np.where(self.inside, phi[np.maximum(self.slot_idx, 0)],
                        self.slot_out)

    def energy(self, phi: np.ndarray) -> float:
        return float(np.sum(self.potential.value(self._etas(phi))))

    def energy_grad(self, phi: np.ndarray):
        etas = self._etas(phi)
        vals, grads = self.potential.value_and_grad(etas)
        out = np.zeros(len(phi))
        np.add.at(out, self.slot_idx[self.inside], grads[self.inside])
        return float(np.sum(vals)), out

    def grad(self, phi: np.ndarray) -> np.ndarray:
        return self.energy_grad(phi)[1]

    # -- Gaussian base: exact quadratic form -------------------------------

    def gaussian_precision(self):
        """Dense (Q, b): energy = phi^T Q phi / 2 - b^T phi + const for a
        quadratic base; Q carries the full beta * kappa scaling."""
        kap = self.potential._quadratic_stiffness
        if kap is None:
            raise MethodUnsupported("precision form needs a quadratic base")
        beta = self.potential.beta
        k = 2 * self.d
        n = len(self.region)
        Q = np.zeros((n, n))
        b = np.zeros(n)
        # per clique: (beta kap / 2) sum eta_i^2 - (beta kap / (2k)) (sum eta)^2
        for ci in range(len(self.cliques)):
            idx = self.slot_idx[ci]
            out = self.slot_out[ci]
            for i in range(k):
                for j in range(k):
                    coef = beta * kap * ((1.0 if i == j else 0.0) - 1.0 / k)
                    if idx[i] >= 0 and idx[j] >= 0:
                        Q[idx[i], idx[j]] += coef
                    elif idx[i] >= 0:
                        b[idx[i]] -= coef * out[j]
        return Q, b

    def sample(self, method: str, n_samples: int,
               burn_in: Optional[int] = None, thinning: int = 1,
               seed: int = 0, dt: Optional[float] = None,
               stream_id: int = 0) -> SampleStream:
        meta = {"method": method, "seed": seed, "stream_id": stream_id,
                "n_samples": n_samples, "potential": self.potential.name,
                "beta": self.potential.beta}
        n = len(self.region)
        if method == "exact":
            Q, b = self.gaussian_precision()
            mean = np.linalg.solve(Q, b) if np.any(b) else np.zeros(n)
            L = np.linalg.cholesky(Q)
            gen = stream(seed, stream_id)
            z = gen.standard_normal((n_samples, n))
            fields = mean[None, :] + np.linalg.solve(L.T, z.T).T
            return SampleStream(self.region, self.bc, fields, meta)
        if method == "heatbath":
            raise MethodUnsupported(
                "heat bath is not provided for the many-body even model; "
                "use exact (quadratic base) or mala")
        if method in ("mala", "langevin"):
            if burn_in is None:
                burn_in = 2000
            gen = stream(seed, stream_id)
            dt0 = dt if dt is not None else 0.05 / max(self.potential.beta, 1.0)
            fields, dt_final = _run_mala(
                self.grad, self.energy, n, 1.0, dt0, n_samples, burn_in,
                thinning, gen, np.zeros(n), adjust=(method == "mala"))
            meta.update({"dt": dt_final, "burn_in": burn_in,
                         "thinning": thinning})
            return SampleStream(self.region, self.bc, fields, meta)
        raise MethodUnsupported(f"unknown method {method!r}")


def marginal_agreement_test(V: TwoBody, beta: float, lam: Region,
                            observable_sites: Sequence[Vertex], n: int,
                            seed: int = 0,
                            full_method: Optional[str] = None,
                            even_method: Optional[str] = None) -> dict:
    """Compare even-site marginals of the full model on an F* region with
    the effective even model: per-site two-sample KS at the 1% level plus
    first and second moments."""
    from scipy.stats import ks_2samp
    from .sampler import sample_gibbs

    red = reduce_region(lam, lam.graph.d)
    pot = V.with_beta(beta)
    bc0 = BoundaryCondition.constant(0.0)
    if full_method is None:
        full_method = "heatbath" if pot.convex else "langevin"
    if pot.name == "quadratic":
        stiff = dict(pot.params)["stiffness"]
        full = gaussian_exact_sample(lam.graph, lam, bc0, stiffness=stiff,
                                     n=n, seed=seed, beta=beta, stream_id=0)
    else:
        full = sample_gibbs(pot, lam.graph, lam, bc0, full_method,
                            n_samples=n, thinning=2, seed=seed, stream_id=0)
    eff = effective_even_potential(pot, beta=beta, d=lam.graph.d)
    model = EvenModel(eff, red.even_graph, red.lam_e, bc0)
    if even_method is None:
        even_method = "exact" if pot.name == "quadratic" else "mala"
    even = model.sample(even_method, n, seed=seed, stream_id=1)

    crit = 1.628 * math.sqrt(2.0 / n)  # 1% two-sample KS critical value
    sites = []
    all_pass = True
    biased = full_method == "langevin" or even_method == "langevin"
    for site in observable_sites:
        site = tuple(site)
        a = full.fields[:, lam.index(site)]
        ev_site = red.even_graph.from_ambient(site)
        b = even.fields[:, red.lam_e.index(ev_site)]
        ks = ks_2samp(a, b)
        ok = ks.statistic < crit
        all_pass = all_pass and ok
        sites.append({"site": site, "ks_statistic": float(ks.statistic),
                      "ks_pvalue": float(ks.pvalue), "pass": bool(ok),
                      "mean_full": float(np.mean(a)),
                      "mean_even": float(np.mean(b)),
                      "var_full": float(np.var(a)),
                      "var_even": float(np.var(b))})
    return {"sites": sites, "ks_critical": crit, "n": n, "beta": beta,
            "pass": bool(all_pass), "bias_warning": bool(biased),
            "full_method": full.meta["method"],
            "even_method": even.meta["method"]}


def l1_norm_gpp(gpp: Callable, lo: float = -60.0, hi: float = 60.0,
                n: int = 1_200_001) -> float:
    """Quadrature of |g''| over a wide truncation window."""
    xs = np.linspace(lo, hi, n)
    trap = getattr(np, "trapezoid", np.trapz)
    return float(trap(np.abs(gpp(xs)), xs))


def convexity_window(U: TwoBody, g: Callable, gp: Callable, gpp: Callable,
                     beta_grid: Sequence[float], d: int = 3,
                     probe_range: float = 4.0, n_probes: int = 60,
                     seed: int = 0) -> dict:
    """Scan beta for convexity of the assembled effective potential.

    The base is V = U + g; for each beta the effective clique potential is
    probed for nonnegative pair conductances.  Reports the quadrature
    value of ||g''||_L1 and sqrt(beta)*||g''|| alongside each verdict.
    """
    norm = l1_norm_gpp(gpp)
    uk = dict(U.params).get("stiffness", None)
    base = TwoBody(
        name=f"{U.name}+g",
        v=lambda e: U.v(e) + g(e),
        vp=lambda e: U.vp(e) + gp(e),
        vpp=lambda e: U.vpp(e) + gpp(e),
        convex=False, c0=None,
        growth=(U.growth[0] / 2.0, U.growth[1] + 4.0),
        params=(("component_stiffness", uk),) if uk else (),
    )
    rows = []
    edge = None
    for beta in beta_grid:
        eff = effective_even_potential(base, beta=beta, d=d, tol=1e-7)
        rep = check_convexity(eff, lo=-probe_range, hi=probe_range,
                              n_probes=n_probes, seed=seed)
        ok = rep["n_violations"] == 0
        rows.append({"beta": float(beta), "pass": bool(ok),
                     "c0_lower": rep["c0_lower"],
                     "c0_upper": rep["c0_upper"],
                     "sqrt_beta_norm": math.sqrt(beta) * norm})
        if ok:
            edge = float(beta) if edge is None else max(edge, float(beta))
    return {"gpp_l1": norm, "rows": rows, "empirical_threshold": edge}
