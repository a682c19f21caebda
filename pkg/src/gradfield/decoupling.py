"""Monotone events on occupation variables, the sprinkled decoupling
error term, and the end-to-end decoupling experiment.

Occupation convention: Y_x = 1{phi_x >= h} (closed at the level).
Events are AND/OR trees over literals, hence increasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SupportOutsideRegion
from .lattice import LatticeGraph, Region, Vertex, boundary
from .potentials import BoundaryCondition, FieldConfig, TwoBody
from .sampler import SampleStream, gaussian_exact_sample, sample_gibbs


# ---------------------------------------------------------------------------
# events

class MonotoneEvent:
    """AND/OR tree over literals {Y_x = 1}; no negation, hence increasing."""

    def __init__(self, op: str, children: Sequence["MonotoneEvent"] = (),
                 site: Optional[Vertex] = None):
        if op not in ("lit", "and", "or", "true"):
            raise ValueError(f"bad node kind {op!r}")
        self.op = op
        self.children = tuple(children)
        self.site = tuple(site) if site is not None else None
        if op == "lit" and self.site is None:
            raise ValueError("literal needs a site")
        if op in ("and", "or") and not self.children:
            raise ValueError("and/or needs children")

    @classmethod
    def literal(cls, x: Vertex) -> "MonotoneEvent":
        return cls("lit", site=x)

    @classmethod
    def all_of(cls, *events) -> "MonotoneEvent":
        return cls("and", children=events)

    @classmethod
    def any_of(cls, *events) -> "MonotoneEvent":
        return cls("or", children=events)

    @classmethod
    def always(cls) -> "MonotoneEvent":
        return cls("true")

    @property
    def support(self) -> set[Vertex]:
        if self.op == "lit":
            return {self.site}
        out: set[Vertex] = set()
        for c in self.children:
            out |= c.support
        return out

    def _eval(self, occ: Callable[[Vertex], np.ndarray]) -> np.ndarray:
        if self.op == "true":
            return np.asarray(True)
        if self.op == "lit":
            return occ(self.site)
        parts = [c._eval(occ) for c in self.children]
        out = parts[0]
        for p in parts[1:]:
            out = (out & p) if self.op == "and" else (out | p)
        return out

    def evaluate_batch(self, fields: np.ndarray, region: Region,
                       h: float) -> np.ndarray:
        """Boolean verdict per row of an (m, |region|) height array."""
        for s in self.support:
            if s not in region:
                raise SupportOutsideRegion(f"event site {s} outside region")
        if self.op == "true":
            return np.ones(fields.shape[0], dtype=bool)
        return self._eval(lambda s: fields[:, region.index(s)] >= h)


def evaluate_event(event: MonotoneEvent, field: FieldConfig, h: float) -> bool:
    return bool(event.evaluate_batch(field.heights[None, :],
                                     field.region, h)[0])


# ---------------------------------------------------------------------------
# bounded observables with known sup norm

@dataclass
class Observable:
    fn: Callable[[np.ndarray, Region, float], np.ndarray]
    sup_norm: float
    increasing: bool
    label: str

    @classmethod
    def indicator(cls, event: MonotoneEvent) -> "Observable":
        return cls(fn=lambda fields, region, h:
                   event.evaluate_batch(fields, region, h).astype(float),
                   sup_norm=1.0, increasing=True,
                   label="indicator")

    @classmethod
    def constant(cls, c: float) -> "Observable":
        c = float(c)
        if c < 0:
            raise ValueError("observables are nonnegative")
        return cls(fn=lambda fields, region, h:
                   np.full(fields.shape[0], c),
                   sup_norm=c, increasing=True, label=f"const({c})")


# ---------------------------------------------------------------------------
# constants and formulas

@dataclass(frozen=True)
class ConstantsConfig:
    """The analysis constants that theory leaves non-explicit.

    Defaults of 1 (and bracket 50) make every formula evaluable; sweeps
    expose sensitivity.  Persisted with every experiment manifest.
    """

    c0: float = 2.0
    c1: float = 1.0
    c2: float = 1.0
    c14: float = 1.0
    c15: float = 1.0
    c21: float = 1.0
    c24: float = 1.0
    K_thm46: float = 50.0
    K: float = 50.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"constant {k} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def error_term_formula(c1: float, c2: float, n_s: float, n_inner: float,
                       cap: float, sigma: float, eps: float,
                       Sigma: float) -> float:
    """delta = c1 |S| exp{|d_i S'| - c2 [cap/(sigma^2 |d_i S'|) * eps/Sigma]^2}."""
    if eps <= 0 or Sigma <= 0:
        raise ValueError("eps and Sigma must be positive")
    arg = cap / (sigma ** 2 * n_inner) * eps / Sigma
    return c1 * n_s * math.exp(n_inner - c2 * arg * arg)


def error_term(constants: ConstantsConfig, graph: LatticeGraph, S: Region,
               s_prime: Region, eps: float, Sigma: float,
               tol: float = 1e-2) -> float:
    """The sprinkled-decoupling error term with its potential-theoretic
    ingredients computed from scratch."""
    from . import srw
    for x in S:
        if x in s_prime:
            raise ValueError("S and S' must be disjoint")
    _, cap = srw.capacity_infinite(graph, s_prime, tol=tol)
    sigma = srw.sigma_ratios(graph, S, s_prime, tol=tol)
    n_inner = len(boundary(graph, s_prime, "inner"))
    return error_term_formula(constants.c1, constants.c2, len(S), n_inner,
                              cap, sigma, eps, Sigma)


def sprinkling_threshold(eps: float, Sigma: float) -> float:
    """M = eps (Sigma^-1 + 1); positive whenever eps is."""
    if eps <= 0 or Sigma <= 0:
        raise ValueError("eps and Sigma must be positive")
    return eps * (1.0 / Sigma + 1.0)


# ---------------------------------------------------------------------------
# experiments

def _draw(potential, graph, region, bc, n, seed, stream_id,
          burn_in=None) -> SampleStream:
    if getattr(potential, "name", "") == "quadratic":
        stiff = dict(potential.params)["stiffness"]
        return gaussian_exact_sample(graph, region, bc, stiffness=stiff,
                                     n=n, seed=seed, beta=potential.beta,
                                     stream_id=stream_id)
    return sample_gibbs(potential, graph, region, bc, "heatbath"
                        if potential.convex else "langevin",
                        n_samples=n, burn_in=burn_in, thinning=2, seed=seed,
                        stream_id=stream_id)


def _mean_se(vals: np.ndarray):
    m = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return m, se


def decoupling_experiment(potential: TwoBody, graph: LatticeGraph,
                          lam: Region, S: Region, s_prime: Region,
                          event: MonotoneEvent, f: Observable, h: float,
                          eps: float, n: int, seed: int = 0,
                          constants: Optional[ConstantsConfig] = None,
                          sigma_hat: Optional[float] = None,
                          bc: Optional[BoundaryCondition] = None,
                          n_sigma_paths: int = 2000) -> dict:
    """Empirical test of E[1_{A^h} f] <= mu(A^{h-eps}) E[f] + delta ||f||_inf
    together with the FKG lower bound mu(A^h) E[f] for increasing f."""
    constants = constants or ConstantsConfig()
    bc = bc or BoundaryCondition.constant(0.0)
    for s in event.support:
        if s not in S:
            raise SupportOutsideRegion("event support must lie in S")
    if not (set(S.vertices) <= set(lam.vertices)
            and set(s_prime.vertices) <= set(lam.vertices)):
        raise SupportOutsideRegion("S and S' must lie inside Lambda")
    stream_joint = _draw(potential, graph, lam, bc, n, seed, 0)
    stream_marg = _draw(potential, graph, lam, bc, n, seed, 1)
    stream_f = _draw(potential, graph, lam, bc, n, seed, 2)

    a_h = event.evaluate_batch(stream_joint.fields, lam, h).astype(float)
    f_joint = f.fn(stream_joint.fields, lam, h)
    lhs, lhs_se = _mean_se(a_h * f_joint)

    mu_low = event.evaluate_batch(stream_marg.fields, lam, h - eps).astype(float)
    mu_low_m, mu_low_se = _mean_se(mu_low)
    mu_h = event.evaluate_batch(stream_marg.fields, lam, h).astype(float)
    mu_h_m, mu_h_se = _mean_se(mu_h)
    ef_m, ef_se = _mean_se(f.fn(stream_f.fields, lam, h))

    if sigma_hat is None:
        from .hswalk import cross_section
        sigma_hat, _, _ = cross_section(potential, graph, S, s_prime, lam,
                                        n_paths=n_sigma_paths, seed=seed + 1)
        sigma_hat = max(sigma_hat, 1e-6)
    delta = error_term(constants, graph, S, s_prime, eps, sigma_hat)
    M = sprinkling_threshold(eps, sigma_hat)

    upper = mu_low_m * ef_m + delta * f.sup_norm
    upper_se = math.sqrt((mu_low_m * ef_se) ** 2 + (ef_m * mu_low_se) ** 2)
    lower = mu_h_m * ef_m if f.increasing else 0.0
    lower_se = math.sqrt((mu_h_m * ef_se) ** 2 + (ef_m * mu_h_se) ** 2) \
        if f.increasing else 0.0

    ok_upper = lhs <= upper + 3.0 * math.sqrt(lhs_se ** 2 + upper_se ** 2)
    ok_lower = lhs >= lower - 3.0 * math.sqrt(lhs_se ** 2 + lower_se ** 2)
    return {
        "lhs": lhs, "lhs_se": lhs_se,
        "upper": upper, "upper_se": upper_se,
        "lower": lower, "lower_se": lower_se,
        "mu_sprinkled": mu_low_m, "mu_level": mu_h_m,
        "ef": ef_m, "delta": delta, "sigma_hat": sigma_hat, "M": M,
        "eps": eps, "h": h, "n": n, "seed": seed,
        "pass": bool(ok_upper and ok_lower),
        "pass_upper": bool(ok_upper), "pass_lower": bool(ok_lower),
    }


def brascamp_lieb_check(potential: TwoBody, graph: LatticeGraph, lam: Region,
                        nu, n: int, seed: int = 0,
                        burn_in: Optional[int] = None) -> dict:
    """E[exp<nu, phi>] against the Gaussian comparison bound
    exp(c0/2 * nu^T Cov_killed nu) for a validated convex potential."""
    from .sampler import killed_covariance
    if not potential.convex or potential.c0 is None:
        raise ValueError("Brascamp-Lieb check needs a validated convex potential")
    bc = BoundaryCondition.constant(0.0)
    s = _draw(potential, graph, lam, bc, n, seed, 0, burn_in=burn_in)
    w = np.zeros(len(lam))
    for v, weight in zip(nu.support.vertices, nu.weights):
        w[lam.index(v)] = weight
    vals = np.exp(s.fields @ w)
    lhs, lhs_se = _mean_se(vals)
    cov = killed_covariance(graph, lam, stiffness=1.0, beta=potential.beta)
    rhs = math.exp(0.5 * potential.c0 * float(w @ cov @ w))
    rel_se = lhs_se / max(lhs, 1e-300)
    ok = lhs <= rhs * (1.0 + 3.0 * rel_se)
    return {"lhs": lhs, "lhs_se": lhs_se, "rhs": rhs,
            "pass": bool(ok), "n": n, "seed": seed}
