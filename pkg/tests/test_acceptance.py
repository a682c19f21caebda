"""Acceptance criteria, one test per criterion.

Each test prints a single PASS line when its assertions hold, so a
verbose pytest run reads as a pass/fail checklist.  Statistical checks
use the stated tolerances; exact checks use the stated epsilons.
"""

import filecmp
import json
import math
import os
import time

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from gradfield import (cli, decoupling, evenred, hswalk, lattice,
                       percolation as perc, potentials, sampler, srw)
from gradfield.decoupling import MonotoneEvent, Observable
from gradfield.potentials import BoundaryCondition, FieldConfig
from gradfield.rng import stream
from gradfield.srw import DiscreteMeasure, GreenOperator, Infinite


def _report(num, name, elapsed, budget):
    print(f"ACCEPTANCE {num} ({name}): PASS in {elapsed:.1f}s "
          f"(budget {budget:.0f}s)")
    assert elapsed <= budget


def _cov_and_se(a, b, n_batches=50):
    """Batch-means estimate of Cov(a, b) with its standard error."""
    prod = (a - a.mean()) * (b - b.mean())
    m = len(prod) // n_batches
    bm = prod[: n_batches * m].reshape(n_batches, m).mean(axis=1)
    return float(prod.mean()), float(bm.std(ddof=1) / math.sqrt(n_batches))


def test_acceptance_01_gaussian_sampler_exactness(g3, zero_bc, box5):
    t0 = time.time()
    pot = potentials.quadratic()
    cov = sampler.killed_covariance(g3, box5)
    gen = stream(101, 0)
    pairs = [(int(i), int(j))
             for i, j in gen.integers(len(box5), size=(20, 2))]
    runs = {
        "heatbath": sampler.sample_gibbs(pot, g3, box5, zero_bc, "heatbath",
                                         n_samples=20000, burn_in=400,
                                         thinning=2, seed=1),
        "mala": sampler.sample_gibbs(pot, g3, box5, zero_bc, "mala",
                                     n_samples=20000, burn_in=1500,
                                     thinning=4, seed=2),
    }
    for method, s in runs.items():
        for i, j in pairs:
            est, se = _cov_and_se(s.fields[:, i], s.fields[:, j])
            assert abs(est - cov[i, j]) < 3.0 * se, (
                f"{method} cov({i},{j}): {est} vs {cov[i, j]} (se {se})")
    _report(1, "Gaussian sampler exactness", time.time() - t0, 120)


def test_acceptance_02_potential_theory_identities(g3):
    t0 = time.time()
    gen = stream(202, 0)
    for _ in range(30):
        r = int(gen.integers(2, 4))
        center = tuple(int(c) for c in gen.integers(-2, 3, size=3))
        dom = lattice.ball(g3, center, r, metric="ellinf")
        n_u = int(gen.integers(1, 3))
        uverts = {center}
        while len(uverts) < n_u:
            off = tuple(int(c) for c in gen.integers(-1, 2, size=3))
            uverts.add(tuple(a + b for a, b in zip(center, off)))
        U = lattice.Region(g3, sorted(uverts))
        cand = [v for v in dom if v not in U]
        x = cand[int(gen.integers(len(cand)))]
        # hitting mass identity
        p, nu = srw.hitting(g3, x, U, dom)
        assert abs(nu.mass() - p) <= 1e-10
        # capacity * energy identity on a domain with enough margin
        big = lattice.ball(g3, center, r + 3, metric="ellinf")
        e, cap = srw.equilibrium_and_capacity(g3, U, big)
        ebar = DiscreteMeasure(e.support, e.weights / cap)
        assert abs(cap * srw.energy(g3, ebar, big) - 1.0) <= 1e-6
        # Green symmetry
        op = GreenOperator(g3, dom)
        a = dom.vertices[int(gen.integers(len(dom)))]
        b = dom.vertices[int(gen.integers(len(dom)))]
        assert abs(op.column(a)[dom.index(b)]
                   - op.column(b)[dom.index(a)]) <= 1e-10
    _report(2, "potential-theory identities", time.time() - t0, 60)


def test_acceptance_03_green_constant(g3):
    t0 = time.time()
    g00 = srw.green(g3, Infinite(1e-3), (0, 0, 0), (0, 0, 0))
    assert abs(g00 - 1.516) <= 2e-3
    _report(3, "infinite-volume Green constant", time.time() - t0, 120)


def test_acceptance_04_hs_walk_gaussian_reduction(g3, zero_bc):
    t0 = time.time()
    pot = potentials.quadratic()
    lam = lattice.ball(g3, (0, 0, 0), 3, metric="ellinf")
    gen = stream(404, 0)
    geoms = []
    while len(geoms) < 10:
        u = tuple(int(c) for c in gen.integers(-1, 2, size=3))
        x = tuple(int(c) for c in gen.integers(-2, 3, size=3))
        if x != u:
            geoms.append((x, u))
    for gi, (x, u) in enumerate(geoms):
        U = lattice.Region(g3, [u])
        p, se = hswalk.hit_before_exit(pot, g3, lam, U, zero_bc, x,
                                       n_reps=10000, seed=500 + gi)
        p_oracle, _ = srw.hitting(g3, x, U, lam)
        assert abs(p - p_oracle) < 3.0 * se + 1e-12, (
            f"geometry {gi}: {p} vs {p_oracle} (se {se})")
        # realized jump rates are exactly the constant conductance
        eng = hswalk._Engine(pot, g3, lam, U, zero_bc)
        phi = gen.standard_normal((16, eng.n))
        rates = eng.rates_at(phi, gen.integers(eng.n, size=16))
        assert np.all(rates >= 1.0 / pot.c0)
        assert np.all(rates <= pot.c0)
        assert np.all(rates == 1.0)
    _report(4, "HS walk Gaussian reduction", time.time() - t0, 300)


def test_acceptance_05_comparison_bracket(g3):
    t0 = time.time()
    pot = potentials.log_cosh()
    lam = lattice.ball(g3, (0, 0, 0), 3, metric="ellinf")
    gen = stream(505, 0)
    geoms = []
    while len(geoms) < 20:
        u = tuple(int(c) for c in gen.integers(-1, 2, size=3))
        x = tuple(int(c) for c in gen.integers(-2, 3, size=3))
        if x != u:
            geoms.append((x, u))
    for gi, (x, u) in enumerate(geoms):
        rep = hswalk.compare_to_srw(pot, g3, x, lattice.Region(g3, [u]),
                                    lam, n=1200, seed=700 + gi,
                                    phi_init="langevin", burn_in=150)
        assert rep["within"], f"geometry {gi} escaped the bracket: {rep}"
    _report(5, "environment/SRW comparison bracket", time.time() - t0, 600)


def test_acceptance_06_brascamp_lieb(g3):
    t0 = time.time()
    lam = lattice.ball(g3, (0, 0, 0), 2, metric="ellinf")
    nu = DiscreteMeasure(lattice.Region(g3, [(0, 0, 0)]), [1.0])
    # equality case: quadratic with c0 = stiffness = 1
    rep = decoupling.brascamp_lieb_check(potentials.quadratic(), g3, lam,
                                         nu, n=20000, seed=6)
    assert abs(rep["lhs"] - rep["rhs"]) < 3.0 * rep["lhs_se"]
    # one-sided inequality for log_cosh over 10 seeds
    for seed in range(10):
        rep = decoupling.brascamp_lieb_check(potentials.log_cosh(), g3, lam,
                                             nu, n=600, seed=seed,
                                             burn_in=200)
        assert rep["pass"], f"seed {seed}: {rep}"
    _report(6, "Brascamp-Lieb", time.time() - t0, 300)


def test_acceptance_07_decoupling_end_to_end(g3):
    t0 = time.time()
    pot = potentials.quadratic()
    lam = lattice.ball(g3, (0, 0, 0), 3, metric="ellinf")  # 7^3 box
    xs, ys = (-2, 0, 0), (2, 0, 0)
    S = lattice.Region(g3, [xs])
    sp = lattice.Region(g3, [ys])
    ev = MonotoneEvent.literal(xs)
    f = Observable.indicator(MonotoneEvent.literal(ys))
    h = 0.0
    cov = sampler.killed_covariance(g3, lam)
    ix, iy = lam.index(xs), lam.index(ys)
    sub = cov[np.ix_([ix, iy], [ix, iy])]
    sx, sy = math.sqrt(sub[0, 0]), math.sqrt(sub[1, 1])
    lhs_oracle = float(multivariate_normal(mean=[0, 0], cov=sub)
                       .cdf([-h, -h]))
    sigma_hat = None
    for eps in (0.1, 0.3, 1.0):
        rep = decoupling.decoupling_experiment(
            pot, g3, lam, S, sp, ev, f, h=h, eps=eps, n=20000,
            seed=800, sigma_hat=sigma_hat)
        sigma_hat = rep["sigma_hat"]  # reuse across the eps grid
        assert rep["pass"], f"eps={eps}: {rep}"
        assert rep["pass_lower"], f"eps={eps} FKG lower bound: {rep}"
        # cross-check lhs and the sprinkled upper bound against the
        # exact bivariate-Gaussian oracle
        assert abs(rep["lhs"] - lhs_oracle) < 3.0 * rep["lhs_se"]
        upper_oracle = (norm.sf((h - eps) / sx) * norm.sf(h / sy)
                        + rep["delta"])
        assert abs(rep["upper"] - upper_oracle) < 3.0 * rep["upper_se"]
    _report(7, "sprinkled decoupling end-to-end", time.time() - t0, 600)


def test_acceptance_08_even_reduction(g2):
    t0 = time.time()
    lam = lattice.fstar_closure(lattice.ball(g2, (0, 0), 3, metric="ell1"))
    sites = [v for v in lam if sum(v) % 2 == 0
             and sum(abs(c) for c in v) <= 2]
    rep = evenred.marginal_agreement_test(potentials.quadratic(), 1.0, lam,
                                          sites, n=20000, seed=8)
    assert rep["pass"], rep
    eff = potentials.effective_even_potential(potentials.quadratic(),
                                              beta=1.0, d=3)
    gen = stream(808, 0)
    etas = gen.standard_normal((100, 6))
    closed = eff.value(etas)
    quad = eff._quadrature(etas)[0]
    assert np.max(np.abs(closed - quad)) <= 1e-8
    _report(8, "even-sublattice reduction", time.time() - t0, 300)


def test_acceptance_09_percolation_structure(g2, zero_bc):
    t0 = time.time()
    reg = lattice.ball(g2, (0, 0), 5, metric="ellinf")
    gen = stream(909, 0)
    for _ in range(200):
        f = FieldConfig(reg, gen.standard_normal(len(reg)), zero_bc)
        la = perc.clusters(f, 0.0)
        lb = perc.clusters_bfs(f, 0.0)
        assert np.array_equal(la.labels, lb.labels)
    for k in range(20):
        f = FieldConfig(reg, gen.standard_normal(len(reg)), zero_bc)
        results = [perc.crossing_indicator(f, (0, 0), 2, h)
                   for h in np.linspace(-2, 2, 9)]
        assert all(a >= b for a, b in zip(results, results[1:]))
    embs = perc.proper_embeddings((0, 0), 2, 4, g2, variant="Xi",
                                  mode="sample", k=250, seed=9,
                                  strict=False, base=2, ball_mult=2)
    embs += perc.proper_embeddings((0, 0), 2, 4, g2, variant="XiStar",
                                   mode="sample", k=250, seed=10,
                                   strict=False, base=2, ball_mult=2)
    assert len(embs) == 500
    for e in embs:
        assert perc.validate_embedding(e)
    _report(9, "percolation structure", time.time() - t0, 120)


def test_acceptance_10_renormalization_step(g2):
    t0 = time.time()
    tau = perc.proper_embeddings((0, 0), 1, 4, g2, variant="Xi",
                                 mode="sample", k=1, seed=11, strict=False,
                                 base=2, ball_mult=2)[0]
    reg = lattice.ball(g2, (0, 0), tau.scale(0) * tau.ball_mult + 2,
                       metric="ellinf")
    handle = perc.gaussian_handle(g2, reg)
    events = {m: MonotoneEvent.literal(tau.tau[m]) for m in tau.leaves()}
    eps0 = perc.eps_n(perc.ConstantsConfig(), 0, tau.R)
    for seed in range(5):
        rep = perc.renorm_step_check(handle, tau, events, h=0.0,
                                     eps=max(0.6, eps0), n_samples=2500,
                                     seed=seed)
        assert rep["eps"] >= eps0
        assert rep["pass"], f"seed {seed}: {rep}"
    _report(10, "renormalization step", time.time() - t0, 600)


def test_acceptance_11_determinism(tmp_path):
    t0 = time.time()
    cfg = tmp_path / "exp.ini"
    cfg.write_text("""[experiment]
kind = sample
seed = 3

[geometry]
d = 3
gamma = nn
radius = 2

[potential]
kind = quadratic
beta = 1.0

[mc]
n_samples = 400
""")
    os.environ["GGL_WORKERS"] = "1"
    try:
        out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
        assert cli.main(["run", str(cfg), "--output", out_a]) == 0
        assert cli.main(["run", str(cfg), "--output", out_b]) == 0
    finally:
        os.environ.pop("GGL_WORKERS", None)
    names = sorted(os.listdir(out_a))
    assert names == sorted(os.listdir(out_b))
    match, mismatch, errors = filecmp.cmpfiles(out_a, out_b, names,
                                               shallow=False)
    assert not mismatch and not errors, (mismatch, errors)
    _report(11, "byte-identical reruns", time.time() - t0, 120)
