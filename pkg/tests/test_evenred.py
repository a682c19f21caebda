import numpy as np
import pytest

from gradfield import evenred, lattice, potentials
from gradfield.errors import MethodUnsupported, NotFStar
from gradfield.potentials import BoundaryCondition, effective_even_potential
from gradfield.rng import stream


@pytest.fixture(scope="module")
def fstar2(g2):
    return lattice.fstar_closure(lattice.ball(g2, (0, 0), 3, metric="ell1"))


@pytest.fixture(scope="module")
def model2(g2, fstar2):
    red = evenred.reduce_region(fstar2, 2)
    eff = effective_even_potential(potentials.quadratic(), beta=1.0, d=2)
    bc = BoundaryCondition.constant(0.0)
    return red, evenred.EvenModel(eff, red.even_graph, red.lam_e, bc)


def test_even_projection():
    assert evenred.even_projection((2, 0, 0)) == (2, 0, 0)
    assert evenred.even_projection((1, 0, 0)) == (2, 0, 0)
    assert sum(evenred.even_projection((3, 2, 0))) % 2 == 0


def test_reduce_region_requires_fstar(g2):
    bad = lattice.ball(g2, (0, 0), 2, metric="ell1")
    with pytest.raises(NotFStar):
        evenred.reduce_region(bad, 2)


def test_reduce_region_geometry(g2, fstar2):
    red = evenred.reduce_region(fstar2, 2)
    assert red.valid
    n_even = sum(1 for v in fstar2 if sum(v) % 2 == 0)
    assert len(red.lam_e) == n_even
    assert len(red.lam_o) == len(fstar2) - n_even
    # even-coordinate region maps back into the ambient region
    for v in red.lam_e:
        assert red.even_graph.to_ambient(v) in fstar2


def test_even_model_grad_matches_fd(model2):
    _, model = model2
    gen = stream(1, 0)
    x = gen.standard_normal(len(model.region))
    grad = model.grad(x)
    h = 1e-6
    for i in range(len(model.region)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (model.energy(xp) - model.energy(xm)) / (2 * h)
        assert grad[i] == pytest.approx(fd, abs=1e-5)


def test_gaussian_precision_spd(model2):
    _, model = model2
    Q, b = model.gaussian_precision()
    assert b.shape == (len(model.region),)
    assert np.allclose(Q, Q.T)
    w = np.linalg.eigvalsh(Q)
    assert np.min(w) > 0


def test_even_model_exact_vs_mala(model2):
    _, model = model2
    a = model.sample("exact", n_samples=8000, seed=2)
    b = model.sample("mala", n_samples=8000, burn_in=800, thinning=3, seed=3)
    va = np.var(a.fields, axis=0)
    vb = np.var(b.fields, axis=0)
    assert np.max(np.abs(va - vb) / va) < 0.15
    with pytest.raises(MethodUnsupported):
        model.sample("heatbath", n_samples=10)


def test_marginal_agreement_gaussian(g2, fstar2):
    sites = [v for v in fstar2 if sum(v) % 2 == 0 and
             sum(abs(c) for c in v) <= 2]
    rep = evenred.marginal_agreement_test(potentials.quadratic(), 1.0,
                                          fstar2, sites, n=20000, seed=5)
    assert rep["pass"]
    for st in rep["sites"]:
        assert st["ks_statistic"] < rep["ks_critical"]


def test_marginal_agreement_3d(g3):
    lam = lattice.fstar_closure(lattice.ball(g3, (0, 0, 0), 2, metric="ell1"))
    sites = [(0, 0, 0), (1, 1, 0)]
    rep = evenred.marginal_agreement_test(potentials.quadratic(), 1.0, lam,
                                          sites, n=10000, seed=6)
    assert rep["pass"]


def test_l1_norm_gpp_double_well():
    dec = potentials.double_well().decomposition
    norm = evenred.l1_norm_gpp(dec["gpp"])
    assert np.isfinite(norm)
    assert norm > 0


def test_convexity_window_double_well():
    dw = potentials.double_well()
    dec = dw.decomposition
    rep = evenred.convexity_window(dec["U"], dec["g"], dec["gp"],
                                   dec["gpp"], beta_grid=[0.05, 0.2],
                                   d=2, n_probes=20, seed=7)
    assert "empirical_threshold" in rep
    assert rep["rows"][0]["beta"] == pytest.approx(0.05)
    assert rep["gpp_l1"] > 0
