import math

import numpy as np
import pytest

from gradfield import lattice, potentials
from gradfield.errors import PotentialError
from gradfield.potentials import (BoundaryCondition, FieldConfig,
                                  effective_even_potential)
from gradfield.rng import stream


@pytest.mark.parametrize("pot", [potentials.quadratic(),
                                 potentials.quadratic(stiffness=2.5),
                                 potentials.log_cosh(),
                                 potentials.double_well()])
def test_derivative_consistency(pot):
    eta = np.linspace(-3.0, 3.0, 41)
    h = 1e-6
    fd1 = (pot.v(eta + h) - pot.v(eta - h)) / (2 * h)
    fd2 = (pot.vp(eta + h) - pot.vp(eta - h)) / (2 * h)
    assert np.max(np.abs(fd1 - pot.vp(eta))) < 1e-6
    assert np.max(np.abs(fd2 - pot.vpp(eta))) < 1e-5


def test_quadratic_flags():
    pot = potentials.quadratic(stiffness=2.0)
    assert pot.convex
    assert pot.c0 == pytest.approx(2.0)
    eta = np.array([0.0, 1.0, -2.0])
    assert np.allclose(pot.v(eta), 0.5 * 2.0 * eta ** 2)


def test_log_cosh_bounds_and_overflow():
    pot = potentials.log_cosh()
    assert pot.convex
    big = np.array([500.0, -800.0])
    vals = pot.v(big)
    assert np.all(np.isfinite(vals))
    # V = eta^2/2 + log cosh eta ~ eta^2/2 + |eta| - log 2 for large |eta|
    assert vals[0] == pytest.approx(0.5 * 500.0 ** 2 + 500.0 - math.log(2.0),
                                    rel=1e-12)
    vpp = pot.vpp(np.linspace(-10, 10, 101))
    assert np.all(vpp <= pot.c0 + 1e-12)
    assert np.all(vpp >= 1.0 / pot.c0 - 1e-12)


def test_double_well_decomposition():
    pot = potentials.double_well()
    dec = pot.decomposition
    eta = np.linspace(-4, 4, 81)
    assert np.allclose(dec["U"].v(eta) + dec["g"](eta), pot.v(eta), atol=1e-12)
    assert not pot.convex
    assert pot.vpp(0.0) < 0
    A, B = pot.growth
    assert np.all(pot.v(eta) >= A * eta ** 2 - B - 1e-12)


def test_growth_certificates():
    for pot in (potentials.quadratic(), potentials.log_cosh()):
        A, B = pot.growth
        eta = np.linspace(-30, 30, 301)
        assert np.all(pot.v(eta) >= A * eta ** 2 - B - 1e-9)


def test_from_config():
    pot = potentials.from_config("quadratic", beta=2.0, stiffness=3.0)
    assert pot.beta == 2.0
    assert dict(pot.params)["stiffness"] == 3.0
    with pytest.raises(Exception):
        potentials.from_config("no_such_potential")


def test_boundary_conditions(g3):
    bc = BoundaryCondition.constant(1.5)
    assert bc.value((7, 7, 7)) == 1.5
    bm = BoundaryCondition.from_mapping({(0, 0, 1): 2.0}, default=0.0)
    assert bm.value((0, 0, 1)) == 2.0
    assert bm.value((5, 5, 5)) == 0.0
    lin = BoundaryCondition.linear((1.0, 0.0, -1.0))
    assert lin.value((2, 9, 1)) == pytest.approx(1.0)
    assert bc.shifted(0.5).value((0, 0, 0)) == 2.0
    assert bc.negated().value((0, 0, 0)) == -1.5


def test_hamiltonian_gradient_matches_fd(g3, zero_bc):
    reg = lattice.ball(g3, (0, 0, 0), 1, metric="ell1")
    pot = potentials.log_cosh()
    gen = stream(3, 0)
    heights = gen.standard_normal(len(reg))
    f = FieldConfig(reg, heights, zero_bc)
    H, grad = potentials.hamiltonian_and_grad(pot, g3, f)
    h = 1e-6
    for i in range(len(reg)):
        hp = heights.copy()
        hp[i] += h
        hm = heights.copy()
        hm[i] -= h
        Hp, _ = potentials.hamiltonian_and_grad(
            pot, g3, FieldConfig(reg, hp, zero_bc))
        Hm, _ = potentials.hamiltonian_and_grad(
            pot, g3, FieldConfig(reg, hm, zero_bc))
        assert grad[i] == pytest.approx((Hp - Hm) / (2 * h), abs=1e-5)


def test_conductance_in_bounds(g3, zero_bc):
    reg = lattice.ball(g3, (0, 0, 0), 1, metric="ell1")
    pot = potentials.log_cosh()
    gen = stream(5, 0)
    f = FieldConfig(reg, gen.standard_normal(len(reg)), zero_bc)
    c = potentials.conductance(pot, g3, f, ((0, 0, 0), (1, 0, 0)))
    assert 1.0 / pot.c0 - 1e-12 <= c <= pot.c0 + 1e-12


def test_check_convexity():
    rep = potentials.check_convexity(potentials.log_cosh())
    assert rep["n_violations"] == 0
    assert rep["c0_lower"] > 0
    rep2 = potentials.check_convexity(potentials.double_well())
    assert rep2["n_violations"] > 0
    assert rep2["c0_lower"] < 0


# ---------------------------------------------------------------------------
# effective even potential

def test_effective_closed_form_matches_quadrature():
    eff = effective_even_potential(potentials.quadratic(), beta=1.0, d=3)
    gen = stream(0, 0)
    etas = gen.standard_normal((30, 6))
    closed = eff.value(etas)
    quad = eff._quadrature(etas)[0]
    assert np.max(np.abs(closed - quad)) < 1e-8


def test_effective_grad_matches_fd():
    eff = effective_even_potential(potentials.log_cosh(), beta=0.7, d=2)
    gen = stream(1, 0)
    etas = gen.standard_normal((4, 4))
    _, grad = eff.value_and_grad(etas)
    h = 1e-5
    for j in range(4):
        ep = etas.copy()
        ep[:, j] += h
        em = etas.copy()
        em[:, j] -= h
        fd = (eff.value(ep) - eff.value(em)) / (2 * h)
        assert np.max(np.abs(fd - grad[:, j])) < 1e-5


def test_effective_pair_conductance_gaussian():
    beta, kappa, d = 1.3, 2.0, 3
    eff = effective_even_potential(potentials.quadratic(stiffness=kappa),
                                   beta=beta, d=d)
    gen = stream(2, 0)
    etas = gen.standard_normal((5, 2 * d))
    c = eff.pair_conductance(etas, 0, 3)
    assert np.allclose(c, beta * kappa / (2 * d))


def test_effective_shift_invariance():
    eff = effective_even_potential(potentials.log_cosh(), beta=1.0, d=2)
    gen = stream(4, 0)
    etas = gen.standard_normal((3, 4))
    v0 = eff.value(etas)
    v1 = eff.value(etas + 0.0)  # determinism
    assert np.array_equal(v0, v1)


def test_effective_needs_growth_bound():
    bad = potentials.TwoBody(
        name="linear", v=np.abs, vp=np.sign,
        vpp=lambda e: np.zeros_like(np.asarray(e, dtype=float)),
        convex=True, c0=None, growth=(0.0, 0.0), beta=1.0)
    with pytest.raises(PotentialError):
        effective_even_potential(bad, beta=1.0, d=2)
