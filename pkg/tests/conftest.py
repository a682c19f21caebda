import pytest

from gradfield import lattice
from gradfield.potentials import BoundaryCondition
from gradfield.presets import nn_generators


@pytest.fixture(scope="session")
def g2():
    return lattice.build_lattice(2, nn_generators(2))


@pytest.fixture(scope="session")
def g3():
    return lattice.build_lattice(3, nn_generators(3))


@pytest.fixture(scope="session")
def zero_bc():
    return BoundaryCondition.constant(0.0)


@pytest.fixture(scope="session")
def box5(g3):
    return lattice.box(g3, (-2, -2, -2), (2, 2, 2))
