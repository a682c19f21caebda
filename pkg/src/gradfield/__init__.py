"""Gradient interface models: Gibbs samplers, random-walk potential
theory, walk-in-environment simulation, sprinkled decoupling, level-set
percolation, and the even-sublattice reduction."""

__version__ = "0.1.0"

from . import (decoupling, errors, evenred, hswalk, lattice, percolation,
               potentials, presets, report, rng, sampler, srw)

__all__ = [
    "__version__", "decoupling", "errors", "evenred", "hswalk", "lattice",
    "percolation", "potentials", "presets", "report", "rng", "sampler",
    "srw",
]
