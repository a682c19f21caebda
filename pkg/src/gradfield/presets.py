"""Named geometry and potential presets referenced from config files."""

from __future__ import annotations

from .lattice import LatticeGraph, build_lattice, even_sublattice
from .potentials import BUILTIN_POTENTIALS

EXPERIMENT_KINDS = ("sample", "green", "capacity", "cross_section",
                    "decouple", "percolate", "renorm", "even_reduce")


def nn_generators(d: int) -> list[tuple[int, ...]]:
    out = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        out.append(tuple(e))
        out.append(tuple(-c for c in e))
    return out


def graph_preset(name: str, d: int) -> LatticeGraph:
    if name == "nn":
        return build_lattice(d, nn_generators(d))
    if name == "even":
        return even_sublattice(d)
    raise KeyError(f"unknown gamma preset {name!r}")


GAMMA_PRESETS = ("nn", "even")


def list_presets() -> dict:
    return {
        "potentials": sorted(BUILTIN_POTENTIALS),
        "gamma": list(GAMMA_PRESETS),
        "experiments": list(EXPERIMENT_KINDS),
    }
