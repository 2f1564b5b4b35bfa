"""Coupled Kahler states: one model manifold, a tuple of classes + potentials."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DimensionError
from . import torus as T
from . import toric as C


@dataclass(frozen=True)
class KahlerState:
    """Geometries (one per coupled class) and matching potentials.

    All geometries must share the backend and discretization; on the torus
    they must also share the complex dimension, while base classes (and on
    CP^1 the interval lengths) may differ per slot.
    """

    geometries: tuple
    potentials: tuple

    def __post_init__(self):
        if len(self.geometries) != len(self.potentials):
            raise DimensionError("need one potential per geometry")
        if len(self.geometries) < 1:
            raise DimensionError("need at least one coupled slot")
        backend = self.geometries[0].backend
        for g in self.geometries:
            if g.backend != backend:
                raise DimensionError("mixed backends in one state")
            if g.grid != self.geometries[0].grid:
                raise DimensionError("all slots must share the grid")
        if backend == "torus":
            for g in self.geometries:
                if g.n != self.geometries[0].n:
                    raise DimensionError("all torus slots must share n")

    @property
    def backend(self) -> str:
        return self.geometries[0].backend

    @property
    def k(self) -> int:
        """Number of companion classes (slots beyond the curvature slot)."""
        return len(self.geometries) - 1

    @property
    def n(self) -> int:
        return self.geometries[0].n

    def metrics(self):
        """Validated metric data per slot (torus MetricField / CP^1 potential)."""
        if self.backend == "torus":
            return tuple(T.metric_from_potential(g, p)
                         for g, p in zip(self.geometries, self.potentials))
        return tuple(p.validate_kahler() for p in self.potentials)


def torus_state(geometries, potential_arrays) -> KahlerState:
    """Build a torus state from raw mean-zero grid arrays."""
    pots = tuple(T.PotentialField.recentered(g, a)
                 for g, a in zip(geometries, potential_arrays))
    return KahlerState(tuple(geometries), pots)


def cp1_state(geometries, eta_arrays) -> KahlerState:
    pots = tuple(C.SymplecticPotential(g, a)
                 for g, a in zip(geometries, eta_arrays))
    return KahlerState(tuple(geometries), pots)
