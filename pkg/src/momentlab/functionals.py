"""Obstruction functionals: residual pairings, Futaki, Calabi, Mabuchi.

Directions and Hamiltonian potentials are expressed per backend:

* torus -- Kahler-potential increments (mean-zero grid fields);
* CP^1  -- symplectic-potential increments (node values); the pairing
  carries the Legendre sign, d(potential)/d(eta) = -1, internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionError, GaugeError, NotHolomorphicError,
                     PathTypeError, MomentLabError)
from .coupled import ccsck_residual, CoupledResidual
from .states import KahlerState
from . import toric
from .torus import field_wedge_power, integrate as torus_integrate, mixed_top


@dataclass(frozen=True)
class FunctionalReport:
    """Value with per-term breakdown and discretization diagnostics."""

    value: float
    breakdown: dict
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        total = sum(self.breakdown.values())
        if abs(total - self.value) > 1e-12 * max(1.0, abs(self.value)):
            raise MomentLabError(
                f"breakdown sums to {total}, expected {self.value}")

    def to_dict(self) -> dict:
        return {"value": self.value,
                "breakdown": dict(sorted(self.breakdown.items())),
                "diagnostics": self.diagnostics}


@dataclass(frozen=True)
class HolomorphicFieldData:
    """Per-slot Hamiltonian potentials of a holomorphy-preserving field.

    On the torus only the trivial field qualifies, so every h_i must be
    (numerically) constant, hence zero after the mean-zero normalization.
    On CP^1 each h_i must be affine in the moment coordinate (the rotation
    field and its multiples).
    """

    state_backend: str
    potentials: tuple

    @classmethod
    def validated(cls, state: KahlerState, potentials) -> "HolomorphicFieldData":
        pots = []
        for i, (g, h) in enumerate(zip(state.geometries, potentials)):
            h = np.asarray(h, dtype=np.float64)
            if state.backend == "torus":
                if h.shape != g.shape:
                    raise DimensionError(f"h_{i} has wrong shape")
                if np.abs(h - h.mean()).max() > 1e-10:
                    raise NotHolomorphicError(
                        f"h_{i} is not constant: tori carry no nontrivial "
                        "Hamiltonian holomorphic fields")
                h = h - h.mean()
            else:
                if h.shape != (g.grid,):
                    raise DimensionError(f"h_{i} has wrong shape")
                aff = toric.affine_part(g, h)
                if np.abs(h - aff).max() > 1e-8 * max(1.0, np.abs(h).max()):
                    raise NotHolomorphicError(
                        f"h_{i} is not affine in the moment coordinate")
                h = h - g.integrate(h) / g.integrate(np.ones_like(h))
            pots.append(h)
        return cls(state.backend, tuple(pots))


def _pair_slot(state: KahlerState, i: int, func_values: np.ndarray,
               density: np.ndarray) -> float:
    if state.backend == "torus":
        return torus_integrate(state.geometries[i], func_values * density)
    return state.geometries[i].integrate(func_values * density)


def futaki(state: KahlerState, fields: HolomorphicFieldData, p_vector,
           weights=None) -> FunctionalReport:
    """Pairing of the coupled residual with a holomorphic field's potentials.

    Vanishes identically when the residual does; its value is a class
    invariant (checked numerically by the verification suites).
    """
    res = ccsck_residual(state, p_vector, weights)
    breakdown = {}
    for i, (h, d) in enumerate(zip(fields.potentials, res.densities)):
        breakdown[f"slot_{i}"] = _pair_slot(state, i, h, d)
    value = sum(breakdown.values())
    diag = {"grid": state.geometries[0].grid, "backend": state.backend}
    return FunctionalReport(value, breakdown, diag)


def calabi(state: KahlerState, p_vector, weights=None) -> FunctionalReport:
    """Squared residual norm; zero exactly at solutions."""
    res = ccsck_residual(state, p_vector, weights)
    breakdown = {}
    for i, (d, v) in enumerate(zip(res.densities, res.volumes)):
        s = d / v
        mean = res._integrate(i, s * v) / res._integrate(i, v)
        breakdown[f"slot_{i}"] = res._integrate(i, (s - mean) ** 2 * v)
    value = sum(breakdown.values())
    return FunctionalReport(value, breakdown,
                            {"grid": state.geometries[0].grid,
                             "backend": state.backend})


def H_function(state: KahlerState, i: int, j: int, p: int) -> np.ndarray:
    """Pointwise mixed-volume ratio n!/((n-p)! p!) om_i^{n-p} ^ om_j^p / om_j^n."""
    n = state.n
    if not (0 <= p <= n):
        raise DimensionError(f"p = {p} out of [0, {n}]")
    coef = math.factorial(n) / (math.factorial(n - p) * math.factorial(p))
    if state.backend == "torus":
        metrics = state.metrics()
        Bi = metrics[i].real_components()
        Bj = metrics[j].real_components()
        dim = state.geometries[0].dim
        num = mixed_top(Bi, n - p, Bj, p, dim)
        den = field_wedge_power(Bj, n, dim)
        return coef * num / den
    # CP^1: n = 1, evaluated at slot j's own nodes
    pots = state.metrics()
    if p == 1:
        return np.full(state.geometries[j].grid, coef)
    _, ratio = toric.transfer_density(pots[j], pots[i], state.geometries[j].nodes)
    return coef * ratio


def _validate_direction(state: KahlerState, i: int, d: np.ndarray):
    g = state.geometries[i]
    if state.backend == "torus":
        if abs(np.mean(d)) > 1e-10 * max(1.0, np.abs(d).max()):
            raise GaugeError(f"direction {i} is not mean-zero")
    else:
        mean = g.weights @ d
        if abs(mean) > 1e-10 * max(1.0, np.abs(d).max()):
            raise GaugeError(f"direction {i} is not mean-zero")


def mabuchi_increment(state: KahlerState, directions, p_vector,
                      weights=None, residual: CoupledResidual = None) -> float:
    """Derivative of the energy functional along a direction tuple.

    directions are Kahler-potential increments on the torus and
    symplectic-potential increments on CP^1 (Legendre sign applied here).
    """
    res = residual if residual is not None else ccsck_residual(state, p_vector, weights)
    total = 0.0
    sign = 1.0 if state.backend == "torus" else -1.0
    for i, (d, dens) in enumerate(zip(directions, res.densities)):
        d = np.asarray(d, dtype=np.float64)
        _validate_direction(state, i, d)
        total += sign * _pair_slot(state, i, d, dens)
    return total


@dataclass(frozen=True)
class PotentialPath:
    """Sample times in [0, 1] with a state per time."""

    times: np.ndarray
    states: tuple
    path_type: str = "generic"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if len(t) != len(self.states) or len(t) < 2:
            raise DimensionError("need one state per sample time, at least two")
        if np.any(np.diff(t) <= 0):
            raise DimensionError("sample times must increase")
        object.__setattr__(self, "times", t)
        if self.path_type == "toric-geodesic":
            self._validate_geodesic()

    def _validate_geodesic(self):
        if self.states[0].backend != "cp1":
            raise PathTypeError("toric-geodesic paths live on the CP^1 backend")
        t = self.times
        s = (t - t[0]) / (t[-1] - t[0])
        for i in range(len(self.states[0].potentials)):
            e0 = self.states[0].potentials[i].eta
            e1 = self.states[-1].potentials[i].eta
            for j, st in enumerate(self.states):
                expect = (1 - s[j]) * e0 + s[j] * e1
                if np.abs(st.potentials[i].eta - expect).max() > 1e-10 * max(
                        1.0, np.abs(e1).max(), np.abs(e0).max()):
                    raise PathTypeError(
                        "toric-geodesic tag requires affine symplectic potentials")

    def direction(self, j: int) -> tuple:
        """Chord tangent on interval [t_j, t_{j+1}] per slot, gauge-projected.

        The constant component of a tangent pairs to zero against the
        mean-zero residual densities, so it is removed here rather than
        rejected.
        """
        dt = self.times[j + 1] - self.times[j]
        out = []
        for i in range(len(self.states[0].potentials)):
            if self.states[0].backend == "torus":
                a = self.states[j].potentials[i].values
                b = self.states[j + 1].potentials[i].values
                d = (b - a) / dt
                d = d - d.mean()
            else:
                a = self.states[j].potentials[i].eta
                b = self.states[j + 1].potentials[i].eta
                d = (b - a) / dt
                g = self.states[0].geometries[i]
                d = d - (g.weights @ d) / g.length
            out.append(d)
        return tuple(out)

    def interpolate_state(self, j: int, frac: float) -> KahlerState:
        """Linear interpolation inside interval j (the discrete path itself)."""
        geoms = self.states[0].geometries
        pots = []
        for i in range(len(self.states[0].potentials)):
            if self.states[0].backend == "torus":
                a = self.states[j].potentials[i].values
                b = self.states[j + 1].potentials[i].values
                from .torus import PotentialField
                pots.append(PotentialField.recentered(geoms[i], (1 - frac) * a + frac * b))
            else:
                a = self.states[j].potentials[i].eta
                b = self.states[j + 1].potentials[i].eta
                pots.append(toric.SymplecticPotential(geoms[i], (1 - frac) * a + frac * b))
        return KahlerState(geoms, tuple(pots))


_GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def mabuchi_path(path: PotentialPath, p_vector, weights=None) -> FunctionalReport:
    """Energy difference along a discrete path (piecewise-linear realization).

    Each interval is integrated with two-point Gauss quadrature of the
    increment along the chord, so the only discretization left is the
    sampling of the path itself.
    """
    total = 0.0
    per_interval = {}
    for j in range(len(path.times) - 1):
        dt = path.times[j + 1] - path.times[j]
        tangent = path.direction(j)
        acc = 0.0
        for frac in _GAUSS2:
            st = path.interpolate_state(j, frac)
            acc += 0.5 * mabuchi_increment(st, tangent, p_vector, weights)
        per_interval[f"interval_{j}"] = acc * dt
        total += acc * dt
    return FunctionalReport(total, per_interval,
                            {"samples": len(path.times),
                             "path_type": path.path_type})


def mabuchi_samples(path: PotentialPath, p_vector, weights=None) -> np.ndarray:
    """Cumulative energy at each sample time along the path (starts at 0)."""
    vals = [0.0]
    for j in range(len(path.times) - 1):
        dt = path.times[j + 1] - path.times[j]
        tangent = path.direction(j)
        acc = 0.0
        for frac in _GAUSS2:
            st = path.interpolate_state(j, frac)
            acc += 0.5 * mabuchi_increment(st, tangent, p_vector, weights)
        vals.append(vals[-1] + acc * dt)
    return np.asarray(vals)


def geodesic_convexity_check(path: PotentialPath, p_vector,
                             weights=None) -> FunctionalReport:
    """Minimum discrete second difference of the energy along a toric geodesic."""
    if path.path_type != "toric-geodesic":
        raise PathTypeError("convexity check requires the toric-geodesic tag")
    vals = mabuchi_samples(path, p_vector, weights)
    t = path.times
    second = []
    for j in range(1, len(t) - 1):
        h1 = t[j] - t[j - 1]
        h2 = t[j + 1] - t[j]
        second.append(2 * (h1 * vals[j + 1] - (h1 + h2) * vals[j] + h2 * vals[j - 1])
                      / (h1 * h2 * (h1 + h2)))
    second = np.asarray(second)
    return FunctionalReport(float(second.min()),
                            {"min_second_difference": float(second.min())},
                            {"samples": len(t),
                             "max_second_difference": float(second.max()),
                             "energy_values": [float(v) for v in vals]})


def straight_path(state: KahlerState, samples: int = 17,
                  path_type: str = None) -> PotentialPath:
    """Straight segment from the zero-potential tuple to the given state."""
    geoms = state.geometries
    times = np.linspace(0.0, 1.0, samples)
    states = []
    for t in times:
        pots = []
        for i, g in enumerate(geoms):
            if state.backend == "torus":
                from .torus import PotentialField
                pots.append(PotentialField.recentered(g, t * state.potentials[i].values))
            else:
                pots.append(toric.SymplecticPotential(g, t * state.potentials[i].eta))
        states.append(KahlerState(geoms, tuple(pots)))
    if path_type is None:
        path_type = "toric-geodesic" if state.backend == "cp1" else "generic"
    return PotentialPath(times, tuple(states), path_type)
