"""Toric CP^1 backend: symplectic potentials on a moment interval.

A rotation-invariant Kahler metric in the class of symplectic volume
2*pi*length is encoded by a symplectic potential u on [0, length] with
u'' > 0, written as u = u_ref + eta where

    u_ref(x) = (x log x + (length - x) log(length - x)) / 2

is the reference (Fubini-Study) potential and eta is smooth up to the
boundary.  States are sampled at Gauss-Legendre nodes; derivatives use
barycentric collocation, so polynomial data differentiates exactly.

Scalar curvature is S = -(1/u'')'' (Riemannian normalization; the round
metric of volume 2*pi*length has S = 4/length).  The moment coordinate
pushes the area form to dx * dtheta, so integrals of coefficient fields
against dx pick up a factor 2*pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, InterpolationError, NotKahlerError

TWO_PI = 2.0 * np.pi


def _fejer1_weights(M: int) -> np.ndarray:
    """Fejer first-rule weights at Chebyshev-Gauss points on [-1, 1]."""
    theta = (2 * np.arange(M) + 1) * np.pi / (2 * M)
    w = np.ones(M)
    for m in range(1, M // 2 + 1):
        w -= 2.0 * np.cos(2 * m * theta) / (4 * m * m - 1)
    return 2.0 * w / M


@dataclass(frozen=True)
class ToricCP1Geometry:
    """CP^1 with moment interval [0, length] and M interior collocation nodes.

    Nodes are Chebyshev-Gauss points of [0, length] (interior, clustered at
    the ends); node values are carried to Chebyshev coefficient space for
    differentiation and off-node evaluation, which keeps the rounding
    amplification of repeated derivatives benign.
    """

    length: float
    grid: int = 96

    backend = "cp1"
    n = 1

    def __post_init__(self):
        if self.length <= 0:
            raise DimensionError("moment interval length must be positive")
        if self.grid < 64:
            raise DimensionError(f"need at least 64 interior nodes, got {self.grid}")

    @cached_property
    def _theta(self) -> np.ndarray:
        M = self.grid
        return (2 * np.arange(M) + 1) * np.pi / (2 * M)

    @cached_property
    def _t(self) -> np.ndarray:
        return -np.cos(self._theta)  # increasing in [-1, 1]

    @cached_property
    def nodes(self) -> np.ndarray:
        return 0.5 * self.length * (self._t + 1.0)

    @cached_property
    def weights(self) -> np.ndarray:
        return 0.5 * self.length * _fejer1_weights(self.grid)

    @cached_property
    def _vander(self) -> np.ndarray:
        return np.polynomial.chebyshev.chebvander(self._t, self.grid - 1)

    @cached_property
    def _analysis(self) -> np.ndarray:
        """Matrix mapping node values to Chebyshev coefficients."""
        M = self.grid
        A = 2.0 * self._vander.T / M
        A[0] *= 0.5
        return A

    def to_coefficients(self, values: np.ndarray) -> np.ndarray:
        return self._analysis @ values

    def from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        return self._vander @ coeffs

    @cached_property
    def diff(self) -> np.ndarray:
        """Dense first-derivative collocation matrix (coefficient-space core)."""
        M = self.grid
        Dc = np.zeros((M, M))
        eye = np.eye(M)
        for j in range(M):
            der = np.polynomial.chebyshev.chebder(eye[:, j])
            Dc[:len(der), j] = der
        Dc *= 2.0 / self.length
        return self._vander @ Dc @ self._analysis

    def derivative(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Repeated derivative through one coefficient-space round trip.

        Converting to coefficients once and applying the recurrence
        `order` times avoids re-amplifying transform noise, which matters
        for second derivatives of sampled data.
        """
        coeffs = self.to_coefficients(values)
        coeffs = np.polynomial.chebyshev.chebder(coeffs, m=order,
                                                 scl=2.0 / self.length)
        return np.polynomial.chebyshev.chebval(self._t, coeffs)

    def derivative_at(self, values: np.ndarray, x: np.ndarray,
                      order: int = 1) -> np.ndarray:
        coeffs = self.to_coefficients(values)
        coeffs = np.polynomial.chebyshev.chebder(coeffs, m=order,
                                                 scl=2.0 / self.length)
        t = 2.0 * np.asarray(x) / self.length - 1.0
        return np.polynomial.chebyshev.chebval(t, coeffs)

    # reference (Fubini-Study) potential data, exact at the nodes
    def u_ref_prime(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (np.log(x) - np.log(self.length - x))

    def u_ref_second(self, x: np.ndarray) -> np.ndarray:
        return self.length / (2.0 * x * (self.length - x))

    def interpolate(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Chebyshev-series evaluation of node data at query points."""
        t = 2.0 * np.asarray(x) / self.length - 1.0
        return np.polynomial.chebyshev.chebval(t, self.to_coefficients(values))

    def integrate(self, density: np.ndarray) -> float:
        """Integral over CP^1 of a coefficient field against dx (angle included)."""
        return TWO_PI * float(self.weights @ density)


@dataclass(frozen=True)
class SymplecticPotential:
    """State u = u_ref + eta, eta given by values at the nodes."""

    geometry: ToricCP1Geometry
    eta: np.ndarray = field(repr=False)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        if eta.shape != (self.geometry.grid,):
            raise DimensionError(f"eta must have {self.geometry.grid} node values")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def reference(cls, geometry) -> "SymplecticPotential":
        return cls(geometry, np.zeros(geometry.grid))

    @cached_property
    def _eta_coeffs(self) -> np.ndarray:
        return self.geometry.to_coefficients(self.eta)

    @cached_property
    def eta_prime(self) -> np.ndarray:
        return self.geometry.derivative(self.eta, 1)

    @cached_property
    def eta_second(self) -> np.ndarray:
        return self.geometry.derivative(self.eta, 2)

    @cached_property
    def u_second(self) -> np.ndarray:
        """u'' at the nodes; this is the CP^1 MetricField payload."""
        return self.geometry.u_ref_second(self.geometry.nodes) + self.eta_second

    def validate_kahler(self) -> "SymplecticPotential":
        usec = self.u_second
        if usec.min() <= 0:
            node = int(np.argmin(usec))
            raise NotKahlerError(
                f"u'' reaches {usec.min():.3e} at node {node}",
                node=node, value=float(usec.min()))
        return self

    def u_prime_at(self, x: np.ndarray) -> np.ndarray:
        return self.geometry.u_ref_prime(x) + self.geometry.derivative_at(self.eta, x, 1)

    def u_second_at(self, x: np.ndarray) -> np.ndarray:
        return self.geometry.u_ref_second(x) + self.geometry.derivative_at(self.eta, x, 2)

    def inverse_moment(self, rho: np.ndarray) -> np.ndarray:
        """Solve u'(x) = rho for x in (0, length); Newton from the reference inverse."""
        L = self.geometry.length
        x = L / (1.0 + np.exp(-2.0 * np.clip(rho, -300, 300)))
        eps = 1e-13 * L
        x = np.clip(x, eps, L - eps)
        for _ in range(60):
            r = self.u_prime_at(x) - rho
            step = r / self.u_second_at(x)
            x = np.clip(x - step, eps, L - eps)
            if np.abs(step).max() < 1e-14 * L:
                break
        else:
            raise InterpolationError("moment-coordinate inversion did not converge")
        return x


def metric_from_potential(geom: ToricCP1Geometry, pot: SymplecticPotential) -> np.ndarray:
    """u'' at the nodes, positivity validated."""
    if pot.geometry != geom:
        raise DimensionError("potential defined on another geometry")
    return pot.validate_kahler().u_second


def scalar_curvature(pot: SymplecticPotential) -> np.ndarray:
    """Abreu scalar curvature S = -(1/u'')'' at the nodes."""
    pot.validate_kahler()
    return -pot.geometry.derivative(1.0 / pot.u_second, 2)


def ricci_over_omega(pot: SymplecticPotential) -> np.ndarray:
    """Density of the Ricci form against the metric's own area form (= S/2)."""
    return 0.5 * scalar_curvature(pot)


def moment_transfer(src: SymplecticPotential, dst: SymplecticPotential,
                    x_src: np.ndarray) -> np.ndarray:
    """Transfer map x_dst(x_src) matching complex points of the two metrics."""
    return dst.inverse_moment(src.u_prime_at(x_src))


def transfer_density(src: SymplecticPotential, dst: SymplecticPotential,
                     x_src: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(x_dst, d x_dst / d x_src) along the transfer map.

    The derivative is the pointwise area ratio omega_dst / omega_src at the
    common complex point.
    """
    x_dst = moment_transfer(src, dst, x_src)
    ratio = src.u_second_at(x_src) / dst.u_second_at(x_dst)
    return x_dst, ratio


def rotation_hamiltonian(geom: ToricCP1Geometry) -> np.ndarray:
    """Mean-zero Hamiltonian of the S^1 rotation field: h = x - length/2.

    The moment coordinate pushes every metric's area form to dx * dtheta,
    so the same node values are mean-zero for every state in the class.
    """
    return geom.nodes - geom.length / 2.0


def affine_part(geom: ToricCP1Geometry, values: np.ndarray) -> np.ndarray:
    """L^2([0, length], dx) projection onto span{1, x}."""
    w = geom.weights
    x = geom.nodes
    basis = np.stack([np.ones_like(x), x], axis=1)
    Gram = basis.T @ (w[:, None] * basis)
    rhs = basis.T @ (w * values)
    coef = np.linalg.solve(Gram, rhs)
    return basis @ coef


def remove_affine(geom: ToricCP1Geometry, values: np.ndarray) -> np.ndarray:
    """Quotient by the automorphism gauge: subtract the affine part."""
    return values - affine_part(geom, values)
