"""Coupled moment maps for diffeomorphisms between flat tori.

The value of the degree-p coupled moment map at a diffeomorphism f is the
pair of mean-zero top densities

    x-side:  (n/(n-p)) * (c1 omega_X^n / n!
                          - omega_X^{n-1-p} ^ f^* omega_Y^{p+1} / ((n-1-p)! (p+1)!))
    y-side:  (n/(n-p)) * (f_* omega_X^{n-p} ^ omega_Y^p / ((n-p)! p!)
                          - c2 omega_Y^n / n!)

with c1, c2 the quotients of integrals that make both sides integrate to
zero.  Integrals over Y are always evaluated by change of variables on X,
so only the reported y-density itself needs the cached inverse map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegreeError, DimensionError, GaugeError, MomentLabError, NotInConeError
from .torus import (DiffeoField, TorusGeometry, field_wedge_power, integrate,
                    mixed_top, pullback_2form, pushforward_density)

CONE_FLOOR = 1e-12
MEAN_ZERO_TOL = 1e-8


def _check_same_torus(geomX: TorusGeometry, geomY: TorusGeometry):
    if geomX.n != geomY.n or geomX.grid != geomY.grid:
        raise DimensionError("source and target tori must share n and grid")


def _pulled_back_class(geomX, geomY, f):
    """Components of f^* omega_Y on the X grid (constant target class)."""
    return pullback_2form(f, geomY.base_form_components(), constant=True)


def _cone_density(geomX, fYB, p):
    """omega_X^{n-p} ^ f^* omega_Y^p top density, cone-checked."""
    n = geomX.n
    WX = np.broadcast_to(geomX.base_form_components(), fYB.shape)
    dens = mixed_top(WX, n - p, fYB, p, geomX.dim)
    if dens.min() <= CONE_FLOOR:
        node = np.unravel_index(int(np.argmin(dens)), geomX.shape)
        raise NotInConeError(
            f"omega_X^{n-p} ^ f*omega_Y^{p} reaches {dens.min():.3e} at node {node}",
            node=node, value=float(dens.min()))
    return dens


@dataclass(frozen=True)
class MomentMapValue:
    """Mean-zero density pair with its normalizing constants."""

    geometry_x: TorusGeometry
    geometry_y: TorusGeometry
    x_density: np.ndarray = field(repr=False)
    y_density: np.ndarray = field(repr=False)
    c1: float = 0.0
    c2: float = 0.0
    p: int = 0
    prefactor: float = 1.0

    def __post_init__(self):
        scale = max(np.abs(self.x_density).max(), np.abs(self.y_density).max(), 1.0)
        ix = integrate(self.geometry_x, self.x_density)
        iy = integrate(self.geometry_y, self.y_density)
        if abs(ix) > MEAN_ZERO_TOL * scale or abs(iy) > MEAN_ZERO_TOL * scale:
            raise MomentLabError(
                f"moment-map densities must integrate to zero, got {ix:.2e}, {iy:.2e}")

    def l2_norms(self):
        nx = math.sqrt(integrate(self.geometry_x, self.x_density ** 2))
        ny = math.sqrt(integrate(self.geometry_y, self.y_density ** 2))
        return nx, ny

    def sup_norms(self):
        return float(np.abs(self.x_density).max()), float(np.abs(self.y_density).max())


def normalizing_constants(geomX: TorusGeometry, geomY: TorusGeometry,
                          f: DiffeoField, p: int) -> tuple[float, float]:
    """The two quotient-of-integral constants at the map f."""
    _check_same_torus(geomX, geomY)
    n = geomX.n
    if not (0 <= p <= n - 1):
        raise DegreeError(f"p = {p} out of [0, {n - 1}]")
    fYB = _pulled_back_class(geomX, geomY, f)
    _cone_density(geomX, fYB, p)
    WX = np.broadcast_to(geomX.base_form_components(), fYB.shape)
    dim = geomX.dim
    volX = integrate(geomX, field_wedge_power(WX, n, dim)) / math.factorial(n)
    volY = integrate(geomY, np.broadcast_to(
        field_wedge_power(geomY.base_form_components()[None, :], n, dim),
        geomX.shape)) / math.factorial(n)
    num1 = integrate(geomX, mixed_top(WX, n - 1 - p, fYB, p + 1, dim)) \
        / (math.factorial(n - 1 - p) * math.factorial(p + 1))
    num2 = integrate(geomX, mixed_top(WX, n - p, fYB, p, dim)) \
        / (math.factorial(n - p) * math.factorial(p))
    return num1 / volX, num2 / volY


def mu_p(geomX: TorusGeometry, geomY: TorusGeometry, f: DiffeoField,
         p: int) -> MomentMapValue:
    """Coupled moment-map value at f (densities on their own manifolds)."""
    _check_same_torus(geomX, geomY)
    n = geomX.n
    if p == n:
        raise DegreeError("p = n is handled by the dual map")
    if not (0 <= p <= n - 1):
        raise DegreeError(f"p = {p} out of [0, {n - 1}]")
    dim = geomX.dim
    fYB = _pulled_back_class(geomX, geomY, f)
    _cone_density(geomX, fYB, p)
    WX = np.broadcast_to(geomX.base_form_components(), fYB.shape)
    pref = n / (n - p)
    c1, c2 = normalizing_constants(geomX, geomY, f, p)

    volX_dens = field_wedge_power(WX, n, dim) / math.factorial(n)
    mixed_x = mixed_top(WX, n - 1 - p, fYB, p + 1, dim) \
        / (math.factorial(n - 1 - p) * math.factorial(p + 1))
    x_density = pref * (c1 * volX_dens - mixed_x)

    transported = mixed_top(WX, n - p, fYB, p, dim) \
        / (math.factorial(n - p) * math.factorial(p))
    volY_dens = np.broadcast_to(
        field_wedge_power(geomY.base_form_components()[None, :], n, dim),
        geomX.shape) / math.factorial(n)
    pushed = pushforward_density(f, transported)
    # evaluate the c2 quotient on Y itself so the density is exactly
    # mean-zero in the discrete quadrature (it agrees with the transported
    # value up to interpolation error)
    c2_discrete = integrate(geomY, pushed) / integrate(geomY, volY_dens)
    y_density = pref * (pushed - c2_discrete * volY_dens)
    return MomentMapValue(geomX, geomY, x_density, y_density,
                          c1=c1, c2=c2, p=p, prefactor=pref)


def mu_p_dual(geomY: TorusGeometry, geomX: TorusGeometry, g: DiffeoField,
              p: int) -> MomentMapValue:
    """Dual moment map: the degree-(n-p-1) map with X and Y exchanged.

    Its prefactor is n/(p+1).  Reordered to (X-side, Y-side), the dual at
    f^{-1} equals -((n-p)/(p+1)) times the value at f; see the duality
    checks in the verification suites.
    """
    n = geomY.n
    q = n - p - 1
    if not (0 <= q <= n - 1):
        raise DegreeError(f"dual degree n-p-1 = {q} out of range")
    return mu_p(geomY, geomX, g, q)


def moment_pairing(mmv: MomentMapValue, phi: np.ndarray, psi: np.ndarray) -> float:
    """<mmv, (phi, psi)> for mean-zero grid functions on X and Y."""
    if abs(np.mean(phi)) > 1e-10 or abs(np.mean(psi)) > 1e-10:
        raise GaugeError("pairing requires mean-zero test functions")
    return integrate(mmv.geometry_x, phi * mmv.x_density) \
        + integrate(mmv.geometry_y, psi * mmv.y_density)


def pairing_transported(geomX, geomY, f: DiffeoField, p: int,
                        phi_at, psi_at) -> float:
    """<mu_p(f), (phi, psi)> with all Y-integrals transported to X.

    phi_at and psi_at are callables evaluated at points (exact for trig
    polynomials), so the value involves no grid interpolation and is smooth
    along analytic deformations of f.  Used by the moment-map identity
    checks.
    """
    _check_same_torus(geomX, geomY)
    n = geomX.n
    dim = geomX.dim
    fYB = _pulled_back_class(geomX, geomY, f)
    cone = _cone_density(geomX, fYB, p)
    WX = np.broadcast_to(geomX.base_form_components(), fYB.shape)
    pref = n / (n - p)
    pts = geomX.coordinates()
    phi_vals = phi_at(pts)
    psi_vals = psi_at(f.points())

    volX_dens = field_wedge_power(WX, n, dim) / math.factorial(n)
    mixed_x = mixed_top(WX, n - 1 - p, fYB, p + 1, dim) \
        / (math.factorial(n - 1 - p) * math.factorial(p + 1))
    c1 = float(np.mean(mixed_x) / np.mean(volX_dens))
    x_part = integrate(geomX, phi_vals * (c1 * volX_dens - mixed_x))

    transported = cone / (math.factorial(n - p) * math.factorial(p))
    volY_pulled = field_wedge_power(fYB, n, dim) / math.factorial(n)
    c2 = float(np.mean(transported) / np.mean(volY_pulled))
    y_part = integrate(geomX, psi_vals * (transported - c2 * volY_pulled))
    return pref * (x_part + y_part)


# ---------------------------------------------------------------------------
# Graph embeddings into a product X x W


@dataclass(frozen=True)
class GraphMomentValue:
    """Densities (both on X) of the two graph-embedding functionals.

    phi_density pairs with functions on X; psi_density pairs with psi o f1
    for functions psi on W.  phi_density is mean-zero by the choice of the
    constant; psi_density keeps its raw normalization and its pairing is
    restricted to mean-zero psi.
    """

    geometry_x: TorusGeometry
    geometry_w: TorusGeometry
    f1: DiffeoField
    phi_density: np.ndarray = field(repr=False)
    psi_density: np.ndarray = field(repr=False)
    c1_prime: float = 0.0
    p: int = 0

    def pair(self, phi: np.ndarray, psi_at) -> float:
        """phi a mean-zero grid field on X, psi_at a callable on W points."""
        if phi is not None and abs(np.mean(phi)) > 1e-10:
            raise GaugeError("graph pairing requires mean-zero phi")
        out = 0.0
        if phi is not None:
            out += integrate(self.geometry_x, phi * self.phi_density)
        if psi_at is not None:
            out += integrate(self.geometry_x, psi_at(self.f1.points()) * self.psi_density)
        return out


def graph_mu_p(geomX: TorusGeometry, geomW: TorusGeometry, f1: DiffeoField,
               p: int) -> GraphMomentValue:
    """Moment-map densities of the graph x -> (x, f1(x)) in X x W.

    The pulled-back product form is omega_X + f1^* omega_W.  For p = n only
    the W-side functional survives, with density f^* omega_Y^n / n!.
    """
    _check_same_torus(geomX, geomW)
    n = geomX.n
    dim = geomX.dim
    if not (0 <= p <= n):
        raise DegreeError(f"graph moment map needs 0 <= p <= n, got {p}")
    fWB = pullback_2form(f1, geomW.base_form_components(), constant=True)
    B = np.broadcast_to(geomX.base_form_components(), fWB.shape) + fWB
    WX = np.broadcast_to(geomX.base_form_components(), fWB.shape)

    cone = mixed_top(WX, n - p, B, p, dim) if p < n else field_wedge_power(B, n, dim)
    if cone.min() <= CONE_FLOOR:
        node = np.unravel_index(int(np.argmin(cone)), geomX.shape)
        raise NotInConeError(f"graph positivity fails at node {node}",
                             node=node, value=float(cone.min()))

    if p == n:
        psi_density = field_wedge_power(B, n, dim) / math.factorial(n)
        phi_density = np.zeros_like(psi_density)
        return GraphMomentValue(geomX, geomW, f1, phi_density, psi_density,
                                c1_prime=0.0, p=p)

    mid = mixed_top(WX, n - p, B, p, dim) / (math.factorial(n - p) * math.factorial(p))
    high = mixed_top(WX, n - p - 1, B, p + 1, dim) \
        / (math.factorial(n - p - 1) * math.factorial(p + 1))
    volX_dens = field_wedge_power(WX, n, dim) / math.factorial(n)
    raw = mid - high
    c1_prime = -integrate(geomX, raw) / integrate(geomX, volX_dens)
    phi_density = c1_prime * volX_dens + raw
    return GraphMomentValue(geomX, geomW, f1, phi_density, mid, c1_prime=c1_prime, p=p)


def graph_conserved_pairing(geomX, geomW, f1: DiffeoField,
                            phi_vals: np.ndarray, psi_at) -> tuple[float, float]:
    """The two candidate pairings whose flow-invariance is under test.

    Returns (sum_combination, difference_combination) of
    int phi omega_X^{n-1} ^ f^*omega_Y / (n-1)!   and   int (psi o f) omega_X^n / n!.
    In this package's conventions the sum is the conserved one.
    """
    n = geomX.n
    dim = geomX.dim
    fWB = pullback_2form(f1, geomW.base_form_components(), constant=True)
    B = np.broadcast_to(geomX.base_form_components(), fWB.shape) + fWB
    WX = np.broadcast_to(geomX.base_form_components(), fWB.shape)
    t_phi = integrate(geomX, phi_vals * mixed_top(WX, n - 1, B, 1, dim)) \
        / math.factorial(n - 1)
    t_psi = integrate(geomX, psi_at(f1.points())
                      * field_wedge_power(WX, n, dim)) / math.factorial(n)
    return t_phi + t_psi, t_phi - t_psi
