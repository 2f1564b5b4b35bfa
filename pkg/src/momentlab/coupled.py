"""Coupled residual systems evaluated in the potential picture (f_i = id).

Every system returns a CoupledResidual: per-slot top densities, each made
mean-zero by its own normalizing constant, together with the volume
densities needed to convert densities into residual scalar functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateVolumeError, DegreeError, DimensionError,
                     MomentLabError, NotInConeError)
from .states import KahlerState
from . import toric
from .torus import (field_wedge_power, integrate as torus_integrate, mixed_top,
                    ricci, scalar_curvature, top_with_factor, ddbar_hermitian,
                    HermitianFormField, TorusGeometry)

CONE_FLOOR = 1e-12
MEAN_ZERO_TOL = 1e-8


@dataclass(frozen=True)
class CoupledResidual:
    """Residual densities of a coupled system, one per slot.

    densities[i] and volumes[i] live on the i-th slot's own grid; the
    residual scalar of slot i is densities[i] / volumes[i].  All densities
    integrate to zero by construction of the constants.
    """

    state: KahlerState
    densities: tuple = field(repr=False)
    volumes: tuple = field(repr=False)
    constants: tuple = ()
    p_vector: tuple = ()

    def __post_init__(self):
        for i, d in enumerate(self.densities):
            total = self._integrate(i, d)
            scale = max(float(np.abs(d).max()), 1.0)
            if abs(total) > MEAN_ZERO_TOL * scale:
                raise MomentLabError(
                    f"residual {i} integrates to {total:.2e}, not zero")

    def _integrate(self, i: int, values: np.ndarray) -> float:
        # systems may carry more components than slots when companions share
        # the manifold (the calibration systems do); clamp to the last slot
        geom = self.state.geometries[min(i, len(self.state.geometries) - 1)]
        if self.state.backend == "torus":
            return torus_integrate(geom, values)
        return geom.integrate(values)

    def scalars(self) -> tuple:
        return tuple(d / v for d, v in zip(self.densities, self.volumes))

    def linf(self) -> float:
        return max(float(np.abs(s).max()) for s in self.scalars())

    def l2(self) -> float:
        total = 0.0
        for i, (d, v) in enumerate(zip(self.densities, self.volumes)):
            total += self._integrate(i, (d / v) ** 2 * v)
        return math.sqrt(total)

    def calabi_value(self) -> float:
        """Sum of squared L^2 norms of the recentered residual scalars."""
        total = 0.0
        for i, (d, v) in enumerate(zip(self.densities, self.volumes)):
            s = d / v
            mean = self._integrate(i, s * v) / self._integrate(i, v)
            total += self._integrate(i, (s - mean) ** 2 * v)
        return total

    def norms_report(self) -> dict:
        return {
            "linf_per_component": [float(np.abs(s).max()) for s in self.scalars()],
            "l2": self.l2(),
            "calabi": self.calabi_value(),
            "constants": [float(c) for c in self.constants],
            "integrals": [self._integrate(i, d) for i, d in enumerate(self.densities)],
        }


def _torus_form_components(state: KahlerState):
    metrics = state.metrics()
    return [m.real_components() for m in metrics], metrics


def ccsck_residual(state: KahlerState, p_vector, weights=None,
                   include_self_term: bool = False) -> CoupledResidual:
    """Residuals of the coupled curvature system at a potential tuple.

    Slot 0 carries the curvature equation

        sum_i w_i omega_i^{p_i+1} ^ omega_0^{n-p_i-1} / ((p_i+1)! (n-p_i-1)!)
        - Ric(omega_0) ^ omega_0^{n-1} / (n-1)!  -  c_0 omega_0^n / n!

    and slot i >= 1 the volume-ratio constraint

        omega_0^{n-p_i} ^ omega_i^{p_i} / ((n-p_i)! p_i!) - c_i omega_i^n / n!.

    The optional slot-0 self term is proportional to omega_0^n and only
    shifts c_0; it is excluded by default.
    """
    k = state.k
    p_vector = tuple(int(p) for p in p_vector)
    if len(p_vector) != k:
        raise DimensionError(f"p_vector needs {k} entries, got {len(p_vector)}")
    n = state.n
    for p in p_vector:
        if not (0 <= p <= n - 1):
            raise DegreeError(f"p = {p} out of [0, {n - 1}]")
    weights = tuple(float(w) for w in (weights if weights is not None else (1.0,) * k))
    if len(weights) != k:
        raise DimensionError("need one weight per companion slot")

    if state.backend == "torus":
        return _ccsck_torus(state, p_vector, weights, include_self_term)
    return _ccsck_cp1(state, p_vector, weights, include_self_term)


def _ccsck_torus(state, p_vector, weights, include_self_term):
    comps, metrics = _torus_form_components(state)
    geom0 = state.geometries[0]
    n, dim = state.n, geom0.dim
    B0 = comps[0]
    vol0 = field_wedge_power(B0, n, dim) / math.factorial(n)

    coupling = np.zeros(geom0.shape)
    for i, (p, w) in enumerate(zip(p_vector, weights), start=1):
        coupling += w * mixed_top(comps[i], p + 1, B0, n - p - 1, dim) \
            / (math.factorial(p + 1) * math.factorial(n - p - 1))
    if include_self_term:
        p0 = p_vector[0] if p_vector else 0
        coupling += mixed_top(B0, p0 + 1, B0, n - p0 - 1, dim) \
            / (math.factorial(p0 + 1) * math.factorial(n - p0 - 1))
    ric = ricci(metrics[0]).real_components()
    ric_term = top_with_factor(ric, B0, n - 1, dim) / math.factorial(n - 1)

    raw0 = coupling - ric_term
    c0 = torus_integrate(geom0, raw0) / torus_integrate(geom0, vol0)
    densities = [raw0 - c0 * vol0]
    volumes = [vol0]
    constants = [c0]

    for i, p in enumerate(p_vector, start=1):
        voli = field_wedge_power(comps[i], n, dim) / math.factorial(n)
        rawi = mixed_top(B0, n - p, comps[i], p, dim) \
            / (math.factorial(n - p) * math.factorial(p))
        ci = torus_integrate(geom0, rawi) / torus_integrate(geom0, voli)
        densities.append(rawi - ci * voli)
        volumes.append(voli)
        constants.append(ci)
    return CoupledResidual(state, tuple(densities), tuple(volumes),
                           tuple(constants), p_vector)


def _ccsck_cp1(state, p_vector, weights, include_self_term):
    if any(p != 0 for p in p_vector):
        raise DegreeError("CP^1 has n = 1, so every p_i must be 0")
    pots = state.metrics()  # validated SymplecticPotential tuple
    geom0 = state.geometries[0]
    x0 = geom0.nodes
    L0 = geom0.length

    coupling = np.zeros(geom0.grid)
    for i, w in enumerate(weights, start=1):
        _, ratio = toric.transfer_density(pots[0], pots[i], x0)
        coupling += w * ratio
    if include_self_term:
        coupling += 1.0
    ric0 = toric.ricci_over_omega(pots[0])
    raw0 = coupling - ric0
    c0 = geom0.integrate(raw0) / geom0.integrate(np.ones_like(raw0))
    densities = [raw0 - c0]
    volumes = [np.ones(geom0.grid)]
    constants = [c0]

    for i in range(1, state.k + 1):
        geomi = state.geometries[i]
        _, ratio = toric.transfer_density(pots[i], pots[0], geomi.nodes)
        # quadrature form of L0 / length_i: exactly mean-zero discretely
        ci = geomi.integrate(ratio) / geomi.integrate(np.ones(geomi.grid))
        densities.append(ratio - ci)
        volumes.append(np.ones(geomi.grid))
        constants.append(ci)
    return CoupledResidual(state, tuple(densities), tuple(volumes),
                           tuple(constants), p_vector)


def mu_J_density(metric, sign: int = +1) -> np.ndarray:
    """Mean-zero curvature density Ric ^ omega^{n-1}/(n-1)! - mean.

    sign = -1 flips the orientation (exposed for experiments with the
    opposite curvature convention).
    """
    geom = metric.geometry
    n, dim = geom.n, geom.dim
    B = metric.real_components()
    vol = field_wedge_power(B, n, dim) / math.factorial(n)
    ric_term = top_with_factor(ricci(metric).real_components(), B, n - 1, dim) \
        / math.factorial(n - 1)
    mean = torus_integrate(geom, ric_term) / torus_integrate(geom, vol)
    return sign * (ric_term - mean * vol)


# ---------------------------------------------------------------------------
# U(1) curvature-coupled system on tori of n >= 2


def kym_u1_residual(state: KahlerState, alpha0: float, alpha1: float,
                    alpha2: float) -> CoupledResidual:
    """Two-component curvature/2-form system with weights alpha0..alpha2.

    Component 1 (on X):
        -alpha0 Ric ^ om_X^{n-1}/(n-1)! + alpha1 om_X^{n-1} ^ om_Y /(n-1)!
        -alpha2 om_X^2 ^ om_Y^{n-2} / ((n-2)! 2!) + z om_X^n/n!
    Component 2 (on Y, identity map picture):
        alpha2 (om_X^{n-1} ^ om_Y /(n-1)! - c21 om_Y^n/n!)
        - alpha1 (om_X^n/n! - c20 om_Y^n/n!)

    z, c20, c21 are the mean normalizers; the classical choice ties
    alpha1 = alpha2 * c21 / c20 so that component 2's constant term drops.
    Constants are recorded on the result (.kym_constants).
    """
    if state.backend != "torus":
        raise DimensionError("the U(1) coupled system is implemented on tori")
    if state.k != 1:
        raise DimensionError("the U(1) coupled system couples exactly two classes")
    n = state.n
    if n < 2:
        raise DegreeError("the om^{n-2} term needs n >= 2")
    if min(alpha0, alpha1, alpha2) <= 0:
        raise MomentLabError("weights alpha0, alpha1, alpha2 must be positive")
    comps, metrics = _torus_form_components(state)
    geom = state.geometries[0]
    dim = geom.dim
    BX, BY = comps
    volX = field_wedge_power(BX, n, dim) / math.factorial(n)
    volY = field_wedge_power(BY, n, dim) / math.factorial(n)

    term1 = mixed_top(BX, n - 1, BY, 1, dim) / math.factorial(n - 1)
    term2 = mixed_top(BX, 2, BY, n - 2, dim) / (math.factorial(n - 2) * 2.0)
    for name, t in (("om_X^{n-1}^om_Y", term1), ("om_X^2^om_Y^{n-2}", term2)):
        if t.min() <= CONE_FLOOR:
            node = np.unravel_index(int(np.argmin(t)), geom.shape)
            raise NotInConeError(f"mixed volume {name} fails positivity at {node}",
                                 node=node, value=float(t.min()))
    ric_term = top_with_factor(ricci(metrics[0]).real_components(), BX, n - 1, dim) \
        / math.factorial(n - 1)

    VX = torus_integrate(geom, volX)
    VY = torus_integrate(geom, volY)
    sbar_half = torus_integrate(geom, ric_term) / VX
    c10 = torus_integrate(geom, term1) / VX
    c11 = torus_integrate(geom, term2) / VX
    z = alpha0 * sbar_half - alpha1 * c10 + alpha2 * c11
    comp1 = -alpha0 * ric_term + alpha1 * term1 - alpha2 * term2 + z * volX

    c21 = torus_integrate(geom, term1) / VY
    c20 = VX / VY
    comp2 = alpha2 * (term1 - c21 * volY) - alpha1 * (volX - c20 * volY)

    res = CoupledResidual(state, (comp1, comp2), (volX, volY),
                          (z, c20, c21), (1,))
    d = alpha1 / alpha2
    object.__setattr__(res, "kym_constants", {
        "z": z, "c": alpha1 * d + z, "d": d,
        "c10": c10, "c11": c11, "c20": c20, "c21": c21,
        "sbar_half": sbar_half,
        "alpha1_relation_defect": c20 * alpha1 - c21 * alpha2,
    })
    return res


# ---------------------------------------------------------------------------
# Calibration-angle (dHYM-type) residuals


@dataclass(frozen=True)
class DhymData:
    """A positive form, a closed companion 2-form, and a phase angle."""

    geometry: TorusGeometry
    omega: np.ndarray = field(repr=False)   # component field, positive class
    alpha: np.ndarray = field(repr=False)   # component field, closed
    theta: float = 0.0

    def cone_density(self) -> np.ndarray:
        even, odd = _binomial_sums(self.geometry, self.omega, self.alpha)
        return math.cos(self.theta) * even - math.sin(self.theta) * odd

    def check_cone(self):
        dens = self.cone_density()
        if dens.min() <= CONE_FLOOR:
            node = np.unravel_index(int(np.argmin(dens)), self.geometry.shape)
            raise NotInConeError(
                f"calibration cone fails: {dens.min():.3e} at node {node}",
                node=node, value=float(dens.min()))
        return dens


def _binomial_sums(geom, Bw, Ba):
    """(even, odd) alternating binomial mixed-power sums, no factorials."""
    n, dim = geom.n, geom.dim
    even = np.zeros(geom.shape)
    odd = np.zeros(geom.shape)
    for k in range(0, n + 1):
        term = math.comb(n, k) * mixed_top(Bw, n - k, Ba, k, dim)
        if k % 2 == 0:
            even += (-1) ** (k // 2) * term
        else:
            odd += (-1) ** ((k - 1) // 2) * term
    return even, odd


def dhym_residual(data: DhymData) -> tuple[np.ndarray, np.ndarray]:
    """(imaginary, real) densities of the rotated top power.

    imaginary = cos(theta) * odd + sin(theta) * even
    real      = cos(theta) * even - sin(theta) * odd
    where even/odd are the alternating binomial sums of om^{n-k} ^ alpha^k.
    The cone condition is real > 0 everywhere, checked before returning.
    """
    even, odd = _binomial_sums(data.geometry, data.omega, data.alpha)
    real = math.cos(data.theta) * even - math.sin(data.theta) * odd
    if real.min() <= CONE_FLOOR:
        node = np.unravel_index(int(np.argmin(real)), data.geometry.shape)
        raise NotInConeError(f"calibration cone fails at node {node}",
                             node=node, value=float(real.min()))
    imag = math.cos(data.theta) * odd + math.sin(data.theta) * even
    return imag, real


def _pfaffian(M: np.ndarray):
    d = M.shape[-1]
    if d == 2:
        return M[..., 0, 1]
    if d == 4:
        return (M[..., 0, 1] * M[..., 2, 3]
                - M[..., 0, 2] * M[..., 1, 3]
                + M[..., 0, 3] * M[..., 1, 2])
    raise DimensionError("pfaffian implemented for dim 2 and 4")


def closed_form_angle(geom: TorusGeometry, omega_comps: np.ndarray,
                      alpha_comps: np.ndarray) -> float:
    """Vanishing angle for constant forms: theta = -arg Pf(W + i A) mod pi.

    (om + i alpha)^n / n! has top coefficient Pf(W + i A), so the rotated
    imaginary part vanishes exactly at this angle.
    """
    from .torus import components_to_real_form
    W = (components_to_real_form(np.asarray(omega_comps, dtype=np.float64), geom.dim)
         + 1j * components_to_real_form(np.asarray(alpha_comps, dtype=np.float64),
                                        geom.dim))
    pf = _pfaffian(W)
    theta = -np.angle(pf)
    return float((theta + np.pi / 2) % np.pi - np.pi / 2)


def coupled_dhym_residual(state: KahlerState, alpha_class: np.ndarray,
                          psi: np.ndarray, theta: float) -> CoupledResidual:
    """Curvature-coupled calibration system at (omega_phi, alpha_psi).

    state carries the single positive class and its potential phi;
    alpha_psi = alpha_class + ddbar psi is the closed companion form (not
    required positive).  Components:

        1: Ric(om) ^ om^{n-1}/(n-1)! + cos(t) * even(om, a) - sin(t) * odd(om, a)
           - c1 om^n/n!
        2: cos(t) * sum_{r>=0} (-1)^r C(n,2r)   om^{n-2r-1} ^ a^{2r+1}
           + sin(t) * sum_{r>=1} (-1)^r C(n,2r+1) om^{n-2r}   ^ a^{2r}
           - c2 a^n/n!

    With alpha = 0 and theta = 0 component 1 is exactly the mean-zero
    curvature density mu_J_density(metric).
    """
    if state.backend != "torus" or state.k != 0:
        raise DimensionError("coupled calibration system: one torus class + companion")
    geom = state.geometries[0]
    n, dim = geom.n, geom.dim
    metric = state.metrics()[0]
    Bw = metric.real_components()
    Ga = np.asarray(alpha_class, dtype=np.complex128)
    Aherm = ddbar_hermitian(np.asarray(psi, dtype=np.float64), n) + Ga
    Ba = HermitianFormField(geom, Aherm).real_components()

    volw = field_wedge_power(Bw, n, dim) / math.factorial(n)
    ric_term = top_with_factor(ricci(metric).real_components(), Bw, n - 1, dim) \
        / math.factorial(n - 1)
    even, odd = _binomial_sums(geom, Bw, Ba)
    raw1 = ric_term + math.cos(theta) * even - math.sin(theta) * odd
    c1 = torus_integrate(geom, raw1) / torus_integrate(geom, volw)
    comp1 = raw1 - c1 * volw

    s_cos = np.zeros(geom.shape)
    for r in range(0, (n - 1) // 2 + 1):
        k = 2 * r + 1
        s_cos += (-1) ** r * math.comb(n, 2 * r) * mixed_top(Bw, n - k, Ba, k, dim)
    s_sin = np.zeros(geom.shape)
    for r in range(1, n // 2 + 1):
        k = 2 * r
        s_sin += (-1) ** r * math.comb(n, 2 * r + 1) * mixed_top(Bw, n - k, Ba, k, dim)
    raw2 = math.cos(theta) * s_cos + math.sin(theta) * s_sin
    vola = field_wedge_power(Ba, n, dim) / math.factorial(n)
    denom = torus_integrate(geom, vola)
    if abs(denom) > 1e-12:
        c2 = torus_integrate(geom, raw2) / denom
    else:
        c2 = 0.0
    comp2 = raw2 - c2 * vola

    return CoupledResidual(state, (comp1, comp2), (volw, volw),
                           (c1, c2), ())
