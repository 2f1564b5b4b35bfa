"""Named verification suites: each returns a deterministic report dict.

Every suite draws its own data from a seeded generator, measures the
relevant identity, and reports measured errors next to the tolerances it
was asked to enforce.  The CLI exposes these as `verify <suite>`.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import exterior as ext
from . import toric
from .coupled import ccsck_residual
from .functionals import (HolomorphicFieldData, PotentialPath, futaki,
                          geodesic_convexity_check, mabuchi_increment,
                          mabuchi_path, mabuchi_samples, straight_path)
from .moments import mu_p, mu_p_dual, normalizing_constants, pairing_transported
from .states import KahlerState, cp1_state
from .torus import (DiffeoField, SampledMap, TorusGeometry, TrigPolynomial,
                    TrigVectorField, analytic_flow, hamiltonian_flow,
                    integrate, pullback_density, pushforward_density)


def _report(name, checks, extra=None):
    out = {"suite": name,
           "passed": all(c["passed"] for c in checks),
           "checks": checks}
    if extra:
        out.update(extra)
    return out


def _check(name, error, tol, **extra):
    entry = {"name": name, "error": float(error), "tolerance": float(tol),
             "passed": bool(error < tol)}
    entry.update(extra)
    return entry


# ---------------------------------------------------------------------------
# exterior suite: the contraction identity at its verified scope


def _random_symplectic(rng, dim, amplitude=0.25):
    J = np.zeros((dim, dim))
    for i in range(dim // 2):
        J[2 * i, 2 * i + 1] = 1.0
        J[2 * i + 1, 2 * i] = -1.0
    P = rng.normal(size=(dim, dim)) * amplitude
    return J + (P - P.T) / 2.0


def verify_exterior(seed: int = 0, instances: int = 1000,
                    tolerance: float = 1e-10) -> dict:
    """Contraction-identity sweep over n in {2,3,4} and all p.

    For each instance the two sides are evaluated through the exterior
    kernel; the identity is asserted where it is a theorem (p = 0, and
    beta proportional to alpha for every p).  For 0 < p with generic beta
    the measured defect is reported as documentation of the failure of the
    single-pairing identity there (see the decisions ledger).
    """
    rng = np.random.default_rng(seed)
    start = time.time()
    cells = [(n, p) for n in (2, 3, 4) for p in range(n)]
    per_cell = max(1, instances // len(cells))
    checks = []
    defects = []
    for n, p in cells:
        dim = 2 * n
        worst_valid = 0.0
        worst_generic = 0.0
        for _ in range(per_cell):
            A = _random_symplectic(rng, dim)
            u = ext.TangentVector(dim, rng.normal(size=dim))
            v = ext.TangentVector(dim, rng.normal(size=dim))
            alpha = ext.two_form_from_matrix(A)
            # generic draw
            B = _random_symplectic(rng, dim)
            lhs, rhs = ext.check_interior_identity(
                alpha, ext.two_form_from_matrix(B), u, v, p)
            scale = max(abs(lhs), abs(rhs), 1e-30)
            generic_err = abs(lhs - rhs) / scale
            worst_generic = max(worst_generic, generic_err)
            if p == 0:
                worst_valid = max(worst_valid, generic_err)
            else:
                lam = 0.5 + rng.random()
                lhs2, rhs2 = ext.check_interior_identity(
                    alpha, ext.two_form_from_matrix(lam * A), u, v, p)
                worst_valid = max(worst_valid,
                                  abs(lhs2 - rhs2) / max(abs(lhs2), 1e-30))
        checks.append(_check(f"identity_n{n}_p{p}_verified_scope",
                             worst_valid, tolerance, instances=per_cell))
        defects.append({"n": n, "p": p, "generic_relative_defect": worst_generic})
    return _report("exterior", checks,
                   {"generic_defects": defects,
                    "runtime_seconds": time.time() - start})


def verify_exterior_as_stated(seed: int = 0, instances: int = 1000,
                              tolerance: float = 1e-10) -> dict:
    """The same sweep asserting the identity for generic draws at every p.

    This is the literal acceptance wording; it fails for 0 < p (the
    intermediate-p identity is mathematically false; constant-form
    counterexamples are in the test suite).  Kept separate so the failure
    is visible rather than silently skipped.
    """
    rng = np.random.default_rng(seed)
    cells = [(n, p) for n in (2, 3, 4) for p in range(n)]
    per_cell = max(1, instances // len(cells))
    checks = []
    for n, p in cells:
        dim = 2 * n
        worst = 0.0
        for _ in range(per_cell):
            A = _random_symplectic(rng, dim)
            B = _random_symplectic(rng, dim)
            u = ext.TangentVector(dim, rng.normal(size=dim))
            v = ext.TangentVector(dim, rng.normal(size=dim))
            lhs, rhs = ext.check_interior_identity(
                ext.two_form_from_matrix(A), ext.two_form_from_matrix(B), u, v, p)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30))
        checks.append(_check(f"identity_n{n}_p{p}_generic", worst, tolerance,
                             instances=per_cell))
    return _report("exterior-as-stated", checks)


# ---------------------------------------------------------------------------
# moment-map identity suite (finite differences of the pairing)


def _torus_pair(n, N, gX=None, gY=None):
    gX = np.eye(n, dtype=complex) if gX is None else np.asarray(gX, dtype=complex)
    gY = gX if gY is None else np.asarray(gY, dtype=complex)
    return TorusGeometry(n, N, gX), TorusGeometry(n, N, gY)


def _hamiltonian_base_map(geomX, h_terms, t=0.25, steps=8):
    """Hamiltonian flow as a SampledMap; Jacobian by spectral differentiation."""
    from .torus import spectral_gradient
    h = TrigPolynomial(geomX.dim, h_terms)
    vf = TrigVectorField.hamiltonian(geomX, h)
    pts = geomX.coordinates()
    img = analytic_flow(vf, pts, t, steps=steps)
    disp = img - pts
    J = np.stack([spectral_gradient(disp[..., c], geomX.dim)
                  for c in range(geomX.dim)], axis=-2)
    for c in range(geomX.dim):
        J[..., c, c] += 1.0
    return SampledMap(geomX, img, J)


def moment_identity_case(geomX, geomY, base_map, p, rng, n_directions=5,
                         fd_step=2e-3):
    """Finite differences of the pairing along analytic curve directions.

    Each direction uses the affine family f_s(x) = f(x) + s v(f(x)) whose
    velocity at s = 0 is v o f; the pulled-back class along the family is
    quadratic in s, so each pairing evaluation is a cheap recombination of
    three precomputed component fields.  Returns per-direction dicts with
    the FD estimates, Richardson extrapolation, pairing value and the
    observed convergence order.
    """
    from .torus import (components_to_real_form, field_wedge_power,
                        mixed_top, real_form_to_components)
    n = geomX.n
    dim = geomX.dim
    WX = geomX.base_form_matrix()
    WY = geomY.base_form_matrix()
    WXinv = np.linalg.inv(WX)
    WYinv = np.linalg.inv(WY)
    pts = geomX.coordinates()
    fpts = base_map.points()
    Jb = base_map.jacobian
    WXcomp = np.broadcast_to(geomX.base_form_components(),
                             geomX.shape + (geomX.base_form_components().size,))
    volX_dens = field_wedge_power(WXcomp, n, dim) / math.factorial(n)
    volX_mean = float(np.mean(volX_dens))
    fact_x = math.factorial(n - 1 - p) * math.factorial(p + 1)
    fact_y = math.factorial(n - p) * math.factorial(p)
    pref = n / (n - p)
    results = []
    for _ in range(n_directions):
        phi = TrigPolynomial.random(rng, dim, 3, 2, 0.4)
        psi = TrigPolynomial.random(rng, dim, 3, 2, 0.4)
        vfield = TrigVectorField.random(rng, dim, 2, 2, 0.35)

        v_vals = vfield(fpts)
        DvJ = vfield.jacobian_at(fpts) @ Jb
        # pullback along the family: quadratic polynomial in s per component
        B0 = np.swapaxes(Jb, -1, -2) @ (WY @ Jb)
        B1 = np.swapaxes(Jb, -1, -2) @ (WY @ DvJ)
        B1 = B1 - np.swapaxes(B1, -1, -2)
        B2 = np.swapaxes(DvJ, -1, -2) @ (WY @ DvJ)
        C0 = real_form_to_components(B0)
        C1 = real_form_to_components(B1)
        C2 = real_form_to_components(B2)
        phi_vals = phi(pts)

        def H(s):
            fYB = C0 + s * C1 + (s * s) * C2
            mixed_x = mixed_top(WXcomp, n - 1 - p, fYB, p + 1, dim) / fact_x
            c1 = float(np.mean(mixed_x)) / volX_mean
            x_part = integrate(geomX, phi_vals * (c1 * volX_dens - mixed_x))
            transported = mixed_top(WXcomp, n - p, fYB, p, dim) / fact_y
            volY_pulled = field_wedge_power(fYB, n, dim) / math.factorial(n)
            c2 = float(np.mean(transported)) / float(np.mean(volY_pulled))
            psi_vals = psi(fpts + s * v_vals)
            y_part = integrate(geomX, psi_vals * (transported - c2 * volY_pulled))
            return pref * (x_part + y_part)

        estimates = {}
        for s in (fd_step, fd_step / 2):
            estimates[s] = (H(s) - H(-s)) / (2 * s)
        d1, d2 = estimates[fd_step], estimates[fd_step / 2]
        richardson = (4 * d2 - d1) / 3

        xi_phi = phi.gradient(pts) @ (-WXinv.T)
        xi_psi_f = psi.gradient(fpts) @ (-WYinv.T)
        Xfield = (Jb @ xi_phi[..., None])[..., 0] + xi_psi_f
        dens = mixed_top(WXcomp, n - p, real_form_to_components(B0), p, dim)
        if dens.min() <= 1e-12:
            raise RuntimeError("base map left the positivity cone")
        pairing = np.sum((Xfield @ WY) * v_vals, axis=-1)
        iXO = integrate(geomX, pairing * dens) / fact_y

        results.append({"fd_coarse": d1, "fd_fine": d2,
                        "richardson": richardson, "pairing": iXO})
    # relative errors against the direction set's scale, so directions with
    # an accidentally tiny pairing do not divide by (numerical) zero
    typical = max(abs(r["pairing"]) for r in results)
    for r in results:
        scale = max(abs(r["pairing"]), 1e-3 * typical, 1e-30)
        err1 = abs(r["fd_coarse"] - r["pairing"]) / scale
        err2 = abs(r["fd_fine"] - r["pairing"]) / scale
        r["relative_error_extrapolated"] = abs(r["richardson"] - r["pairing"]) / scale
        r["observed_order"] = (math.log2(err1 / err2)
                               if err2 > 1e-11 else 2.0)
    return results


def verify_moment_identity(seed: int = 0, grid_t2: int = 64, grid_t4: int = 32,
                           directions: int = 20, tolerance: float = 1e-5) -> dict:
    """Hamiltonian-pairing identity on T^2 (p = 0) and T^4 (p in {0, 1}).

    T^2 runs with distinct classes and a generic (non-symplectic) base map,
    where the p = 0 identity holds unconditionally.  T^4 at p = 1 runs at
    equal classes with a Hamiltonian base map: the degree-1 pairing
    identity is valid exactly on that locus (see the decisions ledger for
    the generic-p analysis); p = 0 on T^4 again uses generic data.
    """
    rng = np.random.default_rng(seed)
    checks = []
    details = {}

    geomX, geomY = _torus_pair(1, grid_t2, gY=np.array([[2.0]]))
    base_vf = TrigVectorField.random(rng, 2, 2, 2, 0.25)
    img, J = analytic_flow(base_vf, geomX.coordinates(), 1.0, steps=24,
                           with_jacobian=True)
    base = SampledMap(geomX, img, J)
    res = moment_identity_case(geomX, geomY, base, 0, rng, directions)
    worst = max(r["relative_error_extrapolated"] for r in res)
    orders = [r["observed_order"] for r in res]
    checks.append(_check("t2_p0_generic", worst, tolerance,
                         min_order=min(orders), directions=len(res)))
    details["t2_p0"] = res

    geomX4, geomY4 = _torus_pair(2, grid_t4)
    h_terms = [((1, 0, 0, 0), 0.1, 0.0), ((0, 1, 1, 0), 0.0, 0.08)]
    base4 = _hamiltonian_base_map(geomX4, h_terms, t=0.3, steps=6)
    for p in (0, 1):
        res = moment_identity_case(geomX4, geomY4, base4, p, rng,
                                   max(3, (3 * directions) // 10))
        worst = max(r["relative_error_extrapolated"] for r in res)
        orders = [r["observed_order"] for r in res]
        checks.append(_check(f"t4_p{p}_hamiltonian_base", worst, tolerance,
                             min_order=min(orders), directions=len(res)))
        details[f"t4_p{p}"] = res

    # p = 0 on T^4 with unequal classes and a generic base map
    geomX4b, geomY4b = _torus_pair(2, max(16, grid_t4 // 2),
                                   gY=np.array([[1.0, 0.2], [0.2, 1.5]]))
    vfb = TrigVectorField.random(rng, 4, 2, 1, 0.2)
    img, J = analytic_flow(vfb, geomX4b.coordinates(), 1.0, steps=16,
                           with_jacobian=True)
    baseb = SampledMap(geomX4b, img, J)
    res = moment_identity_case(geomX4b, geomY4b, baseb, 0, rng, 4)
    worst = max(r["relative_error_extrapolated"] for r in res)
    checks.append(_check("t4_p0_generic_classes", worst, tolerance,
                         directions=len(res)))
    return _report("moment-identity", checks, {"details": details})


# ---------------------------------------------------------------------------
# constancy of the normalizing constants


def verify_constants(seed: int = 0, grid: int = 128, t_max: float = 0.3,
                     tolerance: float = 1e-4, refine: bool = True,
                     fine_tolerance: float = 1e-5) -> dict:
    """Drift of c1, c2 along Hamiltonian deformations on T^2."""
    rng = np.random.default_rng(seed)
    checks = []

    def drift_at(N):
        geomX = TorusGeometry(1, N, np.array([[1.0]], dtype=complex))
        geomY = TorusGeometry(1, N, np.array([[1.6]], dtype=complex))
        X = geomX.coordinates()
        base = hamiltonian_flow(
            geomX, 0.3 * np.sin(X[..., 0]) * np.cos(X[..., 1]), 0.2, steps=24)
        c_ref = normalizing_constants(geomX, geomY, base, 0)
        worst = 0.0
        for t in (0.5 * t_max, t_max):
            h = 0.25 * np.sin(X[..., 0] + X[..., 1]) + 0.2 * np.cos(X[..., 1])
            flow = hamiltonian_flow(geomX, h, t, steps=32)
            from .torus import compose
            f = compose(flow, base)
            c = normalizing_constants(geomX, geomY, f, 0)
            worst = max(worst, abs(c[0] - c_ref[0]) / abs(c_ref[0]),
                        abs(c[1] - c_ref[1]) / abs(c_ref[1]))
        return worst

    d1 = drift_at(grid)
    checks.append(_check(f"constants_drift_N{grid}", d1, tolerance))
    extra = {"drift_coarse": d1}
    if refine:
        d2 = drift_at(2 * grid)
        checks.append(_check(f"constants_drift_N{2 * grid}", d2, fine_tolerance))
        extra["drift_fine"] = d2
        extra["order_estimate"] = math.log2(d1 / d2) if d2 > 0 else float("inf")
    return _report("constants", checks, extra)


# ---------------------------------------------------------------------------
# duality


def verify_duality(seed: int = 0, grid: int = 128, tolerance: float = 1e-6) -> dict:
    """Dual-map relation on T^2 flows, plus the general-ratio check on T^4.

    On T^2 (n = 1, p = 0) the component ratio is -1, which agrees with
    both the stated coefficient -(p+1)/(n-p) and the implemented general
    ratio -(n-p)/(p+1).  The T^4 checks document the general ratio.
    """
    rng = np.random.default_rng(seed)
    checks = []

    geomX = TorusGeometry(1, grid, np.array([[1.0]], dtype=complex))
    geomY = TorusGeometry(1, grid, np.array([[1.7]], dtype=complex))
    worst = 0.0
    for k in range(3):
        # generic (non-symplectic) maps: the moment map is genuinely nonzero
        vf = TrigVectorField.random(np.random.default_rng(seed + 7 * k), 2,
                                    n_terms=2, max_wavenumber=2, amplitude=0.3)
        f = DiffeoField.from_analytic_flow(geomX, vf, 1.0, steps=32)
        primal = mu_p(geomX, geomY, f, 0)
        dual = mu_p_dual(geomY, geomX, f.inverse(), 0)
        ratio = -(1 - 0) / (0 + 1)  # -(n-p)/(p+1) = -1 here
        scale = max(np.abs(primal.x_density).max(), np.abs(primal.y_density).max())
        errx = np.abs(dual.y_density - ratio * primal.x_density).max() / scale
        erry = np.abs(dual.x_density - ratio * primal.y_density).max() / scale
        worst = max(worst, errx, erry)
    checks.append(_check("t2_p0_ratio_minus_1", worst, tolerance))

    geomX4 = TorusGeometry(2, 16, np.eye(2, dtype=complex))
    geomY4 = TorusGeometry(2, 16, np.array([[1.3, 0.2], [0.2, 0.9]]))
    vf4 = TrigVectorField.random(rng, 4, n_terms=2, max_wavenumber=1,
                                 amplitude=0.18)
    f4 = DiffeoField.from_analytic_flow(geomX4, vf4, 1.0, steps=24)
    finv = f4.inverse()
    for p in (0, 1):
        n = 2
        primal = mu_p(geomX4, geomY4, f4, p)
        dual = mu_p_dual(geomY4, geomX4, finv, p)
        ratio = -(n - p) / (p + 1)
        scale = max(np.abs(primal.x_density).max(), np.abs(primal.y_density).max())
        errx = np.abs(dual.y_density - ratio * primal.x_density).max() / scale
        erry = np.abs(dual.x_density - ratio * primal.y_density).max() / scale
        checks.append(_check(f"t4_p{p}_general_ratio", max(errx, erry),
                             5e-5, ratio=ratio))
    return _report("duality", checks)


# ---------------------------------------------------------------------------
# equivariance


def verify_equivariance(seed: int = 0, grid: int = 128,
                        tolerance: float = 1e-4) -> dict:
    """mu_p(eta o f o sigma^{-1}) equals the transported mu_p(f) densities."""
    geomX = TorusGeometry(1, grid, np.array([[1.0]], dtype=complex))
    geomY = TorusGeometry(1, grid, np.array([[1.4]], dtype=complex))
    X = geomX.coordinates()
    from .torus import compose
    # generic base map: on symplectomorphisms the value would be identically 0
    vf = TrigVectorField.random(np.random.default_rng(seed + 1), 2, 2, 2, 0.25)
    f = DiffeoField.from_analytic_flow(geomX, vf, 1.0, steps=32)
    sigma = hamiltonian_flow(geomX, 0.25 * np.cos(X[..., 1]), 0.4, steps=32)
    eta = hamiltonian_flow(geomY, 0.2 * np.sin(X[..., 0] + X[..., 1]), 0.3,
                           steps=32)
    moved = compose(eta, compose(f, sigma.inverse()))
    base = mu_p(geomX, geomY, f, 0)
    new = mu_p(geomX, geomY, moved, 0)
    x_expect = pushforward_density(sigma, base.x_density)
    y_expect = pushforward_density(eta, base.y_density)
    scale = max(np.abs(base.x_density).max(), np.abs(base.y_density).max())
    err = max(np.abs(new.x_density - x_expect).max(),
              np.abs(new.y_density - y_expect).max()) / scale
    return _report("equivariance", [_check("t2_p0_pushforward", err, tolerance)])


# ---------------------------------------------------------------------------
# Futaki and Mabuchi suites (CP^1)


def _cp1_random_state(rng, geoms, amplitude=0.05):
    etas = []
    for g in geoms:
        x = g.nodes / g.length
        coef = rng.normal(size=3) * amplitude
        etas.append(g.length ** 2 * (x * (1 - x)) ** 2
                    * (coef[0] + coef[1] * x + coef[2] * x * x))
    return cp1_state(geoms, etas)


def verify_futaki(seed: int = 0, grid: int = 96, pairs: int = 3,
                  invariance_tol: float = 1e-6, value_tol: float = 1e-8) -> dict:
    """Rotation-field pairing: class invariance and vanishing on CP^1."""
    rng = np.random.default_rng(seed)
    geoms = (toric.ToricCP1Geometry(3.0, grid), toric.ToricCP1Geometry(3.0, grid))
    rot = [toric.rotation_hamiltonian(g) for g in geoms]

    def F(state):
        fields = HolomorphicFieldData.validated(state, rot)
        return futaki(state, fields, (0,)).value

    base = F(cp1_state(geoms, [np.zeros(grid), np.zeros(grid)]))
    checks = [_check("futaki_reference_value", abs(base), value_tol)]
    worst = 0.0
    for _ in range(pairs):
        val = F(_cp1_random_state(rng, geoms))
        worst = max(worst, abs(val - base))
    checks.append(_check("futaki_class_invariance", worst, invariance_tol))
    return _report("futaki", checks)


def verify_mabuchi(seed: int = 0, grid: int = 96, samples: int = 17,
                   independence_tol: float = 1e-5,
                   convexity_tol: float = 1e-6) -> dict:
    """Path independence of the energy and convexity along toric geodesics."""
    rng = np.random.default_rng(seed)
    geoms = (toric.ToricCP1Geometry(3.0, grid), toric.ToricCP1Geometry(3.0, grid))
    end = _cp1_random_state(rng, geoms, amplitude=0.08)
    times = np.linspace(0, 1, samples)

    def path_via(mid_amp):
        mid = _cp1_random_state(rng, geoms, amplitude=mid_amp)
        states = []
        for t in times:
            bump = math.sin(math.pi * t)
            etas = [((1 - t) * 0.0 + t * end.potentials[i].eta
                     + bump * mid.potentials[i].eta)
                    for i in range(2)]
            states.append(cp1_state(geoms, etas))
        return PotentialPath(times, tuple(states))

    direct = mabuchi_path(straight_path(end, samples), (0,)).value
    via1 = mabuchi_path(path_via(0.03), (0,)).value
    via2 = mabuchi_path(path_via(0.05), (0,)).value
    worst = max(abs(via1 - direct), abs(via2 - direct))
    checks = [_check("path_independence", worst, independence_tol)]

    geo = straight_path(end, 33)
    conv = geodesic_convexity_check(geo, (0,))
    checks.append(_check("geodesic_convexity",
                         max(0.0, -conv.value), convexity_tol,
                         min_second_difference=conv.value))
    return _report("mabuchi", checks)


SUITES = {
    "exterior": verify_exterior,
    "exterior-as-stated": verify_exterior_as_stated,
    "moment-identity": verify_moment_identity,
    "constants": verify_constants,
    "duality": verify_duality,
    "equivariance": verify_equivariance,
    "futaki": verify_futaki,
    "mabuchi": verify_mabuchi,
}
