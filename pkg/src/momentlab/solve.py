"""Zero-finding for the coupled residual systems.

Strategy: preconditioned residual descent with a backtracking line search
on the Calabi value, then automorphism gauge normalization, then damped
(Gauss-)Newton on the residual scalars.  The linearization is always
assembled from directional finite differences of the one residual
evaluator, never hand-derived.

The torus preconditioner is the diagonal Fourier multiplier of the flat
linearization (a biharmonic-plus-Laplacian symbol for the curvature slot,
a Laplacian symbol for the volume-ratio slots); on CP^1 the dense
reference-state Jacobian plays the same role.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (DivergedError, GaugeNotFixedError, NotKahlerError,
                     StallError)
from .coupled import ccsck_residual
from .functionals import mabuchi_increment
from .states import KahlerState
from . import toric
from .torus import PotentialField


@dataclass(frozen=True)
class SolveConfig:
    max_iterations: int = 200
    residual_tol: float = 1e-9
    flow_step: float = 1.0
    flow_step_min: float = 1e-7
    flow_step_max: float = 4.0
    newton_threshold: float = 1e-3
    max_newton: int = 15
    line_search_max: int = 40
    divergence_patience: int = 10
    fd_epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.residual_tol <= 0 or self.newton_threshold <= 0:
            raise ValueError("tolerances must be positive")
        if not (0 < self.flow_step_min <= self.flow_step <= self.flow_step_max):
            raise ValueError("flow step bounds must be ordered")


@dataclass
class SolveState:
    problem: "CoupledProblem"
    params: tuple
    iteration: int = 0
    residual_history: list = dc_field(default_factory=list)
    calabi_history: list = dc_field(default_factory=list)
    mabuchi_history: list = dc_field(default_factory=list)
    status: str = "running"
    step: float = 1.0

    def kahler_state(self) -> KahlerState:
        return self.problem.make_state(self.params)

    def current_linf(self) -> float:
        return self.residual_history[-1][1] if self.residual_history else float("inf")


class CoupledProblem:
    """Bundles geometries, exponents and weights; evaluates residual scalars."""

    def __init__(self, geometries, p_vector, weights=None):
        self.geometries = tuple(geometries)
        self.p_vector = tuple(p_vector)
        self.weights = weights
        self.backend = self.geometries[0].backend
        self.slots = len(self.geometries)

    def make_state(self, params) -> KahlerState:
        if self.backend == "torus":
            pots = tuple(PotentialField.recentered(g, a)
                         for g, a in zip(self.geometries, params))
        else:
            pots = tuple(toric.SymplecticPotential(g, a)
                         for g, a in zip(self.geometries, params))
        return KahlerState(self.geometries, pots)

    def zero_params(self) -> tuple:
        if self.backend == "torus":
            return tuple(np.zeros(g.shape) for g in self.geometries)
        return tuple(np.zeros(g.grid) for g in self.geometries)

    def residual(self, params):
        return ccsck_residual(self.make_state(params), self.p_vector, self.weights)

    def scalars_flat(self, params) -> np.ndarray:
        return np.concatenate([s.ravel() for s in self.residual(params).scalars()])

    def split_flat(self, vec: np.ndarray) -> tuple:
        out, at = [], 0
        for g in self.geometries:
            size = int(np.prod(g.shape)) if self.backend == "torus" else g.grid
            out.append(vec[at:at + size].reshape(
                g.shape if self.backend == "torus" else (g.grid,)))
            at += size
        return tuple(out)

    # -- preconditioner ----------------------------------------------------
    def precondition(self, scalars: tuple) -> tuple:
        if self.backend == "torus":
            return self._precondition_torus(scalars)
        return self._precondition_cp1(scalars)

    def _precondition_torus(self, scalars):
        g0 = self.geometries[0]
        N, dim = g0.grid, g0.dim
        k = np.fft.fftfreq(N, 1.0 / N)
        mesh = np.meshgrid(*([k] * dim), indexing="ij")
        k2 = sum(m ** 2 for m in mesh)
        gbar = float(np.mean(np.linalg.eigvalsh(g0.base_metric)))
        q = k2 / (4.0 * gbar)
        out = []
        for i, s in enumerate(scalars):
            sym = 1.0 + (q ** 2 + q if i == 0 else q)
            out.append(np.real(np.fft.ifftn(np.fft.fftn(s) / sym)))
        return tuple(out)

    def _precondition_cp1(self, scalars):
        if not hasattr(self, "_ref_solve"):
            J = self._dense_jacobian(self.zero_params())
            U, sv, Vt = np.linalg.svd(J)
            # the spectrum splits cleanly: physical modes down to O(1), then
            # the automorphism/constant near-kernel at relative level ~1e-15;
            # truncating at 1e-12 of the largest removes exactly the latter
            inv = np.where(sv > 1e-12 * sv.max(), 1.0 / np.maximum(sv, 1e-300), 0.0)
            self._ref_solve = (U, inv, Vt)
        U, inv, Vt = self._ref_solve
        flat = np.concatenate([s.ravel() for s in scalars])
        sol = Vt.T @ ((U.T @ flat) * inv)
        return self.split_flat(sol)

    def project_direction(self, direction) -> tuple:
        """Remove discrete-gauge content slot by slot.

        Torus: the grid mean and the Nyquist band (whose odd spectral
        derivatives vanish identically, so they sit in the numerical null
        space of the linearized system).  CP^1: the weighted mean.
        """
        out = []
        for g, d in zip(self.geometries, direction):
            if self.backend == "torus":
                spec = np.fft.fftn(d)
                mask = np.zeros(d.shape, dtype=bool)
                N = g.grid
                for ax in range(g.dim):
                    sl = [slice(None)] * g.dim
                    sl[ax] = N // 2
                    mask[tuple(sl)] = True
                spec[mask] = 0.0
                spec[(0,) * g.dim] = 0.0
                out.append(np.real(np.fft.ifftn(spec)))
            else:
                out.append(d - (g.weights @ d) / g.length)
        return tuple(out)

    def _dense_jacobian(self, params, eps: float = 1e-6) -> np.ndarray:
        base = np.concatenate([p.ravel() for p in params])
        m = len(self.scalars_flat(params))
        J = np.zeros((m, len(base)))
        for j in range(len(base)):
            dv = np.zeros_like(base)
            dv[j] = eps
            plus = self.scalars_flat(self.split_flat(base + dv))
            minus = self.scalars_flat(self.split_flat(base - dv))
            J[:, j] = (plus - minus) / (2 * eps)
        return J


# ---------------------------------------------------------------------------


def _calabi_of(problem, params) -> float:
    return problem.residual(params).calabi_value()


def _apply_step(problem, params, direction, a):
    if problem.backend == "torus":
        return tuple(p + a * d - np.mean(p + a * d) for p, d in zip(params, direction))
    return tuple(p + a * d for p, d in zip(params, direction))


def flow_step(solve_state: SolveState, config: SolveConfig) -> SolveState:
    """One preconditioned descent step with backtracking on the Calabi value."""
    problem = solve_state.problem
    params = solve_state.params
    res = problem.residual(params)
    scalars = res.scalars()
    calabi0 = res.calabi_value()
    direction = problem.project_direction(
        tuple(-d for d in problem.precondition(scalars)))

    a = min(max(solve_state.step, config.flow_step_min), config.flow_step_max)
    tried = 0
    while True:
        candidate = _apply_step(problem, params, direction, a)
        try:
            new_res = problem.residual(candidate)
            new_calabi = new_res.calabi_value()
            if new_calabi < calabi0 * (1.0 - 1e-4 * a) or new_calabi < 1e-28:
                break
        except NotKahlerError:
            pass
        a *= 0.5
        tried += 1
        if a < config.flow_step_min or tried > config.line_search_max:
            raise StallError(f"line search underflow at step {a:.3e}")

    dM = mabuchi_increment(problem.make_state(params),
                           tuple(a * d for d in direction),
                           problem.p_vector, problem.weights, residual=res)
    new = SolveState(problem, candidate, solve_state.iteration + 1,
                     list(solve_state.residual_history),
                     list(solve_state.calabi_history),
                     list(solve_state.mabuchi_history),
                     "running", min(a * 2.0, config.flow_step_max))
    new.residual_history.append((new_res.l2(), new_res.linf()))
    new.calabi_history.append(new_calabi)
    prev_M = solve_state.mabuchi_history[-1] if solve_state.mabuchi_history else 0.0
    new.mabuchi_history.append(prev_M + dM)
    return new


def _gauge_directions_cp1(problem) -> np.ndarray:
    """Orthonormal basis of the automorphism directions in parameter space."""
    sizes = [g.grid for g in problem.geometries]
    total = sum(sizes)
    cols = []
    for i, g in enumerate(problem.geometries):
        v = np.zeros(total)
        at = sum(sizes[:i])
        v[at:at + g.grid] = 1.0
        cols.append(v)
    v = np.concatenate([g.nodes for g in problem.geometries])
    cols.append(v)
    Q, _ = np.linalg.qr(np.stack(cols, axis=1))
    return Q


def fix_automorphism_gauge(solve_state: SolveState) -> SolveState:
    """Normalize the automorphism freedom of the current parameters.

    CP^1: subtract the slot-0 linear coefficient times x from every slot
    (one shared reparametrization) and each slot's own constant.  Torus:
    recenter means and zero the first-harmonic phase of slot 0 by a common
    translation (skipped when the harmonic is numerically absent).
    """
    problem = solve_state.problem
    params = solve_state.params
    if problem.backend == "cp1":
        g0 = problem.geometries[0]
        aff = toric.affine_part(g0, params[0])
        # linear coefficient from a 2-point read of the affine part
        slope = (aff[-1] - aff[0]) / (g0.nodes[-1] - g0.nodes[0])
        new = []
        for g, p in zip(problem.geometries, params):
            q = p - slope * g.nodes
            q = q - (g.weights @ q) / g.length
            new.append(q)
        params = tuple(new)
    else:
        g0 = problem.geometries[0]
        phi0 = params[0] - np.mean(params[0])
        spec = np.fft.fftn(phi0)
        idx = (1,) + (0,) * (g0.dim - 1)
        amp = abs(spec[idx]) / phi0.size
        if amp > 1e-7:
            shift = -np.angle(spec[idx])
            k = np.fft.fftfreq(g0.grid, 1.0 / g0.grid)
            mesh = np.meshgrid(*([k] * g0.dim), indexing="ij")
            phase = np.exp(1j * shift * mesh[0])
            params = tuple(
                np.real(np.fft.ifftn(np.fft.fftn(p - np.mean(p)) * phase))
                for p in params)
        else:
            params = tuple(p - np.mean(p) for p in params)
    out = SolveState(problem, params, solve_state.iteration,
                     list(solve_state.residual_history),
                     list(solve_state.calabi_history),
                     list(solve_state.mabuchi_history),
                     solve_state.status, solve_state.step)
    return out


def _check_gauge_fixed_cp1(problem, params):
    g0 = problem.geometries[0]
    aff = toric.affine_part(g0, params[0])
    slope = (aff[-1] - aff[0]) / (g0.nodes[-1] - g0.nodes[0])
    scale = max(1.0, float(np.abs(params[0]).max()))
    if abs(slope) > 1e-6 * scale:
        raise GaugeNotFixedError(
            f"slot-0 potential has automorphism component {slope:.3e}; "
            "call fix_automorphism_gauge first")


def newton_refine(solve_state: SolveState, config: SolveConfig) -> SolveState:
    """One damped Newton step on the residual scalars."""
    problem = solve_state.problem
    params = solve_state.params
    res0 = problem.residual(params)
    r0 = np.concatenate([s.ravel() for s in res0.scalars()])
    calabi0 = res0.calabi_value()
    if np.abs(r0).max() < 1e-15:
        return solve_state  # exact solution: no-op

    base = np.concatenate([p.ravel() for p in params])
    if problem.backend == "cp1":
        _check_gauge_fixed_cp1(problem, params)
        J = problem._dense_jacobian(params, eps=config.fd_epsilon)
        Q = _gauge_directions_cp1(problem)
        P = np.eye(len(base)) - Q @ Q.T
        delta, *_ = np.linalg.lstsq(J @ P, -r0, rcond=1e-10)
        delta = P @ delta
    else:
        eps = config.fd_epsilon

        def proj(v):
            return np.concatenate(
                [d.ravel() for d in problem.project_direction(problem.split_flat(v))])

        def jv(v):
            v = proj(v)
            vn = np.linalg.norm(v)
            if vn == 0:
                return np.zeros_like(r0)
            h = eps / vn
            plus = problem.scalars_flat(problem.split_flat(base + h * v))
            minus = problem.scalars_flat(problem.split_flat(base - h * v))
            return proj((plus - minus) / (2 * h))

        def pinv(v):
            return proj(np.concatenate(
                [s.ravel() for s in problem.precondition(problem.split_flat(v))]))

        op = spla.LinearOperator((len(r0), len(base)), matvec=jv)
        M = spla.LinearOperator((len(base), len(base)), matvec=pinv)
        delta, info = spla.lgmres(op, proj(-r0), M=M, rtol=1e-4, atol=0.0,
                                  maxiter=40)
        delta = proj(delta)
        if info != 0 and not np.all(np.isfinite(delta)):
            delta = pinv(-r0)  # fall back to a preconditioned descent step

    a = 1.0
    for _ in range(config.line_search_max):
        candidate = problem.split_flat(base + a * delta)
        if problem.backend == "torus":
            candidate = tuple(c - np.mean(c) for c in candidate)
        try:
            new_res = problem.residual(candidate)
            if new_res.calabi_value() < calabi0:
                break
        except NotKahlerError:
            pass
        a *= 0.5
    else:
        raise StallError("newton line search failed")

    new = SolveState(problem, candidate, solve_state.iteration + 1,
                     list(solve_state.residual_history),
                     list(solve_state.calabi_history),
                     list(solve_state.mabuchi_history),
                     "running", solve_state.step)
    new.residual_history.append((new_res.l2(), new_res.linf()))
    new.calabi_history.append(new_res.calabi_value())
    dM = mabuchi_increment(problem.make_state(params),
                           problem.project_direction(problem.split_flat(a * delta)),
                           problem.p_vector, problem.weights, residual=res0)
    prev_M = solve_state.mabuchi_history[-1] if solve_state.mabuchi_history else 0.0
    new.mabuchi_history.append(prev_M + dM)
    return new


def solve(problem: CoupledProblem, initial_params, config: SolveConfig,
          raise_on_failure: bool = True) -> SolveState:
    """Flow to the Newton basin, fix the gauge, refine to tolerance."""
    st = SolveState(problem, tuple(np.asarray(p, dtype=np.float64)
                                   for p in initial_params))
    try:
        res = problem.residual(st.params)
    except NotKahlerError:
        st.status = "not_kahler"
        if raise_on_failure:
            raise
        return st
    st.residual_history.append((res.l2(), res.linf()))
    st.calabi_history.append(res.calabi_value())
    st.mabuchi_history.append(0.0)

    stalls = 0
    try:
        while (st.current_linf() > config.newton_threshold
               and st.iteration < config.max_iterations):
            try:
                st = flow_step(st, config)
                stalls = 0
            except StallError:
                stalls += 1
                st.step = max(st.step * 0.25, config.flow_step_min)
                st.iteration += 1
                if stalls >= config.divergence_patience:
                    st.status = "diverged"
                    if raise_on_failure:
                        raise DivergedError("flow stalled repeatedly")
                    return st

        newtons = 0
        while (st.current_linf() > config.residual_tol
               and st.iteration < config.max_iterations
               and newtons < config.max_newton):
            st = fix_automorphism_gauge(st)
            st = newton_refine(st, config)
            newtons += 1
    except NotKahlerError:
        st.status = "not_kahler"
        if raise_on_failure:
            raise
        return st

    if st.current_linf() <= config.residual_tol:
        st = fix_automorphism_gauge(st)
        st.status = "converged"
    else:
        st.status = "diverged"
        if raise_on_failure:
            raise DivergedError(
                f"residual {st.current_linf():.3e} after {st.iteration} iterations")
    return st
