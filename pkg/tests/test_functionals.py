"""Obstruction functionals: Futaki, Calabi, energy paths, convexity."""

import numpy as np
import pytest

import momentlab.coupled as cp
import momentlab.functionals as fn
import momentlab.toric as tc
import momentlab.torus as T
from momentlab.errors import (GaugeError, MomentLabError, NotHolomorphicError,
                              PathTypeError)
from momentlab.states import cp1_state, torus_state


def cp1_geoms(L=3.0, M=96, k=1):
    return tuple(tc.ToricCP1Geometry(L, M) for _ in range(k + 1))


def cp1_reference(L=3.0, M=96, k=1):
    geoms = cp1_geoms(L, M, k)
    return cp1_state(geoms, [np.zeros(M) for _ in range(k + 1)])


def cp1_perturbed(L=3.0, M=96, seeds=(1, 2), amp=0.05):
    geoms = cp1_geoms(L, M, len(seeds) - 1)
    etas = []
    for g, sd in zip(geoms, seeds):
        rng = np.random.default_rng(sd)
        x = g.nodes / g.length
        coef = rng.normal(size=3) * amp
        etas.append(g.length ** 2 * (x * (1 - x)) ** 2
                    * (coef[0] + coef[1] * x + coef[2] * x * x))
    return cp1_state(geoms, etas)


def test_report_breakdown_invariant():
    with pytest.raises(MomentLabError):
        fn.FunctionalReport(1.0, {"a": 0.4, "b": 0.4})
    r = fn.FunctionalReport(0.8, {"a": 0.4, "b": 0.4})
    assert r.to_dict()["value"] == 0.8


def test_holomorphic_validation_torus():
    geom = T.TorusGeometry(1, 32, np.array([[1.0]], dtype=complex))
    st = torus_state([geom], [np.zeros(geom.shape)])
    fields = fn.HolomorphicFieldData.validated(st, [np.full(geom.shape, 2.0)])
    assert np.abs(fields.potentials[0]).max() == 0.0  # constants normalize away
    X = geom.coordinates()
    with pytest.raises(NotHolomorphicError):
        fn.HolomorphicFieldData.validated(st, [np.sin(X[..., 0])])


def test_holomorphic_validation_cp1():
    st = cp1_reference(k=0)
    g = st.geometries[0]
    fn.HolomorphicFieldData.validated(st, [1.0 + 2.0 * g.nodes])
    with pytest.raises(NotHolomorphicError):
        fn.HolomorphicFieldData.validated(st, [np.sin(g.nodes)])


def test_futaki_vanishes_with_zero_residual_exactly():
    st = cp1_reference()
    rot = [tc.rotation_hamiltonian(g) for g in st.geometries]
    fields = fn.HolomorphicFieldData.validated(st, rot)
    rep = fn.futaki(st, fields, (0,))
    assert abs(rep.value) < 1e-10
    assert set(rep.breakdown) == {"slot_0", "slot_1"}


def test_futaki_torus_is_vacuous():
    geom = T.TorusGeometry(1, 32, np.array([[1.0]], dtype=complex))
    geoms = [geom, T.TorusGeometry(1, 32, np.array([[2.0]], dtype=complex))]
    X = geom.coordinates()
    st = torus_state(geoms, [0.05 * np.cos(X[..., 0]), 0.04 * np.sin(X[..., 1])])
    fields = fn.HolomorphicFieldData.validated(
        st, [np.zeros(geom.shape), np.zeros(geom.shape)])
    assert fn.futaki(st, fields, (0,)).value == 0.0


def test_futaki_class_invariance_cp1():
    rot = None
    vals = []
    for seeds in ((1, 2), (3, 4), (5, 6)):
        st = cp1_perturbed(seeds=seeds)
        rot = [tc.rotation_hamiltonian(g) for g in st.geometries]
        fields = fn.HolomorphicFieldData.validated(st, rot)
        vals.append(fn.futaki(st, fields, (0,)).value)
    assert max(abs(v - vals[0]) for v in vals) < 1e-7
    assert max(abs(v) for v in vals) < 1e-7


def test_futaki_nontrivial_breakdown_cancels():
    """Per-slot terms are individually nonzero away from the solution."""
    st = cp1_perturbed(seeds=(11, 12), amp=0.08)
    fields = fn.HolomorphicFieldData.validated(
        st, [tc.rotation_hamiltonian(g) for g in st.geometries])
    rep = fn.futaki(st, fields, (0,))
    assert abs(rep.breakdown["slot_0"]) > 1e-4
    assert abs(rep.value) < 1e-7


def test_calabi_zero_and_positive():
    st = cp1_reference()
    assert fn.calabi(st, (0,)).value < 1e-13
    stp = cp1_perturbed()
    c = fn.calabi(stp, (0,))
    assert c.value > 0
    assert all(v >= 0 for v in c.breakdown.values())


def test_calabi_quadratic_homogeneity():
    stp = cp1_perturbed()
    res = cp.ccsck_residual(stp, (0,))
    lam = 3.0
    scaled = cp.CoupledResidual(stp, tuple(lam * d for d in res.densities),
                                res.volumes, res.constants, res.p_vector)
    assert scaled.calabi_value() == pytest.approx(lam ** 2 * res.calabi_value(),
                                                  rel=1e-12)


def test_calabi_matches_independent_quadrature():
    stp = cp1_perturbed()
    rep = fn.calabi(stp, (0,))
    res = cp.ccsck_residual(stp, (0,))
    # independent route: resample the scalars on a fine uniform grid and
    # integrate with the trapezoid rule
    total = 0.0
    for i, (d, v) in enumerate(zip(res.densities, res.volumes)):
        g = stp.geometries[i]
        s = d / v
        xs = np.linspace(g.length * 1e-7, g.length * (1 - 1e-7), 20001)
        vals = g.interpolate(s, xs)
        mean = np.trapz(vals, xs) / np.trapz(np.ones_like(vals), xs)
        total += 2 * np.pi * np.trapz((vals - mean) ** 2, xs)
    assert rep.value == pytest.approx(total, rel=1e-4)


def test_H_function_constants():
    st = cp1_reference()
    H = fn.H_function(st, 0, 0, 0)
    assert np.abs(H - 1.0).max() < 1e-12
    H11 = fn.H_function(st, 1, 1, 1)
    assert np.abs(H11 - 1.0).max() < 1e-12


def test_H_function_scaling_torus():
    geoms = [T.TorusGeometry(1, 32, np.array([[3.0]], dtype=complex)),
             T.TorusGeometry(1, 32, np.array([[1.0]], dtype=complex))]
    st = torus_state(geoms, [np.zeros(geoms[0].shape)] * 2)
    H = fn.H_function(st, 0, 1, 0)
    assert np.abs(H - 3.0).max() < 1e-13


def test_H_function_t4_matches_exterior_oracle():
    import momentlab.exterior as ext
    geoms = [T.TorusGeometry(2, 16, np.eye(2, dtype=complex)),
             T.TorusGeometry(2, 16, np.array([[1.2, 0.1], [0.1, 0.8]]))]
    X = geoms[0].coordinates()
    st = torus_state(geoms, [0.05 * np.cos(X[..., 0]), 0.06 * np.sin(X[..., 3])])
    H = fn.H_function(st, 0, 1, 1).reshape(-1)
    m = st.metrics()
    B0 = m[0].real_components().reshape(-1, 6)
    B1 = m[1].real_components().reshape(-1, 6)
    rng = np.random.default_rng(0)
    for i in rng.choice(B0.shape[0], 10, replace=False):
        a = ext.AlternatingForm(4, 2, B0[i])
        b = ext.AlternatingForm(4, 2, B1[i])
        num = ext.wedge(a, b).top_coefficient()
        den = ext.power(b, 2).top_coefficient()
        assert H[i] == pytest.approx(2.0 * num / den, rel=1e-10)


def test_mabuchi_increment_zero_cases():
    st = cp1_perturbed()
    zero_dir = [np.zeros(g.grid) for g in st.geometries]
    assert fn.mabuchi_increment(st, zero_dir, (0,)) == 0.0
    sol = cp1_reference()
    g = sol.geometries[0]
    d = np.sin(np.pi * g.nodes / g.length)
    d = d - (g.weights @ d) / g.length
    val = fn.mabuchi_increment(sol, [d, d], (0,))
    assert abs(val) < 1e-7


def test_mabuchi_increment_gauge_error():
    st = cp1_perturbed()
    bad = [np.ones(g.grid) for g in st.geometries]
    with pytest.raises(GaugeError):
        fn.mabuchi_increment(st, bad, (0,))


def test_mabuchi_path_constant_and_reversal():
    st = cp1_perturbed()
    times = np.linspace(0, 1, 9)
    const_path = fn.PotentialPath(times, tuple(st for _ in times))
    assert fn.mabuchi_path(const_path, (0,)).value == 0.0

    fwd = fn.straight_path(st, 9)
    rev = fn.PotentialPath(times, tuple(fwd.states[::-1]), "generic")
    a = fn.mabuchi_path(fwd, (0,)).value
    b = fn.mabuchi_path(rev, (0,)).value
    assert a == pytest.approx(-b, rel=1e-12)
    assert abs(a) > 1e-6  # nontrivial value


def test_mabuchi_increment_matches_path_derivative():
    st = cp1_perturbed(amp=0.08)
    path = fn.straight_path(st, 33)
    vals = fn.mabuchi_samples(path, (0,))
    t = path.times
    errs = []
    for stride in (2, 1):
        j = 16
        h = stride * (t[1] - t[0])
        fd = (vals[j + stride] - vals[j - stride]) / (2 * h)
        tangent = []
        for i in range(2):
            d = path.states[-1].potentials[i].eta.copy()
            g = path.states[0].geometries[i]
            tangent.append(d - (g.weights @ d) / g.length)
        inc = fn.mabuchi_increment(path.states[j], tangent, (0,))
        errs.append(abs(fd - inc))
    assert errs[1] < errs[0]  # converging
    assert errs[1] < 5e-4 * max(1.0, abs(inc))


def test_geodesic_checks():
    st = cp1_perturbed(amp=0.08)
    times = np.linspace(0, 1, 9)
    const_path = fn.PotentialPath(times, tuple(st for _ in times), "toric-geodesic")
    rep = fn.geodesic_convexity_check(const_path, (0,))
    assert abs(rep.value) < 1e-12

    generic = fn.straight_path(st, 9, path_type="generic")
    with pytest.raises(PathTypeError):
        fn.geodesic_convexity_check(generic, (0,))

    geo = fn.straight_path(st, 33)
    rep = fn.geodesic_convexity_check(geo, (0,))
    assert rep.value > -1e-6


def test_geodesic_through_solution_is_minimized_there():
    st = cp1_perturbed(amp=0.08)
    # straight toric path from the solution (reference) to a perturbation:
    # the energy increases monotonically away from its minimum
    path = fn.straight_path(st, 17)
    vals = fn.mabuchi_samples(path, (0,))
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) > -1e-10)
    assert vals[-1] > 1e-6


def test_geodesic_tag_rejects_nonaffine():
    st = cp1_perturbed()
    times = np.linspace(0, 1, 5)
    states = []
    for t in times:
        bump = np.sin(np.pi * t)
        etas = [t * st.potentials[i].eta
                + bump * 0.01 * st.geometries[i].nodes ** 2 for i in range(2)]
        states.append(cp1_state(st.geometries, etas))
    with pytest.raises(PathTypeError):
        fn.PotentialPath(times, tuple(states), "toric-geodesic")
