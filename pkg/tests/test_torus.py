"""Flat-torus backend: spectral calculus, metrics, flows, transport."""

import math

import numpy as np
import pytest

import momentlab.torus as T
from momentlab.errors import FlowBlowupError, GaugeError, NotKahlerError


def t2(N=64, g=1.0):
    return T.TorusGeometry(1, N, np.array([[g]], dtype=complex))


def t4(N=16, g=None):
    if g is None:
        g = np.eye(2, dtype=complex)
    return T.TorusGeometry(2, N, g)


# ---------------------------------------------------------------------------
# spectral calculus


def test_spectral_gradient_pure_mode_exact():
    geom = t2(32)
    X = geom.coordinates()
    F = np.sin(3 * X[..., 0] + 2 * X[..., 1])
    G = T.spectral_gradient(F, 2)
    expected = np.cos(3 * X[..., 0] + 2 * X[..., 1])
    assert np.abs(G[..., 0] - 3 * expected).max() < 1e-12
    assert np.abs(G[..., 1] - 2 * expected).max() < 1e-12


def test_ddbar_n1_is_quarter_laplacian():
    geom = t2(32)
    X = geom.coordinates()
    phi = np.cos(2 * X[..., 0]) + np.sin(X[..., 1])
    H = T.ddbar_hermitian(phi, 1)
    lap = -4 * np.cos(2 * X[..., 0]) - np.sin(X[..., 1])
    assert np.abs(H[..., 0, 0].real - lap / 4).max() < 1e-12
    assert np.abs(H[..., 0, 0].imag).max() < 1e-14


def test_integrate_flat_area_and_trig_exactness():
    geom = t2(32, g=1.0)
    assert geom.volume() == pytest.approx((2 * np.pi) ** 2)
    X = geom.coordinates()
    dens = 1.0 + 0.3 * np.cos(X[..., 0]) * np.sin(2 * X[..., 1])
    # closed form: the oscillatory part integrates to zero
    assert T.integrate(geom, dens) == pytest.approx((2 * np.pi) ** 2, rel=1e-14)


def test_volume_scales_with_class():
    geom = t2(32, g=2.0)
    assert geom.volume() == pytest.approx(2.0 * (2 * np.pi) ** 2)


# ---------------------------------------------------------------------------
# metrics and curvature


def test_metric_from_zero_potential_is_base():
    geom = t4(16, np.array([[2.0, 0.3j], [-0.3j, 1.0]]))
    m = T.metric_from_potential(geom, T.PotentialField.zero(geom))
    assert np.abs(m.matrices - geom.base_metric).max() < 1e-14


def test_metric_from_potential_matches_fd_hessian_oracle():
    # n = 1: the complex Hessian is Laplacian/4; check against 2nd-order FD
    for N in (32, 64):
        geom = t2(N)
        X = geom.coordinates()
        phi = T.PotentialField.recentered(geom, 0.1 * np.cos(X[..., 0]))
        m = T.metric_from_potential(geom, phi)
        h = 2 * np.pi / N
        v = phi.values
        fd = np.zeros_like(v)
        for ax in (0, 1):
            fd += (np.roll(v, -1, ax) - 2 * v + np.roll(v, 1, ax)) / h ** 2
        err = np.abs(m.matrices[..., 0, 0].real - (1.0 + fd / 4)).max()
        assert err < 0.5 * h ** 2 * 0.1
    # error halves as O(h^2): implied by the bound with the same constant


def test_metric_positivity_failure_reports_node():
    geom = t2(32)
    X = geom.coordinates()
    with pytest.raises(NotKahlerError) as err:
        T.metric_from_potential(
            geom, T.PotentialField.recentered(geom, 5.0 * np.cos(X[..., 0])))
    assert err.value.node is not None


def test_ricci_flat_is_zero():
    geom = t4(16, np.array([[1.5, 0.2], [0.2, 1.0]], dtype=complex))
    m = T.metric_from_potential(geom, T.PotentialField.zero(geom))
    R = T.ricci(m)
    assert np.abs(R.matrices).max() < 1e-12
    assert np.abs(T.scalar_curvature(m)).max() < 1e-12


def test_ricci_matches_fd_log_det_oracle():
    geom = t2(64)
    X = geom.coordinates()
    phi = T.PotentialField.recentered(geom, 0.2 * np.cos(X[..., 0]) * np.cos(X[..., 1]))
    m = T.metric_from_potential(geom, phi)
    R = T.ricci(m)
    logdet = np.log(m.matrices[..., 0, 0].real)
    h = 2 * np.pi / geom.grid
    fd = np.zeros_like(logdet)
    for ax in (0, 1):
        fd += (np.roll(logdet, -1, ax) - 2 * logdet + np.roll(logdet, 1, ax)) / h ** 2
    oracle = -fd / 4
    assert np.abs(R.matrices[..., 0, 0].real - oracle).max() < 5 * h ** 2


def test_scalar_curvature_integral_is_topological():
    # int S omega^n / n! = 0 on the torus, for any potential
    geom = t2(128)
    rngs = np.random.default_rng(5)
    X = geom.coordinates()
    phi_vals = sum(a * np.cos(k1 * X[..., 0] + k2 * X[..., 1] + s)
                   for (a, k1, k2, s) in
                   [(0.2, 1, 0, 0.3), (0.1, 1, 2, 1.1), (0.15, 0, 1, 2.0)])
    m = T.metric_from_potential(geom, T.PotentialField.recentered(geom, phi_vals))
    S = T.scalar_curvature(m)
    total = T.integrate(geom, S * m.top_density())
    assert abs(total) < 1e-7


# ---------------------------------------------------------------------------
# potentials


def test_potential_gauge_enforced():
    geom = t2(32)
    with pytest.raises(GaugeError):
        T.PotentialField(geom, np.ones(geom.shape))
    p = T.PotentialField.recentered(geom, np.ones(geom.shape) + 0.1)
    assert abs(p.values.mean()) < 1e-14


# ---------------------------------------------------------------------------
# flows and diffeomorphisms


def test_hamiltonian_flow_zero_is_identity():
    geom = t2(32)
    f = T.hamiltonian_flow(geom, np.zeros(geom.shape), 0.5)
    assert np.abs(f.displacement).max() == 0.0


def test_hamiltonian_flow_rejects_non_grid_input():
    geom = t2(32)
    with pytest.raises(Exception):
        T.hamiltonian_flow(geom, lambda x: x[..., 0], 0.1)


def test_flow_is_symplectomorphism():
    geom = t2(64)
    X = geom.coordinates()
    h = np.sin(X[..., 0])
    f = T.hamiltonian_flow(geom, h, 0.3, steps=48)
    pulled = T.pullback_2form(f, geom.base_form_components(), constant=True)
    assert np.abs(pulled - geom.base_form_components()).max() < 1e-8


def test_flow_symplectic_defect_fourth_order():
    geom = t2(64)
    X = geom.coordinates()
    h = 0.5 * np.sin(X[..., 0]) * np.cos(X[..., 1])
    defects = []
    for steps in (2, 4, 8):
        f = T.hamiltonian_flow(geom, h, 0.8, steps=steps)
        pulled = T.pullback_2form(f, geom.base_form_components(), constant=True)
        defects.append(np.abs(pulled - geom.base_form_components()).max())
    r1 = defects[0] / defects[1]
    r2 = defects[1] / defects[2]
    assert 10 < r1 < 24 and 10 < r2 < 24  # 4th order: ratio ~ 16


def test_inverse_roundtrip_small_flow():
    geom = t2(128)
    X = geom.coordinates()
    h = 0.4 * np.sin(X[..., 0]) * np.sin(X[..., 1])
    f = T.hamiltonian_flow(geom, h, 1.0, steps=64)  # |t h|_{C^1} < 0.5
    assert f.roundtrip_error() < 1e-9


def test_degenerate_jacobian_rejected():
    geom = t2(32)
    X = geom.coordinates()
    disp = np.zeros(geom.shape + (2,))
    disp[..., 0] = -np.sin(X[..., 0])  # d(x - sin x)/dx = 1 - cos x -> 0
    with pytest.raises(FlowBlowupError):
        T.DiffeoField(geom, disp)


def test_pullback_identity_and_composition():
    geom = t2(64)
    X = geom.coordinates()
    beta = np.stack([1.0 + 0.2 * np.cos(X[..., 0])], axis=-1)
    ident = T.DiffeoField.identity(geom)
    assert np.abs(T.pullback_2form(ident, beta) - beta).max() < 1e-11

    f = T.hamiltonian_flow(geom, 0.25 * np.sin(X[..., 0]), 0.5, steps=32)
    g = T.hamiltonian_flow(geom, 0.25 * np.cos(X[..., 1]), 0.5, steps=32)
    fg = T.compose(f, g)
    via_composition = T.pullback_2form(fg, beta)
    via_stages = T.pullback_2form(g, T.pullback_2form(f, beta))
    assert np.abs(via_composition - via_stages).max() < 1e-6


def test_pushforward_conserves_volume_and_roundtrips():
    geom = t2(64)
    X = geom.coordinates()
    f = T.hamiltonian_flow(geom, 0.3 * np.sin(X[..., 0] + X[..., 1]), 0.4, steps=32)
    dens = 1.0 + 0.3 * np.cos(X[..., 0])
    pushed = T.pushforward_density(f, dens)
    assert T.integrate(geom, pushed) == pytest.approx(
        T.integrate(geom, dens), abs=1e-8)
    back = T.pullback_density(f, pushed)
    assert np.abs(back - dens).max() < 1e-7
    ident = T.DiffeoField.identity(geom)
    assert np.abs(T.pushforward_density(ident, dens) - dens).max() < 1e-11


def test_analytic_flow_matches_grid_flow():
    geom = t2(64)
    rng = np.random.default_rng(3)
    hpoly = T.TrigPolynomial(2, [((1, 0), 0.0, 0.3), ((0, 1), 0.2, 0.0)])
    vf = T.TrigVectorField.hamiltonian(geom, hpoly)
    f_grid = T.hamiltonian_flow(geom, hpoly.to_grid(geom), 0.3, steps=32)
    pts, J = T.analytic_flow(vf, geom.coordinates(), 0.3, steps=32, with_jacobian=True)
    assert np.abs(pts - f_grid.points()).max() < 1e-9
    assert np.abs(J - f_grid.jacobian).max() < 1e-7


def test_trig_hamiltonian_field_is_exact():
    geom = t2(32)
    hpoly = T.TrigPolynomial(2, [((2, 1), 0.4, -0.1)])
    vf = T.TrigVectorField.hamiltonian(geom, hpoly)
    pts = geom.coordinates()
    grid_field = T.hamiltonian_vector_field(geom, hpoly.to_grid(geom))
    assert np.abs(vf(pts) - grid_field).max() < 1e-12


def test_fourier_upsample_reproduces_band_limited():
    geom = t2(32)
    X = geom.coordinates()
    F = np.cos(3 * X[..., 0]) * np.sin(2 * X[..., 1])
    fine = T.fourier_upsample(F, 2, 2)
    M = 64
    ax = np.arange(M) * 2 * np.pi / M
    XX = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    exact = np.cos(3 * XX[..., 0]) * np.sin(2 * XX[..., 1])
    assert np.abs(fine - exact).max() < 1e-12


def test_grid_interpolant_accuracy():
    geom = t2(64)
    X = geom.coordinates()
    F = np.cos(2 * X[..., 0] + X[..., 1])
    interp = T.GridInterpolant(F, 2)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2 * np.pi, size=(200, 2))
    exact = np.cos(2 * pts[..., 0] + pts[..., 1])
    assert np.abs(interp(pts) - exact).max() < 1e-10
