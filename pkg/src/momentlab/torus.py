"""Flat complex torus backend: spectral field calculus, flows, pullbacks.

A torus geometry is T^{2n} = (R / 2*pi*Z)^{2n} with interleaved real
coordinates (x^1, y^1, ..., x^n, y^n), z^a = x^a + i y^a, and a constant
positive Hermitian base matrix g0 whose Kahler form evaluates as
omega(u, v) = Im(zeta(u)^H g0 zeta(v)).  With this normalization g0 = 1
on T^2 gives omega = dx ^ dy and area (2*pi)^2.

Grid fields are numpy arrays of shape (N,)*2n (+ trailing component axes);
2-form fields carry C(2n, 2) increasing-index components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (DimensionError, FlowBlowupError, GaugeError,
                     InterpolationError, NotKahlerError)
from .exterior import index_tuples, wedge_table

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGeometry:
    """Flat torus of complex dimension n with a constant Hermitian class."""

    n: int
    grid: int
    base_metric: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise DimensionError(f"torus complex dimension must be 1..3, got {self.n}")
        if self.grid < 16 or (self.grid & (self.grid - 1)) != 0:
            raise DimensionError(f"grid must be a power of two >= 16, got {self.grid}")
        g0 = np.asarray(self.base_metric, dtype=np.complex128)
        if np.isscalar(self.base_metric) or g0.ndim == 0:
            g0 = np.eye(self.n, dtype=np.complex128) * complex(self.base_metric)
        if g0.shape != (self.n, self.n):
            raise DimensionError(f"base metric must be {self.n}x{self.n}")
        if not np.allclose(g0, g0.conj().T, atol=1e-13):
            raise NotKahlerError("base metric must be Hermitian")
        if np.linalg.eigvalsh(g0).min() <= 0:
            raise NotKahlerError("base metric must be positive definite")
        object.__setattr__(self, "base_metric", g0)

    backend = "torus"

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.grid,) * self.dim

    @property
    def npoints(self) -> int:
        return self.grid ** self.dim

    def coordinates(self) -> np.ndarray:
        """Grid coordinates, shape (N,)*2n + (2n,)."""
        axes = [np.arange(self.grid) * (TWO_PI / self.grid)] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def base_form_matrix(self) -> np.ndarray:
        """Constant real antisymmetric matrix of the base Kahler form."""
        return hermitian_to_real_form(self.base_metric)

    def base_form_components(self) -> np.ndarray:
        return real_form_to_components(self.base_form_matrix())

    def volume(self) -> float:
        """Total volume integral of omega^n / n!."""
        dens = field_wedge_power(
            np.broadcast_to(self.base_form_components(), (1, math.comb(self.dim, 2))),
            self.n, self.dim)[0] / math.factorial(self.n)
        return float(dens) * TWO_PI ** self.dim


# ---------------------------------------------------------------------------
# Hermitian <-> real form conversions


def hermitian_to_real_form(G: np.ndarray) -> np.ndarray:
    """Real antisymmetric matrix W with W[i, j] = omega(e_i, e_j).

    G has shape (..., n, n) Hermitian; output shape (..., 2n, 2n) in
    interleaved coordinates.
    """
    G = np.asarray(G, dtype=np.complex128)
    n = G.shape[-1]
    d = 2 * n
    W = np.zeros(G.shape[:-2] + (d, d))
    re, im = G.real, G.imag
    for a in range(n):
        for b in range(n):
            W[..., 2 * a, 2 * b] = im[..., a, b]
            W[..., 2 * a, 2 * b + 1] = re[..., a, b]
            W[..., 2 * a + 1, 2 * b] = -re[..., a, b]
            W[..., 2 * a + 1, 2 * b + 1] = im[..., a, b]
    return W


@lru_cache(maxsize=None)
def _pair_list(dim: int):
    return index_tuples(dim, 2)


def real_form_to_components(W: np.ndarray) -> np.ndarray:
    """Increasing-index components of an antisymmetric matrix field."""
    pairs = _pair_list(W.shape[-1])
    return np.stack([W[..., i, j] for (i, j) in pairs], axis=-1)


def components_to_real_form(comp: np.ndarray, dim: int) -> np.ndarray:
    pairs = _pair_list(dim)
    W = np.zeros(comp.shape[:-1] + (dim, dim))
    for k, (i, j) in enumerate(pairs):
        W[..., i, j] = comp[..., k]
        W[..., j, i] = -comp[..., k]
    return W


# ---------------------------------------------------------------------------
# Vectorized exterior algebra on component fields


def field_wedge(A: np.ndarray, B: np.ndarray, dim: int, da: int, db: int) -> np.ndarray:
    """Pointwise wedge of component fields; trailing axis = components."""
    rows, signs = wedge_table(dim, da, db)
    out = np.zeros(A.shape[:-1] + (math.comb(dim, da + db),))
    for (ka, kb, ko), s in zip(rows, signs):
        out[..., ko] += s * A[..., ka] * B[..., kb]
    return out


def field_wedge_power(A: np.ndarray, m: int, dim: int) -> np.ndarray:
    """Pointwise m-th wedge power of a 2-form component field.

    Returns the top coefficient array when 2m == dim, else component field.
    For m = 0 returns an array of ones (degree-0 coefficients).
    """
    if m == 0:
        return np.ones(A.shape[:-1])
    out = A
    deg = 2
    for _ in range(m - 1):
        out = field_wedge(out, A, dim, deg, 2)
        deg += 2
    if deg == dim:
        return out[..., 0]
    return out


def top_with_factor(F: np.ndarray, B: np.ndarray, m: int, dim: int) -> np.ndarray:
    """Top coefficient of F ^ B^m for 2-form component fields F, B."""
    if 2 * (m + 1) != dim:
        raise DimensionError("top_with_factor must land in top degree")
    if m == 0:
        return F[..., 0]
    out = F
    deg = 2
    for _ in range(m):
        out = field_wedge(out, B, dim, deg, 2)
        deg += 2
    return out[..., 0]


def mixed_top(A: np.ndarray, ka: int, B: np.ndarray, kb: int, dim: int) -> np.ndarray:
    """Top coefficient of A^ka ^ B^kb for 2-form component fields."""
    if ka + kb == 0:
        raise DimensionError("mixed_top needs ka + kb = n")
    if 2 * (ka + kb) != dim:
        raise DimensionError("mixed_top must land in top degree")
    if ka == 0:
        return field_wedge_power(B, kb, dim)
    if kb == 0:
        return field_wedge_power(A, ka, dim)
    PA = field_wedge_power(A, ka, dim)
    out = field_wedge(PA, B, dim, 2 * ka, 2)
    deg = 2 * ka + 2
    for _ in range(kb - 1):
        out = field_wedge(out, B, dim, deg, 2)
        deg += 2
    return out[..., 0]


# ---------------------------------------------------------------------------
# Spectral calculus


def _wavenumbers(N: int) -> np.ndarray:
    return np.fft.fftfreq(N, 1.0 / N)


def spectral_gradient(F: np.ndarray, dim: int) -> np.ndarray:
    """Gradient of a scalar grid field, shape (...,) -> (..., dim)."""
    N = F.shape[0]
    Fh = np.fft.fftn(F)
    k = _wavenumbers(N)
    grads = []
    for ax in range(dim):
        shape = [1] * dim
        shape[ax] = N
        grads.append(np.real(np.fft.ifftn(1j * k.reshape(shape) * Fh)))
    return np.stack(grads, axis=-1)


def ddbar_hermitian(phi: np.ndarray, n: int) -> np.ndarray:
    """Complex Hessian d_{z^a} d_{zbar^b} phi as an (..., n, n) Hermitian field.

    H_ab = (phi_{x^a x^b} + phi_{y^a y^b} + i (phi_{x^a y^b} - phi_{y^a x^b})) / 4
    """
    dim = 2 * n
    g1 = spectral_gradient(phi, dim)
    second = np.stack([spectral_gradient(g1[..., c], dim) for c in range(dim)], axis=-2)
    H = np.zeros(phi.shape + (n, n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            xa, ya, xb, yb = 2 * a, 2 * a + 1, 2 * b, 2 * b + 1
            H[..., a, b] = 0.25 * (second[..., xa, xb] + second[..., ya, yb]
                                   + 1j * (second[..., xa, yb] - second[..., ya, xb]))
    return H


def integrate(geom: TorusGeometry, density: np.ndarray) -> float:
    """Integral of a top-form coefficient field over the torus."""
    return float(np.mean(density)) * TWO_PI ** geom.dim


# ---------------------------------------------------------------------------
# Fields


@dataclass(frozen=True)
class PotentialField:
    geometry: TorusGeometry
    values: np.ndarray = field(repr=False)
    mean_zero: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.geometry.shape:
            raise DimensionError(f"potential shape {v.shape} != grid {self.geometry.shape}")
        if self.mean_zero and abs(v.mean()) > 1e-12:
            raise GaugeError(f"mean-zero potential has grid average {v.mean():.3e}")
        object.__setattr__(self, "values", v)

    @classmethod
    def recentered(cls, geometry, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(geometry, values - values.mean())

    @classmethod
    def zero(cls, geometry):
        return cls(geometry, np.zeros(geometry.shape))


@dataclass(frozen=True)
class HermitianFormField:
    """A (1,1)-form field given by its Hermitian matrix per node."""

    geometry: TorusGeometry
    matrices: np.ndarray = field(repr=False)

    def __post_init__(self):
        G = np.asarray(self.matrices, dtype=np.complex128)
        n = self.geometry.n
        if G.shape != self.geometry.shape + (n, n):
            raise DimensionError(f"Hermitian field shape {G.shape} is wrong")
        object.__setattr__(self, "matrices", G)

    def real_components(self) -> np.ndarray:
        return real_form_to_components(hermitian_to_real_form(self.matrices))

    def top_density(self) -> np.ndarray:
        """Coefficient field of (form)^n / n!."""
        comp = self.real_components()
        return field_wedge_power(comp, self.geometry.n, self.geometry.dim) \
            / math.factorial(self.geometry.n)


class MetricField(HermitianFormField):
    """Positive Hermitian form field; positivity checked at construction."""

    def __post_init__(self):
        super().__post_init__()
        eigs = np.linalg.eigvalsh(self.matrices)
        worst = eigs.min(axis=-1)
        if worst.min() <= 1e-12:
            node = np.unravel_index(int(np.argmin(worst)), self.geometry.shape)
            raise NotKahlerError(
                f"metric not positive: min eigenvalue {worst.min():.3e} at node {node}",
                node=node, value=float(worst.min()))


def metric_from_potential(geom: TorusGeometry, phi: PotentialField) -> MetricField:
    """g0 + complex Hessian of phi, validated positive."""
    if phi.geometry is not geom and phi.geometry != geom:
        raise DimensionError("potential defined on a different geometry")
    H = ddbar_hermitian(phi.values, geom.n)
    G = H + geom.base_metric
    return MetricField(geom, G)


def ricci(m: MetricField) -> HermitianFormField:
    """Ricci form -i ddbar log det g as a Hermitian form field."""
    logdet = np.log(np.real(np.linalg.det(m.matrices)))
    R = -ddbar_hermitian(logdet, m.geometry.n)
    return HermitianFormField(m.geometry, R)


def scalar_curvature(m: MetricField) -> np.ndarray:
    """Riemannian scalar curvature 2 * tr(g^{-1} Ric)."""
    R = ricci(m)
    tr = np.einsum("...ab,...ba->...", np.linalg.inv(m.matrices), R.matrices)
    return 2.0 * np.real(tr)


# ---------------------------------------------------------------------------
# Interpolation of grid fields at scattered points


def fourier_upsample(F: np.ndarray, factor: int, dim: int) -> np.ndarray:
    """Zero-padded FFT upsampling of a real periodic grid field."""
    N = F.shape[0]
    M = N * factor
    Fh = np.fft.fftn(F, axes=tuple(range(dim)))
    out = np.zeros((M,) * dim + F.shape[dim:], dtype=np.complex128)
    sl = [slice(None)] * out.ndim
    src = [slice(None)] * F.ndim
    # copy low/high frequency blocks per axis
    def blocks(ax):
        half = N // 2
        return [(slice(0, half), slice(0, half)), (slice(M - half, M), slice(half, N))]
    idx = [blocks(ax) for ax in range(dim)]
    import itertools as _it
    for combo in _it.product(*idx):
        for ax, (dst_s, src_s) in enumerate(combo):
            sl[ax] = dst_s
            src[ax] = src_s
        out[tuple(sl)] = Fh[tuple(src)]
    out *= factor ** dim
    return np.real(np.fft.ifftn(out, axes=tuple(range(dim))))


def _lagrange_weights(frac: np.ndarray, order: int) -> np.ndarray:
    """Lagrange weights on the integer stencil 0..order-1 at offset frac.

    frac is the position inside the stencil measured from node order//2 - 1,
    i.e. evaluation point = (order//2 - 1) + frac with frac in [0, 1).
    Returns shape frac.shape + (order,).
    """
    nodes = np.arange(order, dtype=np.float64)
    x = (order // 2 - 1) + frac
    w = np.ones(frac.shape + (order,))
    for j in range(order):
        for k in range(order):
            if k == j:
                continue
            w[..., j] *= (x - nodes[k]) / (nodes[j] - nodes[k])
    return w


class GridInterpolant:
    """Periodic interpolant: FFT upsampling + separable Lagrange stencil.

    Defaults trade upsampling for stencil order in high dimension to keep
    the fine grid small: dim <= 2 uses (4x, order 6), dim >= 4 uses
    (2x, order 8).  Both stay far below the package tolerances for smooth
    fields.
    """

    def __init__(self, values: np.ndarray, dim: int, upsample: int = None,
                 order: int = None):
        if upsample is None:
            upsample = 4 if dim <= 2 else 2
        if order is None:
            order = 6
        self.dim = dim
        self.order = order
        fine = fourier_upsample(values, upsample, dim)
        self.M = fine.shape[0]
        self.h = TWO_PI / self.M
        self.tail_shape = fine.shape[dim:]
        self.flat = fine.reshape((self.M ** dim,) + self.tail_shape)
        self.strides = np.array([self.M ** (dim - 1 - ax) for ax in range(dim)],
                                dtype=np.int64)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        lead = points.shape[:-1]
        pts = points[..., :self.dim].reshape(-1, self.dim)
        t = pts / self.h
        base = np.floor(t).astype(np.int64)
        frac = t - base
        q = self.order
        # per-axis wrapped flat index contributions and weights, shape (npts, q)
        offs = np.arange(q, dtype=np.int64)
        idx = [(((base[:, ax] - (q // 2 - 1))[:, None] + offs) % self.M)
               * self.strides[ax] for ax in range(self.dim)]
        wts = [_lagrange_weights(frac[:, ax], q) for ax in range(self.dim)]
        npts = pts.shape[0]
        acc = np.zeros((npts,) + self.tail_shape)

        def descend(ax, flat_idx, w):
            if ax == self.dim - 1:
                for o in range(q):
                    contrib = self.flat[flat_idx + idx[ax][:, o]]
                    wo = w * wts[ax][:, o]
                    acc.__iadd__(wo[..., None] * contrib if self.tail_shape
                                 else wo * contrib)
                return
            for o in range(q):
                descend(ax + 1, flat_idx + idx[ax][:, o], w * wts[ax][:, o])

        descend(0, np.zeros(npts, dtype=np.int64), np.ones(npts))
        return acc.reshape(lead + self.tail_shape)


# ---------------------------------------------------------------------------
# Diffeomorphisms


@dataclass(frozen=True)
class DiffeoField:
    """Grid-sampled diffeomorphism with cached inverse and Jacobian."""

    geometry: TorusGeometry
    displacement: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False, default=None)
    inverse_displacement: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        d = np.asarray(self.displacement, dtype=np.float64)
        geom = self.geometry
        if d.shape != geom.shape + (geom.dim,):
            raise DimensionError(f"displacement shape {d.shape} is wrong")
        object.__setattr__(self, "displacement", d)
        if self.jacobian is None:
            J = np.stack([spectral_gradient(d[..., c], geom.dim)
                          for c in range(geom.dim)], axis=-2)
            for c in range(geom.dim):
                J[..., c, c] += 1.0
            object.__setattr__(self, "jacobian", J)
        det = np.linalg.det(self.jacobian)
        if det.min() <= 0:
            raise FlowBlowupError(f"Jacobian determinant reaches {det.min():.3e}")
        if self.inverse_displacement is None:
            object.__setattr__(self, "inverse_displacement", _invert_map(geom, d))

    @classmethod
    def identity(cls, geom: TorusGeometry) -> "DiffeoField":
        return cls(geom, np.zeros(geom.shape + (geom.dim,)))

    @classmethod
    def from_analytic_flow(cls, geom: TorusGeometry, vf: "TrigVectorField",
                           t: float, steps: int = 32) -> "DiffeoField":
        """Flow of an analytic field; the inverse is the time-reversed flow.

        Everything (forward map, inverse, Jacobian) is evaluated exactly
        along trajectories, so no grid interpolation enters.  Much faster
        than grid-sampled velocity flows in high dimension.
        """
        pts = geom.coordinates()
        img, J = analytic_flow(vf, pts, t, steps=steps, with_jacobian=True)
        back = analytic_flow(vf, pts, -t, steps=steps)
        return cls(geom, img - pts, jacobian=J, inverse_displacement=back - pts)

    def points(self) -> np.ndarray:
        return self.geometry.coordinates() + self.displacement

    def inverse_points(self) -> np.ndarray:
        return self.geometry.coordinates() + self.inverse_displacement

    def inverse(self) -> "DiffeoField":
        return DiffeoField(self.geometry, self.inverse_displacement,
                           inverse_displacement=self.displacement)

    def roundtrip_error(self) -> float:
        """sup |f^{-1}(f(x)) - x| via interpolation of the inverse."""
        interp = GridInterpolant(self.inverse_displacement, self.geometry.dim)
        back = self.points() + interp(self.points())
        err = _wrap_angle(back - self.geometry.coordinates())
        return float(np.abs(err).max())


def _wrap_angle(d: np.ndarray) -> np.ndarray:
    return (d + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True)
class SampledMap:
    """Map given by sampled image points and exact Jacobians (no caches).

    A light-weight stand-in for DiffeoField on paths where the image
    points and tangent maps come from analytic flows; supports everything
    that only needs f(x) and Df(x).
    """

    geometry: TorusGeometry
    image: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)

    def __post_init__(self):
        det = np.linalg.det(self.jacobian)
        if det.min() <= 0:
            raise FlowBlowupError(f"Jacobian determinant reaches {det.min():.3e}")

    def points(self) -> np.ndarray:
        return self.image


def _invert_map(geom: TorusGeometry, disp: np.ndarray,
                tol: float = 1e-10, max_iter: int = 200,
                damping: float = 1.0) -> np.ndarray:
    """Damped fixed-point inversion for y = x + d(x): x = y - d(x)."""
    interp = GridInterpolant(disp, geom.dim)
    y = geom.coordinates()
    g = -disp.copy()  # initial guess for inverse displacement
    for _ in range(max_iter):
        x = y + g
        new_g = -interp(x)
        delta = np.abs(new_g - g).max()
        g = g + damping * (new_g - g)
        if delta < tol:
            break
    else:
        raise InterpolationError(f"map inversion stalled at delta = {delta:.3e}")
    return g


def hamiltonian_vector_field(geom: TorusGeometry, h: np.ndarray) -> np.ndarray:
    """Field X_h with i_{X_h} omega0 = dh for the base form."""
    if not isinstance(h, np.ndarray):
        raise DimensionError("hamiltonian potential must be a periodic grid field")
    W = geom.base_form_matrix()
    grad = spectral_gradient(h, geom.dim)
    return np.einsum("ij,...j->...i", -np.linalg.inv(W), grad)


def flow_of_velocity(geom: TorusGeometry, V: np.ndarray, t: float,
                     steps: int = 32) -> DiffeoField:
    """Fixed-step RK4 flow of a grid velocity field."""
    interps = [GridInterpolant(V[..., c], geom.dim) for c in range(geom.dim)]

    def vel(pts):
        return np.stack([ip(pts) for ip in interps], axis=-1)

    pts = geom.coordinates()
    y = pts.copy()
    h = t / steps
    for _ in range(steps):
        k1 = vel(y)
        k2 = vel(y + 0.5 * h * k1)
        k3 = vel(y + 0.5 * h * k2)
        k4 = vel(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return DiffeoField(geom, y - pts)


def hamiltonian_flow(geom: TorusGeometry, h: np.ndarray, t: float,
                     steps: int = 32) -> DiffeoField:
    """Time-t flow of the Hamiltonian field of h (base symplectic form)."""
    return flow_of_velocity(geom, hamiltonian_vector_field(geom, h), t, steps)


def compose(f: DiffeoField, g: DiffeoField) -> DiffeoField:
    """f after g: x -> f(g(x))."""
    interp = GridInterpolant(f.displacement, f.geometry.dim)
    gpts = g.points()
    disp = g.displacement + interp(gpts)
    return DiffeoField(f.geometry, disp)


def pullback_2form(f: DiffeoField, comp: np.ndarray,
                   constant: bool = False) -> np.ndarray:
    """(f^* beta)_x = Df(x)^T beta(f(x)) Df(x) on increasing components.

    comp is either a component field on the codomain grid or, when
    constant=True, a single component vector of a constant form.
    """
    geom = f.geometry
    J = f.jacobian
    if constant:
        M = components_to_real_form(np.asarray(comp), geom.dim)
        out = np.swapaxes(J, -1, -2) @ (M @ J)
    else:
        interp = GridInterpolant(comp, geom.dim)
        at = interp(f.points())
        Mf = components_to_real_form(at, geom.dim)
        out = np.swapaxes(J, -1, -2) @ (Mf @ J)
    return real_form_to_components(out)


def pushforward_2form(f: DiffeoField, comp: np.ndarray,
                      constant: bool = False) -> np.ndarray:
    """f_* beta = (f^{-1})^* beta."""
    return pullback_2form(f.inverse(), comp, constant=constant)


def pullback_density(f: DiffeoField, dens: np.ndarray) -> np.ndarray:
    """Pullback of a top-form coefficient field: dens(f(x)) det Df(x)."""
    interp = GridInterpolant(dens, f.geometry.dim)
    return interp(f.points()) * np.linalg.det(f.jacobian)


def pushforward_density(f: DiffeoField, dens: np.ndarray) -> np.ndarray:
    return pullback_density(f.inverse(), dens)


def pullback_scalar(f: DiffeoField, s: np.ndarray) -> np.ndarray:
    return GridInterpolant(s, f.geometry.dim)(f.points())


# ---------------------------------------------------------------------------
# Band-limited analytic data (exact evaluation off-grid)


class TrigPolynomial:
    """Real trig polynomial sum_k a_k cos(k.x) + b_k sin(k.x), exact off-grid."""

    def __init__(self, dim: int, terms):
        self.dim = dim
        self.terms = [(np.asarray(k, dtype=np.int64), float(a), float(b))
                      for (k, a, b) in terms]

    @classmethod
    def random(cls, rng, dim: int, n_terms: int = 3, max_wavenumber: int = 2,
               amplitude: float = 0.3) -> "TrigPolynomial":
        terms = []
        for _ in range(n_terms):
            k = rng.integers(-max_wavenumber, max_wavenumber + 1, size=dim)
            if not k.any():
                k[rng.integers(0, dim)] = 1
            a, b = rng.normal(size=2) * amplitude / n_terms
            terms.append((k, a, b))
        return cls(dim, terms)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape[:-1])
        for k, a, b in self.terms:
            phase = pts @ k
            out += a * np.cos(phase) + b * np.sin(phase)
        return out

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape)
        for k, a, b in self.terms:
            phase = pts @ k
            out += (-a * np.sin(phase) + b * np.cos(phase))[..., None] * k
        return out

    def to_grid(self, geom: TorusGeometry) -> np.ndarray:
        return self(geom.coordinates())


class TrigVectorField:
    """Vector field with trig-polynomial components."""

    def __init__(self, components):
        self.components = list(components)
        self.dim = self.components[0].dim

    @classmethod
    def random(cls, rng, dim: int, n_terms: int = 2, max_wavenumber: int = 2,
               amplitude: float = 0.25) -> "TrigVectorField":
        return cls([TrigPolynomial.random(rng, dim, n_terms, max_wavenumber, amplitude)
                    for _ in range(dim)])

    @classmethod
    def hamiltonian(cls, geom: TorusGeometry, h: TrigPolynomial) -> "TrigVectorField":
        """Exact Hamiltonian field of a trig potential for the base form."""
        Winv = np.linalg.inv(geom.base_form_matrix())
        comps = []
        for c in range(geom.dim):
            terms = []
            for k, a, b in h.terms:
                # gradient term: (-a sin + b cos) * k_j ; X = -W^{-1} grad
                for j in range(geom.dim):
                    coef = -Winv[c, j] * k[j]
                    if coef != 0.0:
                        terms.append((k, coef * b, -coef * a))
            comps.append(TrigPolynomial(geom.dim, terms))
        return cls(comps)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.stack([c(pts) for c in self.components], axis=-1)

    def jacobian_at(self, pts: np.ndarray) -> np.ndarray:
        return np.stack([c.gradient(pts) for c in self.components], axis=-2)


def analytic_flow(vf: TrigVectorField, pts: np.ndarray, t: float,
                  steps: int = 4, with_jacobian: bool = False):
    """RK4 flow of an analytic field, optionally with tangent propagation.

    Tangent maps use the exact field Jacobian, so no grid differentiation
    enters; everything is smooth in t for finite-difference studies.
    """
    y = pts.copy()
    J = None
    if with_jacobian:
        J = np.zeros(pts.shape + (pts.shape[-1],))
        J[...] = np.eye(pts.shape[-1])
    h = t / steps
    for _ in range(steps):
        k1 = vf(y)
        y2 = y + 0.5 * h * k1
        k2 = vf(y2)
        y3 = y + 0.5 * h * k2
        k3 = vf(y3)
        y4 = y + h * k3
        k4 = vf(y4)
        if with_jacobian:
            D1 = vf.jacobian_at(y) @ J
            D2 = vf.jacobian_at(y2) @ (J + 0.5 * h * D1)
            D3 = vf.jacobian_at(y3) @ (J + 0.5 * h * D2)
            D4 = vf.jacobian_at(y4) @ (J + h * D3)
            J = J + (h / 6.0) * (D1 + 2 * D2 + 2 * D3 + D4)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if with_jacobian:
        return y, J
    return y
