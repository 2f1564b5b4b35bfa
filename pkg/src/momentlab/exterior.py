"""Pointwise exterior algebra over increasing multi-indices.

Forms of degree k on R^{2n} are stored densely as C(2n, k) coefficients
indexed by strictly increasing multi-indices in lexicographic order, so
antisymmetry is structural.  Conventions, fixed once for the whole package:

* interior product contracts the first slot: (i_u a)(v, ...) = a(u, v, ...);
* a 2-form with coefficient c on index (i, j), i < j, evaluates to
  a(e_i, e_j) = c;
* wedge uses the shuffle-sign convention, so (dx^1 ^ dx^2)(e1, e2) = 1.

All operations are pure functions on immutable values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateVolumeError, DegreeError, DimensionError

MAX_DIM = 12
VOLUME_FLOOR = 1e-12  # positivity floor for top coefficients


@lru_cache(maxsize=None)
def index_tuples(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Increasing multi-indices of the given degree, lexicographic."""
    return tuple(itertools.combinations(range(dim), degree))


@lru_cache(maxsize=None)
def index_position(dim: int, degree: int) -> dict[tuple[int, ...], int]:
    return {idx: k for k, idx in enumerate(index_tuples(dim, degree))}


def merge_sign(ia: tuple[int, ...], ib: tuple[int, ...]) -> int:
    """Sign of the permutation sorting the concatenation ia + ib.

    Assumes ia and ib are individually increasing and disjoint.
    """
    sign = 1
    for a in ia:
        # count entries of ib smaller than a: each requires one transposition
        # past the whole of ia's tail, but since both blocks are sorted the
        # parity reduces to the number of inversions across the blocks.
        sign *= (-1) ** sum(1 for b in ib if b < a)
    return sign


@lru_cache(maxsize=None)
def wedge_table(dim: int, da: int, db: int):
    """Structure table for degree (da, db) -> da+db products.

    Returns an (m, 3) int array of rows (pos_a, pos_b, out) and an (m,)
    sign array.
    """
    pos_out = index_position(dim, da + db)
    rows, signs = [], []
    for ka, ia in enumerate(index_tuples(dim, da)):
        sa = set(ia)
        for kb, ib in enumerate(index_tuples(dim, db)):
            if sa & set(ib):
                continue
            merged = tuple(sorted(ia + ib))
            rows.append((ka, kb, pos_out[merged]))
            signs.append(merge_sign(ia, ib))
    return np.asarray(rows, dtype=np.int64), np.asarray(signs, dtype=np.float64)


@dataclass(frozen=True)
class AlternatingForm:
    """Degree-k antisymmetric tensor at a point of R^dim (dim = 2n)."""

    dim: int
    degree: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim % 2 != 0 or not (2 <= self.dim <= MAX_DIM):
            raise DimensionError(f"dim must be even and <= {MAX_DIM}, got {self.dim}")
        if not (0 <= self.degree <= self.dim):
            raise DegreeError(f"degree {self.degree} out of [0, {self.dim}]")
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        expected = math.comb(self.dim, self.degree)
        if coeffs.shape != (expected,):
            raise DimensionError(
                f"degree-{self.degree} form on R^{self.dim} needs {expected} "
                f"coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return self.dim // 2

    def __add__(self, other: "AlternatingForm") -> "AlternatingForm":
        self._check_same_shape(other)
        return AlternatingForm(self.dim, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: "AlternatingForm") -> "AlternatingForm":
        self._check_same_shape(other)
        return AlternatingForm(self.dim, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "AlternatingForm":
        return AlternatingForm(self.dim, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "AlternatingForm":
        return self * -1.0

    def _check_same_shape(self, other: "AlternatingForm"):
        if self.dim != other.dim:
            raise DimensionError(f"dim mismatch: {self.dim} vs {other.dim}")
        if self.degree != other.degree:
            raise DegreeError(f"degree mismatch: {self.degree} vs {other.degree}")

    def top_coefficient(self) -> float:
        """Density relative to dx^1 ^ ... ^ dx^{2n}; requires top degree."""
        if self.degree != self.dim:
            raise DegreeError("top_coefficient needs a top-degree form")
        return float(self.coeffs[0])

    def evaluate(self, *vectors: "TangentVector") -> float:
        """Multilinear evaluation on k tangent vectors (minor expansion)."""
        if len(vectors) != self.degree:
            raise DegreeError(f"need {self.degree} vectors, got {len(vectors)}")
        if self.degree == 0:
            return float(self.coeffs[0])
        V = np.stack([v.components for v in vectors], axis=1)
        if V.shape[0] != self.dim:
            raise DimensionError("vector dimension mismatch")
        total = 0.0
        for c, idx in zip(self.coeffs, index_tuples(self.dim, self.degree)):
            if c != 0.0:
                total += c * np.linalg.det(V[list(idx), :])
        return float(total)


@dataclass(frozen=True)
class TangentVector:
    dim: int
    components: np.ndarray = field(repr=False)

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        if comps.shape != (self.dim,):
            raise DimensionError(
                f"vector on R^{self.dim} needs {self.dim} components, got {comps.shape}"
            )
        object.__setattr__(self, "components", comps)


def zero_form(dim: int, degree: int) -> AlternatingForm:
    return AlternatingForm(dim, degree, np.zeros(math.comb(dim, degree)))


def constant(dim: int, value: float = 1.0) -> AlternatingForm:
    return AlternatingForm(dim, 0, np.array([float(value)]))


def basis_form(dim: int, indices: tuple[int, ...], value: float = 1.0) -> AlternatingForm:
    """Elementary form value * dx^{i1} ^ ... ^ dx^{ik} for increasing indices."""
    degree = len(indices)
    pos = index_position(dim, degree)[tuple(indices)]
    coeffs = np.zeros(math.comb(dim, degree))
    coeffs[pos] = value
    return AlternatingForm(dim, degree, coeffs)


def standard_symplectic(dim: int) -> AlternatingForm:
    """omega_0 = sum_i dx^{2i} ^ dx^{2i+1} in interleaved coordinates."""
    out = zero_form(dim, 2)
    coeffs = out.coeffs.copy()
    pos = index_position(dim, 2)
    for i in range(dim // 2):
        coeffs[pos[(2 * i, 2 * i + 1)]] = 1.0
    return AlternatingForm(dim, 2, coeffs)


def two_form_from_matrix(M: np.ndarray) -> AlternatingForm:
    """2-form with a(e_i, e_j) = M[i, j] for the antisymmetric matrix M."""
    M = np.asarray(M, dtype=np.float64)
    dim = M.shape[0]
    coeffs = np.array([M[i, j] for (i, j) in index_tuples(dim, 2)])
    return AlternatingForm(dim, 2, coeffs)


def two_form_to_matrix(a: AlternatingForm) -> np.ndarray:
    if a.degree != 2:
        raise DegreeError("matrix representation needs a 2-form")
    M = np.zeros((a.dim, a.dim))
    for c, (i, j) in zip(a.coeffs, index_tuples(a.dim, 2)):
        M[i, j] = c
        M[j, i] = -c
    return M


def wedge(a: AlternatingForm, b: AlternatingForm) -> AlternatingForm:
    """Exterior product with the shuffle-sign convention."""
    if a.dim != b.dim:
        raise DimensionError(f"dim mismatch: {a.dim} vs {b.dim}")
    degree = a.degree + b.degree
    if degree > a.dim:
        raise DegreeError(f"degree overflow: {a.degree} + {b.degree} > {a.dim}")
    rows, signs = wedge_table(a.dim, a.degree, b.degree)
    out = np.zeros(math.comb(a.dim, degree))
    np.add.at(out, rows[:, 2], signs * a.coeffs[rows[:, 0]] * b.coeffs[rows[:, 1]])
    return AlternatingForm(a.dim, degree, out)


def power(a: AlternatingForm, m: int) -> AlternatingForm:
    """m-fold wedge of a degree-2 form; power(a, 0) is the constant 1."""
    if a.degree != 2:
        raise DegreeError("power is defined for 2-forms")
    if m < 0:
        raise DegreeError("power needs m >= 0")
    if 2 * m > a.dim:
        raise DegreeError(f"degree overflow: 2*{m} > {a.dim}")
    out = constant(a.dim, 1.0)
    for _ in range(m):
        out = wedge(out, a)
    return out


def interior(u: TangentVector, a: AlternatingForm) -> AlternatingForm:
    """First-slot contraction i_u a; degree drops by one."""
    if u.dim != a.dim:
        raise DimensionError(f"dim mismatch: {u.dim} vs {a.dim}")
    if a.degree < 1:
        raise DegreeError("interior product needs degree >= 1")
    pos_out = index_position(a.dim, a.degree - 1)
    out = np.zeros(math.comb(a.dim, a.degree - 1))
    for c, idx in zip(a.coeffs, index_tuples(a.dim, a.degree)):
        if c == 0.0:
            continue
        for slot, i in enumerate(idx):
            rest = idx[:slot] + idx[slot + 1:]
            out[pos_out[rest]] += ((-1) ** slot) * c * u.components[i]
    return AlternatingForm(a.dim, a.degree - 1, out)


def two_form_value(a: AlternatingForm, u: TangentVector, v: TangentVector) -> float:
    """a(u, v) for a 2-form."""
    if a.degree != 2:
        raise DegreeError("two_form_value needs a 2-form")
    return float(u.components @ two_form_to_matrix(a) @ v.components)


def top_ratio(eta: AlternatingForm, alpha: AlternatingForm,
              gamma: AlternatingForm | None = None) -> float:
    """n * coeff(eta ^ gamma) / coeff(alpha ^ gamma).

    gamma defaults to alpha^{n-1}; a gamma of degree 2n-4 is completed to
    degree 2n-2 with one extra copy of alpha.  With gamma = alpha^{n-1} the
    value equals the matrix trace sum_{ij} eta_{ij} (alpha^{-1})_{ji} / 2,
    i.e. the alpha-trace of eta.
    """
    n = alpha.n
    if eta.degree != 2 or alpha.degree != 2:
        raise DegreeError("top_ratio needs 2-forms eta, alpha")
    if gamma is None:
        gamma = power(alpha, n - 1)
    if gamma.degree == alpha.dim - 4:
        gamma = wedge(gamma, alpha)
    if gamma.degree != alpha.dim - 2:
        raise DegreeError(f"gamma degree {gamma.degree} cannot complete to top")
    denom = wedge(alpha, gamma).top_coefficient()
    if abs(denom) < VOLUME_FLOOR:
        raise DegenerateVolumeError(f"alpha ^ gamma has top coefficient {denom}")
    return n * wedge(eta, gamma).top_coefficient() / denom


def check_interior_identity(alpha: AlternatingForm, beta: AlternatingForm,
                            u: TangentVector, v: TangentVector,
                            p: int) -> tuple[float, float]:
    """Top coefficients of both sides of the mixed-spectator contraction identity.

    lhs = n * i_u(alpha) ^ i_v(beta) ^ gamma_p       with gamma_p = alpha^{n-1-p} ^ beta^p
    rhs = beta(u, v) * alpha ^ gamma_p

    In this package's conventions the identity lhs == rhs holds for p = 0
    (any alpha, beta) and whenever beta is proportional to alpha (any p).
    For 0 < p <= n-1 and generic beta it fails; at p = n-1 the valid variant
    is n * i_u(alpha) ^ i_v(beta) ^ beta^{n-1} = alpha(u, v) * beta^n.  The
    function returns both sides unconditionally so callers can measure the
    defect.

    Raises DegenerateVolumeError when positivity fails, reporting whether
    the hypothesis alpha^{n-p} ^ beta^p > 0 or the proof-side requirement
    alpha ^ gamma_p > 0 is the one violated (they coincide).
    """
    n = alpha.n
    if alpha.degree != 2 or beta.degree != 2:
        raise DegreeError("identity check needs 2-forms")
    if not (0 <= p <= n - 1):
        raise DegreeError(f"p = {p} out of [0, {n - 1}]")
    gamma = wedge(power(alpha, n - 1 - p), power(beta, p))
    vol = wedge(alpha, gamma).top_coefficient()
    hyp = wedge(power(alpha, n - p), power(beta, p)).top_coefficient()
    if hyp <= VOLUME_FLOOR or vol <= VOLUME_FLOOR:
        which = []
        if hyp <= VOLUME_FLOOR:
            which.append(f"alpha^{n - p} ^ beta^{p} = {hyp:.3e}")
        if vol <= VOLUME_FLOOR:
            which.append(f"alpha ^ gamma_p = {vol:.3e}")
        raise DegenerateVolumeError("positivity fails: " + "; ".join(which))
    lhs = n * wedge(wedge(interior(u, alpha), interior(v, beta)), gamma).top_coefficient()
    rhs = two_form_value(beta, u, v) * vol
    return lhs, rhs
