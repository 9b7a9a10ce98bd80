"""Exact integrals of B-spline products: the univariate kernel tables and
their separable multidimensional composition.

Every table entry is a piecewise-polynomial integral evaluated exactly by
composite Gauss-Legendre quadrature: the integration range is split at every
knot of every factor (knots fall on integers or half-integers depending on
degree parity) and each piece uses a rule of order at least the integrand
degree.  Tables are cached; they depend only on degrees and derivative flags,
never on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bspline import MAX_DEGREE, eval_bspline, eval_bspline_derivative
from .errors import DegreeError, GeometryError, SmoothnessError, ValidationError

_GAUSS_MAX = 16


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes/weights on (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=None)
def _gauss_cached(count):
    x, w = np.polynomial.legendre.leggauss(count)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights)


def gauss_rule(count) -> QuadratureRule:
    """Gauss-Legendre rule on (0, 1), exact for degree <= 2*count - 1."""
    if not 1 <= count <= _GAUSS_MAX:
        raise ValidationError(f"quadrature count {count} not in 1..{_GAUSS_MAX}")
    return _gauss_cached(int(count))


def _factor_eval(degree, deriv, x):
    if deriv == 0:
        return eval_bspline(degree, x)
    return eval_bspline_derivative(degree, x, deriv)


def _knots(degree, shift):
    return shift + np.arange(degree + 2) - (degree + 1) / 2.0


def integrate_product(factors, lo=-math.inf, hi=math.inf):
    """Exact integral of a product of shifted (derived) B-splines.

    ``factors`` is a sequence of ``(degree, shift, deriv)``.  The domain is
    the support intersection clipped to ``[lo, hi]``; integration is exact
    because each piece between knots is a polynomial.
    """
    a, b = lo, hi
    breaks = []
    poly_deg = 0
    for deg, shift, deriv in factors:
        k = _knots(deg, shift)
        a = max(a, k[0])
        b = min(b, k[-1])
        breaks.append(k)
        poly_deg += deg - deriv
    if b <= a:
        return 0.0
    cuts = np.unique(np.concatenate([np.array([a, b])] + breaks))
    cuts = cuts[(cuts >= a) & (cuts <= b)]
    rule = gauss_rule(min(max(poly_deg // 2 + 1, 1), _GAUSS_MAX))
    seg_lo = cuts[:-1]
    seg_len = np.diff(cuts)
    x = (seg_lo[:, None] + seg_len[:, None] * rule.nodes[None, :]).ravel()
    w = (seg_len[:, None] * rule.weights[None, :]).ravel()
    vals = np.ones_like(x)
    for deg, shift, deriv in factors:
        vals *= _factor_eval(deg, deriv, x - shift)
    return float(np.dot(w, vals))


def trilinear_offsets(n_b, n_p):
    """Offset windows (trial a, parameter b) of the trilinear kernel."""
    a = np.arange(-n_b, n_b + 1)
    mw = (n_b + n_p + 1) // 2
    b = np.arange(-mw, mw + 1)
    return a, b


@dataclass(frozen=True)
class UnivariateTrilinearKernel:
    """Table of integrals of (D^da beta_nb)(x-a) (D^db beta_nb)(x) beta_np(x-b).

    Offsets are relative to the test index (the gather point): rows are the
    trial offset ``a``, columns the parameter offset ``b``.
    """

    basis_degree: int
    param_degree: int
    deriv_trial: bool
    deriv_test: bool
    table: np.ndarray

    @property
    def trial_offsets(self):
        return np.arange(-self.basis_degree, self.basis_degree + 1)

    @property
    def param_offsets(self):
        mw = (self.basis_degree + self.param_degree + 1) // 2
        return np.arange(-mw, mw + 1)

    def collapsed(self):
        """Sum over the parameter offset (partition-of-unity collapse)."""
        return self.table.sum(axis=1)


@dataclass(frozen=True)
class UnivariateBilinearKernel:
    """Table of integrals of (D^da beta_n1)(x-j) (D^db beta_n2)(x) over j."""

    degrees: tuple
    deriv_first: bool
    deriv_second: bool
    table: np.ndarray

    @property
    def offsets(self):
        rw = (self.degrees[0] + self.degrees[1] + 1) // 2
        return np.arange(-rw, rw + 1)


def _check_kernel_degrees(*degrees):
    for n in degrees:
        if not 0 <= n <= MAX_DEGREE:
            raise DegreeError(f"degree {n} not in 0..{MAX_DEGREE}")


def _check_deriv_flag(degree, flag, what):
    if flag and degree < 1:
        raise SmoothnessError(f"cannot differentiate the degree-0 {what} factor")


@lru_cache(maxsize=None)
def trilinear_kernel(n_b, n_p, da, db) -> UnivariateTrilinearKernel:
    """Univariate trilinear kernel table (the hat{w}/hat{f} of the operator)."""
    _check_kernel_degrees(n_b, n_p)
    da, db = bool(da), bool(db)
    _check_deriv_flag(n_b, da, "trial")
    _check_deriv_flag(n_b, db, "test")
    offs_a, offs_b = trilinear_offsets(n_b, n_p)
    table = np.empty((len(offs_a), len(offs_b)))
    for i, a in enumerate(offs_a):
        for j, b in enumerate(offs_b):
            table[i, j] = integrate_product(
                [(n_b, float(a), int(da)), (n_b, 0.0, int(db)), (n_p, float(b), 0)]
            )
    table.setflags(write=False)
    return UnivariateTrilinearKernel(n_b, n_p, da, db, table)


@lru_cache(maxsize=None)
def bilinear_kernel(n1, n2, da, db) -> UnivariateBilinearKernel:
    """Univariate bilinear kernel table (source term r and surface factors)."""
    _check_kernel_degrees(n1, n2)
    da, db = bool(da), bool(db)
    _check_deriv_flag(n1, da, "first")
    _check_deriv_flag(n2, db, "second")
    rw = (n1 + n2 + 1) // 2
    offs = np.arange(-rw, rw + 1)
    table = np.array(
        [
            integrate_product([(n1, float(j), int(da)), (n2, 0.0, int(db))])
            for j in offs
        ]
    )
    table.setflags(write=False)
    return UnivariateBilinearKernel((n1, n2), da, db, table)


@dataclass(frozen=True)
class SeparableKernelSet:
    """Separable d-dimensional stiffness/mass kernels.

    The stiffness kernel is the sum of ``dim`` outer-product terms; term ``i``
    takes the differentiated factor (``w``) on axis ``i`` and the mass-like
    factor (``f``) on every other axis, scaled by ``vol / h_i**2`` where
    ``vol`` is the cell volume.  The mass kernel is a single outer product
    scaled by ``vol``.  Nothing d-dimensional is ever materialized.
    """

    dim: int
    step: tuple
    w_axis: tuple  # per-axis differentiated trilinear kernels
    f_axis: tuple  # per-axis undifferentiated trilinear kernels

    @property
    def volume(self) -> float:
        return float(np.prod(self.step))

    def stiffness_scale(self, axis) -> float:
        return self.volume / self.step[axis] ** 2

    def stiffness_term(self, axis):
        """(scale, per-axis tables) for the term differentiated along ``axis``."""
        tables = tuple(
            self.w_axis[j].table if j == axis else self.f_axis[j].table
            for j in range(self.dim)
        )
        return self.stiffness_scale(axis), tables

    def mass_term(self):
        return self.volume, tuple(k.table for k in self.f_axis)

    def materialize_stiffness(self):
        """Dense (a..., b...) stiffness tensor; for tests and tiny windows only."""
        out = None
        for i in range(self.dim):
            scale, tables = self.stiffness_term(i)
            term = np.array([[scale]])
            for t in tables:
                term = np.einsum("ab,AB->aAbB", term, t).reshape(
                    term.shape[0] * t.shape[0], term.shape[1] * t.shape[1]
                )
            out = term if out is None else out + term
        a_sizes = tuple(t.table.shape[0] for t in self.f_axis)
        b_sizes = tuple(t.table.shape[1] for t in self.f_axis)
        return out.reshape(a_sizes + b_sizes)


def compose_separable(per_axis_kernels, step) -> SeparableKernelSet:
    """Build the separable kernel set from per-axis (w, f) kernel pairs.

    ``per_axis_kernels`` is either a single ``(w, f)`` pair shared by all
    axes or a sequence of ``dim`` pairs; ``step`` fixes the dimensionality.
    """
    step = tuple(float(h) for h in np.atleast_1d(step))
    d = len(step)
    if not 1 <= d <= 3:
        raise ValidationError(f"dimension {d} not in 1..3")
    if isinstance(per_axis_kernels, tuple) and len(per_axis_kernels) == 2 and isinstance(
        per_axis_kernels[0], UnivariateTrilinearKernel
    ):
        pairs = [per_axis_kernels] * d
    else:
        pairs = list(per_axis_kernels)
        if len(pairs) != d:
            raise ValidationError(f"need {d} per-axis kernel pairs, got {len(pairs)}")
    return SeparableKernelSet(
        dim=d,
        step=step,
        w_axis=tuple(p[0] for p in pairs),
        f_axis=tuple(p[1] for p in pairs),
    )


def default_kernel_set(n_b, n_p, step) -> SeparableKernelSet:
    """Kernel set for basis degree ``n_b`` and parameter degree ``n_p``."""
    w = trilinear_kernel(n_b, n_p, True, True)
    f = trilinear_kernel(n_b, n_p, False, False)
    return compose_separable((w, f), step)


@dataclass(frozen=True)
class FaceKernel:
    """Surface kernel of one axis-aligned box face.

    Along the face normal the kernel is the rank-1 table of point evaluations
    ``beta(e_k) beta(e_l)`` over node offsets from the face; along each
    tangential axis it is the undifferentiated bilinear (scalar-product)
    kernel.  The tangential grid steps enter as the surface measure.
    """

    axis: int
    side: int  # 0 = low face, 1 = high face
    normal_values: np.ndarray  # beta^n at integer offsets from the face node
    tangential: tuple  # UnivariateBilinearKernel per tangential axis
    scale: float  # product of tangential steps

    @property
    def normal_offsets(self):
        m = (len(self.normal_values) - 1) // 2
        return np.arange(-m, m + 1)

    def normal_table(self):
        """Rank-1 (k, l) table of the normal point-evaluation factors."""
        return np.outer(self.normal_values, self.normal_values)


def boundary_face_kernel(basis, face) -> FaceKernel:
    """Surface kernel for the box face ``(axis, side)`` with side in {0, 1}."""
    try:
        axis, side = face
        axis, side = int(axis), int(side)
    except (TypeError, ValueError):
        raise GeometryError(f"face must be (axis, side), got {face!r}") from None
    if not 0 <= axis < basis.dim or side not in (0, 1):
        raise GeometryError(f"face {face!r} is not an axis-aligned face of a {basis.dim}-d box")
    n = basis.degree
    m = (n + 1 + 1) // 2 - 1 if n >= 1 else 0
    m = max(m, 0)
    offsets = np.arange(-m, m + 1)
    values = eval_bspline(n, offsets.astype(float))
    tangential = tuple(
        bilinear_kernel(n, n, False, False) for j in range(basis.dim) if j != axis
    )
    scale = float(np.prod([basis.step[j] for j in range(basis.dim) if j != axis]))
    return FaceKernel(axis=axis, side=side, normal_values=values,
                      tangential=tangential, scale=scale)


# ---------------------------------------------------------------------------
# per-cell tables: integrals restricted to one unit cell, used for truncated
# kernels near mask boundaries and as building blocks of the edge tables


def cell_node_offsets(degree):
    """Node offsets whose splines are non-zero on the reference cell (0, 1)."""
    s = (degree + 1) / 2.0
    lo = math.floor(-s) + 1
    hi = math.ceil(1 + s) - 1
    return np.arange(lo, hi + 1)


@lru_cache(maxsize=None)
def cell_trilinear_table(n_b, n_p, da, db):
    """(trial, test, param) integrals over the reference cell (0, 1)."""
    _check_kernel_degrees(n_b, n_p)
    js = cell_node_offsets(n_b)
    bs = cell_node_offsets(n_p)
    T = np.empty((len(js), len(js), len(bs)))
    for i1, j1 in enumerate(js):
        for i2, j2 in enumerate(js):
            for ib, b in enumerate(bs):
                T[i1, i2, ib] = integrate_product(
                    [(n_b, float(j1), int(da)), (n_b, float(j2), int(db)),
                     (n_p, float(b), 0)],
                    lo=0.0, hi=1.0,
                )
    T.setflags(write=False)
    return js, bs, T


@lru_cache(maxsize=None)
def cell_bilinear_table(n1, n2):
    """(first, second) integrals over the reference cell (0, 1)."""
    _check_kernel_degrees(n1, n2)
    j1s = cell_node_offsets(n1)
    j2s = cell_node_offsets(n2)
    T = np.empty((len(j1s), len(j2s)))
    for i1, j1 in enumerate(j1s):
        for i2, j2 in enumerate(j2s):
            T[i1, i2] = integrate_product(
                [(n1, float(j1), 0), (n2, float(j2), 0)], lo=0.0, hi=1.0
            )
    T.setflags(write=False)
    return j1s, j2s, T


@lru_cache(maxsize=None)
def cell_single_table(n):
    """Integrals of a single spline over the reference cell (0, 1)."""
    js = cell_node_offsets(n)
    T = np.array([integrate_product([(n, float(j), 0)], lo=0.0, hi=1.0) for j in js])
    T.setflags(write=False)
    return js, T


# ---------------------------------------------------------------------------
# positional (edge-truncated) tables for box domains: integrals over
# [0, +inf) for a test spline centered at position p near the left edge.
# Right-edge tables follow by the reflection symmetry of the integrand.


@lru_cache(maxsize=None)
def edge_trilinear_table(n_b, n_p, da, db, p):
    """Trilinear table for test position ``p`` (left edge at coordinate 0)."""
    offs_a, offs_b = trilinear_offsets(n_b, n_p)
    table = np.empty((len(offs_a), len(offs_b)))
    for i, a in enumerate(offs_a):
        for j, b in enumerate(offs_b):
            table[i, j] = integrate_product(
                [(n_b, float(p + a), int(da)), (n_b, float(p), int(db)),
                 (n_p, float(p + b), 0)],
                lo=0.0,
            )
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def edge_bilinear_table(n1, n2, p):
    """Bilinear table (offsets j - l) for second-factor position ``p``."""
    rw = (n1 + n2 + 1) // 2
    offs = np.arange(-rw, rw + 1)
    table = np.array(
        [
            integrate_product([(n1, float(p + j), 0), (n2, float(p), 0)], lo=0.0)
            for j in offs
        ]
    )
    table.setflags(write=False)
    return table


