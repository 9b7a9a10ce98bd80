"""Uniform B-spline bases and the transforms between samples and coefficients.

The basis functions are the centered cardinal B-splines ``beta^n`` of degree
``n`` with support ``(-(n+1)/2, (n+1)/2)``, evaluated through the uniform
two-term recurrence.  The direct transform (samples -> coefficients) is the
recursive inverse filtering of the sampled basis; the indirect transform
(coefficients -> values) is local evaluation of the expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegreeError, OutOfDomainError, SmoothnessError, ValidationError

MAX_DEGREE = 5

# plain evaluation supports up to the scalar-product identity's beta^(2n+1)
_MAX_EVAL_DEGREE = 2 * MAX_DEGREE + 1

#: recognized boundary-extension policies for the recursive prefilter
EXTENSIONS = ("mirror", "replicate", "zero")

_PAD_MODE = {"mirror": "reflect", "replicate": "edge", "zero": "constant"}


@dataclass(frozen=True)
class BSplineBasis:
    """Tensor-product basis: one degree, a grid step per axis.

    Parameters
    ----------
    degree : int
        Polynomial degree, 0..5.
    step : tuple of float
        Grid spacing per axis; its length fixes the dimensionality (1..3).
    """

    degree: int
    step: tuple

    def __post_init__(self):
        if not 0 <= self.degree <= MAX_DEGREE:
            raise DegreeError(f"degree {self.degree} not in 0..{MAX_DEGREE}")
        step = tuple(float(h) for h in np.atleast_1d(self.step))
        object.__setattr__(self, "step", step)
        if not 1 <= len(step) <= 3:
            raise ValidationError(f"dimension {len(step)} not in 1..3")
        if any(h <= 0 for h in step):
            raise ValidationError(f"grid steps must be positive, got {step}")

    @property
    def dim(self) -> int:
        return len(self.step)

    @property
    def support_radius(self) -> float:
        return (self.degree + 1) / 2.0


@dataclass(frozen=True)
class FilterPoles:
    """Poles and gain of the inverse-b^n recursive prefilter."""

    degree: int
    poles: tuple
    gain: float

    def __post_init__(self):
        if len(self.poles) != self.degree // 2:
            raise ValidationError(
                f"degree {self.degree} needs {self.degree // 2} poles, got {len(self.poles)}"
            )
        if any(not -1.0 < z < 0.0 for z in self.poles):
            raise ValidationError(f"poles must lie in (-1, 0), got {self.poles}")


def _check_degree(n, cap=MAX_DEGREE):
    if not isinstance(n, (int, np.integer)) or not 0 <= n <= cap:
        raise DegreeError(f"degree {n} not in 0..{cap}")


def eval_bspline(n, x):
    """Evaluate the centered B-spline ``beta^n`` at ``x`` (scalar or array).

    Basis degrees are capped at 5 everywhere in the package; evaluation alone
    accepts up to degree 11 because the scalar-product identity references
    ``beta^(n1+n2+1)``.  Zero outside ``(-(n+1)/2, (n+1)/2)``; the degree-0
    box takes the value 1/2 exactly on its support edges so the partition of
    unity holds pointwise for every degree.
    """
    _check_degree(n, cap=_MAX_EVAL_DEGREE)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    pts = x.reshape(-1)

    # stage k holds beta^k at arguments pts + (n - k)/2 - j, j = 0..n-k
    args = pts[None, :] + ((n / 2.0) - np.arange(n + 1))[:, None]
    vals = np.where(np.abs(args) < 0.5, 1.0, 0.0)
    vals[np.abs(np.abs(args) - 0.5) == 0.0] = 0.5
    for k in range(1, n + 1):
        y = pts[None, :] + ((n - k) / 2.0 - np.arange(n - k + 1))[:, None]
        c = (k + 1) / 2.0
        vals = ((c + y) * vals[:-1] + (c - y) * vals[1:]) / k
    out = vals[0]
    return float(out[0]) if scalar else out.reshape(x.shape)


def eval_bspline_derivative(n, x, order=1):
    """r-fold derivative of ``beta^n`` via the shifted-difference identity.

    ``d beta^n/dx = beta^(n-1)(x+1/2) - beta^(n-1)(x-1/2)``, applied
    ``order`` times; requires ``order <= n``.
    """
    _check_degree(n)
    order = int(order)
    if order < 1:
        raise ValidationError(f"derivative order must be >= 1, got {order}")
    if order > n:
        raise SmoothnessError(f"order-{order} derivative of degree-{n} spline")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    pts = np.atleast_1d(x)
    out = np.zeros_like(pts)
    for i in range(order + 1):
        out += (-1.0) ** i * math.comb(order, i) * eval_bspline(n - order, pts + order / 2.0 - i)
    return float(out[0]) if scalar else out.reshape(x.shape)


def sampled_bspline(n):
    """``beta^n`` sampled at the integers of its support (centered, sums to 1)."""
    _check_degree(n)
    m = n // 2
    return eval_bspline(n, np.arange(-m, m + 1, dtype=float))


def compute_poles(n):
    """Poles/gain of the inverse filter of ``sampled_bspline(n)``.

    The poles are the roots inside the unit circle of the symmetric Laurent
    polynomial with the sampled-spline coefficients; the gain normalizes the
    DC response to 1.  Degrees 0 and 1 need no prefilter.
    """
    _check_degree(n)
    b = sampled_bspline(n)
    if len(b) == 1:
        return FilterPoles(degree=n, poles=(), gain=1.0)
    roots = np.roots(b)
    inside = sorted(z.real for z in roots if abs(z) < 1.0)
    gain = 1.0
    for z in inside:
        gain *= (1.0 - z) * (1.0 - 1.0 / z)
    return FilterPoles(degree=n, poles=tuple(inside), gain=gain)


def _mirror_index(i, n):
    # whole-sample symmetric folding with period 2n-2
    if n == 1:
        return 0
    period = 2 * n - 2
    i = i % period
    return period - i if i >= n else i


def _prefilter_lines(lines, poles: FilterPoles, extension, tol=1e-12):
    """Run the causal+anticausal cascade along the last axis of ``lines``."""
    n = lines.shape[-1]
    c = lines * poles.gain
    for z in poles.poles:
        horizon = int(math.ceil(math.log(tol) / math.log(abs(z)))) + 1
        if extension == "mirror":
            init = c[..., 0].copy()
            zk = 1.0
            for k in range(1, horizon):
                zk *= z
                init += zk * c[..., _mirror_index(k, n)]
            c[..., 0] = init
        elif extension == "replicate":
            init = c[..., 0].copy()
            zk = 1.0
            for k in range(1, min(horizon, n)):
                zk *= z
                init += zk * c[..., k]
            if horizon > n:
                # geometric tail of the replicated edge sample
                init += c[..., n - 1] * (z ** n) / (1.0 - z)
            c[..., 0] = init
        else:  # zero
            init = c[..., 0].copy()
            zk = 1.0
            for k in range(1, min(horizon, n)):
                zk *= z
                init += zk * c[..., k]
            c[..., 0] = init
        last = c[..., n - 1].copy()  # stage input at the right edge, pre-causal
        for k in range(1, n):
            c[..., k] += z * c[..., k - 1]
        if extension == "mirror":
            c[..., n - 1] = (z / (z * z - 1.0)) * (c[..., n - 1] + z * c[..., n - 2])
        elif extension == "replicate":
            s_inf = last / (1.0 - z)
            a = c[..., n - 1]
            c[..., n - 1] = -z * (s_inf / (1.0 - z) + (a - s_inf) / (1.0 - z * z))
        else:  # zero
            c[..., n - 1] = z * c[..., n - 1] / (z * z - 1.0)
        for k in range(n - 2, -1, -1):
            c[..., k] = z * (c[..., k + 1] - c[..., k])
    return c


def direct_transform(samples, basis: BSplineBasis, extension="mirror"):
    """Node samples -> spline coefficients (separable recursive filtering).

    The inverse-b^n filter runs as a causal+anticausal cascade per pole along
    each axis.  ``extension`` selects the boundary policy: "mirror"
    (whole-sample symmetric, default), "replicate" or "zero"; the causal pass
    is initialized by the truncated series at relative tolerance 1e-12.
    """
    if extension not in EXTENSIONS:
        raise ValidationError(f"unknown extension {extension!r}; pick from {EXTENSIONS}")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != basis.dim:
        raise ValidationError(f"samples are {arr.ndim}-d but basis is {basis.dim}-d")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("samples contain non-finite values")
    n = basis.degree
    if n >= 2 and any(e < 2 for e in arr.shape):
        raise ValidationError(f"extents {arr.shape} too small for degree {n} (need >= 2)")
    if n <= 1:
        return arr.copy()
    poles = compute_poles(n)
    out = arr.copy()
    for axis in range(arr.ndim):
        moved = np.moveaxis(out, axis, -1)
        shape = moved.shape
        flat = np.ascontiguousarray(moved).reshape(-1, shape[-1])
        flat = _prefilter_lines(flat, poles, extension)
        out = np.moveaxis(flat.reshape(shape), -1, axis)
    return np.ascontiguousarray(out)


def _tap_matrix(n, u):
    """First tap index and the (n+1) tap weights for evaluation points ``u``."""
    k0 = np.floor(u - (n - 1) / 2.0).astype(int)
    offs = np.arange(n + 1)
    w = eval_bspline(n, u[:, None] - (k0[:, None] + offs[None, :]))
    return k0, w


def indirect_transform(coeffs, basis: BSplineBasis, points, extension="mirror", first_index=None):
    """Evaluate the spline expansion at arbitrary points inside the grid.

    ``points`` are physical coordinates with node ``k`` at ``k*h`` per axis
    (shape ``(npts, dim)``; a flat array is accepted in 1-D).  Coefficients
    are indexed from ``first_index`` per axis (default 0); virtual neighbors
    required near the edges come from the extension policy.  Points outside
    the node span raise :class:`OutOfDomainError`.
    """
    arr = np.asarray(coeffs, dtype=float)
    if arr.ndim != basis.dim:
        raise ValidationError(f"coefficients are {arr.ndim}-d but basis is {basis.dim}-d")
    if extension not in EXTENSIONS:
        raise ValidationError(f"unknown extension {extension!r}; pick from {EXTENSIONS}")
    n = basis.degree
    d = basis.dim
    first = tuple(first_index) if first_index is not None else (0,) * d
    pts = np.asarray(points, dtype=float)
    if d == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != d:
        raise ValidationError(f"points have {pts.shape[-1]} components, basis is {d}-d")

    pad = max(n, 1)
    padded = np.pad(arr, pad, mode=_PAD_MODE[extension])
    gathers = []
    weights = []
    for ax in range(d):
        u = pts[:, ax] / basis.step[ax]
        lo, hi = first[ax], first[ax] + arr.shape[ax] - 1
        if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
            bad = u[(u < lo - 1e-12) | (u > hi + 1e-12)][0]
            raise OutOfDomainError(
                f"axis {ax}: grid coordinate {bad} outside node span [{lo}, {hi}]"
            )
        k0, w = _tap_matrix(n, u - first[ax])
        gathers.append(k0 + pad)
        weights.append(w)

    taps = np.arange(n + 1)
    if d == 1:
        win = padded[gathers[0][:, None] + taps[None, :]]
        out = np.einsum("pi,pi->p", win, weights[0])
    elif d == 2:
        ix = gathers[0][:, None, None] + taps[None, :, None]
        iy = gathers[1][:, None, None] + taps[None, None, :]
        win = padded[ix, iy]
        out = np.einsum("pij,pi,pj->p", win, weights[0], weights[1])
    else:
        ix = gathers[0][:, None, None, None] + taps[None, :, None, None]
        iy = gathers[1][:, None, None, None] + taps[None, None, :, None]
        iz = gathers[2][:, None, None, None] + taps[None, None, None, :]
        win = padded[ix, iy, iz]
        out = np.einsum("pijk,pi,pj,pk->p", win, weights[0], weights[1], weights[2])
    return out


def sample_at_nodes(coeffs, degree, extension="mirror"):
    """Evaluate the expansion at every grid node (separable b^n correlation)."""
    arr = np.asarray(coeffs, dtype=float)
    if degree <= 1:
        return arr.copy()
    b = sampled_bspline(degree)
    m = len(b) // 2
    out = arr
    for axis in range(arr.ndim):
        padded = np.pad(out, [(m, m) if ax == axis else (0, 0) for ax in range(arr.ndim)],
                        mode=_PAD_MODE[extension])
        acc = np.zeros_like(arr, dtype=float)
        for j, w in enumerate(b):
            sl = [slice(None)] * arr.ndim
            sl[axis] = slice(j, j + arr.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out
