"""Error norms and convergence-order studies.

The L2 and H1 norms integrate per grid cell with Gauss rules sufficient for
the squared-spline integrand (half-cell subdivision covers the even-degree
knots); references are analytic callables or finer-grid spline fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline import eval_bspline, eval_bspline_derivative
from .domain import BoxDomain, Grid, MaskDomain, basis_extension
from .errors import SmoothnessError, ValidationError
from .kernels import gauss_rule
from .problem import Neumann, ProblemSpec, Robin, solve_problem
from .solver import SolveConfig


@dataclass
class SplineField:
    """A spline expansion on the extended grid of a problem solution."""

    coeffs: np.ndarray
    grid: Grid
    degree: int

    def __post_init__(self):
        ext = basis_extension(self.degree)
        want = tuple(n + 2 * ext for n in self.grid.extents)
        if self.coeffs.shape != want:
            raise ValidationError(
                f"coefficient extents {self.coeffs.shape} != extended grid {want}"
            )

    def _tap(self, points, deriv_axis=None):
        d = self.grid.dim
        ext = basis_extension(self.degree)
        n = self.degree
        pts = np.asarray(points, dtype=float)
        if d == 1 and pts.ndim == 1:
            pts = pts[:, None]
        taps = np.arange(n + 1)
        gathers, weights = [], []
        for ax in range(d):
            u = (pts[:, ax] - self.grid.origin[ax]) / self.grid.step[ax]
            k0 = np.floor(u - (n - 1) / 2.0).astype(int)
            ks = k0[:, None] + taps[None, :]
            if deriv_axis == ax:
                w = eval_bspline_derivative(n, u[:, None] - ks, 1) / self.grid.step[ax]
            else:
                w = eval_bspline(n, u[:, None] - ks)
            gathers.append(np.clip(ks + ext, 0, self.coeffs.shape[ax] - 1))
            weights.append(w)
        if d == 1:
            win = self.coeffs[gathers[0]]
            return np.einsum("pi,pi->p", win, weights[0])
        if d == 2:
            win = self.coeffs[gathers[0][:, :, None], gathers[1][:, None, :]]
            return np.einsum("pij,pi,pj->p", win, weights[0], weights[1])
        win = self.coeffs[
            gathers[0][:, :, None, None],
            gathers[1][:, None, :, None],
            gathers[2][:, None, None, :],
        ]
        return np.einsum("pijk,pi,pj,pk->p", win, weights[0], weights[1], weights[2])

    def value(self, points):
        return self._tap(points)

    def gradient(self, points, axis):
        if self.degree < 1:
            raise SmoothnessError("degree-0 field has no gradient")
        return self._tap(points, deriv_axis=axis)


@dataclass
class ErrorReport:
    l2_error: float
    h1_error: float
    step: float
    degree: int
    dof: int


@dataclass
class ConvergenceStudy:
    reports: dict  # degree -> [ErrorReport] over levels
    l2_orders: dict  # degree -> fitted slope
    h1_orders: dict

    def csv(self):
        lines = ["degree,h,dof,l2_error,h1_error"]
        for n, reps in sorted(self.reports.items()):
            for r in reps:
                lines.append(f"{n},{r.step:.10g},{r.dof},{r.l2_error:.10e},{r.h1_error:.10e}")
        lines.append("# fitted orders")
        lines.append("degree,l2_order,h1_order")
        for n in sorted(self.reports):
            lines.append(f"{n},{self.l2_orders[n]:.4f},{self.h1_orders[n]:.4f}")
        return "\n".join(lines) + "\n"


def _cell_quadrature(grid: Grid, qcount, domain=None):
    """Tensor half-cell Gauss points/weights over every occupied cell.

    Points are physical coordinates; on mask domains the weights of
    unoccupied cells are zeroed.
    """
    rule = gauss_rule(qcount)
    half = np.concatenate([0.5 * rule.nodes, 0.5 + 0.5 * rule.nodes])
    hw = np.concatenate([0.5 * rule.weights, 0.5 * rule.weights])
    axes_pts, axes_wts, axes_cells = [], [], []
    for ax in range(grid.dim):
        cells = np.arange(grid.extents[ax] - 1)
        x = (cells[:, None] + half[None, :]).ravel() * grid.step[ax] + grid.origin[ax]
        w = np.tile(hw * grid.step[ax], len(cells))
        axes_pts.append(x)
        axes_wts.append(w)
        axes_cells.append(np.repeat(cells, len(half)))
    mesh = np.meshgrid(*axes_pts, indexing="ij")
    pts = np.column_stack([mm.ravel() for mm in mesh])
    wts = axes_wts[0]
    for ax in range(1, grid.dim):
        wts = np.multiply.outer(wts, axes_wts[ax])
    wts = wts.ravel()
    if isinstance(domain, MaskDomain):
        cell_mesh = np.meshgrid(*axes_cells, indexing="ij")
        occ = domain.occupancy()[tuple(cm.ravel() for cm in cell_mesh)]
        wts = wts * occ
    return pts, wts


def _resolve_reference(reference, pts, what="value", axis=None):
    if reference is None:
        return 0.0
    if isinstance(reference, SplineField):
        return reference.value(pts) if what == "value" else reference.gradient(pts, axis)
    if what == "value":
        return np.asarray(reference(pts), dtype=float)
    raise ValidationError("analytic references need an explicit gradient callable")


def l2_norm(fld: SplineField, reference=None, domain=None, qcount=None):
    """L2 norm of ``field - reference`` over the domain (exact for splines)."""
    q = qcount or fld.degree + 1
    pts, wts = _cell_quadrature(fld.grid, q, domain)
    diff = fld.value(pts) - _resolve_reference(reference, pts)
    return float(np.sqrt(np.sum(wts * diff * diff)))


def h1_norm(fld: SplineField, reference=None, reference_grad=None, domain=None,
            qcount=None):
    """H1 (energy) norm of the error: L2 part plus all gradient components."""
    if fld.degree < 1:
        raise SmoothnessError("H1 norm needs basis degree >= 1")
    q = qcount or fld.degree + 1
    pts, wts = _cell_quadrature(fld.grid, q, domain)
    diff = fld.value(pts) - _resolve_reference(reference, pts)
    total = np.sum(wts * diff * diff)
    for ax in range(fld.grid.dim):
        g = fld.gradient(pts, ax)
        if reference_grad is not None:
            g = g - np.asarray(reference_grad(pts, ax), dtype=float)
        elif isinstance(reference, SplineField):
            g = g - reference.gradient(pts, ax)
        total += np.sum(wts * g * g)
    return float(np.sqrt(total))


def fit_order(steps, errors):
    """Least-squares slope of log(error) against log(h)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.maximum(np.asarray(errors, dtype=float), 1e-300)
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def run_convergence(family, degrees, levels, solve_config=None,
                    strategy="sparse", workers=1) -> ConvergenceStudy:
    """Solve ``family`` over refinement levels and fit convergence orders.

    ``family`` provides ``problem(level, degree) -> ProblemSpec``,
    ``reference(degree)`` -> (value callable, gradient callable) and
    ``step(level)``.  Non-monotone error decay is flagged to stdout, not
    fatal (pre-asymptotic wobble happens).
    """
    if len(levels) < 3:
        raise ValidationError("convergence studies need at least 3 levels")
    cfg = solve_config or SolveConfig(tol=1e-11, max_iter=20000)
    reports = {}
    l2o, h1o = {}, {}
    for n in degrees:
        ref_val, ref_grad = family.reference(n)
        reps = []
        for lv in levels:
            spec = family.problem(lv, n)
            sol = solve_problem(spec, cfg, strategy=strategy, workers=workers)
            fld = SplineField(sol.coeffs, spec.grid, n)
            e2 = l2_norm(fld, ref_val, domain=spec.domain)
            e1 = h1_norm(fld, ref_val, ref_grad, domain=spec.domain)
            reps.append(ErrorReport(e2, e1, family.step(lv), n, sol.coeffs.size))
        errs = [r.l2_error for r in reps]
        if any(errs[i + 1] > errs[i] for i in range(len(errs) - 1)):
            print(f"warning: non-monotone L2 errors for degree {n}: {errs}")
        reports[n] = reps
        l2o[n] = fit_order([r.step for r in reps], errs)
        h1o[n] = fit_order([r.step for r in reps], [r.h1_error for r in reps])
    return ConvergenceStudy(reports, l2o, h1o)


# ---------------------------------------------------------------------------
# the two study families used by the acceptance suite and the CLI


class Diffusion1DFamily:
    """1-D diffusion with Robin BC on [-25, 25], Gaussian source.

    ``-(D phi')' + mu_a phi = exp(-(x/2)^2)`` with ``2 D phi' . n + phi = 0``;
    D = 1, mu_a = 0.1 (the didactic example's unstated constants).  The
    reference is a 16x-finer degree-5 solve, shared across degrees.
    """

    lo, hi = -25.0, 25.0
    diffusion = 1.0
    absorption = 0.1

    def __init__(self, reference_refine=16, solve_config=None):
        self._ref = None
        self.reference_refine = reference_refine
        self.cfg = solve_config or SolveConfig(tol=1e-12, max_iter=40000)

    @staticmethod
    def source(x):
        return np.exp(-((x / 2.0) ** 2))

    def step(self, level):
        return 2.0 ** (-level)

    def problem(self, level, degree):
        h = self.step(level)
        n = int(round((self.hi - self.lo) / h)) + 1
        return ProblemSpec(
            domain=BoxDomain(Grid((n,), (h,), (self.lo,))),
            basis_degree=degree,
            diffusion=self.diffusion,
            absorption=self.absorption,
            source=lambda x: self.source(x),
            bc=Robin(gamma=1.0),
        )

    def reference(self, degree):
        if self._ref is None:
            h = self.step(3) / self.reference_refine
            n = int(round((self.hi - self.lo) / h)) + 1
            spec = ProblemSpec(
                domain=BoxDomain(Grid((n,), (h,), (self.lo,))),
                basis_degree=5,
                diffusion=self.diffusion,
                absorption=self.absorption,
                source=lambda x: self.source(x),
                bc=Robin(gamma=1.0),
            )
            sol = solve_problem(spec, self.cfg, strategy="sparse")
            self._ref = SplineField(sol.coeffs, spec.grid, 5)
        ref = self._ref
        return ref.value, (lambda pts, ax: ref.gradient(pts, ax))


class Cosine2DFamily:
    """Manufactured 2-D problem: ``phi = cos(pi x) cos(pi y)`` on the unit box.

    With D = 1, mu_a = 1 the matching source is ``(2 pi^2 + 1) phi``; the
    cosine is Neumann-compatible so no surface term enters.
    """

    def __init__(self, base_cells=8):
        self.base_cells = base_cells

    def step(self, level):
        return 1.0 / (self.base_cells * 2 ** level)

    @staticmethod
    def solution(pts):
        return np.cos(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1])

    @staticmethod
    def solution_grad(pts, axis):
        x, y = pts[:, 0], pts[:, 1]
        if axis == 0:
            return -np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
        return -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)

    def problem(self, level, degree):
        cells = self.base_cells * 2 ** level
        n = cells + 1
        h = 1.0 / cells
        amp = 2 * np.pi ** 2 + 1.0
        return ProblemSpec(
            domain=BoxDomain(Grid((n, n), (h, h))),
            basis_degree=degree,
            diffusion=1.0,
            absorption=1.0,
            source=lambda x, y: amp * np.cos(np.pi * x) * np.cos(np.pi * y),
            bc=Neumann(),
        )

    def reference(self, degree):
        return self.solution, self.solution_grad
