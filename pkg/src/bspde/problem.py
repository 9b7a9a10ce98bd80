"""Problem assembly: from continuous-domain inputs to the tensor system.

Stages: transform the coefficient/source fields into spline space, realize
the boundary conditions as surface kernels, assemble the operator and the
right-hand side, solve, and transform the solution back to node samples.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import build_system, min_axis_length
from .bspline import BSplineBasis, direct_transform, indirect_transform, sampled_bspline
from .domain import BoxDomain, Grid, MaskDomain, basis_extension, classification_report, classify_cells
from .errors import ConfigurationError, ValidationError
from .operator import assembled_rhs, make_operator
from .solver import SolveConfig, SolveReport, pcg

FACE_NAMES = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class Robin:
    """``2 gamma D (grad phi . n) + phi = 0``: surface weight 1/(2 gamma)."""

    gamma: float = 1.0


@dataclass(frozen=True)
class Neumann:
    """Homogeneous natural condition: no surface term."""


@dataclass(frozen=True)
class DirichletPenalty:
    """Dirichlet value ``g`` enforced by a strongly weighted Robin term.

    Surface weight ``1/epsilon``; ``epsilon=None`` defaults to
    ``1e-4 * min(h)`` at assembly time.
    """

    value: float
    epsilon: float = None


@dataclass(frozen=True)
class Dirichlet:
    """Exact Dirichlet trace; representable but not realized (use the penalty)."""

    value: float


@dataclass(frozen=True)
class Cauchy:
    """Value+flux condition; representable but not realized by this solver."""

    value: float
    flux: float


@dataclass
class ProblemSpec:
    """Full input of the pipeline: domain, fields, degrees, BCs, precision.

    ``diffusion``/``absorption``/``source`` each accept a scalar, an array of
    node samples, or a callable of physical coordinates.
    """

    domain: object
    basis_degree: int
    diffusion: object = 1.0
    absorption: object = 0.0
    source: object = 0.0
    bc: object = None  # single BC or {face name: BC}
    param_degree: int = None
    source_degree: int = None
    precision: str = "f64"
    prefilter: str = "interpolation"  # or "l2"

    def __post_init__(self):
        if self.param_degree is None:
            self.param_degree = self.basis_degree
        if self.source_degree is None:
            self.source_degree = self.basis_degree
        if self.bc is None:
            self.bc = Neumann()
        if self.precision not in ("f64", "f32"):
            raise ValidationError(f"precision must be f64/f32, got {self.precision!r}")
        if self.prefilter not in ("interpolation", "l2"):
            raise ValidationError(f"prefilter must be interpolation/l2, got {self.prefilter!r}")
        for name, n in (("basis", self.basis_degree), ("param", self.param_degree),
                        ("source", self.source_degree)):
            if not 0 <= n <= 5:
                raise ValidationError(f"{name} degree {n} not in 0..5")
        g = self.domain.grid
        need = min_axis_length(self.basis_degree) + 1
        if any(n < need for n in g.extents):
            raise ValidationError(
                f"extents {g.extents} too small for degree {self.basis_degree} (need >= {need})"
            )

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    @property
    def grid(self) -> Grid:
        return self.domain.grid

    def default_epsilon(self):
        return 1e-4 * min(self.grid.step)


@dataclass
class FieldSet:
    """Spline-space coefficient tensors on their extended grids."""

    d_coeffs: np.ndarray
    m_coeffs: np.ndarray
    q_coeffs: np.ndarray
    clamped_d: int = 0
    clamped_m: int = 0


def _sample_field(value, grid: Grid):
    if callable(value):
        axes = [grid.node_coordinates(ax) for ax in range(grid.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.asarray(value(*mesh), dtype=float)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return None  # constant: handled exactly without a transform
    if arr.shape != grid.extents:
        raise ValidationError(f"field samples {arr.shape} != grid extents {grid.extents}")
    return arr


def _l2_project_axis(samples, degree):
    """Gram-filtered projection along the last axis (the 'l2' prefilter mode).

    Projects the piecewise-linear interpolant of the samples onto the
    degree-``degree`` spline space: rhs through the (1, degree) cross table,
    Gram system from the sampled ``beta^(2 degree + 1)`` with mirror folding.
    """
    from .bspline import eval_bspline
    from .kernels import bilinear_kernel

    n = samples.shape[-1]
    cross = bilinear_kernel(1, degree, False, False).table  # vs linear interpolant
    rw = (len(cross) - 1) // 2
    rhs = np.zeros_like(samples)
    for t, w in enumerate(cross):
        off = t - rw
        lo, hi = max(0, -off), min(n, n - off)
        src = np.clip(np.arange(lo, hi) + off, 0, n - 1)
        rhs[..., lo:hi] += w * samples[..., src]
    gram_deg = 2 * degree + 1
    m = gram_deg // 2
    gram = eval_bspline(gram_deg, np.arange(-m, m + 1).astype(float))
    A = np.zeros((n, n))
    for i in range(n):
        for t in range(-m, m + 1):
            j = i + t
            if j < 0:
                j = -j
            elif j >= n:
                j = 2 * n - 2 - j
            A[i, j] += gram[t + m]
    flat = rhs.reshape(-1, n)
    out = np.linalg.solve(A, flat.T).T
    return out.reshape(samples.shape)


def transform_field(value, grid: Grid, degree, ext, prefilter="interpolation"):
    """Field -> extended-grid spline coefficients (constants stay exact)."""
    samples = _sample_field(value, grid)
    if samples is None:
        return np.full(tuple(n + 2 * ext for n in grid.extents), float(value))
    basis = BSplineBasis(degree, grid.step)
    if prefilter == "l2" and degree >= 2:
        coeffs = samples
        for ax in range(grid.dim):
            coeffs = np.moveaxis(
                _l2_project_axis(np.moveaxis(coeffs, ax, -1), degree), -1, ax
            )
    else:
        coeffs = direct_transform(samples, basis)
    if ext > 0:
        coeffs = np.pad(coeffs, ext, mode="reflect")
    return coeffs


def transform_inputs(spec: ProblemSpec) -> FieldSet:
    """Prefilter D, mu_a (degree n_p) and q (degree n_s); clamp overshoots."""
    grid = spec.grid
    ext_p = basis_extension(spec.param_degree)
    ext_s = basis_extension(spec.source_degree)
    d = transform_field(spec.diffusion, grid, spec.param_degree, ext_p, spec.prefilter)
    m = transform_field(spec.absorption, grid, spec.param_degree, ext_p, spec.prefilter)
    q = transform_field(spec.source, grid, spec.source_degree, ext_s, spec.prefilter)
    clamped_d = int(np.sum(d < 0))
    clamped_m = int(np.sum(m < 0))
    if clamped_d:
        warnings.warn(
            f"clamped {clamped_d} negative diffusion coefficients after prefiltering"
        )
        d = np.maximum(d, 0.0)
    if clamped_m:
        warnings.warn(
            f"clamped {clamped_m} negative absorption coefficients after prefiltering"
        )
        m = np.maximum(m, 0.0)
    return FieldSet(d, m, q, clamped_d, clamped_m)


def assemble_rhs(spec: ProblemSpec, fields: FieldSet = None):
    """Right-hand side tensor ``t_l = q_j r^jl`` plus penalty surface terms."""
    from .operator import assembled_rhs

    fields = fields or transform_inputs(spec)
    face_specs = realize_bc(spec)
    data = build_system(
        spec.domain, spec.basis_degree, spec.param_degree,
        fields.d_coeffs, fields.m_coeffs, face_specs, dtype=spec.dtype,
    )
    return assembled_rhs(data, spec.source_degree, fields.q_coeffs)


def _face_key(axis, side):
    return FACE_NAMES[2 * axis + side]


def realize_bc(spec: ProblemSpec):
    """BC list -> surface kernel specs ``(axis, side, weight, rhs_value)``.

    Box domains take per-face conditions; mask domains accept one global
    condition of kind Neumann or DirichletPenalty (exposed faces are jagged,
    so per-face assignment is meaningless there).
    """
    d = spec.grid.dim
    is_mask = isinstance(spec.domain, MaskDomain)
    bc = spec.bc
    if isinstance(bc, dict):
        if is_mask:
            raise ConfigurationError("mask domains take a single global BC")
        per_face = {}
        for key, val in bc.items():
            if key == "all":
                for ax in range(d):
                    for s in (0, 1):
                        per_face.setdefault(_face_key(ax, s), val)
            elif key in FACE_NAMES[: 2 * d]:
                per_face[key] = val
            else:
                raise ConfigurationError(f"unknown face {key!r} for a {d}-d box")
        missing = [f for f in FACE_NAMES[: 2 * d] if f not in per_face]
        if missing:
            raise ConfigurationError(f"boundary conditions missing on faces {missing}")
    else:
        per_face = {f: bc for f in FACE_NAMES[: 2 * d]}

    def weight_of(cond):
        if isinstance(cond, Neumann):
            return None
        if isinstance(cond, Robin):
            if cond.gamma <= 0:
                raise ConfigurationError(f"Robin gamma must be positive, got {cond.gamma}")
            return (1.0 / (2.0 * cond.gamma), None)
        if isinstance(cond, DirichletPenalty):
            eps = cond.epsilon if cond.epsilon is not None else spec.default_epsilon()
            if eps <= 0:
                raise ConfigurationError(f"penalty epsilon must be positive, got {eps}")
            return (1.0 / eps, cond.value)
        raise ConfigurationError(
            f"{type(cond).__name__} boundary conditions are not realized by this solver"
        )

    if is_mask:
        kinds = {type(c) for c in per_face.values()}
        if len(kinds) != 1:
            raise ConfigurationError("mask domains take a single global BC")
        cond = next(iter(per_face.values()))
        if isinstance(cond, Robin):
            raise ConfigurationError(
                "mask domains support Neumann or DirichletPenalty conditions only"
            )
        w = weight_of(cond)
        return [] if w is None else [(0, 0, w[0], w[1])]

    specs = []
    for ax in range(d):
        for s in (0, 1):
            w = weight_of(per_face[_face_key(ax, s)])
            if w is not None:
                specs.append((ax, s, w[0], w[1]))
    return specs


@dataclass
class AssembledSystem:
    data: object
    operator: object
    rhs: np.ndarray
    fields: FieldSet
    face_specs: list

    @property
    def active_mask(self):
        return self.data.active


def assemble_system(spec: ProblemSpec, strategy="onthefly", workers=1,
                    block_bytes=4 << 20, memory_budget=None) -> AssembledSystem:
    fields = transform_inputs(spec)
    face_specs = realize_bc(spec)
    data = build_system(
        spec.domain, spec.basis_degree, spec.param_degree,
        fields.d_coeffs, fields.m_coeffs, face_specs,
        dtype=spec.dtype, block_bytes=block_bytes,
    )
    op = make_operator(data, strategy, workers, memory_budget)
    rhs = assembled_rhs(data, spec.source_degree, fields.q_coeffs, workers)
    return AssembledSystem(data, op, rhs, fields, face_specs)


def sample_solution(coeffs_ext, grid: Grid, degree):
    """Evaluate the solution expansion at every grid node (stage 4).

    Node ``k`` needs coefficients ``k - m .. k + m`` with ``m = degree // 2``,
    all of which exist on the extended grid, so no extension policy enters.
    """
    b = sampled_bspline(degree)
    m = len(b) // 2
    ext = basis_extension(degree)
    out = np.asarray(coeffs_ext, dtype=float)
    for ax in range(grid.dim):
        acc = None
        for t, w in enumerate(b):
            sl = [slice(None)] * grid.dim
            sl[ax] = slice(ext - m + t, ext - m + t + grid.extents[ax])
            term = w * out[tuple(sl)]
            acc = term if acc is None else acc + term
        out = acc
    return out


@dataclass
class Solution:
    samples: np.ndarray
    coeffs: np.ndarray
    report: SolveReport
    spec: ProblemSpec
    system: AssembledSystem
    coarse_info: dict = None

    def spline(self):
        from .verify import SplineField

        return SplineField(self.coeffs, self.spec.grid, self.spec.basis_degree)

    def kernel_split(self):
        classes = classify_cells(
            self.spec.domain,
            BSplineBasis(self.spec.basis_degree, self.spec.grid.step),
            n_p=self.spec.param_degree,
        )
        return classification_report(classes)


def coarse_initialize(spec: ProblemSpec, factor, config: SolveConfig = None,
                      strategy="sparse", workers=1):
    """Initial fine-grid coefficients from a factor-reduced solve.

    The coarse grid spans the same domain with ``ceil(N/factor)`` nodes per
    axis (rescaled step; non-divisible extents are reported, not padded);
    fields are restricted by spline resampling and the coarse solution is
    prolongated by spline evaluation at the fine nodes followed by the
    direct transform.
    """
    if factor < 2:
        raise ValidationError(f"coarse factor must be >= 2, got {factor}")
    grid = spec.grid
    n_b = spec.basis_degree
    min_nodes = min_axis_length(n_b) + 1
    cN = tuple(max(int(math.ceil(n / factor)), min_nodes) for n in grid.extents)
    ch = tuple((n - 1) * h / (cn - 1) for n, h, cn in zip(grid.extents, grid.step, cN))
    cgrid = Grid(cN, ch, grid.origin)
    info = {
        "coarse_extents": cN,
        "coarse_step": ch,
        "divisible": all(n % factor == 0 for n in grid.extents),
    }

    def restrict(value, degree):
        samples = _sample_field(value, grid)
        if samples is None:
            return float(value)
        if callable(value):
            return _sample_field(value, cgrid)
        basis = BSplineBasis(degree, grid.step)
        coeffs = direct_transform(samples, basis)
        axes = [cgrid.node_coordinates(ax) - grid.origin[ax] for ax in range(grid.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([mm.ravel() for mm in mesh])
        vals = indirect_transform(coeffs, basis, pts)
        return vals.reshape(cN)

    if isinstance(spec.domain, MaskDomain):
        cdom = MaskDomain(cgrid, _coarsen_mask(spec.domain.mask, cgrid))
    else:
        cdom = BoxDomain(cgrid)
    cspec = ProblemSpec(
        domain=cdom,
        basis_degree=n_b,
        diffusion=restrict(spec.diffusion, spec.param_degree),
        absorption=restrict(spec.absorption, spec.param_degree),
        source=restrict(spec.source, spec.source_degree),
        bc=spec.bc,
        param_degree=spec.param_degree,
        source_degree=spec.source_degree,
        precision=spec.precision,
    )
    cfg = config or SolveConfig(tol=1e-8, max_iter=2000)
    csol = solve_problem(cspec, cfg, strategy=strategy, workers=workers)
    info["coarse_iterations"] = csol.report.iterations

    cbasis = BSplineBasis(n_b, ch)
    ext = basis_extension(n_b)
    axes = [grid.node_coordinates(ax) - grid.origin[ax] for ax in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([mm.ravel() for mm in mesh])
    fine_samples = indirect_transform(
        csol.coeffs, cbasis, pts, first_index=(-ext,) * grid.dim
    ).reshape(grid.extents)
    fbasis = BSplineBasis(n_b, grid.step)
    x0 = direct_transform(fine_samples, fbasis)
    if ext > 0:
        x0 = np.pad(x0, ext, mode="reflect")
    return x0, info


def _coarsen_mask(mask, cgrid: Grid):
    """Majority-vote mask coarsening onto the coarse cell grid."""
    fine_cells = mask.shape
    coarse_cells = cgrid.cell_extents
    out = np.zeros(coarse_cells, dtype=bool)
    for idx in np.ndindex(*coarse_cells):
        sl = tuple(
            slice(
                int(math.floor(idx[ax] * fine_cells[ax] / coarse_cells[ax])),
                max(int(math.ceil((idx[ax] + 1) * fine_cells[ax] / coarse_cells[ax])), 1),
            )
            for ax in range(len(coarse_cells))
        )
        out[idx] = mask[sl].mean() >= 0.5
    if not out.any():
        out.flat[np.argmax(mask.mean())] = True
    return out


def solve_problem(spec: ProblemSpec, config: SolveConfig = None, strategy="onthefly",
                  workers=1, block_bytes=4 << 20, memory_budget=None) -> Solution:
    """End to end: transform -> assemble -> pcg -> node samples."""
    config = config or SolveConfig()
    system = assemble_system(spec, strategy, workers, block_bytes, memory_budget)
    x0 = None
    coarse_info = None
    if config.coarse_init_factor and config.coarse_init_factor >= 2:
        x0, coarse_info = coarse_initialize(spec, config.coarse_init_factor,
                                            workers=workers)
        if system.data.active is not None:
            x0[~system.data.active] = 0.0
    coeffs, report = pcg(system.operator, system.rhs, config, x0=x0)
    if system.data.active is not None:
        coeffs[~system.data.active] = 0.0
    samples = sample_solution(coeffs, spec.grid, spec.basis_degree)
    return Solution(samples=samples, coeffs=coeffs, report=report, spec=spec,
                    system=system, coarse_info=coarse_info)
