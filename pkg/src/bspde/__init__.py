"""Tensor B-spline numerical solver for second-order elliptic PDEs.

A mesh-free Ritz-Galerkin discretization on uniform grids with exact kernel
integration, three interchangeable system-operator strategies (sparse
baseline, precomputed block tensor, matrix-free on-the-fly), and a
Jacobi-preconditioned conjugate-gradient solver.
"""

from .bspline import (
    BSplineBasis,
    FilterPoles,
    compute_poles,
    direct_transform,
    eval_bspline,
    eval_bspline_derivative,
    indirect_transform,
    sampled_bspline,
)
from .domain import BoxDomain, CellClass, Grid, MaskDomain, classify_cells
from .kernels import (
    SeparableKernelSet,
    UnivariateBilinearKernel,
    UnivariateTrilinearKernel,
    bilinear_kernel,
    boundary_face_kernel,
    compose_separable,
    gauss_rule,
    trilinear_kernel,
)
from .operator import (
    BlockTensorOperator,
    OnTheFlyOperator,
    OpStats,
    SparseMatrixOperator,
    assemble_block_tensor,
    assemble_sparse,
    make_operator,
)
from .problem import (
    Cauchy,
    Dirichlet,
    DirichletPenalty,
    Neumann,
    ProblemSpec,
    Robin,
    assemble_rhs,
    assemble_system,
    coarse_initialize,
    realize_bc,
    solve_problem,
    transform_inputs,
)
from .solver import SolveConfig, SolveReport, pcg
from .verify import (
    ConvergenceStudy,
    Cosine2DFamily,
    Diffusion1DFamily,
    ErrorReport,
    SplineField,
    h1_norm,
    l2_norm,
    run_convergence,
)

__all__ = [
    "BSplineBasis", "FilterPoles", "compute_poles", "direct_transform",
    "eval_bspline", "eval_bspline_derivative", "indirect_transform",
    "sampled_bspline",
    "BoxDomain", "CellClass", "Grid", "MaskDomain", "classify_cells",
    "SeparableKernelSet", "UnivariateBilinearKernel", "UnivariateTrilinearKernel",
    "bilinear_kernel", "boundary_face_kernel", "compose_separable", "gauss_rule",
    "trilinear_kernel",
    "BlockTensorOperator", "OnTheFlyOperator", "OpStats", "SparseMatrixOperator",
    "assemble_block_tensor", "assemble_sparse", "make_operator",
    "Cauchy", "Dirichlet", "DirichletPenalty", "Neumann", "ProblemSpec", "Robin",
    "assemble_rhs", "assemble_system", "coarse_initialize", "realize_bc",
    "solve_problem", "transform_inputs",
    "SolveConfig", "SolveReport", "pcg",
    "ConvergenceStudy", "Cosine2DFamily", "Diffusion1DFamily", "ErrorReport",
    "SplineField", "h1_norm", "l2_norm", "run_convergence",
]

__version__ = "0.1.0"
