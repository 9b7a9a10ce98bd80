"""Jacobi-preconditioned conjugate gradient over any operator strategy.

The convergence criterion is the relative Euclidean residual of the
unpreconditioned system; dot products run in a fixed order so results are
deterministic and independent of the operator's worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, IndefiniteOperatorError, ValidationError

_DIVERGENCE_FACTOR = 1e3


@dataclass
class SolveConfig:
    tol: float = 1e-8
    max_iter: int = 1000
    precond: str = "jacobi"  # "none" or "jacobi"
    coarse_init_factor: int = 0  # 0 disables coarse-grid initialization
    record_history: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.precond not in ("none", "jacobi"):
            raise ValidationError(f"unknown preconditioner {self.precond!r}")


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    wall_time: float
    history: list = field(default_factory=list)

    def history_csv(self):
        lines = ["iteration,residual"]
        lines += [f"{i},{r:.16e}" for i, r in enumerate(self.history)]
        return "\n".join(lines) + "\n"


def pcg(operator, rhs, config: SolveConfig = None, x0=None):
    """Solve ``operator.apply(c) = rhs``; returns ``(c, SolveReport)``.

    Raises :class:`IndefiniteOperatorError` on non-positive curvature and
    :class:`DivergenceError` when the residual grows a thousandfold.
    """
    config = config or SolveConfig()
    rhs = np.asarray(rhs, dtype=np.float64)
    if not np.all(np.isfinite(rhs)):
        raise ValidationError("right-hand side contains non-finite values")
    t_start = time.perf_counter()

    rhs_norm = float(np.linalg.norm(rhs.ravel()))
    if rhs_norm == 0.0 and x0 is None:
        report = SolveReport(0, 0.0, True, time.perf_counter() - t_start,
                             history=[0.0] if config.record_history else [])
        return np.zeros_like(rhs), report

    if config.precond == "jacobi":
        diag = np.asarray(operator.jacobi_diagonal(), dtype=np.float64)
        inv_diag = np.where(diag != 0.0, 1.0 / diag, 1.0)
    else:
        inv_diag = None

    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - np.asarray(operator.apply(x), dtype=np.float64) if x0 is not None else rhs.copy()
    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = float(np.vdot(r.ravel(), z.ravel()))
    res = float(np.linalg.norm(r.ravel()))
    scale = rhs_norm if rhs_norm > 0 else 1.0
    history = [np.sqrt(max(rz, 0.0))] if config.record_history else []
    res0 = res

    it = 0
    while res / scale > config.tol and it < config.max_iter:
        Ap = np.asarray(operator.apply(p), dtype=np.float64)
        pAp = float(np.vdot(p.ravel(), Ap.ravel()))
        if pAp <= 0.0:
            raise IndefiniteOperatorError(
                f"non-positive curvature p.Ap = {pAp:.3e} at iteration {it}"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r * inv_diag if inv_diag is not None else r
        rz_new = float(np.vdot(r.ravel(), z.ravel()))
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
        res = float(np.linalg.norm(r.ravel()))
        it += 1
        if config.record_history:
            history.append(np.sqrt(max(rz, 0.0)))
        if res > _DIVERGENCE_FACTOR * res0:
            raise DivergenceError(
                f"residual grew to {res:.3e} from {res0:.3e} at iteration {it}"
            )

    report = SolveReport(
        iterations=it,
        relative_residual=res / scale,
        converged=res / scale <= config.tol,
        wall_time=time.perf_counter() - t_start,
        history=history,
    )
    return x, report


def coarse_initialize(spec, factor, config=None, strategy="sparse", workers=1):
    """Coarse-grid initial guess for a problem; see bspde.problem for details."""
    from .problem import coarse_initialize as _impl

    return _impl(spec, factor, config=config, strategy=strategy, workers=workers)
