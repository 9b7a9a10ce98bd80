"""Conjugate gradient against dense direct solves, and coarse initialization."""

import numpy as np
import pytest

from bspde.domain import BoxDomain, Grid
from bspde.errors import DivergenceError, IndefiniteOperatorError, ValidationError
from bspde.problem import (
    DirichletPenalty,
    Neumann,
    ProblemSpec,
    Robin,
    assemble_system,
    coarse_initialize,
    solve_problem,
)
from bspde.solver import SolveConfig, pcg


class _DenseOp:
    """Minimal operator wrapper around an explicit SPD matrix."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)

    def apply(self, c):
        return self.A @ np.asarray(c, dtype=float).ravel()

    def jacobi_diagonal(self):
        return np.diag(self.A).copy()


def random_spd(n, rng, cond=50.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    vals = np.geomspace(1.0, cond, n)
    return Q @ np.diag(vals) @ Q.T


class TestPcgBasics:
    def test_zero_rhs(self):
        rng = np.random.default_rng(0)
        A = random_spd(12, rng)
        x, rep = pcg(_DenseOp(A), np.zeros(12))
        assert rep.iterations == 0
        assert np.all(x == 0)

    @pytest.mark.parametrize("n", [4, 16, 33, 64])
    def test_matches_dense_solve(self, n):
        rng = np.random.default_rng(n)
        A = random_spd(n, rng)
        b = rng.normal(size=n)
        x, rep = pcg(_DenseOp(A), b, SolveConfig(tol=1e-12, max_iter=10 * n))
        want = np.linalg.solve(A, b)
        assert np.abs(x - want).max() < 1e-8
        assert rep.converged

    def test_cg_exactness_bound(self):
        # exact arithmetic terminates in N steps; rounding spreads that to a
        # residual of ~1e-8 relative within N iterations, matching the
        # dense-oracle agreement bar
        rng = np.random.default_rng(3)
        for n in (8, 32, 64):
            A = random_spd(n, rng, cond=30.0)
            b = rng.normal(size=n)
            x, rep = pcg(_DenseOp(A), b, SolveConfig(tol=1e-12, max_iter=n))
            assert rep.relative_residual <= 1e-8, f"N={n}: {rep.relative_residual}"
            want = np.linalg.solve(A, b)
            assert np.abs(x - want).max() < 1e-8

    def test_indefinite_detected(self):
        A = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(IndefiniteOperatorError):
            pcg(_DenseOp(A), np.array([1.0, 1.0, 1.0]), SolveConfig(precond="none"))

    def test_nonfinite_rhs(self):
        A = np.eye(3)
        with pytest.raises(ValidationError):
            pcg(_DenseOp(A), np.array([1.0, np.nan, 0.0]))

    def test_history_monotone_well_conditioned(self):
        # the preconditioned residual norm of CG oscillates on badly
        # conditioned systems; the monotone-history contract is checked where
        # it genuinely holds (moderate condition number)
        rng = np.random.default_rng(5)
        A = random_spd(40, rng, cond=8.0)
        b = rng.normal(size=40)
        _, rep = pcg(_DenseOp(A), b, SolveConfig(tol=1e-12, max_iter=200,
                                                 record_history=True))
        h = np.array(rep.history)
        tol = 1e-8 * h[0]
        assert np.all(np.diff(h) <= tol)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SolveConfig(tol=0.0)
        with pytest.raises(ValidationError):
            SolveConfig(max_iter=0)
        with pytest.raises(ValidationError):
            SolveConfig(precond="ilu")


class TestPcgOnProblems:
    def test_1d_poisson_penalty_matches_dense(self):
        # 33 nodes, linear basis, Dirichlet penalty: dense-solve agreement
        spec = ProblemSpec(
            domain=BoxDomain(Grid((33,), (1.0 / 32.0,))),
            basis_degree=1,
            diffusion=1.0,
            source=lambda x: np.sin(2 * np.pi * x),
            bc=DirichletPenalty(0.0, 1e-4),
        )
        system = assemble_system(spec, strategy="sparse")
        x, rep = pcg(system.operator, system.rhs, SolveConfig(tol=1e-12, max_iter=33))
        want = np.linalg.solve(system.operator.matrix.toarray(), system.rhs.ravel())
        assert np.abs(x.ravel() - want).max() < 1e-8

    def test_strategy_independent_solution(self):
        rng = np.random.default_rng(11)
        spec = ProblemSpec(
            domain=BoxDomain(Grid((10, 10), (0.1, 0.1))),
            basis_degree=2,
            diffusion=lambda x, y: 1 + 0.5 * np.sin(3 * x) * np.cos(2 * y),
            absorption=0.5,
            source=lambda x, y: np.cos(x * y),
            bc=Robin(1.0),
        )
        tol = 1e-10
        sols = {}
        for strategy in ("onthefly", "blocktensor", "sparse"):
            sol = solve_problem(spec, SolveConfig(tol=tol, max_iter=2000), strategy)
            sols[strategy] = sol.coeffs
        ref = sols["sparse"]
        for s, c in sols.items():
            assert np.abs(c - ref).max() <= 10 * tol * np.abs(ref).max()

    def test_jacobi_beats_unpreconditioned(self):
        spec = ProblemSpec(
            domain=BoxDomain(Grid((17, 17), (1.0 / 16,) * 2)),
            basis_degree=1,
            diffusion=lambda x, y: 1 + 0.9 * np.sin(4 * x) * np.sin(3 * y),
            absorption=0.1,
            source=1.0,
            bc=DirichletPenalty(0.0, 1e-3),
        )
        system = assemble_system(spec, strategy="sparse")
        _, rep_j = pcg(system.operator, system.rhs,
                       SolveConfig(tol=1e-8, max_iter=20000, precond="jacobi"))
        _, rep_n = pcg(system.operator, system.rhs,
                       SolveConfig(tol=1e-8, max_iter=20000, precond="none"))
        assert rep_j.iterations < rep_n.iterations


class TestCoarseInit:
    def test_constant_problem_exact_init(self):
        spec = ProblemSpec(
            domain=BoxDomain(Grid((17, 17), (1.0 / 16,) * 2)),
            basis_degree=1,
            diffusion=1.0,
            source=0.0,
            bc=DirichletPenalty(20.0, 1e-4),
        )
        x0, info = coarse_initialize(spec, 4)
        system = assemble_system(spec, strategy="sparse")
        _, rep = pcg(system.operator, system.rhs,
                     SolveConfig(tol=1e-8, max_iter=100), x0=x0)
        assert rep.iterations <= 2

    def test_smooth_problem_reduces_iterations(self):
        # nonzero boundary data: the coarse solve captures the boundary
        # layer that zero initialization has to build up iteratively
        spec = ProblemSpec(
            domain=BoxDomain(Grid((33, 33), (1.0 / 32,) * 2)),
            basis_degree=1,
            diffusion=lambda x, y: 1 + 0.8 * np.sin(4 * x) * np.cos(3 * y),
            source=lambda x, y: 50 * np.sin(np.pi * x) * np.sin(np.pi * y),
            bc=DirichletPenalty(20.0, 1e-3),
        )
        system = assemble_system(spec, strategy="sparse")
        cfg = SolveConfig(tol=1e-8, max_iter=20000)
        _, rep_zero = pcg(system.operator, system.rhs, cfg)
        x0, _ = coarse_initialize(spec, 4)
        _, rep_init = pcg(system.operator, system.rhs, cfg, x0=x0)
        assert rep_init.iterations < rep_zero.iterations

    def test_nondivisible_extents_reported(self):
        spec = ProblemSpec(
            domain=BoxDomain(Grid((10,), (0.1,))),
            basis_degree=1,
            diffusion=1.0,
            source=1.0,
            bc=DirichletPenalty(0.0, 1e-3),
        )
        _, info = coarse_initialize(spec, 4)
        assert info["divisible"] is False
        assert info["coarse_extents"][0] == 3

    def test_factor_validation(self):
        spec = ProblemSpec(
            domain=BoxDomain(Grid((9,), (1.0,))),
            basis_degree=1, diffusion=1.0, source=1.0, bc=Neumann(),
        )
        with pytest.raises(ValidationError):
            coarse_initialize(spec, 1)


class TestGuards:
    def test_divergence_guard(self):
        class Doubler:
            # a broken "operator" whose action amplifies everything: the
            # residual blows up and the guard must fire
            def apply(self, c):
                return -np.asarray(c) * 1e4

            def jacobi_diagonal(self):
                return np.ones(8)

        with pytest.raises((DivergenceError, IndefiniteOperatorError)):
            pcg(Doubler(), np.ones(8), SolveConfig(precond="none", max_iter=50))

    def test_conditioning_warning_carries_index(self):
        import warnings

        from bspde.errors import ConditioningWarning

        class BadDiag:
            def __init__(self):
                from bspde.assembly import build_system
                from bspde.domain import BoxDomain, Grid

                g = Grid((8,), (1.0,))
                # mu_a = 0, D = 0: the whole operator vanishes, diagonal <= 0
                self.data = build_system(BoxDomain(g), 1, 0, np.zeros(8),
                                         np.zeros(8), [])

        from bspde.operator import OnTheFlyOperator

        op = OnTheFlyOperator(BadDiag().data)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            op.jacobi_diagonal()
        msgs = [str(x.message) for x in w if x.category is ConditioningWarning]
        assert msgs and "node" in msgs[0]
