"""Error norms and convergence-order machinery."""

import numpy as np
import pytest

from bspde.bspline import BSplineBasis, direct_transform
from bspde.domain import BoxDomain, Grid
from bspde.errors import SmoothnessError, ValidationError
from bspde.verify import (
    Cosine2DFamily,
    SplineField,
    fit_order,
    h1_norm,
    l2_norm,
    run_convergence,
)


def field_from_samples(samples, grid, degree):
    from bspde.domain import basis_extension

    basis = BSplineBasis(degree, grid.step)
    c = direct_transform(np.asarray(samples, dtype=float), basis)
    ext = basis_extension(degree)
    if ext:
        c = np.pad(c, ext, mode="reflect")
    return SplineField(c, grid, degree)


class TestNorms:
    def test_zero_against_itself(self):
        g = Grid((17,), (0.25,))
        fld = field_from_samples(np.sin(np.arange(17)), g, 3)
        assert l2_norm(fld, fld.value) < 1e-12

    def test_unit_box_volume(self):
        g = Grid((9, 9), (0.125, 0.125))
        fld = field_from_samples(np.ones((9, 9)), g, 1)
        assert l2_norm(fld) == pytest.approx(1.0, abs=1e-12)

    def test_h1_constant_is_zero(self):
        g = Grid((9,), (0.125,))
        fld = field_from_samples(np.full(9, 3.0), g, 2)
        assert h1_norm(fld, lambda p: np.full(len(p), 3.0),
                       lambda p, ax: np.zeros(len(p))) < 1e-12

    def test_h1_linear_analytic(self):
        # f(x) = x on [0,1] vs 0: sqrt(1/3 + 1)
        g = Grid((33,), (1.0 / 32,))
        fld = field_from_samples(np.linspace(0, 1, 33), g, 1)
        assert h1_norm(fld) == pytest.approx(np.sqrt(1 / 3 + 1), abs=1e-10)

    def test_cubic_interpolant_of_sinusoid(self):
        # error < C h^4 estimated from two refinement levels; the sinusoid is
        # phased so its even mirror extension stays C^1 (zero edge slope) --
        # mirror prefiltering of edge-kinked data costs half an order in L2
        errs = []
        for n in (17, 33):
            h = 2 * np.pi / (n - 1)
            g = Grid((n,), (h,))
            xs = g.node_coordinates(0)
            fld = field_from_samples(np.cos(xs), g, 3)
            errs.append(l2_norm(fld, lambda p: np.cos(p[:, 0])))
        assert errs[0] / errs[1] > 2 ** 3.5

    def test_sine_with_edge_kink_lands_between_one_and_four(self):
        errs = []
        for n in (33, 65):
            h = 2 * np.pi / (n - 1)
            g = Grid((n,), (h,))
            xs = g.node_coordinates(0)
            fld = field_from_samples(np.sin(xs), g, 3)
            errs.append(l2_norm(fld, lambda p: np.sin(p[:, 0])))
        assert 2 ** 1.2 < errs[0] / errs[1] < 2 ** 2.0

    def test_gradient_matches_finite_differences(self):
        g = Grid((25,), (0.5,))
        xs = g.node_coordinates(0)
        fld = field_from_samples(np.sin(xs), g, 3)
        pts = np.linspace(2.0, 10.0, 40)[:, None]
        grad = fld.gradient(pts, 0)
        d = 1e-6
        fd = (fld.value(pts + d) - fld.value(pts - d)) / (2 * d)
        np.testing.assert_allclose(grad, fd, atol=1e-6)

    def test_homogeneity(self):
        g = Grid((17, 17), (0.25, 0.25))
        rng = np.random.default_rng(0)
        s = rng.normal(size=(17, 17))
        f1 = field_from_samples(s, g, 2)
        f2 = field_from_samples(3.0 * s, g, 2)
        assert l2_norm(f2) == pytest.approx(3.0 * l2_norm(f1), rel=1e-12)
        assert h1_norm(f2) == pytest.approx(3.0 * h1_norm(f1), rel=1e-12)

    def test_degree_zero_h1_rejected(self):
        g = Grid((9,), (1.0,))
        from bspde.domain import basis_extension

        fld = SplineField(np.ones(9), g, 0)
        with pytest.raises(SmoothnessError):
            h1_norm(fld)


class TestFitOrder:
    def test_exact_power_law(self):
        hs = [1.0, 0.5, 0.25, 0.125]
        errs = [2.0 * h ** 3 for h in hs]
        assert fit_order(hs, errs) == pytest.approx(3.0, abs=1e-12)


class TestConvergence:
    def test_polynomial_reproduced_at_roundoff(self):
        # solution that lies in the spline space: errors at round-off level
        from bspde.problem import DirichletPenalty, Neumann, ProblemSpec, solve_problem
        from bspde.solver import SolveConfig

        for cells in (8, 16):
            h = 1.0 / cells
            spec = ProblemSpec(
                domain=BoxDomain(Grid((cells + 1,), (h,))),
                basis_degree=1, diffusion=0.0, absorption=1.0,
                source=lambda x: 1.0 + 0.0 * x, bc=Neumann(),
            )
            sol = solve_problem(spec, SolveConfig(tol=1e-13, max_iter=4000), "sparse")
            fld = SplineField(sol.coeffs, spec.grid, 1)
            err = l2_norm(fld, lambda p: np.ones(len(p)))
            assert err < 1e-10

    def test_cosine_family_quick(self):
        fam = Cosine2DFamily(base_cells=4)
        study = run_convergence(fam, degrees=[1], levels=[0, 1, 2])
        assert study.l2_orders[1] == pytest.approx(2.0, abs=0.3)
        assert study.h1_orders[1] == pytest.approx(1.0, abs=0.3)
        csv = study.csv()
        assert "fitted orders" in csv and csv.count("\n") >= 6

    def test_needs_three_levels(self):
        fam = Cosine2DFamily()
        with pytest.raises(ValidationError):
            run_convergence(fam, degrees=[1], levels=[0, 1])


class TestMaskNorms:
    def test_l2_over_l_shaped_mask(self):
        # unit field over an L-shaped mask: squared norm = occupied area
        from bspde.domain import MaskDomain

        mask = np.ones((8, 8), dtype=bool)
        mask[4:, 4:] = False
        g = Grid((9, 9), (0.25, 0.25))
        fld = field_from_samples(np.ones((9, 9)), g, 1)
        area = mask.sum() * 0.25 * 0.25
        got = l2_norm(fld, domain=MaskDomain(g, mask))
        assert got == pytest.approx(np.sqrt(area), abs=1e-12)
