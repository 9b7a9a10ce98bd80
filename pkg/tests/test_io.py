"""Tensor/mask file round trips and VTK export."""

import numpy as np
import pytest

from bspde.domain import Grid
from bspde.errors import FormatError, ValidationError
from bspde.io import (
    export_vtk,
    load_bench_plan,
    load_problem,
    load_study,
    read_mask,
    read_tensor,
    write_mask,
    write_tensor,
)

VTK_GOLDEN = """# vtk DataFile Version 3.0
field
ASCII
DATASET STRUCTURED_POINTS
DIMENSIONS 2 2 2
ORIGIN 0 0 0
SPACING 1 1 1
POINT_DATA 8
SCALARS field double 1
LOOKUP_TABLE default
4.2500000000e+00
4.2500000000e+00
4.2500000000e+00
4.2500000000e+00
4.2500000000e+00
4.2500000000e+00
4.2500000000e+00
4.2500000000e+00
"""


class TestTensorFile:
    def test_roundtrip_f64(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.normal(size=(5, 7, 3))
        p = tmp_path / "t.tbsf"
        write_tensor(p, arr, degree=3)
        back, deg = read_tensor(p)
        assert deg == 3
        assert back.dtype == np.float64
        assert np.array_equal(back, arr)  # bit-exact

    def test_roundtrip_f32(self, tmp_path):
        arr = np.arange(12, dtype=np.float32).reshape(3, 4)
        p = tmp_path / "t.tbsf"
        write_tensor(p, arr)
        back, _ = read_tensor(p)
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)

    def test_truncated_payload_names_lengths(self, tmp_path):
        arr = np.ones((4, 4))
        p = tmp_path / "t.tbsf"
        write_tensor(p, arr)
        blob = p.read_bytes()
        p.write_bytes(blob[:-8])
        with pytest.raises(FormatError) as exc:
            read_tensor(p)
        assert "120" in str(exc.value) and "128" in str(exc.value)

    def test_bad_magic_offset(self, tmp_path):
        p = tmp_path / "t.tbsf"
        p.write_bytes(b"NOPE" + b"\0" * 32)
        with pytest.raises(FormatError) as exc:
            read_tensor(p)
        assert exc.value.offset == 0


class TestMaskFile:
    def test_threshold_counting(self, tmp_path):
        # gradient volume: occupancy count is exactly the voxels >= threshold
        vol = np.arange(4 * 5 * 6, dtype=np.uint16).reshape(4, 5, 6) % 256
        vol = vol.astype(np.uint8)
        p = tmp_path / "m.tbsm"
        write_mask(p, vol, threshold=128)
        occ, thr = read_mask(p)
        assert thr == 128
        assert occ.sum() == int((vol >= 128).sum())

    def test_size_mismatch(self, tmp_path):
        p = tmp_path / "m.tbsm"
        write_mask(p, np.ones((3, 3), dtype=np.uint8))
        blob = p.read_bytes()
        p.write_bytes(blob + b"\1")
        with pytest.raises(FormatError):
            read_mask(p)


class TestVtk:
    def test_golden_constant_cube(self, tmp_path):
        p = tmp_path / "f.vtk"
        export_vtk(p, np.full((2, 2, 2), 4.25), Grid((2, 2, 2), (1.0, 1.0, 1.0)))
        assert p.read_text() == VTK_GOLDEN

    def test_spacing_from_grid(self, tmp_path):
        p = tmp_path / "f.vtk"
        export_vtk(p, np.zeros((3, 4)), Grid((3, 4), (0.5, 0.25), (1.0, -1.0)))
        text = p.read_text()
        assert "SPACING 0.5 0.25 1" in text
        assert "ORIGIN 1 -1 0" in text
        assert "DIMENSIONS 3 4 1" in text

    def test_x_varies_fastest(self, tmp_path):
        arr = np.arange(6, dtype=float).reshape(3, 2)  # [x, y] indexing
        p = tmp_path / "f.vtk"
        export_vtk(p, arr, Grid((3, 2), (1.0, 1.0)))
        vals = [float(t) for t in p.read_text().splitlines()[10:]]
        # x-fastest: (0,0),(1,0),(2,0),(0,1),(1,1),(2,1)
        assert vals == [0.0, 2.0, 4.0, 1.0, 3.0, 5.0]

    def test_1d_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            export_vtk(tmp_path / "f.vtk", np.zeros(5), Grid((5,), (1.0,)))


class TestProblemFile:
    def test_full_problem(self, tmp_path):
        prob = tmp_path / "p.prob"
        prob.write_text(
            "[grid]\nextents = 9 9\nstep = 0.125\n\n"
            "[fields]\ndegree = 2\ndiffusion = 1.0\nsource = expr:cosprod\n\n"
            "[bc]\nall = robin 2.0\n\n"
            "[solver]\ntol = 1e-9\nstrategy = sparse\n"
        )
        spec, sopts, oopts = load_problem(prob)
        assert spec.basis_degree == 2
        assert spec.grid.extents == (9, 9)
        assert sopts["tol"] == 1e-9
        assert callable(spec.source)

    def test_mask_reference(self, tmp_path):
        vol = np.full((8, 8), 255, dtype=np.uint8)
        write_mask(tmp_path / "m.tbsm", vol)
        prob = tmp_path / "p.prob"
        prob.write_text(
            "[grid]\nextents = 9 9\nstep = 1.0\nmask = m.tbsm\n\n"
            "[fields]\ndegree = 1\n\n[bc]\nall = penalty 5 1e-3\n"
        )
        spec, _, _ = load_problem(prob)
        from bspde.domain import MaskDomain

        assert isinstance(spec.domain, MaskDomain)

    def test_study_and_plan(self, tmp_path):
        study = tmp_path / "s.study"
        study.write_text("[study]\nfamily = cosine2d\ndegrees = 1 2\nlevels = 0 1 2\n")
        opts = load_study(study)
        assert opts["family"] == "cosine2d"
        assert opts["degrees"] == [1, 2]
        plan_file = tmp_path / "b.plan"
        plan_file.write_text(
            "[bench]\ngrids = 16 16 16; 24 24 24\ndegrees = 1 3\n"
            "threads = 1 2\nrepetitions = 3\n"
        )
        plan = load_bench_plan(plan_file)
        assert plan.grids == [(16, 16, 16), (24, 24, 24)]
        assert plan.threads == [1, 2]
