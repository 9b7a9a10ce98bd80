"""CLI subcommands, exit codes, and output files."""

import numpy as np
import pytest

from bspde.cli import main
from bspde.io import read_tensor, write_tensor


@pytest.fixture
def prob_file(tmp_path):
    p = tmp_path / "poisson2d.prob"
    p.write_text(
        "[grid]\nextents = 13 13\nstep = 0.0833333\n\n"
        "[fields]\ndegree = 1\ndiffusion = 1.0\nsource = expr:cosprod\n\n"
        "[bc]\nall = dirichlet_penalty 3.0 1e-4\n\n"
        "[solver]\ntol = 1e-9\nmax_iter = 800\nstrategy = sparse\n\n"
        "[output]\nsolution = solution.tbsf\nreport = report.csv\nvtk = out.vtk\n"
    )
    return p


class TestSolve:
    def test_smoke(self, prob_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["--out-dir", str(out), "solve", str(prob_file)])
        assert code == 0
        assert (out / "solution.tbsf").exists()
        assert (out / "report.csv").exists()
        assert (out / "out.vtk").exists()
        arr, deg = read_tensor(out / "solution.tbsf")
        assert arr.shape == (13, 13)
        assert deg == 1
        report = (out / "report.csv").read_text().splitlines()
        assert "iterations" in report[0]

    def test_missing_tolerance_exit_3(self, tmp_path):
        p = tmp_path / "hard.prob"
        p.write_text(
            "[grid]\nextents = 17 17\nstep = 0.0625\n\n"
            "[fields]\ndegree = 1\nsource = 1.0\n\n"
            "[bc]\nall = dirichlet_penalty 1.0 1e-6\n\n"
            "[solver]\ntol = 1e-13\nmax_iter = 2\nstrategy = sparse\n"
        )
        assert main(["--out-dir", str(tmp_path / "o"), "solve", str(p)]) == 3


class TestUsage:
    def test_unknown_flag(self):
        assert main(["--frobnicate"]) == 1

    def test_unknown_subcommand(self):
        assert main(["explode"]) == 1

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.prob")]) == 2


class TestTransform:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        s = rng.normal(size=(20, 18))
        src = tmp_path / "in.tbsf"
        mid = tmp_path / "c.tbsf"
        back = tmp_path / "back.tbsf"
        write_tensor(src, s)
        assert main(["transform", str(src), str(mid), "--degree", "3"]) == 0
        assert main(["transform", str(mid), str(back), "--degree", "3",
                     "--direction", "indirect"]) == 0
        arr, _ = read_tensor(back)
        assert np.abs(arr - s).max() / np.abs(s).max() < 1e-10


class TestKernels:
    def test_stiffness_dump(self, capsys):
        assert main(["kernels", "--nb", "1", "--np", "0", "--da", "1", "--db", "1"]) == 0
        out = capsys.readouterr().out
        assert "trial_offset,param_offset,value" in out
        assert "2.0000000000000000e+00" in out
        assert "-1.0000000000000000e+00" in out


class TestConvergence:
    def test_study_file(self, tmp_path, capsys):
        study = tmp_path / "s.study"
        study.write_text(
            "[study]\nfamily = cosine2d\ndegrees = 1\nlevels = 0 1 2\n"
            "tol = 1e-10\nmax_iter = 4000\n"
        )
        out = tmp_path / "o"
        assert main(["--out-dir", str(out), "convergence", str(study)]) == 0
        csv = (out / "convergence.csv").read_text()
        assert "fitted orders" in csv
        printed = capsys.readouterr().out
        assert "L2 order" in printed


class TestBench:
    def test_plan_file(self, tmp_path, capsys):
        plan = tmp_path / "b.plan"
        plan.write_text(
            "[bench]\ngrids = 8 8 8\ndegrees = 1\nstrategies = sparse\n"
            "threads = 1\nrepetitions = 3\n"
        )
        out = tmp_path / "o"
        assert main(["--out-dir", str(out), "bench", "--plan", str(plan)]) == 0
        csv = (out / "bench.csv").read_text()
        assert csv.startswith("# bspde-bench-csv")

    def test_env_threads_default(self, monkeypatch):
        monkeypatch.setenv("TBS_THREADS", "3")
        from bspde.cli import _build_parser

        args = _build_parser().parse_args(["kernels", "--nb", "1", "--np", "0"])
        assert args.threads == 3
