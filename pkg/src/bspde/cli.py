"""Command-line surface: solve, convergence, bench, transform, kernels.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 numerical failure
(divergence, indefiniteness, or missing the residual target).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import io as tio
from .bspline import BSplineBasis, direct_transform, sample_at_nodes
from .errors import (
    ConfigurationError,
    DeterminismError,
    DivergenceError,
    FormatError,
    IndefiniteOperatorError,
    ResourceError,
    ValidationError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_NUMERICAL = 3


def _build_parser():
    p = argparse.ArgumentParser(
        prog="bspde",
        description="Tensor B-spline elliptic PDE solver",
    )
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("TBS_THREADS", "1")),
                   help="worker threads (default: $TBS_THREADS or 1)")
    p.add_argument("--precision", choices=["f32", "f64"], default=None,
                   help="override field precision")
    p.add_argument("--seed", type=int, default=1234, help="seed for randomized inputs")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve a problem file")
    ps.add_argument("problem", help="path to a .prob file")

    pc = sub.add_parser("convergence", help="run a convergence study")
    pc.add_argument("study", help="path to a study file")

    pb = sub.add_parser("bench", help="run the operator benchmark")
    pb.add_argument("--plan", required=True, help="path to a bench plan file")

    pt = sub.add_parser("transform", help="direct/indirect B-spline transform")
    pt.add_argument("input", help="input TBSF tensor")
    pt.add_argument("output", help="output TBSF tensor")
    pt.add_argument("--degree", type=int, required=True)
    pt.add_argument("--direction", choices=["direct", "indirect"], default="direct")
    pt.add_argument("--extension", choices=["mirror", "replicate", "zero"],
                    default="mirror")

    pk = sub.add_parser("kernels", help="dump a kernel table as CSV")
    pk.add_argument("--nb", type=int, required=True, help="basis degree")
    pk.add_argument("--np", type=int, required=True, dest="np_", help="parameter degree")
    pk.add_argument("--da", type=int, choices=[0, 1], default=0)
    pk.add_argument("--db", type=int, choices=[0, 1], default=0)
    return p


def _cmd_solve(args):
    from .problem import solve_problem
    from .solver import SolveConfig

    spec, sopts, oopts = tio.load_problem(args.problem)
    if args.precision:
        spec.precision = args.precision
    cfg = SolveConfig(
        tol=sopts["tol"],
        max_iter=sopts["max_iter"],
        precond=sopts["precond"],
        coarse_init_factor=sopts["coarse_init"],
        record_history=sopts["record_history"] or "history" in oopts,
    )
    sol = solve_problem(
        spec, cfg, strategy=sopts["strategy"], workers=args.threads,
        block_bytes=sopts["block_bytes"], memory_budget=sopts["memory_budget"],
    )
    out = lambda name, default: os.path.join(args.out_dir, oopts.get(name, default))
    os.makedirs(args.out_dir, exist_ok=True)
    tio.write_tensor(out("solution", "solution.tbsf"), sol.samples,
                     degree=spec.basis_degree)
    rep = sol.report
    split = sol.kernel_split()
    with open(out("report", "report.csv"), "w") as f:
        f.write("iterations,relative_residual,converged,wall_time,"
                "interior_cells,boundary_cells,boundary_fraction\n")
        f.write(f"{rep.iterations},{rep.relative_residual:.6e},"
                f"{int(rep.converged)},{rep.wall_time:.3f},"
                f"{split['interior_cells']},{split['boundary_cells']},"
                f"{split['boundary_fraction']:.6f}\n")
    if "vtk" in oopts and spec.grid.dim >= 2:
        tio.export_vtk(out("vtk", "solution.vtk"), sol.samples, spec.grid,
                       name="solution")
    if cfg.record_history:
        with open(out("history", "history.csv"), "w") as f:
            f.write(rep.history_csv())
    print(f"solved in {rep.iterations} iterations, "
          f"relative residual {rep.relative_residual:.3e}")
    return EXIT_OK if rep.converged else EXIT_NUMERICAL


def _cmd_convergence(args):
    from .solver import SolveConfig
    from .verify import Cosine2DFamily, Diffusion1DFamily, run_convergence

    opts = tio.load_study(args.study)
    fam = Diffusion1DFamily() if opts["family"] == "diffusion1d" else Cosine2DFamily()
    cfg = SolveConfig(tol=opts["tol"], max_iter=opts["max_iter"])
    study = run_convergence(fam, opts["degrees"], opts["levels"], cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "convergence.csv")
    with open(path, "w") as f:
        f.write(study.csv())
    for n in sorted(study.l2_orders):
        print(f"degree {n}: L2 order {study.l2_orders[n]:.3f}, "
              f"H1 order {study.h1_orders[n]:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_bench(args):
    from .bench import results_csv, run_bench

    plan = tio.load_bench_plan(args.plan)
    plan.seed = args.seed
    if args.precision:
        plan.precisions = [args.precision]
    if args.threads and [args.threads] != plan.threads and plan.threads == [1]:
        plan.threads = [args.threads]
    results = run_bench(plan)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "bench.csv")
    with open(path, "w") as f:
        f.write(results_csv(results))
    for r in results:
        print(r.csv_row())
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_transform(args):
    arr, _deg = tio.read_tensor(args.input)
    basis = BSplineBasis(args.degree, (1.0,) * arr.ndim)
    if args.direction == "direct":
        out = direct_transform(arr, basis, extension=args.extension)
    else:
        out = sample_at_nodes(arr, args.degree, extension=args.extension)
    tio.write_tensor(args.output, out, degree=args.degree)
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_kernels(args):
    from .kernels import trilinear_kernel

    k = trilinear_kernel(args.nb, args.np_, bool(args.da), bool(args.db))
    print("trial_offset,param_offset,value")
    for i, a in enumerate(k.trial_offsets):
        for j, b in enumerate(k.param_offsets):
            print(f"{a},{b},{k.table[i, j]:.16e}")
    print("trial_offset,collapsed_sum,")
    for i, a in enumerate(k.trial_offsets):
        print(f"{a},{k.collapsed()[i]:.16e},")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "convergence": _cmd_convergence,
    "bench": _cmd_bench,
    "transform": _cmd_transform,
    "kernels": _cmd_kernels,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract says 1
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (DivergenceError, IndefiniteOperatorError, DeterminismError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ConfigurationError, FormatError, ResourceError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
