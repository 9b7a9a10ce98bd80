"""Operator throughput harness: timing, scaling, and determinism guards.

Inputs are seeded random problems; every measured apply is checksummed and a
checksum mismatch across worker counts is a hard error.  Reported GFLOPS use
the analytic flop model of the operator module (model flops, not hardware
counters), so numbers are comparable across strategies.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .domain import BoxDomain, Grid
from .errors import DeterminismError, ValidationError
from .problem import ProblemSpec, Robin, assemble_system

CSV_SCHEMA_VERSION = "bspde-bench-csv v1"
CSV_COLUMNS = (
    "strategy,degree,grid,threads,precision,seconds,gflops,bytes_r,bytes_w,"
    "speedup,checksum"
)


@dataclass
class BenchPlan:
    grids: list
    degrees: list = field(default_factory=lambda: [1])
    strategies: list = field(default_factory=lambda: ["onthefly"])
    threads: list = field(default_factory=lambda: [1])
    precisions: list = field(default_factory=lambda: ["f64"])
    repetitions: int = 3
    warmup: int = 1
    seed: int = 1234
    block_bytes: int = 4 << 20
    memory_budget: int = 2 << 30

    def __post_init__(self):
        if self.repetitions < 3:
            raise ValidationError(f"need >= 3 repetitions, got {self.repetitions}")
        for g in self.grids:
            fields = 4 * int(np.prod(g)) * 8
            if fields > self.memory_budget:
                raise ValidationError(
                    f"grid {g} needs {fields / 1e9:.2f} GB of fields, over the "
                    f"{self.memory_budget / 1e9:.2f} GB budget"
                )


@dataclass
class BenchResult:
    strategy: str
    degree: int
    grid: tuple
    threads: int
    precision: str
    seconds: float
    gflops: float
    bytes_read: int
    bytes_written: int
    speedup: float
    checksum: str

    def csv_row(self):
        g = "x".join(str(e) for e in self.grid)
        return (
            f"{self.strategy},{self.degree},{g},{self.threads},{self.precision},"
            f"{self.seconds:.6f},{self.gflops:.3f},{self.bytes_read},"
            f"{self.bytes_written},{self.speedup:.3f},{self.checksum}"
        )


def _bench_problem(grid_extents, degree, precision, seed):
    """Seeded smooth variable-coefficient problem on the unit-step box."""
    rng = np.random.default_rng(seed)
    a, b, c = rng.uniform(0.2, 0.8, 3)
    d = len(grid_extents)

    def diffusion(*coords):
        out = 1.0
        for ax, x in enumerate(coords):
            out = out + (0.3 / d) * np.sin(a * (ax + 1) * x / 10.0 + b)
        return out

    def absorption(*coords):
        out = 0.2
        for x in coords:
            out = out + (0.05 / d) * np.cos(c * x / 10.0)
        return out

    return ProblemSpec(
        domain=BoxDomain(Grid(grid_extents, (1.0,) * len(grid_extents))),
        basis_degree=degree,
        diffusion=diffusion,
        absorption=absorption,
        source=0.0,
        bc=Robin(1.0),
        precision=precision,
    )


def _checksum(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()[:16]


def run_bench(plan: BenchPlan):
    """Execute the plan; returns a list of :class:`BenchResult`.

    Medians over ``repetitions`` timed applies after ``warmup`` unmeasured
    ones; bitwise-identical outputs are enforced across the plan's worker
    counts, and cross-strategy outputs at the same plan point must agree to
    1e-12 relative.
    """
    results = []
    for grid_extents in plan.grids:
        for degree in plan.degrees:
            for precision in plan.precisions:
                spec = _bench_problem(grid_extents, degree, precision, plan.seed)
                rng = np.random.default_rng(plan.seed + 1)
                strategy_outputs = {}
                c = None
                for strategy in plan.strategies:
                    system = assemble_system(
                        spec, strategy=strategy, workers=plan.threads[0],
                        block_bytes=plan.block_bytes,
                        memory_budget=plan.memory_budget,
                    )
                    op = system.operator
                    if c is None:
                        c = rng.normal(size=system.data.cext).astype(spec.dtype)
                    base_time = None
                    base_sum = None
                    for workers in plan.threads:
                        op.workers = workers
                        for _ in range(plan.warmup):
                            out = op.apply(c)
                        times = []
                        for _ in range(plan.repetitions):
                            t0 = time.perf_counter()
                            out = op.apply(c)
                            times.append(time.perf_counter() - t0)
                        med = float(np.median(times))
                        csum = _checksum(out)
                        if base_sum is None:
                            base_sum = csum
                            base_time = med
                        elif csum != base_sum:
                            raise DeterminismError(
                                f"{strategy} checksum changed between "
                                f"{plan.threads[0]} and {workers} workers"
                            )
                        stats = op.flop_byte_report(seconds=med)
                        results.append(
                            BenchResult(
                                strategy=strategy,
                                degree=degree,
                                grid=tuple(grid_extents),
                                threads=workers,
                                precision=precision,
                                seconds=med,
                                gflops=stats.gflops,
                                bytes_read=stats.bytes_read,
                                bytes_written=stats.bytes_written,
                                speedup=base_time / med if med > 0 else 0.0,
                                checksum=csum,
                            )
                        )
                    strategy_outputs[strategy] = np.asarray(out, dtype=np.float64)
                _check_cross_strategy(strategy_outputs)
    return results


def _check_cross_strategy(outputs):
    if len(outputs) < 2:
        return
    names = sorted(outputs)
    ref = outputs[names[0]]
    scale = np.max(np.abs(ref)) or 1.0
    for name in names[1:]:
        diff = np.max(np.abs(outputs[name] - ref)) / scale
        if diff > 1e-12:
            raise DeterminismError(
                f"strategies {names[0]} and {name} disagree by {diff:.3e} relative"
            )


def results_csv(results):
    lines = [f"# {CSV_SCHEMA_VERSION}", CSV_COLUMNS]
    lines += [r.csv_row() for r in results]
    return "\n".join(lines) + "\n"
