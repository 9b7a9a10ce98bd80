"""File formats and problem-definition parsing.

- TBSF: self-describing little-endian binary tensor files,
- mask files: a small text header followed by a raw 8-bit volume,
- legacy ASCII VTK STRUCTURED_POINTS export,
- ``.prob`` / study / bench-plan definition files (INI sections).
"""

from __future__ import annotations

import configparser
import os
import struct
import tempfile

import numpy as np

from .domain import BoxDomain, Grid, MaskDomain
from .errors import ConfigurationError, FormatError, ValidationError

TBSF_MAGIC = b"TBSF"
TBSF_VERSION = 1
_DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def _atomic_write(path, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tbsf-tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path, array, degree=-1):
    """Write a TBSF tensor file (row-major, little-endian, atomic rename)."""
    arr = np.ascontiguousarray(array)
    dt = np.dtype("<f4") if arr.dtype == np.float32 else np.dtype("<f8")
    arr = arr.astype(dt, copy=False)
    header = struct.pack("<4sII", TBSF_MAGIC, TBSF_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    header += struct.pack("<Bb", _DTYPE_TAGS[dt], int(degree))
    _atomic_write(path, header + arr.tobytes(order="C"))


def read_tensor(path):
    """Read a TBSF tensor file; returns ``(array, degree)``."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise FormatError("file shorter than the fixed header", offset=len(blob))
    magic, version, ndim = struct.unpack_from("<4sII", blob, 0)
    if magic != TBSF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TBSF_MAGIC!r}", offset=0)
    if version != TBSF_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if not 1 <= ndim <= 3:
        raise FormatError(f"dimension {ndim} not in 1..3", offset=8)
    off = 12
    if len(blob) < off + 8 * ndim + 2:
        raise FormatError("truncated extents header", offset=len(blob))
    extents = struct.unpack_from(f"<{ndim}Q", blob, off)
    off += 8 * ndim
    dtag, degree = struct.unpack_from("<Bb", blob, off)
    off += 2
    if dtag not in _TAG_DTYPES:
        raise FormatError(f"unknown dtype tag {dtag}", offset=off - 2)
    dt = _TAG_DTYPES[dtag]
    want = int(np.prod(extents)) * dt.itemsize
    have = len(blob) - off
    if have != want:
        raise FormatError(
            f"payload holds {have} bytes, extents {tuple(extents)} require {want}",
            offset=off,
        )
    arr = np.frombuffer(blob, dtype=dt, count=int(np.prod(extents)), offset=off)
    return arr.reshape(extents).copy(), int(degree)


MASK_MAGIC = "TBSM"


def write_mask(path, volume, threshold=128):
    """Write a mask file: text header + raw uint8 volume."""
    vol = np.ascontiguousarray(volume, dtype=np.uint8)
    header = f"{MASK_MAGIC} v1\nextents {' '.join(str(e) for e in vol.shape)}\n" \
             f"threshold {int(threshold)}\n"
    _atomic_write(path, header.encode() + vol.tobytes(order="C"))


def read_mask(path):
    """Read a mask file; returns ``(occupancy bool array, threshold)``."""
    with open(path, "rb") as f:
        blob = f.read()
    try:
        h_end = blob.index(b"threshold")
        h_end = blob.index(b"\n", h_end) + 1
    except ValueError:
        raise FormatError("missing mask header lines", offset=0) from None
    lines = blob[:h_end].decode(errors="replace").splitlines()
    if not lines or not lines[0].startswith(MASK_MAGIC):
        raise FormatError(f"bad mask magic {lines[0][:8]!r}", offset=0)
    extents = tuple(int(t) for t in lines[1].split()[1:])
    threshold = int(lines[2].split()[1])
    want = int(np.prod(extents))
    have = len(blob) - h_end
    if have != want:
        raise FormatError(
            f"mask payload holds {have} bytes, extents {extents} require {want}",
            offset=h_end,
        )
    vol = np.frombuffer(blob, dtype=np.uint8, count=want, offset=h_end).reshape(extents)
    return vol >= threshold, threshold


def export_vtk(path, samples, grid: Grid, name="field"):
    """Legacy ASCII VTK STRUCTURED_POINTS of a 2-D or 3-D node field."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim not in (2, 3):
        raise ValidationError(f"VTK export needs a 2-D or 3-D field, got {arr.ndim}-D")
    dims = arr.shape + (1,) * (3 - arr.ndim)
    spacing = tuple(grid.step) + (1.0,) * (3 - arr.ndim)
    origin = tuple(grid.origin) + (0.0,) * (3 - arr.ndim)
    lines = [
        "# vtk DataFile Version 3.0",
        name,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*dims),
        "ORIGIN {:.10g} {:.10g} {:.10g}".format(*origin),
        "SPACING {:.10g} {:.10g} {:.10g}".format(*spacing),
        f"POINT_DATA {arr.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    # VTK x varies fastest; numpy axis 0 is x here, so use Fortran order
    vals = arr.ravel(order="F")
    lines += [f"{v:.10e}" for v in vals]
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


# ---------------------------------------------------------------------------
# problem / study / plan definition files


def _expr_registry(grid: Grid):
    lengths = grid.lengths
    origin = grid.origin

    def gauss1d(x):
        return np.exp(-((x / 2.0) ** 2))

    def cosprod(*coords):
        out = 1.0
        for ax, c in enumerate(coords):
            out = out * np.cos(np.pi * (c - origin[ax]) / lengths[ax])
        return out

    return {"gauss1d": gauss1d, "cosprod": cosprod}


def _parse_field(token, grid):
    token = token.strip()
    if token.startswith("file:"):
        arr, _deg = read_tensor(token[5:])
        return arr
    if token.startswith("expr:"):
        key = token[5:]
        registry = _expr_registry(grid)
        if key not in registry:
            raise ConfigurationError(
                f"unknown field expression {key!r}; available: {sorted(registry)}"
            )
        return registry[key]
    try:
        return float(token)
    except ValueError:
        raise ConfigurationError(f"cannot parse field value {token!r}") from None


def _parse_bc(token):
    from .problem import DirichletPenalty, Neumann, Robin

    parts = token.split()
    kind = parts[0].lower()
    if kind == "neumann":
        return Neumann()
    if kind == "robin":
        return Robin(gamma=float(parts[1]) if len(parts) > 1 else 1.0)
    if kind in ("dirichlet_penalty", "penalty"):
        value = float(parts[1])
        eps = float(parts[2]) if len(parts) > 2 else None
        return DirichletPenalty(value, eps)
    raise ConfigurationError(f"unknown boundary condition {token!r}")


def load_problem(path):
    """Parse a ``.prob`` file into (ProblemSpec, solver options, output options)."""
    from .problem import ProblemSpec

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise FormatError(f"cannot read problem file {path!r}")
    if "grid" not in cp:
        raise ConfigurationError("problem file needs a [grid] section")
    gsec = cp["grid"]
    extents = tuple(int(t) for t in gsec.get("extents", "").split())
    if not extents:
        raise ConfigurationError("[grid] extents is required")
    step = tuple(float(t) for t in gsec.get("step", "1.0").split())
    if len(step) == 1:
        step = step * len(extents)
    origin = tuple(float(t) for t in gsec.get("origin", "0").split())
    if len(origin) == 1:
        origin = origin * len(extents)
    grid = Grid(extents, step, origin)
    if gsec.get("mask"):
        occ, _thr = read_mask(_relative_to(path, gsec["mask"]))
        domain = MaskDomain(grid, occ)
    else:
        domain = BoxDomain(grid)

    fsec = cp["fields"] if "fields" in cp else {}
    spec = ProblemSpec(
        domain=domain,
        basis_degree=int(fsec.get("degree", 1)),
        diffusion=_parse_field(str(fsec.get("diffusion", "1.0")), grid),
        absorption=_parse_field(str(fsec.get("absorption", "0.0")), grid),
        source=_parse_field(str(fsec.get("source", "0.0")), grid),
        bc=_load_bc_section(cp),
        param_degree=int(fsec["param_degree"]) if "param_degree" in fsec else None,
        source_degree=int(fsec["source_degree"]) if "source_degree" in fsec else None,
        precision=str(fsec.get("precision", "f64")),
    )
    ssec = cp["solver"] if "solver" in cp else {}
    solver_opts = {
        "tol": float(ssec.get("tol", 1e-8)),
        "max_iter": int(ssec.get("max_iter", 1000)),
        "precond": str(ssec.get("precond", "jacobi")),
        "coarse_init": int(ssec.get("coarse_init", 0)),
        "strategy": str(ssec.get("strategy", "onthefly")),
        "block_bytes": int(float(ssec.get("block_bytes", 4 << 20))),
        "memory_budget": (
            int(float(ssec["memory_budget"])) if "memory_budget" in ssec else None
        ),
        "record_history": ssec.get("record_history", "no").lower() in ("1", "yes", "true"),
    }
    osec = cp["output"] if "output" in cp else {}
    output_opts = {k: osec[k] for k in ("solution", "report", "vtk", "history") if k in osec}
    return spec, solver_opts, output_opts


def _load_bc_section(cp):
    if "bc" not in cp:
        return None
    items = {k: _parse_bc(v) for k, v in cp["bc"].items()}
    if not items:
        return None
    if set(items) == {"all"}:
        return items["all"]
    return items


def _relative_to(base_path, target):
    if os.path.isabs(target):
        return target
    return os.path.join(os.path.dirname(os.path.abspath(base_path)), target)


def load_study(path):
    """Parse a convergence-study file: family, degrees, levels, tolerances."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not cp.read(path):
        raise FormatError(f"cannot read study file {path!r}")
    sec = cp["study"] if "study" in cp else {}
    family = str(sec.get("family", "diffusion1d")).lower()
    if family not in ("diffusion1d", "cosine2d"):
        raise ConfigurationError(f"unknown study family {family!r}")
    return {
        "family": family,
        "degrees": [int(t) for t in sec.get("degrees", "1 2 3").split()],
        "levels": [int(t) for t in sec.get("levels", "0 1 2 3").split()],
        "tol": float(sec.get("tol", 1e-11)),
        "max_iter": int(sec.get("max_iter", 20000)),
    }


def load_bench_plan(path):
    """Parse a bench-plan file into a BenchPlan."""
    from .bench import BenchPlan

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not cp.read(path):
        raise FormatError(f"cannot read bench plan {path!r}")
    sec = cp["bench"] if "bench" in cp else {}
    grids = []
    for part in sec.get("grids", "32 32 32").split(";"):
        grids.append(tuple(int(t) for t in part.split()))
    return BenchPlan(
        grids=grids,
        degrees=[int(t) for t in sec.get("degrees", "1").split()],
        strategies=str(sec.get("strategies", "onthefly")).split(),
        threads=[int(t) for t in sec.get("threads", "1").split()],
        precisions=str(sec.get("precisions", "f64")).split(),
        repetitions=int(sec.get("repetitions", 3)),
        warmup=int(sec.get("warmup", 1)),
        seed=int(sec.get("seed", 1234)),
        memory_budget=int(float(sec.get("memory_budget", 2 << 30))),
    )
