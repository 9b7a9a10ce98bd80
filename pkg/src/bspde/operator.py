"""The three realizations of the system operator and their bookkeeping.

All strategies share the assembled :class:`~bspde.assembly.SystemData`; they
differ only in *when* the kernel/field contraction happens:

- ``SparseMatrixOperator`` folds everything into a CSR matrix up front,
- ``BlockTensorOperator`` precontracts the per-node stencils ``P`` and keeps
  them as an (offsets, nodes) array,
- ``OnTheFlyOperator`` recomputes the stencils block by block inside every
  apply, trading flops for memory.

Applies are data-parallel over disjoint output blocks; the block partition
never depends on the worker count, so outputs are bitwise identical across
worker counts.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view
from threadpoolctl import threadpool_limits

from .assembly import SystemData, face_rhs, stencil_block, term_stencil
from .errors import ConditioningWarning, ResourceError, ValidationError


@dataclass
class OpStats:
    """Analytic operation/traffic model of one operator application."""

    flops: int
    bytes_read: int
    bytes_written: int
    seconds: float = 0.0

    @property
    def gflops(self):
        return self.flops / self.seconds / 1e9 if self.seconds > 0 else 0.0


def run_blocks(fn, spans, workers):
    """Run ``fn(span)`` over all blocks; each block owns its output slice.

    BLAS pools are pinned to one thread inside the parallel region so the
    per-block arithmetic is identical no matter which worker executes it.
    """
    if workers <= 1:
        for s in spans:
            fn(s)
        return
    with threadpool_limits(limits=1, user_api="blas"):
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(fn, spans))


def _c_window_block(c, span, n_b):
    """Block of ``c`` extended by the stencil halo, zero beyond the grid."""
    d = c.ndim
    shape = tuple(hi - lo + 2 * n_b for lo, hi in span)
    out = np.zeros(shape, dtype=c.dtype)
    src = []
    dst = []
    for ax, (lo, hi) in enumerate(span):
        s0 = max(lo - n_b, 0)
        s1 = min(hi + n_b, c.shape[ax])
        src.append(slice(s0, s1))
        dst.append(slice(s0 - (lo - n_b), s1 - (lo - n_b)))
    out[tuple(dst)] = c[tuple(src)]
    return out


def _contract_block(P, c, span, n_b):
    """``t[l] = sum_a P[a, l] c[l + a]`` over one block."""
    d = c.ndim
    cblk = _c_window_block(c, span, n_b)
    W = cblk
    for ax in range(d):
        W = sliding_window_view(W, 2 * n_b + 1, axis=ax)
    # W: (b0.., A0..); P: (A0.., b0..)
    afl = (2 * n_b + 1) ** d
    bvol = int(np.prod([hi - lo for lo, hi in span]))
    P2 = P.reshape(afl, bvol)
    W2 = W.reshape(bvol, afl)
    return np.einsum("an,na->n", P2, W2).reshape([hi - lo for lo, hi in span])


class _OperatorBase:
    """Shared plumbing: validation, boundary-row patches, Jacobi diagonal."""

    strategy = "base"

    def __init__(self, data: SystemData, workers=1):
        self.data = data
        self.workers = int(workers)
        d = data.dim
        self._afl_center = data.a_flat_size // 2
        if data.bnode_rows is not None and len(data.bnode_rows):
            cext = data.cext
            padded_ext = tuple(n + 2 * data.n_b for n in cext)
            strides = np.ones(d, dtype=np.int64)
            for ax in range(d - 2, -1, -1):
                strides[ax] = strides[ax + 1] * padded_ext[ax + 1]
            # window of node l starts at padded position l (= l - n_b + halo)
            rows_multi = np.array(np.unravel_index(data.bnode_rows, cext)).T
            self._brow_pad_flat = (rows_multi * strides).sum(axis=1)
            a_off = np.array(
                list(np.ndindex(*(2 * data.n_b + 1,) * d)), dtype=np.int64
            )
            self._a_pad_flat = (a_off * strides).sum(axis=1)
            self._padded_ext = padded_ext
        else:
            self._brow_pad_flat = None

    @property
    def shape(self):
        return self.data.cext

    @property
    def dtype(self):
        return self.data.dtype

    def _validate(self, c):
        c = np.asarray(c)
        if c.shape != self.data.cext:
            raise ValidationError(f"extents {c.shape} != operator grid {self.data.cext}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("input coefficients contain non-finite values")
        return np.ascontiguousarray(c, dtype=self.data.dtype)

    def _output(self, out):
        if out is None:
            return np.empty(self.data.cext, dtype=self.data.dtype)
        if out.shape != self.data.cext or out.dtype != self.data.dtype:
            raise ValidationError("output buffer has wrong extents or dtype")
        return out

    def _patch_boundary_rows(self, t, c):
        """Overwrite boundary rows from stored stencils; zero inactive rows."""
        data = self.data
        if data.active is not None:
            t[~data.active] = 0.0
        if self._brow_pad_flat is None:
            return
        cpad = np.zeros(self._padded_ext, dtype=t.dtype)
        inner = tuple(slice(data.n_b, data.n_b + n) for n in data.cext)
        cpad[inner] = c
        gather = cpad.ravel()[self._brow_pad_flat[:, None] + self._a_pad_flat[None, :]]
        vals = np.einsum("na,na->n", data.bsten.astype(t.dtype, copy=False), gather)
        t.ravel()[data.bnode_rows] = vals

    def jacobi_diagonal(self):
        """Diagonal ``P_ll`` of the operator; inactive unknowns get 1."""
        diag = self._diagonal_impl()
        data = self.data
        if data.bnode_rows is not None and len(data.bnode_rows):
            diag.ravel()[data.bnode_rows] = data.bsten[:, self._afl_center]
        if data.active is not None:
            diag[~data.active] = 1.0
        bad = diag <= 0
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            warnings.warn(
                f"non-positive operator diagonal at node {tuple(int(i) for i in idx)}",
                ConditioningWarning,
            )
        return diag

    def apply(self, c):
        raise NotImplementedError

    def flop_byte_report(self, seconds=0.0) -> OpStats:
        raise NotImplementedError


def _center_bands(bands, n_b):
    from .assembly import AxisBand

    out = []
    for band in bands:
        rows = [(p, t[n_b : n_b + 1, :]) for p, t in band.edge_rows]
        out.append(AxisBand(interior=band.interior[n_b : n_b + 1, :], edge_rows=rows))
    return out


def _diagonal_from_bands(data: SystemData):
    full_span = tuple((0, n) for n in data.cext)
    out = None
    for bands, scale in zip(data.stiff_bands, data.stiff_scales):
        term = term_stencil(data.dfield, data.pad_param,
                            _center_bands(bands, data.n_b), full_span)
        term = term.reshape(data.cext) * scale
        out = term if out is None else out + term
    mass = term_stencil(data.mfield, data.pad_param,
                        _center_bands(data.mass_bands, data.n_b), full_span)
    out += mass.reshape(data.cext) * data.mass_scale
    for ft in data.faces:
        f = [ft.pair_factors[ax][data.n_b] for ax in range(data.dim)]
        if data.dim == 1:
            out += ft.weight * f[0]
        elif data.dim == 2:
            out += ft.weight * np.einsum("x,y->xy", f[0], f[1])
        else:
            out += ft.weight * np.einsum("x,y,z->xyz", f[0], f[1], f[2])
    return out.astype(data.dtype, copy=False)


class OnTheFlyOperator(_OperatorBase):
    """Matrix-free strategy: stencils recomputed inside every apply."""

    strategy = "onthefly"

    def apply(self, c, out=None):
        c = self._validate(c)
        data = self.data
        t = self._output(out)

        def run(span):
            P = stencil_block(data, span)
            sl = tuple(slice(lo, hi) for lo, hi in span)
            t[sl] = _contract_block(P.astype(data.dtype, copy=False), c, span, data.n_b)

        run_blocks(run, data.spans, self.workers)
        self._patch_boundary_rows(t, c)
        return t

    def _diagonal_impl(self):
        return _diagonal_from_bands(self.data)

    def flop_byte_report(self, seconds=0.0) -> OpStats:
        data = self.data
        n = data.num_unknowns()
        d = data.dim
        A = 2 * data.n_b + 1
        B = 2 * ((data.n_b + data.n_p + 1) // 2) + 1
        per_term = sum(2 * A**j * B for j in range(1, d + 1))
        flops = n * (per_term * (d + 1) + 2 * A**d)
        # streamed-field model on the node grid: c twice (stiffness and mass
        # families), d, m once each, t accumulate + write; degree-independent
        nodes = int(np.prod(data.domain.grid.extents))
        itemsize = data.dtype.itemsize
        return OpStats(
            flops=int(flops),
            bytes_read=int(5 * nodes * itemsize),
            bytes_written=int(nodes * itemsize),
            seconds=seconds,
        )


class BlockTensorOperator(_OperatorBase):
    """Precontracted per-node stencils ``P[offset, node]``."""

    strategy = "blocktensor"

    def __init__(self, data: SystemData, P, workers=1):
        super().__init__(data, workers)
        self.P = P

    @property
    def memory_bytes(self):
        return self.P.nbytes

    def apply(self, c, out=None):
        c = self._validate(c)
        data = self.data
        t = self._output(out)
        P = self.P

        def run(span):
            sl = (slice(None),) + tuple(slice(lo, hi) for lo, hi in span)
            block_shape = (P.shape[0],) + tuple(hi - lo for lo, hi in span)
            t[sl[1:]] = _contract_block(
                np.ascontiguousarray(P[sl]).reshape(block_shape), c, span, data.n_b
            )

        run_blocks(run, data.spans, self.workers)
        if data.active is not None:
            t[~data.active] = 0.0
        return t

    def _diagonal_impl(self):
        return self.P[self._afl_center].copy()

    def flop_byte_report(self, seconds=0.0) -> OpStats:
        data = self.data
        n = data.num_unknowns()
        itemsize = data.dtype.itemsize
        return OpStats(
            flops=int(2 * data.a_flat_size * n),
            bytes_read=int(self.P.nbytes + 2 * n * itemsize),
            bytes_written=int(n * itemsize),
            seconds=seconds,
        )


class SparseMatrixOperator(_OperatorBase):
    """CSR baseline (standard SpMV)."""

    strategy = "sparse"

    def __init__(self, data: SystemData, matrix, workers=1):
        super().__init__(data, workers)
        self.matrix = matrix

    def apply(self, c, out=None):
        c = self._validate(c)
        result = self.matrix @ c.ravel()
        t = self._output(out)
        t[...] = result.reshape(self.data.cext)
        return t

    def _diagonal_impl(self):
        return np.asarray(self.matrix.diagonal(), dtype=self.data.dtype).reshape(
            self.data.cext
        )

    def flop_byte_report(self, seconds=0.0) -> OpStats:
        n = self.data.num_unknowns()
        itemsize = self.data.dtype.itemsize
        nnz = self.matrix.nnz
        idx_bytes = self.matrix.indices.itemsize
        return OpStats(
            flops=int(2 * nnz),
            bytes_read=int(nnz * (itemsize + idx_bytes) + 2 * n * itemsize),
            bytes_written=int(n * itemsize),
            seconds=seconds,
        )


def block_tensor_estimate(data: SystemData) -> int:
    return data.num_unknowns() * data.a_flat_size * data.dtype.itemsize


def _materialize_block_tensor(data: SystemData, workers=1):
    afl = data.a_flat_size
    P = np.empty((afl,) + data.cext, dtype=data.dtype)

    def run(span):
        blk = stencil_block(data, span)
        sl = (slice(None),) + tuple(slice(lo, hi) for lo, hi in span)
        P[sl] = blk.reshape((afl,) + tuple(hi - lo for lo, hi in span))

    run_blocks(run, data.spans, workers)
    P2 = P.reshape(afl, -1)
    if data.bnode_rows is not None and len(data.bnode_rows):
        P2[:, data.bnode_rows] = data.bsten.T.astype(data.dtype, copy=False)
    if data.active is not None:
        P2[:, ~data.active.ravel()] = 0.0
    return P


def assemble_block_tensor(data: SystemData, workers=1, memory_budget=None):
    """Precontract the 2d-block tensor; refuses when over the memory budget."""
    est = block_tensor_estimate(data)
    if memory_budget is not None and est > memory_budget:
        raise ResourceError(
            f"block tensor needs {est / 1e9:.2f} GB > budget "
            f"{memory_budget / 1e9:.2f} GB; use the on-the-fly strategy"
        )
    return BlockTensorOperator(data, _materialize_block_tensor(data, workers), workers)


def assemble_sparse(data: SystemData, workers=1, memory_budget=None):
    """Fold the stencils into a CSR matrix (the SpMV baseline)."""
    est = block_tensor_estimate(data) * 2  # values + indices, roughly
    if memory_budget is not None and est > memory_budget:
        raise ResourceError(
            f"sparse assembly needs ~{est / 1e9:.2f} GB > budget "
            f"{memory_budget / 1e9:.2f} GB; use the on-the-fly strategy"
        )
    P = _materialize_block_tensor(data, workers)
    cext = data.cext
    d = data.dim
    n = data.num_unknowns()
    A = 2 * data.n_b + 1
    a_tuples = list(np.ndindex(*(A,) * d))
    rows_list, cols_list, vals_list = [], [], []
    grid_idx = np.indices(cext)
    flat_rows = np.arange(n).reshape(cext)
    strides = np.ones(d, dtype=np.int64)
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * cext[ax + 1]
    for ai, at in enumerate(a_tuples):
        offs = np.array([at[ax] - data.n_b for ax in range(d)])
        valid = np.ones(cext, dtype=bool)
        for ax in range(d):
            pos = grid_idx[ax] + offs[ax]
            valid &= (pos >= 0) & (pos < cext[ax])
        vals = P[ai][valid]
        nz = vals != 0
        r = flat_rows[valid][nz]
        c = r + int((offs * strides).sum())
        rows_list.append(r)
        cols_list.append(c)
        vals_list.append(vals[nz])
    mat = sp.coo_matrix(
        (np.concatenate(vals_list), (np.concatenate(rows_list), np.concatenate(cols_list))),
        shape=(n, n),
    ).tocsr()
    return SparseMatrixOperator(data, mat, workers)


def make_operator(data: SystemData, strategy="onthefly", workers=1, memory_budget=None):
    if strategy == "onthefly":
        return OnTheFlyOperator(data, workers)
    if strategy == "blocktensor":
        return assemble_block_tensor(data, workers, memory_budget)
    if strategy == "sparse":
        return assemble_sparse(data, workers, memory_budget)
    raise ValidationError(f"unknown strategy {strategy!r}")


def assembled_rhs(data: SystemData, n_s, qcoef_ext, workers=1):
    """Right-hand side ``t_l = q_j r^{jl}`` plus surface (penalty) additions."""
    from .assembly import basis_extension, bilinear_axis_band, source_reach

    grid = data.domain.grid
    d = data.dim
    box = data.bnode_rows is None
    rw = source_reach(n_s, data.n_b)
    pad_q = data.ext + rw - basis_extension(n_s)
    qfield = np.asarray(qcoef_ext, dtype=float)
    bands = [
        bilinear_axis_band(n_s, data.n_b, grid.extents[ax], truncated=box)
        for ax in range(d)
    ]
    full_span = tuple((0, nc) for nc in data.cext)
    # contiguity matters: the mask fixup mutates t through flat views
    t = np.ascontiguousarray(
        term_stencil(qfield, pad_q, bands, full_span).reshape(data.cext)
    )
    t *= float(np.prod(grid.step))
    if box:
        t += face_rhs(data)
    else:
        _mask_rhs_fixup(data, n_s, qcoef_ext, t)
    return t.astype(data.dtype, copy=False)


def _mask_rhs_fixup(data: SystemData, n_s, qcoef_ext, t):
    """Recompute boundary rows of the rhs from per-cell tables; zero inactive."""
    from . import kernels as K
    from .assembly import _cells_near_boundary
    from .domain import support_cell_radius

    d = data.dim
    ext = data.ext
    ext_s = max(int(np.ceil((n_s + 1) / 2.0)) - 1, 0)
    occ = data.domain.occupancy()
    bnodes = np.zeros(data.cext, dtype=bool)
    bnodes.ravel()[data.bnode_rows] = True
    t.ravel()[data.bnode_rows] = 0.0
    if data.active is not None:
        t[~data.active] = 0.0

    r = support_cell_radius(data.n_b)
    cells = np.argwhere(_cells_near_boundary(occ, bnodes, ext, r))
    if len(cells):
        j1s, j2s, R = K.cell_bilinear_table(n_s, data.n_b)
        vol = float(np.prod(data.step))
        Rd = None
        for _ in range(d):
            Rd = R if Rd is None else np.einsum("ij,IJ->iIjJ", Rd, R).reshape(
                Rd.shape[0] * R.shape[0], Rd.shape[1] * R.shape[1]
            )
        Rd = Rd * vol
        qex = np.asarray(qcoef_ext, dtype=float)
        j1_tuples = list(np.ndindex(*(len(j1s),) * d))
        j2_tuples = list(np.ndindex(*(len(j2s),) * d))
        qwin = np.empty((len(cells), len(j1_tuples)))
        for i1, t1 in enumerate(j1_tuples):
            idx = tuple(cells[:, ax] + j1s[t1[ax]] + ext_s for ax in range(d))
            qwin[:, i1] = qex[idx]
        loc = qwin @ Rd  # (ncells, nj2^d)
        rows = np.empty((len(cells), len(j2_tuples)), dtype=np.int64)
        for i2, t2 in enumerate(j2_tuples):
            flat = np.zeros(len(cells), dtype=np.int64)
            for ax in range(d):
                flat = flat * data.cext[ax] + (cells[:, ax] + j2s[t2[ax]] + ext)
            rows[:, i2] = flat
        sel = bnodes.ravel()[rows]
        np.add.at(t.ravel(), rows[sel], loc[sel])
    for rows, rvec in data.surface_rhs_entries or []:
        np.add.at(t.ravel(), rows.ravel(), np.broadcast_to(rvec, rows.shape).ravel())
