"""Stencil-field assembly shared by the three operator strategies.

The system operator contracts coefficient fields with separable kernel
tables.  Away from edges every row uses the translation-invariant free-space
tables and the contraction is a bank of 1-D correlations; near a box edge the
per-axis tables become position-dependent (exact truncated integrals); near a
mask boundary rows are rebuilt from exact per-cell tables and stored as
per-node stencils.

Everything works on the *extended* unknown grid: splines centered up to
``basis_extension(degree)`` indices beyond the node grid stay active because
their support still overlaps the domain.  Array index ``i`` on an extended
grid corresponds to spline index ``i - ext``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels as K
from .bspline import eval_bspline
from .domain import (
    BoxDomain,
    MaskDomain,
    active_nodes,
    basis_extension,
    interior_nodes,
    support_cell_radius,
)
from .errors import ValidationError


def first_clean_position(n_b) -> int:
    """Smallest spline position whose support clears the left edge."""
    return int(math.ceil((n_b + 1) / 2.0 - 1e-12))


def min_axis_length(n_b) -> int:
    """Minimal axis length (cells) for non-interacting edge tables."""
    return int(math.ceil(first_clean_position(n_b) - 1 + (n_b + 1) / 2.0))


def param_reach(n_b, n_p) -> int:
    return (n_b + n_p + 1) // 2


def source_reach(n_s, n_b) -> int:
    return (n_s + n_b + 1) // 2


# ---------------------------------------------------------------------------
# per-axis banded tables


@dataclass
class AxisBand:
    """One axis of a separable term: interior table plus positional edge rows.

    ``out[a, i] = sum_t table[a, t] * padded[i + t]`` on the extended grid;
    ``edge_rows`` lists ``(i, table)`` overrides near the edges.
    """

    interior: np.ndarray  # (A, B)
    edge_rows: list  # [(position, (A, B) table)]

    @property
    def n_trial(self):
        return self.interior.shape[0]

    @property
    def n_param(self):
        return self.interior.shape[1]


def _mirrored(table, sign):
    return sign * table[::-1, ::-1]


def trilinear_axis_band(n_b, n_p, da, db, num_nodes, truncated) -> AxisBand:
    """Positional trilinear band for one axis.

    ``truncated`` selects exact edge-truncated tables (box domains); without
    it the free-space table applies everywhere (mask interior pass).
    """
    interior = np.asarray(K.trilinear_kernel(n_b, n_p, da, db).table)
    if not truncated:
        return AxisBand(interior=interior, edge_rows=[])
    ext = basis_extension(n_b)
    L = num_nodes - 1
    if L < min_axis_length(n_b):
        raise ValidationError(
            f"axis with {num_nodes} nodes too short for degree {n_b} edge tables"
        )
    fc = first_clean_position(n_b)
    ew = ext + fc
    nc = num_nodes + 2 * ext
    sign = (-1.0) ** (int(da) + int(db))
    rows = []
    for i in range(ew):
        rows.append((i, np.asarray(K.edge_trilinear_table(n_b, n_p, da, db, i - ext))))
    for i in range(nc - ew, nc):
        p_left = L - (i - ext)
        rows.append((i, _mirrored(np.asarray(K.edge_trilinear_table(n_b, n_p, da, db, p_left)), sign)))
    return AxisBand(interior=interior, edge_rows=rows)


def bilinear_axis_band(n_s, n_b, num_nodes, truncated) -> AxisBand:
    """Positional source band: ``out[i] = sum_j r[j - l] q[...]`` per axis.

    The single pseudo-trial axis keeps the band compatible with the
    separable-pass machinery.
    """
    interior = np.asarray(K.bilinear_kernel(n_s, n_b, False, False).table)[None, :]
    if not truncated:
        return AxisBand(interior=interior, edge_rows=[])
    ext = basis_extension(n_b)
    L = num_nodes - 1
    if L < min_axis_length(n_b):
        raise ValidationError(
            f"axis with {num_nodes} nodes too short for degree {n_b} edge tables"
        )
    fc = first_clean_position(n_b)
    ew = ext + fc
    nc = num_nodes + 2 * ext
    rows = []
    for i in range(ew):
        rows.append((i, np.asarray(K.edge_bilinear_table(n_s, n_b, i - ext))[None, :]))
    for i in range(nc - ew, nc):
        p_left = L - (i - ext)
        rows.append((i, np.asarray(K.edge_bilinear_table(n_s, n_b, p_left))[None, ::-1]))
    return AxisBand(interior=interior, edge_rows=rows)


def surface_bilinear_positions(n_b, num_nodes) -> np.ndarray:
    """Tangential surface factors: ``[a + n_b, i]`` holds the integral over
    the axis span of ``beta(u - p) beta(u - (p + a))`` for position p = i - ext."""
    ext = basis_extension(n_b)
    L = num_nodes - 1
    nc = num_nodes + 2 * ext
    fc = first_clean_position(n_b)
    ew = ext + fc
    full = np.asarray(K.bilinear_kernel(n_b, n_b, False, False).table)
    rw = (len(full) - 1) // 2
    sl = slice(rw - n_b, rw + n_b + 1)
    out = np.tile(full[sl][:, None], (1, nc))
    for i in range(min(ew, nc)):
        out[:, i] = np.asarray(K.edge_bilinear_table(n_b, n_b, i - ext))[sl]
    for i in range(max(nc - ew, 0), nc):
        p_left = L - (i - ext)
        out[:, i] = np.asarray(K.edge_bilinear_table(n_b, n_b, p_left))[sl][::-1]
    return out


def surface_single_positions(n_b, num_nodes) -> np.ndarray:
    """Integral of one spline over the axis span, per extended node position."""
    ext = basis_extension(n_b)
    L = num_nodes - 1
    nc = num_nodes + 2 * ext
    fc = first_clean_position(n_b)
    ew = ext + fc
    out = np.ones(nc)
    for i in range(min(ew, nc)):
        out[i] = K.integrate_product([(n_b, float(i - ext), 0)], lo=0.0)
    for i in range(max(nc - ew, 0), nc):
        out[i] = K.integrate_product([(n_b, float(L - (i - ext)), 0)], lo=0.0)
    return out


def face_point_values(n_b, num_nodes, side) -> np.ndarray:
    """``beta(u_face - p)`` per extended node position for a box face."""
    ext = basis_extension(n_b)
    nc = num_nodes + 2 * ext
    L = num_nodes - 1
    uf = 0.0 if side == 0 else float(L)
    p = np.arange(nc) - ext
    return eval_bspline(n_b, uf - p.astype(float))


@dataclass
class FaceTerm:
    """Separable surface contribution of one box face.

    ``pair_factors[ax]`` has shape (A_ax, nc_ax): the normal axis carries
    ``beta(uf-p) beta(uf-p-a)`` point products, tangential axes the positional
    scalar-product integrals scaled by their grid step.  ``rhs_factors`` are
    the single-spline analogues for the penalty right-hand side (or None).
    """

    axis: int
    weight: float
    pair_factors: list
    rhs_weight: float
    rhs_factors: list
    normal_span: tuple  # (lo, hi) of nonzero normal positions


def make_face_term(n_b, cext_nodes, num_nodes_axes, step, axis, side, weight,
                   rhs_value=None) -> FaceTerm:
    d = len(num_nodes_axes)
    ext = basis_extension(n_b)
    pair, rhs = [], []
    for ax in range(d):
        n_nodes = num_nodes_axes[ax]
        nc = cext_nodes[ax]
        if ax == axis:
            vals = face_point_values(n_b, n_nodes, side)
            A = 2 * n_b + 1
            NF = np.zeros((A, nc))
            for ai, a in enumerate(range(-n_b, n_b + 1)):
                lo = max(0, -a)
                hi = min(nc, nc - a)
                NF[ai, lo:hi] = vals[lo:hi] * vals[lo + a : hi + a]
            pair.append(NF)
            rhs.append(vals)
        else:
            pair.append(surface_bilinear_positions(n_b, n_nodes) * step[ax])
            rhs.append(surface_single_positions(n_b, n_nodes) * step[ax])
    vals_n = face_point_values(n_b, num_nodes_axes[axis], side)
    nz = np.nonzero(vals_n)[0]
    span = (int(nz[0]), int(nz[-1]) + 1) if len(nz) else (0, 0)
    return FaceTerm(
        axis=axis,
        weight=float(weight),
        pair_factors=pair,
        rhs_weight=0.0 if rhs_value is None else float(rhs_value * weight),
        rhs_factors=rhs,
        normal_span=span,
    )


# ---------------------------------------------------------------------------
# separable passes


def _axis_pass(V, table_int, edge_rows, out_len, lo):
    """Contract the last (padded) axis of ``V``: returns (A, lead..., out_len).

    ``lo`` is the global position of local output 0, used to match the
    edge-row positions.
    """
    A, B = table_int.shape
    lead_shape = V.shape[:-1]
    V2 = np.ascontiguousarray(V.reshape(-1, V.shape[-1]))
    W = sliding_window_view(V2, B, axis=1)  # (R, out_len, B)
    out = np.tensordot(table_int, W, axes=([1], [2]))  # (A, R, out_len)
    for pos, tab in edge_rows:
        p = pos - lo
        if 0 <= p < out_len:
            out[:, :, p] = np.tensordot(tab, W[:, p, :], axes=([1], [1]))
    return out.reshape((A,) + lead_shape + (out_len,))


def extract_window(src, offset, reach, span, dtype=None):
    """Window-complete block of a field, zero beyond the source grid.

    Output index ``j`` (padded coordinates, range ``[lo, hi + 2*reach)`` per
    axis for block ``span``) holds ``src[j - offset]``; nothing full-grid is
    materialized.  The zero fill is exact: positions beyond the source grid
    meet vanishing kernel values only.
    """
    d = src.ndim
    shape = tuple(hi - lo + 2 * reach for lo, hi in span)
    out = np.zeros(shape, dtype=dtype or src.dtype)
    src_sl, dst_sl = [], []
    for ax, (lo, hi) in enumerate(span):
        s0 = max(lo - offset, 0)
        s1 = min(hi + 2 * reach - offset, src.shape[ax])
        if s1 <= s0:
            return out
        src_sl.append(slice(s0, s1))
        dst_sl.append(slice(s0 - (lo - offset), s1 - (lo - offset)))
    out[tuple(dst_sl)] = src[tuple(src_sl)]
    return out


def term_stencil(field, offset, bands, span):
    """Stencil slices of one separable term over the block ``span``.

    ``field`` lives on its own extended grid; ``offset`` aligns it so output
    position ``i`` reads window ``i .. i + n_param - 1`` (see
    :func:`extract_window`).  Returns an array of shape
    ``(A_0, .., A_{d-1}, hi_0 - lo_0, .., hi_{d-1} - lo_{d-1})``.
    """
    d = len(bands)
    reach = (bands[0].n_param - 1) // 2
    V = extract_window(field, offset, reach, span)
    for j in range(d - 1, -1, -1):
        nlead = d - 1 - j  # a-axes accumulated so far
        V = np.moveaxis(V, nlead + j, -1)
        V = _axis_pass(V, bands[j].interior, bands[j].edge_rows,
                       span[j][1] - span[j][0], span[j][0])
        V = np.moveaxis(V, -1, (nlead + 1) + j)
    return V


# ---------------------------------------------------------------------------
# block decomposition


def block_spans(cext, n_b, itemsize, target_bytes):
    """Partition the extended grid into blocks sized to a buffer target.

    The largest per-block buffer holds ``(2 n_b + 1)^d`` stencil slices, so
    block volume is capped at ``target_bytes / ((2nb+1)^d * itemsize)``.
    Later axes split last to keep inner loops stride-1.  The partition
    depends only on the arguments, never on the worker count.
    """
    d = len(cext)
    afl = (2 * n_b + 1) ** d
    max_vol = max(int(target_bytes // (afl * itemsize)), 1)
    counts = [1] * d

    def vol():
        return math.prod(math.ceil(cext[ax] / counts[ax]) for ax in range(d))

    while vol() > max_vol:
        # split the axis with the largest current chunk, preferring early axes
        sizes = [math.ceil(cext[a] / counts[a]) for a in range(d)]
        ax = int(np.argmax(sizes))
        if sizes[ax] <= 1:
            break
        counts[ax] += 1
    spans = []
    per_axis = []
    for a in range(d):
        edges = np.linspace(0, cext[a], counts[a] + 1).astype(int)
        per_axis.append([(int(edges[i]), int(edges[i + 1]))
                         for i in range(counts[a]) if edges[i + 1] > edges[i]])
    for combo in np.ndindex(*[len(p) for p in per_axis]):
        spans.append(tuple(per_axis[a][combo[a]] for a in range(d)))
    return spans


# ---------------------------------------------------------------------------
# assembled system data


@dataclass
class SystemData:
    """Everything the operator strategies share.

    Box domains: ``stiff_bands``/``mass_bands`` carry positional edge tables
    and ``faces`` the separable surface terms; ``bnode_rows`` is empty.
    Mask domains: bands are free-space (interior rows only), boundary rows
    come from ``bsten`` gathered at ``bnode_rows``; ``active`` masks the
    unknowns kept in the system.
    """

    domain: object
    n_b: int
    n_p: int
    step: tuple
    cext: tuple
    ext: int
    dtype: np.dtype
    stiff_bands: list  # per term: list of AxisBand per axis
    stiff_scales: list
    mass_bands: list
    mass_scale: float
    dfield: np.ndarray  # parameter fields on their extended grids
    mfield: np.ndarray
    pad_param: int  # window alignment of the parameter fields
    faces: list
    spans: list
    active: np.ndarray = None  # None: every unknown active
    bnode_rows: np.ndarray = None  # flat extended-grid indices (mask only)
    bsten: np.ndarray = None  # (n_boundary, (2nb+1)^d)
    brow_of_flat: np.ndarray = None  # flat index -> compact boundary row or -1
    dropped_unknowns: int = 0
    surface_rhs_entries: list = None  # [(flat rows, per-node values)] mask penalty rhs

    @property
    def dim(self):
        return len(self.cext)

    @property
    def a_offsets(self):
        return tuple(np.arange(-self.n_b, self.n_b + 1) for _ in range(self.dim))

    @property
    def a_flat_size(self):
        return (2 * self.n_b + 1) ** self.dim

    def num_unknowns(self):
        return int(np.prod(self.cext))


def _is_box(domain):
    return isinstance(domain, BoxDomain)


def build_system(domain, n_b, n_p, dcoef_ext, mcoef_ext, face_specs, dtype=np.float64,
                 block_bytes=4 << 20):
    """Construct :class:`SystemData` for either domain kind.

    ``dcoef_ext``/``mcoef_ext`` live on the extended parameter grid
    (extension ``basis_extension(n_p)``).  ``face_specs`` is a list of
    ``(axis, side, weight, rhs_value_or_None)`` surface terms; on mask
    domains the same weights apply to every exposed mask face.
    """
    grid = domain.grid
    d = grid.dim
    ext = basis_extension(n_b)
    ext_p = basis_extension(n_p)
    cext = tuple(n + 2 * ext for n in grid.extents)
    mw = param_reach(n_b, n_p)
    dtype = np.dtype(dtype)

    dfield = np.ascontiguousarray(dcoef_ext, dtype=dtype)
    mfield = np.ascontiguousarray(mcoef_ext, dtype=dtype)
    pad_param = ext + mw - ext_p

    def cast_band(band):
        return AxisBand(
            interior=band.interior.astype(dtype),
            edge_rows=[(p, t.astype(dtype)) for p, t in band.edge_rows],
        )

    box = _is_box(domain)
    stiff_bands, stiff_scales = [], []
    vol = float(np.prod(grid.step))
    for comp in range(d):
        bands = [
            cast_band(trilinear_axis_band(n_b, n_p, ax == comp, ax == comp,
                                          grid.extents[ax], truncated=box))
            for ax in range(d)
        ]
        stiff_bands.append(bands)
        stiff_scales.append(vol / grid.step[comp] ** 2)
    mass_bands = [
        cast_band(trilinear_axis_band(n_b, n_p, False, False, grid.extents[ax],
                                      truncated=box))
        for ax in range(d)
    ]

    faces = []
    if box:
        for axis, side, weight, rhs_value in face_specs:
            faces.append(
                make_face_term(n_b, cext, grid.extents, grid.step, axis, side,
                               weight, rhs_value)
            )

    spans = block_spans(cext, n_b, dtype.itemsize, block_bytes)
    data = SystemData(
        domain=domain, n_b=n_b, n_p=n_p, step=grid.step, cext=cext, ext=ext,
        dtype=dtype, stiff_bands=stiff_bands, stiff_scales=stiff_scales,
        mass_bands=mass_bands, mass_scale=vol, dfield=dfield, mfield=mfield,
        pad_param=pad_param, faces=faces, spans=spans,
    )
    if not box:
        _attach_mask_boundary(data, domain, dcoef_ext, mcoef_ext, face_specs)
    return data


def stencil_block(data: SystemData, span) -> np.ndarray:
    """Full stencil slices (volume + box surface terms) over ``span``."""
    out = None
    for bands, scale in zip(data.stiff_bands, data.stiff_scales):
        term = term_stencil(data.dfield, data.pad_param, bands, span)
        term *= scale
        out = term if out is None else out + term
    mass = term_stencil(data.mfield, data.pad_param, data.mass_bands, span)
    mass *= data.mass_scale
    out += mass
    for ft in data.faces:
        _add_face_block(out, ft, span, data.dim)
    return out


def _add_face_block(P, ft: FaceTerm, span, d):
    lo_n, hi_n = span[ft.axis]
    if hi_n <= ft.normal_span[0] or lo_n >= ft.normal_span[1]:
        return
    factors = [ft.pair_factors[ax][:, span[ax][0]:span[ax][1]] for ax in range(d)]
    if d == 1:
        P += ft.weight * factors[0]
    elif d == 2:
        P += ft.weight * np.einsum("ax,by->abxy", factors[0], factors[1])
    else:
        P += ft.weight * np.einsum("ax,by,cz->abcxyz", factors[0], factors[1], factors[2])


def face_rhs(data: SystemData) -> np.ndarray:
    """Penalty right-hand-side surface additions over the whole grid."""
    out = np.zeros(data.cext)
    for ft in data.faces:
        if ft.rhs_weight == 0.0:
            continue
        f = ft.rhs_factors
        if data.dim == 1:
            out += ft.rhs_weight * f[0]
        elif data.dim == 2:
            out += ft.rhs_weight * np.einsum("x,y->xy", f[0], f[1])
        else:
            out += ft.rhs_weight * np.einsum("x,y,z->xyz", f[0], f[1], f[2])
    return out


# ---------------------------------------------------------------------------
# mask boundary machinery


def _local_tensor(tables_per_axis):
    """Tensor product of per-axis (j1, j2, b) cell tables, flattened per kind."""
    out = None
    for T in tables_per_axis:
        if out is None:
            out = T
        else:
            out = np.einsum("ijb,IJB->iIjJbB", out, T).reshape(
                out.shape[0] * T.shape[0],
                out.shape[1] * T.shape[1],
                out.shape[2] * T.shape[2],
            )
    return out


def _cells_near_boundary(occ, bnodes, ext, r):
    """Occupied cells touched by at least one non-interior active node."""
    d = occ.ndim
    # cell c is touched by extended nodes c + ext - r + 1 .. c + ext + r
    padded = np.pad(bnodes, [(r, r)] * d, mode="constant", constant_values=False)
    acc = np.zeros(occ.shape, dtype=bool)
    for offsets in np.ndindex(*(2 * r,) * d):
        sl = tuple(
            slice(off + ext + 1, off + ext + 1 + occ.shape[ax])
            for ax, off in enumerate(offsets)
        )
        acc |= padded[sl]
    return acc & occ


def _attach_mask_boundary(data: SystemData, domain: MaskDomain, dcoef_ext, mcoef_ext,
                          face_specs):
    n_b, n_p = data.n_b, data.n_p
    d = data.dim
    ext = data.ext
    ext_p = basis_extension(n_p)
    occ = domain.occupancy()
    act = active_nodes(domain, n_b)
    inter = interior_nodes(domain, n_b)
    bnodes = act & ~inter
    data.active = act
    data.dropped_unknowns = int(np.prod(data.cext) - act.sum())

    brow_of_flat = np.full(int(np.prod(data.cext)), -1, dtype=np.int64)
    bflat = np.flatnonzero(bnodes.ravel())
    brow_of_flat[bflat] = np.arange(len(bflat))
    data.bnode_rows = bflat
    data.brow_of_flat = brow_of_flat
    data.surface_rhs_entries = []
    afl = data.a_flat_size
    bsten = np.zeros((len(bflat), afl))

    r = support_cell_radius(n_b)
    bcells = _cells_near_boundary(occ, bnodes, ext, r)
    cells = np.argwhere(bcells)
    if len(cells) == 0:
        _attach_mask_surface(data, domain, face_specs, bsten)
        data.bsten = bsten
        return

    js = K.cell_node_offsets(n_b)
    bs = K.cell_node_offsets(n_p)
    nj, nbp = len(js), len(bs)
    vol = float(np.prod(data.step))

    # dense local tensors: stiffness (sum over gradient components) and mass
    T_stiff = np.zeros((nj ** d, nj ** d, nbp ** d))
    for comp in range(d):
        tables = [
            np.asarray(K.cell_trilinear_table(n_b, n_p, ax == comp, ax == comp)[2])
            for ax in range(d)
        ]
        T_stiff += _local_tensor(tables) * (vol / data.step[comp] ** 2)
    T_mass = _local_tensor(
        [np.asarray(K.cell_trilinear_table(n_b, n_p, False, False)[2])] * d
    ) * vol

    # flat offsets for gathers/scatters
    dex = np.asarray(dcoef_ext, dtype=float)
    mex = np.asarray(mcoef_ext, dtype=float)
    a_range = np.arange(-n_b, n_b + 1)
    a_index = {int(a): i for i, a in enumerate(a_range)}

    j_tuples = list(np.ndindex(*(nj,) * d))
    b_tuples = list(np.ndindex(*(nbp,) * d))
    # aflat index per (j1, j2) pair; pairs with |a| > n_b have disjoint
    # supports (zero table entries) and are excluded
    pair_a = np.zeros((nj ** d, nj ** d), dtype=np.int64)
    pair_ok = np.ones((nj ** d, nj ** d), dtype=bool)
    for i1, t1 in enumerate(j_tuples):
        for i2, t2 in enumerate(j_tuples):
            idx = 0
            for ax in range(d):
                a = js[t1[ax]] - js[t2[ax]]
                if abs(a) > n_b:
                    pair_ok[i1, i2] = False
                    break
                idx = idx * len(a_range) + a_index[int(a)]
            pair_a[i1, i2] = idx if pair_ok[i1, i2] else 0

    chunk = max(1, int(2e7) // (nj ** d * nj ** d))
    cstrides = np.array(data.cext).cumprod()[::-1]
    for start in range(0, len(cells), chunk):
        cc = cells[start:start + chunk]
        ncc = len(cc)
        # gather parameter windows: value at spline index c + b -> array c + b + ext_p
        dwin = np.empty((ncc, nbp ** d))
        mwin = np.empty((ncc, nbp ** d))
        for ib, tb in enumerate(b_tuples):
            idx = tuple(cc[:, ax] + bs[tb[ax]] + ext_p for ax in range(d))
            dwin[:, ib] = dex[idx]
            mwin[:, ib] = mex[idx]
        loc = np.einsum("JKB,cB->cJK", T_stiff, dwin)
        loc += np.einsum("JKB,cB->cJK", T_mass, mwin)
        # rows: test node spline index c + j2 -> extended array index c + j2 + ext
        rows = np.empty((ncc, nj ** d), dtype=np.int64)
        for i2, t2 in enumerate(j_tuples):
            flat = np.zeros(ncc, dtype=np.int64)
            for ax in range(d):
                flat = flat * data.cext[ax] + (cc[:, ax] + js[t2[ax]] + ext)
            rows[:, i2] = flat
        crow = brow_of_flat[rows]  # (ncc, nj^d); -1 for interior/inactive rows
        sel = crow >= 0
        # scatter: bsten[crow[c, j2], pair_a[j1, j2]] += loc[c, j1, j2]
        tgt_rows = np.broadcast_to(crow[:, None, :], loc.shape)
        tgt_cols = np.broadcast_to(pair_a[None, :, :], loc.shape)
        m = np.broadcast_to(sel[:, None, :] & pair_ok[None, :, :], loc.shape)
        np.add.at(bsten, (tgt_rows[m], tgt_cols[m]), loc[m])

    _attach_mask_surface(data, domain, face_specs, bsten)
    data.bsten = bsten


def exposed_faces(occ, axis, side):
    """Cells whose ``(axis, side)`` face borders an unoccupied cell or the grid."""
    d = occ.ndim
    shifted = np.zeros_like(occ)
    sl_src = [slice(None)] * d
    sl_dst = [slice(None)] * d
    if side == 0:
        sl_src[axis] = slice(0, occ.shape[axis] - 1)
        sl_dst[axis] = slice(1, occ.shape[axis])
    else:
        sl_src[axis] = slice(1, occ.shape[axis])
        sl_dst[axis] = slice(0, occ.shape[axis] - 1)
    shifted[tuple(sl_dst)] = occ[tuple(sl_src)]
    return occ & ~shifted


def _attach_mask_surface(data: SystemData, domain: MaskDomain, face_specs, bsten):
    """Add penalty/Robin surface terms on every exposed mask face."""
    if not face_specs:
        return
    # mask domains use one global surface weight (validated upstream)
    weight = face_specs[0][2]
    rhs_value = face_specs[0][3]
    n_b = data.n_b
    d = data.dim
    ext = data.ext
    occ = domain.occupancy()
    js = K.cell_node_offsets(n_b)
    nj = len(js)
    fc = first_clean_position(n_b)
    a_range = np.arange(-n_b, n_b + 1)
    a_index = {int(a): i for i, a in enumerate(a_range)}

    cellR = np.asarray(K.cell_bilinear_table(n_b, n_b)[2])  # (nj, nj)
    normal_off = np.arange(-(fc - 1), fc)  # node offsets with beta != 0 at a face

    data.surface_rhs_entries = []  # [(flat_rows, values)] consumed by rhs assembly

    for axis in range(d):
        tang_axes = [ax for ax in range(d) if ax != axis]
        tscale = float(np.prod([data.step[ax] for ax in tang_axes])) if tang_axes else 1.0
        for side in (0, 1):
            cells = np.argwhere(exposed_faces(occ, axis, side))
            if len(cells) == 0:
                continue
            # normal factor: node spline index = c_axis + jn, value beta(side - jn)
            jn = normal_off + side
            vn = eval_bspline(n_b, (side - jn).astype(float))
            # local surface matrix over (normal x tangential) node offsets
            # rows/cols enumerated as tuples (jn, jt...)
            offs_axes = [jn if ax == axis else js for ax in range(d)]
            loc_1d = [np.outer(vn, vn) if ax == axis else cellR for ax in range(d)]
            tuples = list(np.ndindex(*[len(o) for o in offs_axes]))
            nloc = len(tuples)
            S = None
            for ax in range(d):
                tab = loc_1d[ax]
                S = tab if S is None else np.einsum("ij,IJ->iIjJ", S, tab).reshape(
                    S.shape[0] * tab.shape[0], S.shape[1] * tab.shape[1]
                )
            S = S * (weight * tscale)
            rows = np.empty((len(cells), nloc), dtype=np.int64)
            for i2, t2 in enumerate(tuples):
                flat = np.zeros(len(cells), dtype=np.int64)
                for ax in range(d):
                    off = offs_axes[ax][t2[ax]]
                    flat = flat * data.cext[ax] + (cells[:, ax] + off + ext)
                rows[:, i2] = flat
            crow = data.brow_of_flat[rows]
            # every node with support on an exposed face is non-interior;
            # pairs beyond the stencil window have zero surface product
            pair_a = np.zeros((nloc, nloc), dtype=np.int64)
            pair_ok = np.ones((nloc, nloc), dtype=bool)
            for i1, t1 in enumerate(tuples):
                for i2, t2 in enumerate(tuples):
                    idx = 0
                    for ax in range(d):
                        a = offs_axes[ax][t1[ax]] - offs_axes[ax][t2[ax]]
                        if abs(a) > n_b:
                            pair_ok[i1, i2] = False
                            break
                        idx = idx * len(a_range) + a_index[int(a)]
                    pair_a[i1, i2] = idx if pair_ok[i1, i2] else 0
            vals = np.broadcast_to(S[None, :, :], (len(cells), nloc, nloc))
            tgt_rows = np.broadcast_to(crow[:, None, :], vals.shape)
            tgt_cols = np.broadcast_to(pair_a[None, :, :], vals.shape)
            msel = (tgt_rows >= 0) & np.broadcast_to(pair_ok[None, :, :], vals.shape)
            np.add.at(bsten, (tgt_rows[msel], tgt_cols[msel]), vals[msel])

            if rhs_value is not None:
                cellS = np.asarray(K.cell_single_table(n_b)[1])
                rvec = None
                for ax in range(d):
                    v = vn if ax == axis else cellS
                    rvec = v if rvec is None else np.einsum("i,I->iI", rvec, v).ravel()
                rvec = rvec * (weight * rhs_value * tscale)
                data.surface_rhs_entries.append((rows, rvec))
