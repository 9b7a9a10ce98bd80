"""Uniform-grid domains: axis-aligned boxes and voxel-mask geometries.

Cells (not nodes) carry the occupancy information; a mask entry covers one
grid cell, so truncated integrals near the boundary are exactly sums of
whole-cell integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .bspline import BSplineBasis
from .errors import EmptyDomainError, ValidationError
from .kernels import cell_trilinear_table


class CellClass(IntEnum):
    EXTERIOR = 0
    BOUNDARY = 1
    INTERIOR = 2


@dataclass(frozen=True)
class Grid:
    """Node grid: extents are node counts, nodes sit at origin + k*h."""

    extents: tuple
    step: tuple
    origin: tuple = None

    def __post_init__(self):
        extents = tuple(int(e) for e in np.atleast_1d(self.extents))
        step = tuple(float(h) for h in np.atleast_1d(self.step))
        origin = (0.0,) * len(extents) if self.origin is None else tuple(
            float(o) for o in np.atleast_1d(self.origin)
        )
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "origin", origin)
        if not 1 <= len(extents) <= 3:
            raise ValidationError(f"dimension {len(extents)} not in 1..3")
        if len(step) != len(extents) or len(origin) != len(extents):
            raise ValidationError("extents, step and origin must have matching length")
        if any(e < 2 for e in extents):
            raise ValidationError(f"need at least 2 nodes per axis, got {extents}")
        if any(h <= 0 for h in step):
            raise ValidationError(f"grid steps must be positive, got {step}")

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def cell_extents(self) -> tuple:
        return tuple(e - 1 for e in self.extents)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.extents))

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cell_extents))

    @property
    def lengths(self) -> tuple:
        return tuple((e - 1) * h for e, h in zip(self.extents, self.step))

    def node_coordinates(self, axis) -> np.ndarray:
        return self.origin[axis] + self.step[axis] * np.arange(self.extents[axis])


@dataclass(frozen=True)
class BoxDomain:
    """The full rectangular domain spanned by the grid."""

    grid: Grid

    @property
    def dim(self) -> int:
        return self.grid.dim

    def occupancy(self) -> np.ndarray:
        return np.ones(self.grid.cell_extents, dtype=bool)


@dataclass(frozen=True)
class MaskDomain:
    """Domain given by a boolean cell-occupancy mask over the grid's cells."""

    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        if mask.shape != self.grid.cell_extents:
            raise ValidationError(
                f"mask extents {mask.shape} != cell extents {self.grid.cell_extents}"
            )
        if not mask.any():
            raise EmptyDomainError("mask has no occupied cells")

    @property
    def dim(self) -> int:
        return self.grid.dim

    def occupancy(self) -> np.ndarray:
        return self.mask


def support_cell_radius(degree) -> int:
    """Cells on each side of a node that its spline support touches."""
    return int(math.ceil((degree + 1) / 2.0))


def kernel_support_width(n_b, n_p) -> int:
    """Width in cells of the kernel support window around a cell."""
    return n_b + n_p + 1


def _window_all_true(occ, half_lo, half_hi):
    """For each cell, whether every cell in the centered window is occupied.

    Cells beyond the grid count as unoccupied.  ``half_lo``/``half_hi`` are
    the window reach on each side.
    """
    out = occ.copy()
    for axis in range(occ.ndim):
        pad = [(0, 0)] * occ.ndim
        pad[axis] = (half_lo, half_hi)
        padded = np.pad(out, pad, mode="constant", constant_values=False)
        acc = np.ones_like(out, dtype=bool)
        for s in range(half_lo + half_hi + 1):
            sl = [slice(None)] * occ.ndim
            sl[axis] = slice(s, s + occ.shape[axis])
            acc &= padded[tuple(sl)]
        out = acc
    return out


def classify_cells(domain, basis: BSplineBasis = None, n_p: int = None) -> np.ndarray:
    """Label every cell Interior/Boundary/Exterior.

    A cell is Interior when the (n_b + n_p + 1)-wide kernel window around it
    lies in occupied cells (kernels there are the translation-invariant
    free-space tables); occupied cells that fail this are Boundary,
    unoccupied cells are Exterior.  The window reach is symmetric
    (``width // 2`` cells per side; even widths round up to the next odd
    width) so classification is reflection-invariant.  Cells beyond the grid
    edge count as unoccupied.
    """
    occ = domain.occupancy()
    if not occ.any():
        raise EmptyDomainError("domain has no occupied cells")
    n_b = 1 if basis is None else basis.degree
    if n_p is None:
        n_p = n_b
    half = kernel_support_width(n_b, n_p) // 2
    interior = _window_all_true(occ, half, half)
    out = np.full(occ.shape, CellClass.EXTERIOR, dtype=np.uint8)
    out[occ] = CellClass.BOUNDARY
    out[occ & interior] = CellClass.INTERIOR
    return out


def classification_report(classes) -> dict:
    """Counts and fractions of the domain/boundary kernel split."""
    interior = int(np.sum(classes == CellClass.INTERIOR))
    boundary = int(np.sum(classes == CellClass.BOUNDARY))
    occupied = interior + boundary
    return {
        "interior_cells": interior,
        "boundary_cells": boundary,
        "exterior_cells": int(np.sum(classes == CellClass.EXTERIOR)),
        "interior_fraction": interior / occupied if occupied else 0.0,
        "boundary_fraction": boundary / occupied if occupied else 0.0,
    }


def interior_nodes(domain, degree) -> np.ndarray:
    """Mask over the *extended* unknown grid: full spline support occupied.

    A node (unknown) is interior when every cell its support touches is
    occupied; only these rows may use free-space kernels.
    """
    occ = domain.occupancy()
    ext = basis_extension(degree)
    r = support_cell_radius(degree)
    d = occ.ndim
    # node at extended index i (spline index i - ext) touches cells
    # i - ext - r .. i - ext + r - 1; with pad ext + r these are offsets 0..2r-1
    shape = tuple(n + 1 + 2 * ext for n in occ.shape)
    padded = np.pad(occ, [(ext + r, ext + r)] * d, mode="constant", constant_values=False)
    acc = np.ones(shape, dtype=bool)
    for offsets in np.ndindex(*(2 * r,) * d):
        sl = tuple(slice(off, off + shape[ax]) for ax, off in enumerate(offsets))
        acc &= padded[sl]
    return acc


def active_nodes(domain, degree) -> np.ndarray:
    """Mask over the extended unknown grid: support touches an occupied cell."""
    occ = domain.occupancy()
    ext = basis_extension(degree)
    r = support_cell_radius(degree)
    d = occ.ndim
    shape = tuple(n + 1 + 2 * ext for n in occ.shape)
    pad_width = [(ext + r, ext + r)] * d
    padded = np.pad(occ, pad_width, mode="constant", constant_values=False)
    acc = np.zeros(shape, dtype=bool)
    for offsets in np.ndindex(*(2 * r,) * d):
        sl = tuple(slice(off, off + shape[ax]) for ax, off in enumerate(offsets))
        acc |= padded[sl]
    return acc


def basis_extension(degree) -> int:
    """Unknown-grid extension per side (splines centered beyond the edge)."""
    return max(int(math.ceil((degree + 1) / 2.0)) - 1, 0)


def boundary_cell_quadrature(domain, cell, basis: BSplineBasis, integrand="stiffness",
                             n_p=None):
    """Local kernel contribution of one boundary cell.

    Returns ``(node_offsets, param_offsets, tensor)`` where ``tensor`` has
    axes (trial..., test..., param...) flattened per kind, holding the exact
    integrals of the selected integrand over the (fully occupied) cell.
    ``integrand`` picks "stiffness" (per-axis gradient sum, unit steps) or
    "mass".  Misuse on a non-boundary cell raises ValueError.
    """
    classes = classify_cells(domain, basis, n_p=n_p)
    cell = tuple(int(c) for c in np.atleast_1d(cell))
    if classes[cell] != CellClass.BOUNDARY:
        raise ValidationError(f"cell {cell} is not a boundary cell")
    n_b = basis.degree
    n_p = n_b if n_p is None else n_p
    d = domain.dim
    volume = float(np.prod(basis.step))

    def tensor_product(tables):
        out = None
        for T in tables:
            if out is None:
                out = T
            else:
                out = np.einsum("ijb,IJB->iIjJbB", out, T).reshape(
                    out.shape[0] * T.shape[0],
                    out.shape[1] * T.shape[1],
                    out.shape[2] * T.shape[2],
                )
        return out

    js, bs, _ = cell_trilinear_table(n_b, n_p, False, False)
    if integrand == "mass":
        tables = [cell_trilinear_table(n_b, n_p, False, False)[2]] * d
        return js, bs, volume * tensor_product(tables)
    if integrand != "stiffness":
        raise ValidationError(f"unknown integrand {integrand!r}")
    out = np.zeros((len(js) ** d, len(js) ** d, len(bs) ** d))
    for comp in range(d):
        tables = [
            cell_trilinear_table(n_b, n_p, axis == comp, axis == comp)[2]
            for axis in range(d)
        ]
        out += tensor_product(tables) * (volume / basis.step[comp] ** 2)
    return js, bs, out


def make_leg_mask(extents=(60, 60, 240), rng=None):
    """Synthetic leg-like mask: a tapered tube with an inner 'arteria' tube.

    Returns ``(mask, arteria)`` boolean cell arrays; used by the desk-scale
    heat-problem runs and the demos.
    """
    nx, ny, nz = (e - 1 for e in extents)
    z = (np.arange(nz) + 0.5) / nz
    cx = nx / 2.0 + 0.08 * nx * np.sin(2 * np.pi * z)
    cy = ny / 2.0 + 0.06 * ny * np.cos(np.pi * z)
    radius = nx * (0.30 - 0.10 * z)  # tapers toward the far end
    X, Y = np.meshgrid(np.arange(nx) + 0.5, np.arange(ny) + 0.5, indexing="ij")
    mask = np.zeros((nx, ny, nz), dtype=bool)
    arteria = np.zeros_like(mask)
    for k in range(nz):
        r2 = (X - cx[k]) ** 2 + (Y - cy[k]) ** 2
        mask[:, :, k] = r2 <= radius[k] ** 2
        arteria[:, :, k] = r2 <= (0.22 * radius[k]) ** 2
    return mask, arteria
