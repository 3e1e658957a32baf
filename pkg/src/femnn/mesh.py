"""Structured quadrilateral meshes, uniform refinement and coarse-cell patches.

Node numbering is global row-major: node ``(i, j)`` (column ``i``, row ``j``)
has id ``j * (nx + 1) + i``. Cells list their corners counterclockwise
starting at the south-west corner.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Invalid mesh or experiment configuration."""


class StructureError(ValueError):
    """Two meshes or solutions do not fit together (e.g. not nested)."""


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigurationError(f"degenerate rectangle {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    def as_list(self):
        return [self.x0, self.x1, self.y0, self.y1]


UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class MeshLevel:
    rect: Rect
    nx: int
    ny: int
    h: float
    nodes: np.ndarray
    cells: np.ndarray
    boundary_mask: np.ndarray
    level: int = 0

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def interior(self):
        """Global ids of the interior (free) nodes, ascending."""
        return np.flatnonzero(~self.boundary_mask)

    def node_id(self, i, j):
        return j * (self.nx + 1) + i

    def same_grid(self, other):
        return self.rect == other.rect and self.nx == other.nx and self.ny == other.ny

    def to_dict(self):
        return {
            "rect": self.rect.as_list(),
            "nx": self.nx,
            "ny": self.ny,
            "h": self.h,
            "level": self.level,
            "nodes": self.nodes.tolist(),
            "cells": self.cells.tolist(),
            "boundary_mask": self.boundary_mask.astype(int).tolist(),
        }


def build_mesh(rect: Rect, nx: int, ny: int, level: int = 0) -> MeshLevel:
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    hx = rect.width / nx
    hy = rect.height / ny
    if not np.isclose(hx, hy, rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"non-square cells: hx={hx}, hy={hy}")

    # x0 + i*h keeps coarse coordinates bit-identical after refinement only when
    # computed from the integer index scaled by the rectangle size.
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    xs = rect.x0 + rect.width * (ii.ravel() / nx)
    ys = rect.y0 + rect.height * (jj.ravel() / ny)
    nodes = np.column_stack([xs, ys])

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    sw = (cj * (nx + 1) + ci).ravel()
    cells = np.column_stack([sw, sw + 1, sw + nx + 2, sw + nx + 1])

    bmask = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
    for arr in (nodes, cells, bmask):
        arr.setflags(write=False)
    return MeshLevel(rect, nx, ny, hx, nodes, cells, bmask, level)


def refine(m: MeshLevel, times: int = 1) -> MeshLevel:
    out = m
    for _ in range(times):
        out = build_mesh(out.rect, 2 * out.nx, 2 * out.ny, level=out.level + 1)
    return out


def refinement_factor(coarse: MeshLevel, fine: MeshLevel) -> int:
    """Return ``m = 2**k`` with ``fine`` the k-fold refinement of ``coarse``."""
    if coarse.rect != fine.rect:
        raise StructureError("meshes cover different rectangles")
    if fine.nx % coarse.nx or fine.ny % coarse.ny:
        raise StructureError("fine cell counts are not multiples of the coarse ones")
    m = fine.nx // coarse.nx
    if m != fine.ny // coarse.ny or m < 1 or m & (m - 1):
        raise StructureError(f"refinement factor must be a power of two, got {fine.nx}/{coarse.nx}")
    return m


def inject_indices(coarse: MeshLevel, fine: MeshLevel):
    """Cell indices and local coordinates of the fine nodes inside the coarse grid.

    Returns ``(cell_x, cell_y, a, b)`` where fine node ``n`` lies in coarse cell
    ``(cell_x[n], cell_y[n])`` at local coordinates ``(a[n], b[n])`` in [0, 1].
    Local coordinates are ratios ``r / m`` with ``m`` a power of two, hence exact.
    """
    m = refinement_factor(coarse, fine)
    I = np.tile(np.arange(fine.nx + 1), fine.ny + 1)
    J = np.repeat(np.arange(fine.ny + 1), fine.nx + 1)
    cx = np.minimum(I // m, coarse.nx - 1)
    cy = np.minimum(J // m, coarse.ny - 1)
    a = (I - cx * m) / m
    b = (J - cy * m) / m
    return cx, cy, a, b


def coarse_nodes_in_fine(coarse: MeshLevel, fine: MeshLevel) -> np.ndarray:
    """Fine-mesh node id of every coarse node (coarse node order)."""
    m = refinement_factor(coarse, fine)
    I = np.tile(np.arange(coarse.nx + 1), coarse.ny + 1) * m
    J = np.repeat(np.arange(coarse.ny + 1), coarse.nx + 1) * m
    return J * (fine.nx + 1) + I


@dataclass(frozen=True, eq=False)
class Patch:
    coarse_cell_id: int
    fine_cell_ids: np.ndarray
    fine_node_ids: np.ndarray
    coarse_node_ids: np.ndarray  # (SW, SE, NW, NE)


@dataclass(frozen=True, eq=False)
class PatchSet:
    coarse: MeshLevel
    fine: MeshLevel
    refine_steps: int
    patches: list
    fine_nodes: np.ndarray = field(repr=False)  # (N_P, (2^k+1)^2)
    coarse_nodes: np.ndarray = field(repr=False)  # (N_P, 4)
    multiplicity: np.ndarray = field(repr=False)  # n(x) per fine node

    def __len__(self):
        return len(self.patches)

    @property
    def nodes_per_patch(self):
        return (2 ** self.refine_steps + 1) ** 2

    @property
    def input_dim(self):
        return 4 + self.nodes_per_patch

    @property
    def output_dim(self):
        return self.nodes_per_patch


def build_patches(coarse: MeshLevel, fine: MeshLevel) -> PatchSet:
    m = refinement_factor(coarse, fine)
    k = m.bit_length() - 1
    if k < 1:
        raise StructureError("patches need at least one refinement step (k >= 1)")
    # fine node coordinates of the coarse corners must match bit for bit
    if not np.array_equal(fine.nodes[coarse_nodes_in_fine(coarse, fine)], coarse.nodes):
        raise StructureError("coarse node coordinates are not reproduced by the fine mesh")

    li, lj = np.meshgrid(np.arange(m + 1), np.arange(m + 1))
    local_nodes = (lj * (fine.nx + 1) + li).ravel()
    ci_, cj_ = np.meshgrid(np.arange(m), np.arange(m))
    local_cells = (cj_ * fine.nx + ci_).ravel()

    n_patches = coarse.n_cells
    fine_nodes = np.empty((n_patches, (m + 1) ** 2), dtype=np.int64)
    coarse_nodes = np.empty((n_patches, 4), dtype=np.int64)
    patches = []
    for cid in range(n_patches):
        cx, cy = cid % coarse.nx, cid // coarse.nx
        origin = (cy * m) * (fine.nx + 1) + cx * m
        fine_nodes[cid] = origin + local_nodes
        sw = coarse.node_id(cx, cy)
        coarse_nodes[cid] = (sw, sw + 1, sw + coarse.nx + 1, sw + coarse.nx + 2)
        fcells = (cy * m) * fine.nx + cx * m + local_cells
        patches.append(Patch(cid, fcells, fine_nodes[cid], coarse_nodes[cid]))

    mult = np.bincount(fine_nodes.ravel(), minlength=fine.n_nodes)
    if mult.min() < 1:
        raise StructureError("some fine nodes are not covered by any patch")
    for arr in (fine_nodes, coarse_nodes, mult):
        arr.setflags(write=False)
    return PatchSet(coarse, fine, k, patches, fine_nodes, coarse_nodes, mult)


def save_mesh_json(mesh: MeshLevel, path):
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)


def load_mesh_json(path) -> MeshLevel:
    with open(path) as fh:
        d = json.load(fh)
    mesh = build_mesh(Rect(*d["rect"]), d["nx"], d["ny"], level=d["level"])
    if not np.array_equal(mesh.nodes, np.asarray(d["nodes"])):
        raise StructureError(f"{path}: node coordinates do not match a regenerated mesh")
    return mesh
