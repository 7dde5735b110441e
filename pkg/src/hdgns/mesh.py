"""Conforming triangulations of the unit square with edge topology.

A ``Mesh`` stores vertices, CCW-oriented cells, canonically oriented edges
(low vertex index first), cell-edge incidence with orientation signs, and
the size metrics ``h_T`` / ``h_E`` needed by the HDG forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshFormatError(ValueError):
    """Raised when imported mesh data is malformed or inconsistent."""


def _rot90(v):
    """Rotate 2D vectors by -90 degrees: (tx, ty) -> (ty, -tx)."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


@dataclass
class Mesh:
    """Immutable triangulation with edge topology.

    Attributes:
        vertices: (nv, 2) coordinates.
        cells: (nc, 3) vertex indices, counter-clockwise.
        edges: (ne, 2) vertex index pairs, low index first.
        cell_edges: (nc, 3) edge index of local edge l = (l, l+1 mod 3).
        cell_edge_sign: (nc, 3) +1 if the cell traverses the edge in its
            canonical direction, -1 otherwise; the outward normal is
            ``sign * edge_normals``.
        edge_cells: (ne, 2) incident cells, second entry -1 on the boundary.
        boundary_flags: (ne,) True for boundary edges.
        edge_normals: (ne, 2) unit normal of the canonical edge direction.
        h_T: (nc,) cell diameters.
        h_E: (ne,) edge lengths.
        areas: (nc,) cell areas (positive).
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray = field(init=False)
    cell_edges: np.ndarray = field(init=False)
    cell_edge_sign: np.ndarray = field(init=False)
    edge_cells: np.ndarray = field(init=False)
    boundary_flags: np.ndarray = field(init=False)
    edge_normals: np.ndarray = field(init=False)
    h_T: np.ndarray = field(init=False)
    h_E: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshFormatError("vertices must be an (nv, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshFormatError("cells must be an (nc, 3) array")
        if self.cells.min(initial=0) < 0 or self.cells.max(initial=-1) >= len(self.vertices):
            raise MeshFormatError("cell references a vertex index out of range")
        self._orient_ccw()
        self._build_topology()

    # -- construction helpers -------------------------------------------------

    def _orient_ccw(self):
        v = self.vertices[self.cells]
        a = v[:, 1] - v[:, 0]
        b = v[:, 2] - v[:, 0]
        signed = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        flip = signed < 0
        if np.any(flip):
            self.cells = self.cells.copy()
            self.cells[flip] = self.cells[flip][:, [0, 2, 1]]
            v = self.vertices[self.cells]
            a = v[:, 1] - v[:, 0]
        b = v[:, 2] - v[:, 0]
        signed = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        if np.any(signed <= 0):
            bad = int(np.argmin(signed))
            raise MeshFormatError(f"cell {bad} has zero area")
        self.areas = signed

    def _build_topology(self):
        nc = len(self.cells)
        # local edge l connects local vertices (l, (l+1) % 3)
        a = self.cells
        pairs = np.stack([a[:, [0, 1]], a[:, [1, 2]], a[:, [2, 0]]], axis=1)  # (nc,3,2)
        lo = pairs.min(axis=2)
        hi = pairs.max(axis=2)
        canon = np.stack([lo, hi], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(canon, axis=0, return_inverse=True)
        self.edges = edges
        self.cell_edges = inverse.reshape(nc, 3)
        self.cell_edge_sign = np.where(pairs[:, :, 0] == lo, 1, -1).astype(np.int64)

        ne = len(edges)
        edge_cells = np.full((ne, 2), -1, dtype=np.int64)
        count = np.zeros(ne, dtype=np.int64)
        for c in range(nc):
            for l in range(3):
                e = self.cell_edges[c, l]
                if count[e] >= 2:
                    raise MeshFormatError(f"edge {e} shared by more than two cells")
                edge_cells[e, count[e]] = c
                count[e] += 1
        self.edge_cells = edge_cells
        self.boundary_flags = count == 1

        tang = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        self.h_E = np.linalg.norm(tang, axis=1)
        self.edge_normals = _rot90(tang) / self.h_E[:, None]

        v = self.vertices[self.cells]
        sides = np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2)
        self.h_T = sides.max(axis=1)

    # -- queries --------------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def h_max(self):
        return float(self.h_T.max())

    def interior_edge_index(self):
        """Map edge id -> contiguous interior-edge id, -1 on the boundary."""
        idx = np.full(self.num_edges, -1, dtype=np.int64)
        interior = np.flatnonzero(~self.boundary_flags)
        idx[interior] = np.arange(len(interior))
        return idx

    def outward_normals(self):
        """(nc, 3, 2) outward unit normals per cell and local edge."""
        return self.cell_edge_sign[:, :, None] * self.edge_normals[self.cell_edges]


def build_uniform_mesh(n: int) -> Mesh:
    """Uniform n x n triangulation of (0,1)^2, squares split by the
    lower-left to upper-right diagonal."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    xs = np.linspace(0.0, 1.0, n + 1)
    xv, yv = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return Mesh(vertices, np.array(cells, dtype=np.int64))


def _strip_comments(text: str):
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    return lines


def import_triangle_mesh(node_text: str, ele_text: str) -> Mesh:
    """Build a Mesh from Triangle-style .node/.ele file contents.

    Both 0- and 1-based vertex numbering are accepted; the base is taken
    from the index of the first listed vertex.
    """
    node_lines = _strip_comments(node_text)
    ele_lines = _strip_comments(ele_text)
    if not node_lines or not ele_lines:
        raise MeshFormatError("empty .node or .ele input")

    try:
        nv = int(node_lines[0][0])
        dim = int(node_lines[0][1])
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"malformed .node header: {node_lines[0]}") from exc
    if dim != 2:
        raise MeshFormatError(f".node dimension must be 2, got {dim}")
    if len(node_lines) - 1 < nv:
        raise MeshFormatError(f".node header promises {nv} vertices, found {len(node_lines) - 1}")

    try:
        ids = np.array([int(l[0]) for l in node_lines[1:nv + 1]])
        coords = np.array([[float(l[1]), float(l[2])] for l in node_lines[1:nv + 1]])
    except (ValueError, IndexError) as exc:
        raise MeshFormatError("malformed .node vertex line") from exc
    base = int(ids[0])
    if base not in (0, 1) or not np.array_equal(ids, np.arange(base, base + nv)):
        raise MeshFormatError(".node vertex indices must be consecutive, 0- or 1-based")

    try:
        nc = int(ele_lines[0][0])
        npc = int(ele_lines[0][1])
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"malformed .ele header: {ele_lines[0]}") from exc
    if npc != 3:
        raise MeshFormatError(f".ele must list 3 nodes per triangle, got {npc}")
    if len(ele_lines) - 1 < nc:
        raise MeshFormatError(f".ele header promises {nc} cells, found {len(ele_lines) - 1}")

    try:
        cells = np.array([[int(l[1]), int(l[2]), int(l[3])] for l in ele_lines[1:nc + 1]])
    except (ValueError, IndexError) as exc:
        raise MeshFormatError("malformed .ele cell line") from exc
    cells = cells - base
    if cells.min() < 0 or cells.max() >= nv:
        raise MeshFormatError(".ele references a vertex index out of range")
    return Mesh(coords, cells)


def export_triangle_mesh(mesh: Mesh):
    """Serialize a Mesh back to (.node text, .ele text), 1-based."""
    node = [f"{mesh.num_vertices} 2 0 0"]
    for i, (x, y) in enumerate(mesh.vertices, start=1):
        node.append(f"{i} {float(x)!r} {float(y)!r}")
    ele = [f"{mesh.num_cells} 3 0"]
    for i, c in enumerate(mesh.cells, start=1):
        ele.append(f"{i} {c[0] + 1} {c[1] + 1} {c[2] + 1}")
    return "\n".join(node) + "\n", "\n".join(ele) + "\n"
