"""Structured triangulations of the unit square with a Dirichlet/Neumann split.

The square (0,1)^2 is divided into ``n x n`` cells, each cut by the diagonal
from its lower-left to its upper-right corner into two counter-clockwise
triangles (lower-right first, then upper-left). No crossed diagonals: the
orientation is uniform so results are reproducible cell-for-cell.

Boundary faces are named "left", "right", "bottom", "top"; each boundary edge
carries its outward unit normal and a Dirichlet/Neumann label. Displacement
fields are nodal (P1, shape ``(n_nodes, 2)``); strain/stress fields are
cellwise packed symmetric tensors (P0, shape ``(n_cells, 3)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FACES = ("left", "right", "bottom", "top")

_FACE_NORMALS = {
    "left": np.array([-1.0, 0.0]),
    "right": np.array([1.0, 0.0]),
    "bottom": np.array([0.0, -1.0]),
    "top": np.array([0.0, 1.0]),
}

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class BoundaryEdge:
    nodes: tuple[int, int]
    normal: np.ndarray
    label: str
    face: str
    length: float
    cell: int


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with boundary metadata.

    nodes:     (n_nodes, 2) coordinates
    triangles: (n_cells, 3) CCW node indices
    areas:     (n_cells,) positive triangle areas
    edges:     boundary edges partitioning the square's boundary
    """

    nodes: np.ndarray
    triangles: np.ndarray
    areas: np.ndarray
    edges: tuple[BoundaryEdge, ...]
    n_side: int
    dirichlet_faces: frozenset[str]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.triangles.shape[0]

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        """Sorted indices of nodes on a Dirichlet-labelled edge."""
        idx = set()
        for e in self.edges:
            if e.label == DIRICHLET:
                idx.update(e.nodes)
        return np.array(sorted(idx), dtype=int)

    @property
    def neumann_edges(self) -> tuple[BoundaryEdge, ...]:
        return tuple(e for e in self.edges if e.label == NEUMANN)

    @property
    def dirichlet_edges(self) -> tuple[BoundaryEdge, ...]:
        return tuple(e for e in self.edges if e.label == DIRICHLET)


def build_square_mesh(n_cells_per_side: int, dirichlet_faces) -> Mesh:
    """Uniform right-angled triangulation of (0,1)^2 with labelled boundary.

    ``dirichlet_faces`` is an iterable of face names; it must be non-empty
    (the problem needs a hard device somewhere). Produces (n+1)^2 nodes and
    2 n^2 triangles of area 1/(2 n^2) each.
    """
    n = int(n_cells_per_side)
    if n < 1:
        raise ValueError("n_cells_per_side must be >= 1")
    dfaces = frozenset(dirichlet_faces)
    unknown = dfaces - set(FACES)
    if unknown:
        raise ValueError(f"unknown faces: {sorted(unknown)}")
    if not dfaces:
        raise ValueError("at least one Dirichlet face is required")

    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = nid(i, j), nid(i + 1, j)
            v01, v11 = nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((v00, v10, v11))  # lower-right of the cell
            tris.append((v00, v11, v01))  # upper-left of the cell
    triangles = np.array(tris, dtype=int)

    v = nodes[triangles]
    areas = 0.5 * np.abs(
        (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
        - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
    )

    h = 1.0 / n

    def cell_of(i, j, upper):
        return 2 * (j * n + i) + (1 if upper else 0)

    edges = []
    for k in range(n):
        label = DIRICHLET if "bottom" in dfaces else NEUMANN
        edges.append(BoundaryEdge((nid(k, 0), nid(k + 1, 0)), _FACE_NORMALS["bottom"],
                                  label, "bottom", h, cell_of(k, 0, upper=False)))
    for k in range(n):
        label = DIRICHLET if "right" in dfaces else NEUMANN
        edges.append(BoundaryEdge((nid(n, k), nid(n, k + 1)), _FACE_NORMALS["right"],
                                  label, "right", h, cell_of(n - 1, k, upper=False)))
    for k in range(n):
        label = DIRICHLET if "top" in dfaces else NEUMANN
        edges.append(BoundaryEdge((nid(k + 1, n), nid(k, n)), _FACE_NORMALS["top"],
                                  label, "top", h, cell_of(k, n - 1, upper=True)))
    for k in range(n):
        label = DIRICHLET if "left" in dfaces else NEUMANN
        edges.append(BoundaryEdge((nid(0, k + 1), nid(0, k)), _FACE_NORMALS["left"],
                                  label, "left", h, cell_of(0, k, upper=True)))

    return Mesh(nodes=nodes, triangles=triangles, areas=areas,
                edges=tuple(edges), n_side=n, dirichlet_faces=dfaces)
