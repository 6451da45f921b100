"""P1 displacement / P0 strain finite elements on the structured mesh.

Quadrature is one-point per triangle (exact for P0 integrands and for P1
integrands via the centroid) and two-point Gauss per boundary edge (exact for
the P1 traces that appear here). The stiffness matrix depends only on the
mesh, the Hooke tensor and the Dirichlet node set, so a factorization is kept
and reused across load/plastic-strain changes.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .tensors import HookeTensor, ddot, deviator, norm, require_deviatoric

_W2 = np.array([1.0, 2.0, 1.0])  # contraction weights for packed 2-D tensors


class SolverError(RuntimeError):
    """Internal error: the elastic system could not be solved accurately."""


def strain_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Sparse operator B mapping nodal displacements to packed cell strains.

    Rows are (cell, component) in packed order (e11, e12, e22); columns are
    nodal dofs interleaved (node0_x, node0_y, node1_x, ...). Exact for P1
    fields: affine displacements produce their exact constant strain.
    """
    tri = mesh.triangles
    v = mesh.nodes[tri]
    x, y = v[..., 0], v[..., 1]
    a2 = 2.0 * mesh.areas
    # gradients of the three barycentric functions
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / a2[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / a2[:, None]

    ncells = mesh.n_cells
    rows, cols, vals = [], [], []
    cell_rows = 3 * np.arange(ncells)
    for a in range(3):
        dofx = 2 * tri[:, a]
        dofy = dofx + 1
        # e11 = du1/dx
        rows.append(cell_rows + 0); cols.append(dofx); vals.append(gx[:, a])
        # e12 = (du1/dy + du2/dx) / 2
        rows.append(cell_rows + 1); cols.append(dofx); vals.append(0.5 * gy[:, a])
        rows.append(cell_rows + 1); cols.append(dofy); vals.append(0.5 * gx[:, a])
        # e22 = du2/dy
        rows.append(cell_rows + 2); cols.append(dofy); vals.append(gy[:, a])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.coo_matrix((vals, (rows, cols)), shape=(3 * ncells, 2 * mesh.n_nodes)).tocsr()


def strain_of(u: np.ndarray, mesh: Mesh, B: sp.csr_matrix | None = None) -> np.ndarray:
    """Elementwise symmetric gradient of a nodal field, shape (n_cells, 3)."""
    if u.shape != (mesh.n_nodes, 2):
        raise ValueError(f"displacement shape {u.shape} does not match mesh ({mesh.n_nodes}, 2)")
    if B is None:
        B = strain_matrix(mesh)
    return (B @ u.ravel()).reshape(mesh.n_cells, 3)


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Nodal lumped mass: one third of the adjacent cell areas."""
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return m


def body_load_vector(mesh: Mesh, f_cells: np.ndarray) -> np.ndarray:
    """Assemble int f . phi for a P0 vector load, as an interleaved dof vector."""
    F = np.zeros(2 * mesh.n_nodes)
    w = mesh.areas / 3.0
    for a in range(3):
        np.add.at(F, 2 * mesh.triangles[:, a], w * f_cells[:, 0])
        np.add.at(F, 2 * mesh.triangles[:, a] + 1, w * f_cells[:, 1])
    return F


def traction_load_vector(mesh: Mesh, g_edges: np.ndarray) -> np.ndarray:
    """Assemble int_Gamma_N g . phi for per-edge constant tractions."""
    F = np.zeros(2 * mesh.n_nodes)
    for g, edge in zip(g_edges, mesh.neumann_edges):
        half = 0.5 * edge.length
        for node in edge.nodes:
            F[2 * node] += half * g[0]
            F[2 * node + 1] += half * g[1]
    return F


def integrate_tensor_dot(areas: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """int a : b dx over the mesh for packed P0 tensor fields."""
    return float((areas * ddot(a, b)).sum())


def tensor_l2(areas: np.ndarray, a: np.ndarray) -> float:
    """L2(Omega) norm of a packed P0 tensor field."""
    return float(np.sqrt((areas * ddot(a, a)).sum()))


def scalar_l2(areas: np.ndarray, a: np.ndarray) -> float:
    return float(np.sqrt((areas * a * a).sum()))


class ElasticSystem:
    """Assembled elasticity operator with a cached sparse factorization.

    Minimizes  (1/2) int C^eps (Eu - p):(Eu - p) - int f.u - int_Gamma_N g.u
    subject to prescribed values at Dirichlet nodes. The factorization is of
    the free-free block; changing p, loads or boundary values reuses it.
    """

    def __init__(self, mesh: Mesh, hooke: HookeTensor):
        self.mesh = mesh
        self.hooke = hooke
        self.B = strain_matrix(mesh)
        self.cmat = hooke.matrix(dim=2)
        # block-diagonal integrand weights: area_c * W @ C
        wc = _W2[:, None] * self.cmat
        D = sp.kron(sp.diags(mesh.areas), sp.csr_matrix(wc), format="csr")
        self.K = (self.B.T @ D @ self.B).tocsc()
        self._D = D

        fixed_nodes = mesh.dirichlet_nodes
        fixed = np.sort(np.concatenate([2 * fixed_nodes, 2 * fixed_nodes + 1]))
        all_dofs = np.arange(2 * mesh.n_nodes)
        self.fixed = fixed
        self.free = np.setdiff1d(all_dofs, fixed, assume_unique=True)
        self.K_ff = self.K[np.ix_(self.free, self.free)].tocsc()
        self.K_fc = self.K[np.ix_(self.free, self.fixed)].tocsc()
        self._lu = spla.splu(self.K_ff) if self.free.size else None

    def plastic_load_vector(self, p: np.ndarray) -> np.ndarray:
        """Assemble int C^eps p : E(phi) as a dof vector."""
        sig_p = p @ self.cmat.T
        return self.B.T @ (np.repeat(self.mesh.areas, 3) * (sig_p * _W2).ravel())

    def solve(
        self,
        p: np.ndarray,
        w_nodes: np.ndarray,
        f_cells: np.ndarray | None = None,
        g_edges: np.ndarray | None = None,
    ) -> np.ndarray:
        """Displacement minimizing the incremental elastic energy, p frozen."""
        mesh = self.mesh
        F = self.plastic_load_vector(p)
        if f_cells is not None:
            F += body_load_vector(mesh, f_cells)
        if g_edges is not None and len(mesh.neumann_edges):
            F += traction_load_vector(mesh, g_edges)

        u = np.zeros(2 * mesh.n_nodes)
        u[self.fixed] = w_nodes.ravel()[self.fixed]
        if self.free.size:
            rhs = F[self.free] - self.K_fc @ u[self.fixed]
            try:
                x = self._lu.solve(rhs)
            except RuntimeError as exc:  # pragma: no cover - cannot occur with Gamma_D != 0
                raise SolverError(f"sparse factorization failed: {exc}") from exc
            u[self.free] = x
            res = np.linalg.norm(self.K_ff @ x - rhs)
            scale = np.linalg.norm(rhs) + np.linalg.norm(x) + 1.0
            if not np.isfinite(res) or res > 1e-10 * scale:
                raise SolverError(f"elastic solve residual {res:.3e} exceeds tolerance")
        return u.reshape(mesh.n_nodes, 2)

    def energy(self, u: np.ndarray, p: np.ndarray) -> float:
        """(1/2) int C^eps (Eu - p):(Eu - p)."""
        e = strain_of(u, self.mesh, self.B) - p
        return 0.5 * integrate_tensor_dot(self.mesh.areas, e @ self.cmat.T, e)


def solve_elastic(
    mesh: Mesh,
    hooke: HookeTensor,
    p: np.ndarray,
    w_nodes: np.ndarray,
    f_cells: np.ndarray | None = None,
    g_edges: np.ndarray | None = None,
) -> np.ndarray:
    """One-off elastic solve; builds and discards the factorization."""
    require_deviatoric(p, "plastic strain")
    return ElasticSystem(mesh, hooke).solve(p, w_nodes, f_cells, g_edges)


def equilibrium_residual_vector(
    mesh: Mesh,
    sigma: np.ndarray,
    f_cells: np.ndarray | None = None,
    g_edges: np.ndarray | None = None,
    B: sp.csr_matrix | None = None,
) -> np.ndarray:
    """Dof vector of R(phi) = int sigma:E(phi) - int f.phi - int_Gamma_N g.phi."""
    if B is None:
        B = strain_matrix(mesh)
    r = B.T @ (np.repeat(mesh.areas, 3) * (sigma * _W2).ravel())
    if f_cells is not None:
        r -= body_load_vector(mesh, f_cells)
    if g_edges is not None and len(mesh.neumann_edges):
        r -= traction_load_vector(mesh, g_edges)
    return r


def divergence_check(
    sigma: np.ndarray,
    mesh: Mesh,
    f_cells: np.ndarray | None = None,
    g_edges: np.ndarray | None = None,
    B: sp.csr_matrix | None = None,
) -> tuple[float, float]:
    """Discrete equilibrium residuals of a P0 stress field.

    Returns (interior_residual, flux_residual): the weak-form residual against
    P1 test functions vanishing on the Dirichlet nodes, measured in the dual
    norm of the lumped-L2 inner product, and the L2(Gamma_N) mismatch between
    the cell tractions sigma.nu and the prescribed g.
    """
    r = equilibrium_residual_vector(mesh, sigma, f_cells, g_edges, B=B)
    m = np.repeat(lumped_mass(mesh), 2)
    fixed_nodes = mesh.dirichlet_nodes
    mask = np.ones(2 * mesh.n_nodes, dtype=bool)
    mask[2 * fixed_nodes] = False
    mask[2 * fixed_nodes + 1] = False
    interior = float(np.sqrt(np.sum(r[mask] ** 2 / m[mask])))

    flux_sq = 0.0
    neumann = mesh.neumann_edges
    if neumann:
        if g_edges is None:
            g_edges = np.zeros((len(neumann), 2))
        for g, edge in zip(g_edges, neumann):
            s = sigma[edge.cell]
            t = np.array([
                s[0] * edge.normal[0] + s[1] * edge.normal[1],
                s[1] * edge.normal[0] + s[2] * edge.normal[1],
            ])
            flux_sq += edge.length * float(((t - g) ** 2).sum())
    return interior, float(np.sqrt(flux_sq))


def boundary_integral_p1(mesh: Mesh, sigma: np.ndarray, phi: np.ndarray, edges) -> float:
    """int (sigma.nu) . phi over the given boundary edges, exact for P1 phi."""
    total = 0.0
    for edge in edges:
        s = sigma[edge.cell]
        t = np.array([
            s[0] * edge.normal[0] + s[1] * edge.normal[1],
            s[1] * edge.normal[0] + s[2] * edge.normal[1],
        ])
        mid = 0.5 * (phi[edge.nodes[0]] + phi[edge.nodes[1]])
        total += edge.length * float(t @ mid)
    return total


def weak_divergence_form(mesh: Mesh, sigma: np.ndarray, phi: np.ndarray,
                         B: sp.csr_matrix | None = None) -> float:
    """Discrete  int div(sigma) . phi  := boundary flux minus int sigma : E(phi)."""
    if B is None:
        B = strain_matrix(mesh)
    vol = integrate_tensor_dot(mesh.areas, sigma, strain_of(phi, mesh, B))
    bdry = boundary_integral_p1(mesh, sigma, phi, mesh.edges)
    return bdry - vol


def max_dev_norm(sigma: np.ndarray) -> float:
    """sup over cells of |sigma_D|."""
    return float(norm(deviator(sigma)).max()) if len(sigma) else 0.0
