"""Bilinear (Q1) finite elements for -Δu = f, u = 0 on the boundary.

Solutions are nodal coefficient vectors over *all* mesh nodes with the
boundary entries pinned to zero. Most routines accept either a single
vector ``(n_nodes,)`` or a stack of columns ``(n_nodes, n_problems)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import MeshLevel, StructureError, inject_indices, refinement_factor

log = logging.getLogger(__name__)

# counterclockwise corner order (SW, SE, NE, NW); corner offsets in cell units
_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

# exact Q1 element matrices on a square cell; stiffness is scale invariant in 2D
ELEMENT_STIFFNESS = np.array(
    [[4.0, -1.0, -2.0, -1.0],
     [-1.0, 4.0, -1.0, -2.0],
     [-2.0, -1.0, 4.0, -1.0],
     [-1.0, -2.0, -1.0, 4.0]]
) / 6.0
_ELEMENT_MASS_UNIT = np.array(
    [[4.0, 2.0, 1.0, 2.0],
     [2.0, 4.0, 2.0, 1.0],
     [1.0, 2.0, 4.0, 2.0],
     [2.0, 1.0, 2.0, 4.0]]
) / 36.0


class SolverError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class RhsFunction:
    """f(x, y) = sin(2π c1 (x + c2)) · sin(2π c3 (y + c4))."""

    c1: float
    c2: float
    c3: float
    c4: float

    def __call__(self, x, y):
        return np.sin(2 * np.pi * self.c1 * (x + self.c2)) * np.sin(2 * np.pi * self.c3 * (y + self.c4))

    @property
    def params(self):
        return np.array([self.c1, self.c2, self.c3, self.c4])


def rhs_values(params, x, y):
    """Evaluate many members of the sine family at once.

    ``params`` is ``(P, 4)``; returns ``(len(x), P)``.
    """
    params = np.atleast_2d(params)
    c1, c2, c3, c4 = (params[:, i][None, :] for i in range(4))
    x = np.asarray(x)[:, None]
    y = np.asarray(y)[:, None]
    return np.sin(2 * np.pi * c1 * (x + c2)) * np.sin(2 * np.pi * c3 * (y + c4))


@dataclass(frozen=True)
class Analytic:
    """Closed-form function with optional gradient, for error measurement."""

    value: Callable
    grad: Callable | None = None


@dataclass(eq=False)
class FemSystem:
    mesh: MeshLevel
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: np.ndarray  # interior dof index -> global node id


@dataclass(eq=False)
class FemSolution:
    mesh: MeshLevel
    coeffs: np.ndarray
    iterations: int = 0
    residual: float = 0.0


# --------------------------------------------------------------------------
# quadrature and element-level helpers


def gauss_rule(order):
    """Tensor Gauss-Legendre rule on the unit square: points (q², 2), weights (q²,)."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    px, py = np.meshgrid(t, t)
    wx, wy = np.meshgrid(w, w)
    return np.column_stack([px.ravel(), py.ravel()]), (wx * wy).ravel()


def q1_basis(a, b):
    """Bilinear shape functions in corner order (SW, SE, NE, NW); shape (n, 4)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.stack([(1 - a) * (1 - b), a * (1 - b), a * b, (1 - a) * b], axis=-1)


def q1_basis_grad(a, b):
    """Reference-cell gradients of the shape functions; shape (n, 4, 2)."""
    a = np.asarray(a)
    b = np.asarray(b)
    da = np.stack([-(1 - b), 1 - b, b, -b], axis=-1)
    db = np.stack([-(1 - a), -a, a, 1 - a], axis=-1)
    return np.stack([da, db], axis=-1)


def quadrature_points(mesh: MeshLevel, order):
    """Physical quadrature points (n_cells, q², 2) and weights (q²,) incl. the cell area."""
    ref, w = gauss_rule(order)
    sw = mesh.nodes[mesh.cells[:, 0]]
    pts = sw[:, None, :] + mesh.h * ref[None, :, :]
    return pts, w * mesh.h ** 2


_OPERATOR_CACHE: dict = {}


def _cached(mesh: MeshLevel, kind, build):
    key = (mesh.rect, mesh.nx, mesh.ny, kind)
    if key not in _OPERATOR_CACHE:
        _OPERATOR_CACHE[key] = build()
    return _OPERATOR_CACHE[key]


def _assemble_element_matrix(mesh: MeshLevel, element):
    rows = np.repeat(mesh.cells, 4, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, 4)).ravel()
    vals = np.tile(element.ravel(), mesh.n_cells)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    A.sum_duplicates()
    return A


def stiffness_matrix(mesh: MeshLevel) -> sp.csr_matrix:
    """Global Q1 stiffness matrix over all nodes (no boundary conditions)."""
    return _cached(mesh, "stiffness", lambda: _assemble_element_matrix(mesh, ELEMENT_STIFFNESS))


def mass_matrix(mesh: MeshLevel) -> sp.csr_matrix:
    return _cached(mesh, "mass", lambda: _assemble_element_matrix(mesh, _ELEMENT_MASS_UNIT * mesh.h ** 2))


def load_operator(mesh: MeshLevel, quad_order) -> sp.csr_matrix:
    """Sparse map from f sampled at quadrature points to the nodal load vector."""

    def build():
        ref, w = gauss_rule(quad_order)
        phi = q1_basis(ref[:, 0], ref[:, 1])  # (q², 4)
        nq = len(w)
        vals = (w[:, None] * phi * mesh.h ** 2)[None, :, :].repeat(mesh.n_cells, axis=0)
        rows = np.broadcast_to(mesh.cells[:, None, :], vals.shape)
        cols = np.broadcast_to(np.arange(mesh.n_cells * nq).reshape(mesh.n_cells, nq, 1), vals.shape)
        B = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.n_nodes, mesh.n_cells * nq))
        return B.tocsr()

    return _cached(mesh, ("load", quad_order), build)


# --------------------------------------------------------------------------
# assembly and solve


def load_vector(mesh: MeshLevel, f, quad_order=3):
    pts, _ = quadrature_points(mesh, quad_order)
    pts = pts.reshape(-1, 2)
    return load_operator(mesh, quad_order) @ f(pts[:, 0], pts[:, 1])


def load_vectors(mesh: MeshLevel, params, quad_order=3, chunk=256):
    """Load vectors for a batch of sine right-hand sides; returns (n_nodes, P)."""
    params = np.atleast_2d(params)
    pts, _ = quadrature_points(mesh, quad_order)
    pts = pts.reshape(-1, 2)
    B = load_operator(mesh, quad_order)
    out = np.empty((mesh.n_nodes, len(params)))
    for s in range(0, len(params), chunk):
        out[:, s:s + chunk] = B @ rhs_values(params[s:s + chunk], pts[:, 0], pts[:, 1])
    return out


def assemble(mesh: MeshLevel, f, quad_order: int = 3) -> FemSystem:
    """Reduced system on the interior nodes.

    ``f`` is a callable ``f(x, y)`` or a precomputed full load vector / stack.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    dofs = mesh.interior
    A = _cached(mesh, "interior_stiffness", lambda: stiffness_matrix(mesh)[dofs][:, dofs].tocsr())
    if callable(f):
        b = load_vector(mesh, f, quad_order)
    else:
        b = np.asarray(f, dtype=float)
    return FemSystem(mesh, A, b[dofs], dofs)


def pcg(A, b, rel_tol=1e-10, max_iter=10_000, x0=None):
    """Jacobi-preconditioned conjugate gradients for one or many right-hand sides.

    Columns of ``b`` are independent systems; each stops once its relative
    residual drops below ``rel_tol``. Returns ``(x, iterations, rel_residual)``.
    """
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    B = b[:, None] if vector else b
    dinv = 1.0 / A.diagonal()
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
    bnorm = np.linalg.norm(B, axis=0)
    safe = np.where(bnorm > 0, bnorm, 1.0)

    R = B - A @ X
    rel = np.linalg.norm(R, axis=0) / safe
    rel[bnorm == 0] = 0.0
    if rel_tol < 0:
        raise ValueError("rel_tol must be non-negative")
    active = rel > rel_tol
    # columns whose search direction vanished: solved exactly (A is SPD)
    exact = np.zeros_like(active)
    it = 0
    if active.any():
        Z = dinv[:, None] * R
        P = Z.copy()
        rz = np.einsum("ij,ij->j", R, Z)
        while active.any():
            if it >= max_iter:
                worst = float(rel.max())
                raise SolverError(
                    f"CG did not converge in {max_iter} iterations (rel. residual {worst:.3e})",
                    residual=worst, iterations=it,
                )
            # converged columns take zero steps instead of being gathered out
            AP = A @ P
            pap = np.einsum("ij,ij->j", P, AP)
            exact |= active & (pap <= 0)
            active &= ~exact
            alpha = np.where(active, rz / np.where(active, pap, 1.0), 0.0)
            X += alpha * P
            R -= alpha * AP
            rel = np.where(active, np.sqrt(np.einsum("ij,ij->j", R, R)) / safe, rel)
            np.multiply(dinv[:, None], R, out=Z)
            rz_new = np.einsum("ij,ij->j", R, Z)
            beta = np.where(active, rz_new / np.where(active, rz, 1.0), 0.0)
            P *= beta
            P += Z
            rz = rz_new
            active = (rel > rel_tol) & ~exact
            it += 1
    if not np.isfinite(X).all():
        raise SolverError("CG produced non-finite values", residual=float("nan"), iterations=it)
    out = X[:, 0] if vector else X
    return out, it, (float(rel[0]) if vector else rel)


def solve_cg(sys: FemSystem, rel_tol: float = 1e-10, max_iter: int = 10_000) -> FemSolution:
    x, it, res = pcg(sys.matrix, sys.rhs, rel_tol, max_iter)
    coeffs = np.zeros((sys.mesh.n_nodes,) + np.shape(sys.rhs)[1:])
    coeffs[sys.dof_map] = x
    return FemSolution(sys.mesh, coeffs, iterations=it, residual=float(np.max(res)))


def solve(mesh: MeshLevel, f, quad_order=3, rel_tol=1e-10, max_iter=10_000) -> FemSolution:
    return solve_cg(assemble(mesh, f, quad_order), rel_tol, max_iter)


def solve_family(mesh: MeshLevel, params, quad_order=3, rel_tol=1e-10, max_iter=10_000, chunk=512):
    """Nodal solutions (n_nodes, P) for a batch of sine right-hand sides."""
    params = np.atleast_2d(params)
    out = np.zeros((mesh.n_nodes, len(params)))
    for s in range(0, len(params), chunk):
        loads = load_vectors(mesh, params[s:s + chunk], quad_order)
        out[:, s:s + chunk] = solve_cg(assemble(mesh, loads, quad_order), rel_tol, max_iter).coeffs
    return out


# --------------------------------------------------------------------------
# transfer between nested meshes and point evaluation


def transfer(coarse: MeshLevel, coeffs, fine: MeshLevel):
    """Exact Q1 injection of a coarse function into the nested fine space."""
    coeffs = np.asarray(coeffs)
    if coarse.same_grid(fine):
        return coeffs.copy()
    cx, cy, a, b = inject_indices(coarse, fine)
    sw = cy * (coarse.nx + 1) + cx
    corners = np.stack([sw, sw + 1, sw + coarse.nx + 2, sw + coarse.nx + 1], axis=1)
    phi = q1_basis(a, b)
    if coeffs.ndim == 1:
        return np.einsum("nc,nc->n", phi, coeffs[corners])
    return np.einsum("nc,ncp->np", phi, coeffs[corners])


def locate(mesh: MeshLevel, x, y):
    """Cell index and local coordinates for arbitrary points inside the rectangle."""
    sx = (np.asarray(x) - mesh.rect.x0) / mesh.h
    sy = (np.asarray(y) - mesh.rect.y0) / mesh.h
    cx = np.clip(np.floor(sx).astype(int), 0, mesh.nx - 1)
    cy = np.clip(np.floor(sy).astype(int), 0, mesh.ny - 1)
    return cy * mesh.nx + cx, sx - cx, sy - cy


def evaluate(mesh: MeshLevel, coeffs, x, y):
    cell, a, b = locate(mesh, x, y)
    return np.einsum("nc,nc->n", q1_basis(a, b), np.asarray(coeffs)[mesh.cells[cell]])


# --------------------------------------------------------------------------
# norms and errors


def _as_discrete(u):
    if isinstance(u, FemSolution):
        return u.mesh, u.coeffs
    return None


def _common_mesh(u, v):
    mu, cu = u
    mv, cv = v
    try:
        refinement_factor(mu, mv)
        return mv, transfer(mu, cu, mv), cv
    except StructureError:
        pass
    try:
        refinement_factor(mv, mu)
    except StructureError as exc:
        raise StructureError("solutions live on incompatible meshes") from exc
    return mu, cu, transfer(mv, cv, mu)


def _quad_values(mesh, coeffs, order):
    """Values and physical gradients of a Q1 function at cell quadrature points."""
    ref, _ = gauss_rule(order)
    phi = q1_basis(ref[:, 0], ref[:, 1])  # (q, 4)
    dphi = q1_basis_grad(ref[:, 0], ref[:, 1]) / mesh.h  # (q, 4, 2)
    local = np.asarray(coeffs)[mesh.cells]  # (cells, 4)
    return local @ phi.T, np.einsum("qcd,ec->eqd", dphi, local)


def l2_error(u, v, quad_order: int = 3) -> float:
    """L² norm of u - v by tensor Gauss quadrature on the finer mesh.

    ``u`` may be a FemSolution, an ``Analytic`` or a plain callable ``u(x, y)``.
    """
    dv = _as_discrete(v)
    if dv is None:
        raise TypeError("v must be a FemSolution")
    du = _as_discrete(u)
    if du is not None:
        mesh, cu, cv = _common_mesh(du, dv)
        vals, _ = _quad_values(mesh, cu - cv, quad_order)
    else:
        mesh = dv[0]
        fn = u.value if isinstance(u, Analytic) else u
        pts, _ = quadrature_points(mesh, quad_order)
        vals_v, _ = _quad_values(mesh, dv[1], quad_order)
        vals = fn(pts[..., 0], pts[..., 1]) - vals_v
    _, w = quadrature_points(mesh, quad_order)
    return float(np.sqrt(np.sum(w * vals ** 2)))


def h1_seminorm_error(u, v, quad_order: int = 3) -> float:
    """‖∇(u - v)‖ in L²; an analytic ``u`` must carry its gradient."""
    dv = _as_discrete(v)
    if dv is None:
        raise TypeError("v must be a FemSolution")
    du = _as_discrete(u)
    if du is not None:
        mesh, cu, cv = _common_mesh(du, dv)
        _, grads = _quad_values(mesh, cu - cv, quad_order)
    else:
        if not isinstance(u, Analytic) or u.grad is None:
            raise TypeError("analytic u needs a gradient for the H1 seminorm")
        mesh = dv[0]
        pts, _ = quadrature_points(mesh, quad_order)
        gx, gy = u.grad(pts[..., 0], pts[..., 1])
        _, gv = _quad_values(mesh, dv[1], quad_order)
        grads = np.stack([gx, gy], axis=-1) - gv
    _, w = quadrature_points(mesh, quad_order)
    return float(np.sqrt(np.sum(w[None, :, None] * grads ** 2)))


def nodal_l2(u, v) -> float:
    """Euclidean norm of the nodal coefficient difference (same mesh)."""
    cu = u.coeffs if isinstance(u, FemSolution) else np.asarray(u)
    cv = v.coeffs if isinstance(v, FemSolution) else np.asarray(v)
    if isinstance(u, FemSolution) and isinstance(v, FemSolution) and not u.mesh.same_grid(v.mesh):
        raise StructureError("nodal_l2 needs both solutions on the same mesh")
    if cu.shape != cv.shape:
        raise StructureError(f"coefficient shapes differ: {cu.shape} vs {cv.shape}")
    return float(np.linalg.norm(cu - cv))


def l2_norms(mesh: MeshLevel, E):
    """Column-wise L² norms of Q1 functions (exact, via the mass matrix)."""
    E2 = np.asarray(E).reshape(len(E), -1)
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", E2, mass_matrix(mesh) @ E2), 0.0))


def h1_seminorms(mesh: MeshLevel, E):
    E2 = np.asarray(E).reshape(len(E), -1)
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", E2, stiffness_matrix(mesh) @ E2), 0.0))
