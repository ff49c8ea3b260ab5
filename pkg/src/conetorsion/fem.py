"""P2 Lagrange finite elements with mixed boundary conditions.

Assembles stiffness/mass/boundary-mass forms on the labeled meshes,
solves the torsion problem (Laplacian equal to the dimension, zero trace
on the arc, natural condition on the walls) by Jacobi-preconditioned
conjugate gradients, and estimates the three variational constants
(Neumann Poincare, wall-constrained vector Poincare, arc trace) by
inverse/power iteration with CG inner solves.

Elements touching the arc carry quadratic geometry (their arc midside
node sits on the exact curve); all element integrals run through the
same 6-node map, which degenerates to the affine one elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .mesh import GAMMA0, GAMMA1A, GAMMA1B, MeshQualityError, TriMesh

N_DIM = 2  # planar problem; the torsion right-hand side equals the dimension


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals if residuals is not None else []


class EigenError(RuntimeError):
    """Eigenvalue iteration failed to converge."""


# ---------------------------------------------------------------------------
# reference element

def _p2_shape(ref):
    """P2 basis values at reference points (n, 2) -> (n, 6)."""
    xi, eta = ref[:, 0], ref[:, 1]
    lam0 = 1.0 - xi - eta
    return np.stack([
        lam0 * (2 * lam0 - 1), xi * (2 * xi - 1), eta * (2 * eta - 1),
        4 * xi * eta, 4 * eta * lam0, 4 * lam0 * xi,
    ], axis=1)


def _p2_grad(ref):
    """Reference gradients at points (n, 2) -> (n, 6, 2)."""
    xi, eta = ref[:, 0], ref[:, 1]
    lam0 = 1.0 - xi - eta
    g = np.empty((len(ref), 6, 2))
    g[:, 0, 0] = 1 - 4 * lam0
    g[:, 0, 1] = 1 - 4 * lam0
    g[:, 1, 0] = 4 * xi - 1
    g[:, 1, 1] = 0.0
    g[:, 2, 0] = 0.0
    g[:, 2, 1] = 4 * eta - 1
    g[:, 3, 0] = 4 * eta
    g[:, 3, 1] = 4 * xi
    g[:, 4, 0] = -4 * eta
    g[:, 4, 1] = 4 * (lam0 - eta)
    g[:, 5, 0] = 4 * (lam0 - xi)
    g[:, 5, 1] = -4 * xi
    return g


# constant reference Hessians, shape (6, 2, 2)
_P2_HESS = 4.0 * np.array([
    [[1, 1], [1, 1]],
    [[1, 0], [0, 0]],
    [[0, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1], [-1, -2]],
    [[-2, -1], [-1, 0]],
], dtype=float)

# 7-point degree-5 triangle rule; weights sum to 1 (multiply by det/2)
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
TRI_QP = np.array([
    [1 / 3, 1 / 3],
    [_B1, _B1], [_A1, _B1], [_B1, _A1],
    [_B2, _B2], [_A2, _B2], [_B2, _A2],
])
TRI_QW = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])

# 4-point Gauss-Legendre on [0, 1]
_gx, _gw = np.polynomial.legendre.leggauss(4)
EDGE_QP = 0.5 * (_gx + 1.0)
EDGE_QW = 0.5 * _gw


def _edge_shape(t):
    """Quadratic line basis at t in [0,1]; nodes at 0, 1, 1/2."""
    t = np.asarray(t)
    return np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)], axis=-1)


def _edge_dshape(t):
    t = np.asarray(t)
    return np.stack([4 * t - 3, 4 * t - 1, 4 - 8 * t], axis=-1)


def element_coords(mesh: TriMesh) -> np.ndarray:
    """Per-element 6-node coordinates, shape (nt, 6, 2)."""
    return mesh.node_coords[mesh.tri_nodes()]


def _jacobians(coords, dphi):
    """J, detJ, Jinv for a batch of elements at one reference point."""
    J = np.einsum("eai,aj->eij", coords, dphi)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    return J, det, inv


# ---------------------------------------------------------------------------
# assembly

class Assembly(NamedTuple):
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    gamma0_mass: sp.csr_matrix
    load: np.ndarray


def assemble(mesh: TriMesh) -> Assembly:
    """Assemble stiffness, mass, arc boundary mass and the torsion load.

    Element integrals use the 7-point degree-5 rule, edge integrals
    4-point Gauss; the load is the weak right-hand side of the torsion
    problem, ``-N * M @ 1``.
    """
    cached = getattr(mesh, "_assembly_cache", None)
    if cached is not None:
        return cached

    coords = element_coords(mesh)
    conn = mesh.tri_nodes()
    nt = mesh.n_triangles
    n = mesh.n_nodes

    Ke = np.zeros((nt, 6, 6))
    Me = np.zeros((nt, 6, 6))
    for q in range(len(TRI_QW)):
        dphi = _p2_grad(TRI_QP[q:q + 1])[0]
        phi = _p2_shape(TRI_QP[q:q + 1])[0]
        _, det, inv = _jacobians(coords, dphi)
        if np.any(det <= 0.0):
            bad = int(np.argmax(det <= 0.0))
            raise MeshQualityError(f"non-positive Jacobian in cell {bad}")
        gp = np.einsum("aj,eji->eai", dphi, inv)
        wdet = 0.5 * TRI_QW[q] * det
        Ke += wdet[:, None, None] * np.einsum("eai,ebi->eab", gp, gp)
        Me += wdet[:, None, None] * np.outer(phi, phi)[None, :, :]

    rows = np.repeat(conn, 6, axis=1).ravel()
    cols = np.tile(conn, (1, 6)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    # arc boundary mass over quadratic edges
    g0 = mesh.gamma0_edge_ids()
    if g0.size:
        enodes = np.column_stack([mesh.edges[g0], mesh.n_vertices + g0])
        ecoords = mesh.node_coords[enodes]  # (ne, 3, 2)
        Be = np.zeros((len(g0), 3, 3))
        for t, wq in zip(EDGE_QP, EDGE_QW):
            psi = _edge_shape(t)
            dpsi = _edge_dshape(t)
            cp = np.einsum("a,eai->ei", dpsi, ecoords)
            speed = np.hypot(cp[:, 0], cp[:, 1])
            Be += (wq * speed)[:, None, None] * np.outer(psi, psi)[None]
        r = np.repeat(enodes, 3, axis=1).ravel()
        c = np.tile(enodes, (1, 3)).ravel()
        B0 = sp.coo_matrix((Be.ravel(), (r, c)), shape=(n, n)).tocsr()
    else:
        B0 = sp.csr_matrix((n, n))

    load = -N_DIM * (M @ np.ones(n))
    out = Assembly(K, M, B0, load)
    mesh._assembly_cache = out
    return out


def dump_triplets(matrix: sp.spmatrix) -> str:
    """Plain-text COO dump (row col value per line) for debugging."""
    coo = matrix.tocoo()
    return "\n".join(f"{i} {j} {float(v)!r}" for i, j, v in
                     zip(coo.row, coo.col, coo.data)) + "\n"


# ---------------------------------------------------------------------------
# conjugate gradients

def pcg(A, b, rtol=1e-10, maxiter=None, project=None, x0=None):
    """Jacobi-preconditioned CG; optional projector keeps iterates out of a
    known kernel (consistent singular systems)."""
    n = len(b)
    maxiter = maxiter if maxiter is not None else 10 * n
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("non-positive diagonal in CG operator")
    dinv = 1.0 / diag

    def P(v):
        return project(v) if project is not None else v

    b = P(b)
    x = np.zeros(n) if x0 is None else P(x0.copy())
    r = P(b - A @ x)
    z = P(dinv * r)
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, [0.0]
    history = [np.linalg.norm(r) / bnorm]
    for it in range(1, maxiter + 1):
        Ap = P(A @ p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        if res <= rtol:
            return x, it, history
        z = P(dinv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG stagnation: {history[-1]:.3e} > rtol={rtol:.1e} after {maxiter} iterations",
        residuals=history)


# ---------------------------------------------------------------------------
# torsion solve and field evaluation

@dataclass
class FemSolution:
    """P2 coefficient vector with pointwise evaluators."""

    mesh: TriMesh
    coeffs: np.ndarray
    cg_iterations: int = 0
    cg_residual: float = 0.0

    def __post_init__(self):
        self._trifinder = None

    def _finder(self):
        if self._trifinder is None:
            from matplotlib.tri import Triangulation
            tri = Triangulation(self.mesh.vertices[:, 0], self.mesh.vertices[:, 1],
                                self.mesh.triangles)
            self._trifinder = tri.get_trifinder()
        return self._trifinder

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Element ids and reference coordinates for query points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tris = np.asarray(self._finder()(pts[:, 0], pts[:, 1]))
        missing = tris < 0
        if np.any(missing):
            # points can fall just outside the straight triangulation near the
            # curved arc; adopt the nearest arc edge owner
            g0 = self.mesh.gamma0_edge_ids()
            if g0.size == 0:
                raise LookupError(f"point outside mesh: {pts[missing][0]}")
            mids = self.mesh.node_coords[self.mesh.n_vertices + g0]
            for i in np.flatnonzero(missing):
                d = np.sum((mids - pts[i]) ** 2, axis=1)
                e = g0[int(np.argmin(d))]
                tris[i] = self.mesh.edge_owner[e]
        refs = invert_map(element_coords(self.mesh)[tris], pts)
        bad = np.any(np.isnan(refs), axis=1)
        if np.any(bad):
            raise LookupError(f"point outside mesh: {pts[bad][0]}")
        return tris, refs

    def eval(self, points):
        """Value, gradient and Hessian of the field at arbitrary points.

        Returns (u, grad, hess) with shapes (n,), (n, 2), (n, 2, 2).
        Raises LookupError for points outside the mesh.
        """
        tris, refs = self.locate(points)
        return self.eval_at(tris, refs)

    def eval_at(self, tris, refs):
        """Evaluate on given elements at given reference coordinates."""
        tris = np.asarray(tris, dtype=int)
        refs = np.atleast_2d(np.asarray(refs, dtype=float))
        coords = element_coords(self.mesh)[tris]
        ce = self.coeffs[self.mesh.tri_nodes()[tris]]

        phi = _p2_shape(refs)
        u = np.einsum("na,na->n", phi, ce)

        grad = np.empty((len(tris), 2))
        hess = np.empty((len(tris), 2, 2))
        dphi = _p2_grad(refs)
        J = np.einsum("nai,naj->nij", coords, dphi)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        inv[:, 1, 1] = J[:, 0, 0]
        inv /= det[:, None, None]
        grad_ref = np.einsum("naj,na->nj", dphi, ce)
        grad = np.einsum("nji,nj->ni", inv, grad_ref)

        # chain rule: Hxy = Jinv^T (Href_u - sum_k du/dx_k Href_{F_k}) Jinv
        Hu = np.einsum("na,aij->nij", ce, _P2_HESS)
        HF = np.einsum("nak,aij->nkij", coords, _P2_HESS)
        corr = np.einsum("nk,nkij->nij", grad, HF)
        hess = np.einsum("nji,njk,nkl->nil", inv, Hu - corr, inv)
        return u, grad, hess

    def nodal_values(self) -> np.ndarray:
        return self.coeffs


def invert_map(coords, targets, max_iter=12, tol=1e-13, slack=1e-6):
    """Newton-invert the 6-node geometry map for a batch of elements.

    Starts from the affine inverse; NaN rows mark points whose reference
    coordinates leave the unit simplex by more than ``slack`` (callers
    evaluating on the analytic boundary curve pass a loose slack, since
    extrapolating the element polynomial by O(h^3) is intended there).
    """
    # affine initial guess from the corner vertices
    a = coords[:, 0]
    E = np.stack([coords[:, 1] - a, coords[:, 2] - a], axis=-1)
    det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
    rhs = targets - a
    ref = np.empty_like(rhs)
    ref[:, 0] = (E[:, 1, 1] * rhs[:, 0] - E[:, 0, 1] * rhs[:, 1]) / det
    ref[:, 1] = (-E[:, 1, 0] * rhs[:, 0] + E[:, 0, 0] * rhs[:, 1]) / det

    for _ in range(max_iter):
        phi = _p2_shape(ref)
        x = np.einsum("na,nai->ni", phi, coords)
        r = x - targets
        if np.max(np.abs(r)) < tol:
            break
        dphi = _p2_grad(ref)
        J = np.einsum("nai,naj->nij", coords, dphi)
        dj = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        dx = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / dj
        dy = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / dj
        ref[:, 0] -= dx
        ref[:, 1] -= dy

    lam0 = 1.0 - ref.sum(axis=1)
    outside = (ref[:, 0] < -slack) | (ref[:, 1] < -slack) | (lam0 < -slack)
    ref = ref.copy()
    ref[outside] = np.nan
    return ref


def solve_torsion(mesh: TriMesh, rtol: float = 1e-10) -> FemSolution:
    """Solve the mixed torsion problem on the mesh.

    Zero Dirichlet values on all arc nodes are eliminated; the wall
    condition is natural.  CG stagnation raises :class:`SolverError`
    with the residual history attached.
    """
    K, M, _, load = assemble(mesh)
    n = mesh.n_nodes
    dirichlet = mesh.nodes_on(GAMMA0)
    free = np.setdiff1d(np.arange(n), dirichlet)
    Kff = K[free][:, free].tocsr()
    x, iters, hist = pcg(Kff, load[free], rtol=rtol)
    coeffs = np.zeros(n)
    coeffs[free] = x
    return FemSolution(mesh, coeffs, cg_iterations=iters, cg_residual=hist[-1])


# ---------------------------------------------------------------------------
# eigenvalue estimation

@dataclass
class EigenResult:
    """Generalized eigenvalue with its Rayleigh constant.

    ``value`` is the generalized eigenvalue; ``constant`` the associated
    inequality constant (its square root); ``residual`` the relative
    residual ``|A x - value * B x| / (value * |B x|)``.
    """

    value: float
    vector: np.ndarray
    iterations: int
    residual: float
    constant: float


def _inverse_iteration(A, B, rng, project=None, cg_project=None, tol=1e-8,
                       max_outer=400, cg_rtol=1e-9, block: int = 2):
    """Smallest generalized eigenvalue of ``A x = lam B x`` (SPD pencil,
    optionally deflated against a known kernel of A).

    Block inverse iteration with Rayleigh-Ritz extraction; a block of two
    keeps convergence healthy when the smallest eigenvalue is clustered
    (symmetric domains produce near-degenerate pairs).  ``project`` is the
    outer deflation; ``cg_project`` must be a symmetric projector onto the
    range of A (it is applied inside CG and defaults to no projection).
    """
    from scipy.linalg import eigh

    n = A.shape[0]
    block = min(block, n)
    X = rng.standard_normal((n, block))
    if project is not None:
        X = np.column_stack([project(X[:, j]) for j in range(block)])
    res = np.inf
    for it in range(1, max_outer + 1):
        Y = np.empty_like(X)
        for j in range(block):
            y, _, _ = pcg(A, B @ X[:, j], rtol=cg_rtol, project=cg_project)
            Y[:, j] = project(y) if project is not None else y
        # B-orthonormalize the block, then Rayleigh-Ritz
        S = Y.T @ (B @ Y)
        s, V = eigh(S)
        if s[0] <= 1e-14 * s[-1]:
            raise EigenError("inverse iteration block collapsed")
        Y = Y @ (V / np.sqrt(s))
        Am = Y.T @ (A @ Y)
        lam, W = eigh(0.5 * (Am + Am.T))
        X = Y @ W
        x0, lam0 = X[:, 0], lam[0]
        r = A @ x0 - lam0 * (B @ x0)
        res = np.linalg.norm(r) / (lam0 * np.linalg.norm(B @ x0))
        if res <= tol:
            return lam0, x0, it, res
    raise EigenError(f"inverse iteration: residual {res:.2e} > {tol:.1e} "
                     f"after {max_outer} iterations")


def neumann_poincare(mesh: TriMesh, tol: float = 1e-8, seed: int = 0) -> EigenResult:
    """Smallest nonzero eigenvalue of the Neumann stiffness/mass pencil.

    The square root is the sharp constant in the zero-mean Poincare
    inequality; the constant vector is deflated.
    """
    K, M, _, _ = assemble(mesh)
    n = mesh.n_nodes
    ones = np.ones(n)
    m1 = M @ ones
    m11 = ones @ m1

    def deflate(v):
        # mass-orthogonality to constants: the outer eigen deflation
        return v - ((m1 @ v) / m11) * ones

    def cg_project(v):
        # symmetric projector off ker(K) = constants, keeps CG consistent
        return v - (np.sum(v) / n) * ones

    rng = np.random.default_rng(seed)
    lam, x, it, res = _inverse_iteration(K, M, rng, project=deflate,
                                         cg_project=cg_project, tol=tol)
    return EigenResult(lam, x, it, res, float(np.sqrt(lam)))


def zero_trace_eigen(mesh: TriMesh, boundary_nodes, tol: float = 1e-8,
                     seed: int = 0) -> EigenResult:
    """Smallest stiffness/mass eigenvalue with zero trace on given nodes."""
    K, M, _, _ = assemble(mesh)
    free = np.setdiff1d(np.arange(mesh.n_nodes), np.asarray(boundary_nodes))
    Kff = K[free][:, free].tocsr()
    Mff = M[free][:, free].tocsr()
    rng = np.random.default_rng(seed)
    lam, xf, it, res = _inverse_iteration(Kff, Mff, rng, tol=tol)
    x = np.zeros(mesh.n_nodes)
    x[free] = xf
    return EigenResult(lam, x, it, res, float(np.sqrt(lam)))


def _wall_constraint_basis(mesh: TriMesh):
    """Sparse map from constrained vector dofs to the full 2n dof vector.

    Nodes on one wall keep only the tangential direction; nodes on both
    walls (the vertex, for openings other than pi) are fully constrained.
    dof layout: x-components then y-components.
    """
    n = mesh.n_nodes
    w = mesh.domain.opening
    on_a = set(int(v) for v in mesh.nodes_on(GAMMA1A))
    on_b = set(int(v) for v in mesh.nodes_on(GAMMA1B))
    rows, cols, vals = [], [], []
    col = 0
    for node in range(n):
        a, b = node in on_a, node in on_b
        if a and b and abs(w - np.pi) > 1e-12:
            continue  # fully constrained
        if a or b:
            if a:
                t = np.array([1.0, 0.0])          # tangent of the theta=0 ray
            else:
                t = np.array([np.cos(w), np.sin(w)])
            rows += [node, n + node]
            cols += [col, col]
            vals += [t[0], t[1]]
            col += 1
        else:
            rows += [node, n + node]
            cols += [col, col + 1]
            vals += [1.0, 1.0]
            col += 2
    return sp.coo_matrix((vals, (rows, cols)), shape=(2 * n, col)).tocsr()


def vector_poincare(mesh: TriMesh, k: int, tol: float = 1e-8,
                    seed: int = 0) -> EigenResult:
    """Sharp constant of the Poincare inequality for fields valued in the
    span of the wall normals with vanishing normal trace on the walls.

    For k = 1 the field is scalar in disguise and the problem reduces to
    the zero-trace eigenvalue on the walls; k = 0 is undefined (use
    :func:`neumann_poincare`).
    """
    if k < 1:
        raise ValueError("k must be >= 1; use neumann_poincare for k = 0")
    wall_nodes = np.union1d(mesh.nodes_on(GAMMA1A), mesh.nodes_on(GAMMA1B))
    if wall_nodes.size == 0:
        raise ValueError("mesh has no wall edges (Gamma1 empty)")
    if k == 1:
        return zero_trace_eigen(mesh, wall_nodes, tol=tol, seed=seed)

    K, M, _, _ = assemble(mesh)
    K2 = sp.block_diag([K, K], format="csr")
    M2 = sp.block_diag([M, M], format="csr")
    T = _wall_constraint_basis(mesh)
    Kc = (T.T @ K2 @ T).tocsr()
    Mc = (T.T @ M2 @ T).tocsr()
    rng = np.random.default_rng(seed)
    lam, xc, it, res = _inverse_iteration(Kc, Mc, rng, tol=tol)
    return EigenResult(lam, T @ xc, it, res, float(np.sqrt(lam)))


def trace_constant(mesh: TriMesh, tol: float = 1e-8, max_outer: int = 400,
                   seed: int = 0) -> EigenResult:
    """Best constant of the arc trace embedding.

    Largest eigenvalue of the boundary-mass versus H1-form pencil by
    power iteration with CG inner solves; ``constant`` is its square
    root, the trace inequality constant.
    """
    K, M, B0, _ = assemble(mesh)
    A = (K + M).tocsr()
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(mesh.n_nodes)
    x /= np.sqrt(x @ (A @ x))
    lam = 0.0
    for it in range(1, max_outer + 1):
        y, _, _ = pcg(A, B0 @ x, rtol=1e-9)
        ny = np.sqrt(y @ (A @ y))
        if ny == 0.0:
            raise EigenError("power iteration hit the null space of the trace form")
        x = y / ny
        lam = x @ (B0 @ x)
        r = B0 @ x - lam * (A @ x)
        res = np.linalg.norm(r) / (lam * np.linalg.norm(A @ x))
        if res <= tol:
            return EigenResult(lam, x, it, res, float(np.sqrt(lam)))
    raise EigenError(f"trace power iteration stalled at residual {res:.2e}")
