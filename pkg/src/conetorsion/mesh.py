"""Structured triangulations of a cone-intersected polar domain.

The mesh is a tensor grid in ``(s, theta)`` mapped through
``(s, theta) -> s * rho(theta) * (cos theta, sin theta)`` with a triangle
fan around the vertex.  ``n_radial`` counts the rings of vertices
including the vertex itself; ``n_angular`` the angular subdivisions.

Quadratic (P2) nodes are the vertices plus one node per edge.  Midside
nodes of arc edges are placed on the exact curve, so elements touching
the outer boundary carry quadratic geometry; all other elements are
affine.  Refinement is uniform red refinement with new arc nodes
projected back onto the curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PolarDomain

INTERIOR, GAMMA0, GAMMA1A, GAMMA1B = 0, 1, 2, 3
LABEL_NAMES = {GAMMA0: "Gamma0", GAMMA1A: "Gamma1A", GAMMA1B: "Gamma1B"}


class MeshQualityError(RuntimeError):
    """A degenerate or badly shaped element was produced."""


@dataclass
class TriMesh:
    """Labeled P2 triangulation of the domain.

    Attributes
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counter-clockwise
    edges : (ne, 2) int array of vertex pairs (a < b)
    tri_edges : (nt, 3) int array, edge opposite each local vertex
    edge_label : (ne,) int array (INTERIOR/GAMMA0/GAMMA1A/GAMMA1B)
    edge_owner : (ne,) int array, adjacent triangle for boundary edges
    gamma0_theta : (ne, 2) array, angular interval of each Gamma0 edge
    corner_vertices : vertex ids of the cone vertex and the two arc corners
    node_coords : (nv + ne, 2) array of P2 node positions
    """

    domain: PolarDomain
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(default=None, repr=False)
    tri_edges: np.ndarray = field(default=None, repr=False)
    edge_label: np.ndarray = field(default=None, repr=False)
    edge_owner: np.ndarray = field(default=None, repr=False)
    gamma0_theta: np.ndarray = field(default=None, repr=False)
    corner_vertices: list = field(default_factory=list)
    node_coords: np.ndarray = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_nodes(self) -> int:
        """Number of P2 nodes (vertices plus edge midpoints)."""
        return self.n_vertices + self.n_edges

    def tri_nodes(self) -> np.ndarray:
        """(nt, 6) P2 connectivity: 3 vertices then midside nodes opposite them."""
        return np.hstack([self.triangles, self.n_vertices + self.tri_edges])

    def boundary_edges(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.edge_label == label)

    def gamma0_edge_ids(self) -> np.ndarray:
        """Gamma0 edges ordered by angular interval.

        ``gamma0_theta[e]`` holds the angles of the two endpoints in the
        order of the (sorted) vertex pair ``edges[e]``, so the interval may
        be stored decreasing.
        """
        ids = self.boundary_edges(GAMMA0)
        return ids[np.argsort(self.gamma0_theta[ids].min(axis=1))]

    def nodes_on(self, label: int) -> np.ndarray:
        """All P2 node ids lying on edges with the given label."""
        ids = self.boundary_edges(label)
        nodes = set()
        for e in ids:
            a, b = self.edges[e]
            nodes.update((int(a), int(b), int(self.n_vertices + e)))
        return np.array(sorted(nodes), dtype=int)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    def angles(self) -> np.ndarray:
        """(nt, 3) interior angles in radians (straight-edge geometry)."""
        p = self.vertices[self.triangles]
        out = np.empty((len(p), 3))
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(u * v, axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out[:, i] = np.arccos(np.clip(cosang, -1.0, 1.0))
        return out

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    def validate(self, min_angle_deg: float = 0.2, max_angle_deg: float = 178.0):
        """Raise :class:`MeshQualityError` on degenerate or inverted cells.

        Tensor polar grids are anisotropic near the vertex, so only a loose
        minimum-angle floor is enforced; the maximum-angle condition is the
        one convergence needs and it is checked tightly.
        """
        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshQualityError(f"non-positive area in cell {bad[0]}")
        ang = self.angles()
        amin, amax = np.degrees(ang.min(1)), np.degrees(ang.max(1))
        bad = np.flatnonzero(amin < min_angle_deg)
        if bad.size:
            raise MeshQualityError(
                f"cell {bad[0]} has min angle {amin[bad[0]]:.3f} deg")
        bad = np.flatnonzero(amax > max_angle_deg)
        if bad.size:
            raise MeshQualityError(
                f"cell {bad[0]} has max angle {amax[bad[0]]:.2f} deg")

    def export_text(self) -> str:
        """Plain-text dump: vertex table, triangle table, labeled edge table."""
        lines = [f"vertices {self.n_vertices}"]
        lines += [f"{float(x)!r} {float(y)!r}" for x, y in self.vertices]
        lines.append(f"triangles {self.n_triangles}")
        lines += ["{} {} {}".format(*t) for t in self.triangles]
        bnd = np.flatnonzero(self.edge_label != INTERIOR)
        lines.append(f"edges {len(bnd)}")
        for e in bnd:
            a, b = self.edges[e]
            lines.append(f"{a} {b} {LABEL_NAMES[self.edge_label[e]]}")
        return "\n".join(lines) + "\n"


def _build_edges(mesh: TriMesh, boundary_info: dict):
    """Fill edge tables and P2 node coordinates.

    boundary_info maps a sorted vertex pair to (label, theta_a, theta_b);
    theta values are only meaningful for Gamma0 edges.
    """
    edge_ids: dict[tuple, int] = {}
    edges = []
    nt = mesh.n_triangles
    tri_edges = np.empty((nt, 3), dtype=int)
    count = np.zeros(0, dtype=int)
    owner = []

    for t, (a, b, c) in enumerate(mesh.triangles):
        for i, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            key = (min(u, v), max(u, v))
            e = edge_ids.get(key)
            if e is None:
                e = len(edges)
                edge_ids[key] = e
                edges.append(key)
                owner.append(t)
            else:
                owner[e] = -1 if owner[e] != t else owner[e]
            tri_edges[t, i] = e

    # recount adjacency to find true boundary edges and their owners
    adj = np.zeros(len(edges), dtype=int)
    own = np.full(len(edges), -1, dtype=int)
    for t in range(nt):
        for e in tri_edges[t]:
            adj[e] += 1
            own[e] = t
    edges = np.array(edges, dtype=int)

    label = np.full(len(edges), INTERIOR, dtype=int)
    g0theta = np.zeros((len(edges), 2))
    for key, (lab, ta, tb) in boundary_info.items():
        e = edge_ids.get(key)
        if e is None:
            raise MeshQualityError(f"boundary edge {key} missing from mesh")
        label[e] = lab
        g0theta[e] = (ta, tb)
    stray = np.flatnonzero((adj == 1) & (label == INTERIOR))
    if stray.size:
        raise MeshQualityError(f"unlabeled boundary edge {edges[stray[0]]}")

    mesh.edges = edges
    mesh.tri_edges = tri_edges
    mesh.edge_label = label
    mesh.edge_owner = np.where(adj == 1, own, -1)
    mesh.gamma0_theta = g0theta

    # P2 node coordinates: straight midpoints, arc midpoints projected
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    on_arc = label == GAMMA0
    if np.any(on_arc):
        tm = 0.5 * (g0theta[on_arc, 0] + g0theta[on_arc, 1])
        mid[on_arc] = mesh.domain.point(tm)
    mesh.node_coords = np.vstack([mesh.vertices, mid])


def generate(domain: PolarDomain, n_radial: int, n_angular: int,
             min_angle_deg: float = 0.2) -> TriMesh:
    """Build the structured mesh with ``n_radial`` vertex rings.

    Ring 0 is the vertex itself; the first band is a triangle fan, the
    remaining bands split each quad cell into two triangles.  Boundary
    vertices and arc midside nodes lie exactly on ``r = rho(theta)``.
    """
    if n_radial < 2:
        raise ValueError("n_radial must be >= 2")
    if n_angular < 4:
        raise ValueError("n_angular must be >= 4")
    w = domain.opening
    full = domain.cone.full_plane
    ncol = n_angular if full else n_angular + 1
    theta = np.arange(n_angular + 1) * (w / n_angular)
    s = np.arange(n_radial) / (n_radial - 1)

    verts = [np.zeros(2)]

    def vid(i, j):
        if i == 0:
            return 0
        return 1 + (i - 1) * ncol + (j % n_angular if full else j)

    for i in range(1, n_radial):
        r = s[i] * domain.rho(theta[:ncol])
        ring = np.stack([r * np.cos(theta[:ncol]), r * np.sin(theta[:ncol])], axis=-1)
        verts.append(ring)
    vertices = np.vstack([verts[0][None], *verts[1:]])

    tris = []
    for j in range(n_angular):
        tris.append((0, vid(1, j), vid(1, j + 1)))
    for i in range(1, n_radial - 1):
        for j in range(n_angular):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    triangles = np.array(tris, dtype=int)

    boundary = {}
    outer = n_radial - 1
    for j in range(n_angular):
        u, v = vid(outer, j), vid(outer, j + 1)
        tu, tv = theta[j], theta[j + 1]
        if u > v:
            u, v, tu, tv = v, u, tv, tu
        boundary[(u, v)] = (GAMMA0, tu, tv)
    if not full:
        for i in range(n_radial - 1):
            u, v = vid(i, 0), vid(i + 1, 0)
            boundary[(min(u, v), max(u, v))] = (GAMMA1A, 0.0, 0.0)
            u, v = vid(i, n_angular), vid(i + 1, n_angular)
            boundary[(min(u, v), max(u, v))] = (GAMMA1B, 0.0, 0.0)

    corners = [0] if full else [0, vid(outer, 0), vid(outer, n_angular)]
    mesh = TriMesh(domain=domain, vertices=vertices, triangles=triangles,
                   corner_vertices=corners)
    _build_edges(mesh, boundary)
    mesh.validate(min_angle_deg=min_angle_deg)
    return mesh


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement; each triangle splits into four.

    New vertices are the existing P2 midside nodes, so arc nodes stay on
    the exact curve; new arc midside nodes are projected afresh.
    """
    nv = mesh.n_vertices
    vertices = mesh.node_coords.copy()  # old vertices + edge nodes
    tris = []
    for t, (a, b, c) in enumerate(mesh.triangles):
        ea, eb, ec = mesh.tri_edges[t]          # opposite a, b, c
        ma, mb, mc = nv + ea, nv + eb, nv + ec
        tris.append((a, mc, mb))
        tris.append((b, ma, mc))
        tris.append((c, mb, ma))
        tris.append((ma, mb, mc))
    triangles = np.array(tris, dtype=int)

    boundary = {}
    for e in np.flatnonzero(mesh.edge_label != INTERIOR):
        a, b = mesh.edges[e]
        m = nv + e  # midside becomes a vertex; m > a and m > b always
        lab = int(mesh.edge_label[e])
        if lab == GAMMA0:
            ta, tb = mesh.gamma0_theta[e]  # angles of a and b respectively
            tm = 0.5 * (ta + tb)
            boundary[(a, m)] = (lab, ta, tm)
            boundary[(b, m)] = (lab, tb, tm)
        else:
            boundary[(a, m)] = (lab, 0.0, 0.0)
            boundary[(b, m)] = (lab, 0.0, 0.0)

    out = TriMesh(domain=mesh.domain, vertices=vertices, triangles=triangles,
                  corner_vertices=list(mesh.corner_vertices))
    _build_edges(out, boundary)
    return out


def mesh_size(mesh: TriMesh) -> float:
    """Largest circumdiameter over all triangles."""
    p = mesh.vertices[mesh.triangles]
    l1 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    l2 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    l3 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    area = np.abs(mesh.signed_areas())
    return float(np.max(l1 * l2 * l3 / (2.0 * area)))


def mesh_for_target_h(domain: PolarDomain, target_h: float,
                      min_angle_deg: float = 0.2) -> TriMesh:
    """Pick (n_radial, n_angular) giving roughly isotropic outer cells of
    size ``target_h`` and generate the mesh."""
    R0 = domain.base_radius
    n_bands = max(2, int(np.ceil(1.2 * R0 / target_h)))
    n_ang = max(4, int(np.ceil(domain.opening * n_bands)))
    return generate(domain, n_bands + 1, n_ang, min_angle_deg=min_angle_deg)
