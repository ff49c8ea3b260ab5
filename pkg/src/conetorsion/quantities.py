"""Scalar and field quantities derived from a torsion solve.

Interior quantities integrate over the elements with the assembly rule.
Boundary quantities along the arc use the analytic curve: quadrature
nodes sit exactly on ``r = rho(theta)`` with analytic normal, curvature
and line element, and only the finite-element field is sampled there
(through each arc edge's owner element).  This keeps curvature-weighted
integrals free of the polygonal geometry error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fem import (
    EDGE_QP,
    EDGE_QW,
    FemSolution,
    TRI_QP,
    TRI_QW,
    _p2_grad,
    _p2_shape,
    element_coords,
    invert_map,
)
from .geometry import PolarDomain, curvature, measures, reference_radius
from .mesh import GAMMA0, GAMMA1A, GAMMA1B

N_DIM = 2


class PreconditionError(ValueError):
    """An operation's precondition on its inputs failed."""


# ---------------------------------------------------------------------------
# cached quadrature samples

@dataclass
class InteriorSamples:
    w: np.ndarray       # quadrature weights including Jacobians
    x: np.ndarray       # physical positions (n, 2)
    u: np.ndarray
    grad: np.ndarray    # (n, 2)
    hess: np.ndarray    # (n, 2, 2)

    @property
    def area(self) -> float:
        return float(np.sum(self.w))


def interior_samples(u: FemSolution) -> InteriorSamples:
    """Element-quadrature samples of the solution (cached on the solution)."""
    cached = getattr(u, "_interior_samples", None)
    if cached is not None:
        return cached
    mesh = u.mesh
    nt = mesh.n_triangles
    coords = element_coords(mesh)
    tris = np.arange(nt)
    ws, xs, us, gs, hs = [], [], [], [], []
    for q in range(len(TRI_QW)):
        ref = np.tile(TRI_QP[q], (nt, 1))
        phi = _p2_shape(TRI_QP[q:q + 1])[0]
        dphi = _p2_grad(TRI_QP[q:q + 1])[0]
        x = np.einsum("a,eai->ei", phi, coords)
        J = np.einsum("eai,aj->eij", coords, dphi)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        uval, grad, hess = u.eval_at(tris, ref)
        ws.append(0.5 * TRI_QW[q] * det)
        xs.append(x)
        us.append(uval)
        gs.append(grad)
        hs.append(hess)
    out = InteriorSamples(np.concatenate(ws), np.vstack(xs), np.concatenate(us),
                          np.vstack(gs), np.concatenate(hs))
    u._interior_samples = out
    return out


@dataclass
class ArcSamples:
    theta: np.ndarray
    w: np.ndarray       # dS weights (line element included)
    x: np.ndarray       # points on the exact curve
    nu: np.ndarray      # analytic outward normal
    H: np.ndarray       # analytic signed curvature
    u: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    @property
    def u_nu(self) -> np.ndarray:
        return np.sum(self.grad * self.nu, axis=-1)

    @property
    def length(self) -> float:
        return float(np.sum(self.w))


def arc_samples(u: FemSolution, n_gauss: int = 4) -> ArcSamples:
    """Analytic-curve quadrature samples along the arc (cached)."""
    cached = getattr(u, "_arc_samples", None)
    if cached is not None:
        return cached
    mesh = u.mesh
    dom = mesh.domain
    gx, gw = np.polynomial.legendre.leggauss(n_gauss)
    ids = mesh.gamma0_edge_ids()
    lo = mesh.gamma0_theta[ids].min(axis=1)
    hi = mesh.gamma0_theta[ids].max(axis=1)
    half = 0.5 * (hi - lo)
    theta = (0.5 * (hi + lo)[:, None] + half[:, None] * gx[None, :]).ravel()
    wtheta = (half[:, None] * gw[None, :]).ravel()
    owners = np.repeat(mesh.edge_owner[ids], n_gauss)

    x = dom.point(theta)
    # curve points sit a hair outside the quadratic edges; extrapolating the
    # element polynomial there is intended, hence the loose slack
    refs = invert_map(element_coords(mesh)[owners], x, slack=0.25)
    if np.any(np.isnan(refs)):
        bad = int(np.flatnonzero(np.any(np.isnan(refs), axis=1))[0])
        raise PreconditionError(
            f"arc quadrature point {x[bad]} strayed from its owner element")
    uval, grad, hess = u.eval_at(owners, refs)
    out = ArcSamples(theta=theta,
                     w=wtheta * dom.arc_measure(theta),
                     x=x,
                     nu=dom.outward_normal(theta),
                     H=curvature(dom, theta),
                     u=uval, grad=grad, hess=hess)
    u._arc_samples = out
    return out


@dataclass
class WallSamples:
    w: np.ndarray
    x: np.ndarray
    nu: np.ndarray
    u: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def wall_samples(u: FemSolution) -> WallSamples:
    """Gauss samples along both wall rays; empty arrays when there are none."""
    cached = getattr(u, "_wall_samples", None)
    if cached is not None:
        return cached
    mesh = u.mesh
    normals = mesh.domain.cone.wall_normals()
    ws, xs, nus, owners = [], [], [], []
    for label, nu in zip((GAMMA1A, GAMMA1B), normals):
        ids = mesh.boundary_edges(label)
        if ids.size == 0:
            continue
        a = mesh.vertices[mesh.edges[ids, 0]]
        b = mesh.vertices[mesh.edges[ids, 1]]
        seg = b - a
        lengths = np.linalg.norm(seg, axis=1)
        for t, wq in zip(EDGE_QP, EDGE_QW):
            xs.append(a + t * seg)
            ws.append(wq * lengths)
            nus.append(np.tile(nu, (len(ids), 1)))
            owners.append(mesh.edge_owner[ids])
    if not xs:
        empty = np.zeros((0,))
        out = WallSamples(empty, np.zeros((0, 2)), np.zeros((0, 2)),
                          empty, np.zeros((0, 2)), np.zeros((0, 2, 2)))
    else:
        x = np.vstack(xs)
        w = np.concatenate(ws)
        nu = np.vstack(nus)
        own = np.concatenate(owners)
        refs = invert_map(element_coords(mesh)[own], x, slack=1e-9)
        uval, grad, hess = u.eval_at(own, refs)
        out = WallSamples(w, x, nu, uval, grad, hess)
    u._wall_samples = out
    return out


# ---------------------------------------------------------------------------
# scalar quantities

def _deficit_density(hess: np.ndarray) -> np.ndarray:
    """Pointwise Cauchy-Schwarz deficit |H|^2 - (tr H)^2 / N of a Hessian."""
    frob = np.sum(hess ** 2, axis=(-2, -1))
    tr = hess[..., 0, 0] + hess[..., 1, 1]
    return frob - tr ** 2 / N_DIM


def center_z(u: FemSolution, k: int) -> np.ndarray:
    """Center fixed by the wall-normal span: the first k coordinates are 0,
    the rest are volume means of ``x_i - du/dx_i``.

    For the planar sector the span is the whole plane when k = 2 (center
    forced to the vertex), the wall-normal line when k = 1 (one free
    coordinate along the wall), and empty when k = 0.
    """
    if k >= 2:
        return np.zeros(2)
    s = interior_samples(u)
    mean = np.sum(s.w[:, None] * (s.x - s.grad), axis=0) / s.area
    if k == 1:
        # wall along the x-axis: the y-coordinate is constrained to 0
        return np.array([mean[0], 0.0])
    return mean


def alternative_center_z(u: FemSolution) -> np.ndarray:
    """Modified center of mass ``mean(x - grad u)``; no coordinate zeroing."""
    s = interior_samples(u)
    return np.sum(s.w[:, None] * (s.x - s.grad), axis=0) / s.area


def deficit_integrals(u: FemSolution) -> tuple[float, float]:
    """Plain and ``(-u)``-weighted integrals of the Cauchy-Schwarz deficit."""
    s = interior_samples(u)
    dens = _deficit_density(s.hess)
    return (float(np.sum(s.w * dens)), float(np.sum(s.w * (-s.u) * dens)))


def gamma1_fluxes(u: FemSolution) -> tuple[float, float]:
    """Wall integrals of ``<Hess u grad u, nu>`` plain and weighted by u."""
    s = wall_samples(u)
    if s.w.size == 0:
        return 0.0, 0.0
    flux = np.einsum("nij,nj,ni->n", s.hess, s.grad, s.nu)
    return (float(np.sum(s.w * flux)), float(np.sum(s.w * s.u * flux)))


class BoundaryProfile(NamedTuple):
    m_lower: float
    unu_max: float
    unu_minus_R_L2: float
    volume_flux: float


def boundary_profile(u: FemSolution, domain: PolarDomain | None = None) -> BoundaryProfile:
    """Extremes and L2 deviation of the normal derivative along the arc."""
    domain = domain or u.mesh.domain
    area, length, _ = measures(domain)
    R = reference_radius(area, length)
    s = arc_samples(u)
    unu = s.u_nu
    return BoundaryProfile(
        m_lower=float(np.min(unu)),
        unu_max=float(np.max(unu)),
        unu_minus_R_L2=float(np.sqrt(np.sum(s.w * (unu - R) ** 2))),
        volume_flux=float(np.sum(s.w * unu)),
    )


class HFields(NamedTuple):
    h_mean: float
    grad_h_L2: float
    hess_h_L2: float
    h_gamma0: np.ndarray


def h_fields(u: FemSolution, z) -> HFields:
    """Harmonic comparison field ``h = |x-z|^2/2 - u``.

    Returns its volume mean, the L2 norms of its gradient and Hessian,
    and its arc samples (where the Dirichlet condition makes h equal the
    quadratic part exactly).
    """
    z = np.asarray(z, dtype=float)
    s = interior_samples(u)
    q = 0.5 * np.sum((s.x - z) ** 2, axis=-1)
    h = q - s.u
    grad_h = (s.x - z) - s.grad
    hess_h = np.eye(2)[None] - s.hess
    arc = arc_samples(u)
    h_arc = 0.5 * np.sum((arc.x - z) ** 2, axis=-1)
    return HFields(
        h_mean=float(np.sum(s.w * h) / s.area),
        grad_h_L2=float(np.sqrt(np.sum(s.w * np.sum(grad_h ** 2, axis=-1)))),
        hess_h_L2=float(np.sqrt(np.sum(s.w * np.sum(hess_h ** 2, axis=(-2, -1))))),
        h_gamma0=h_arc,
    )


class Pseudodistances(NamedTuple):
    pd_sbt: float          # || |x-z| - R ||_L2(arc)
    pd_hk: float           # || (|x-z|^2 - rho^2)/2 ||_L2(arc), volume-mean rho
    pd_hk_alt: float       # same with the arc-mean rho
    rho: float
    rho_alt: float
    rho_i: float
    rho_e: float


def pseudodistances(domain: PolarDomain, z, u: FemSolution,
                    n_extremes: int = 4096) -> Pseudodistances:
    """L2 pseudodistances of the arc from the sphere about z, plus the
    extreme radii.

    ``rho`` is ``sqrt(2 * mean h)`` over the domain; ``rho_alt`` the
    arc-mean radius ``sqrt(mean |x-z|^2)``, which minimizes the quadratic
    pseudodistance.
    """
    z = np.asarray(z, dtype=float)
    area, length, _ = measures(domain)
    R = reference_radius(area, length)
    s = arc_samples(u)
    r = np.linalg.norm(s.x - z, axis=-1)

    hf = h_fields(u, z)
    rho2 = 2.0 * hf.h_mean
    rho2_alt = float(np.sum(s.w * r ** 2) / np.sum(s.w))

    pd_sbt = float(np.sqrt(np.sum(s.w * (r - R) ** 2)))
    pd_hk = float(np.sqrt(np.sum(s.w * (0.5 * (r ** 2 - rho2)) ** 2)))
    pd_hk_alt = float(np.sqrt(np.sum(s.w * (0.5 * (r ** 2 - rho2_alt)) ** 2)))

    th = np.linspace(0.0, domain.opening, n_extremes)
    rr = np.linalg.norm(domain.point(th) - z, axis=-1)
    return Pseudodistances(pd_sbt, pd_hk, pd_hk_alt,
                           float(np.sqrt(rho2)), float(np.sqrt(rho2_alt)),
                           float(rr.min()), float(rr.max()))


@dataclass(frozen=True)
class TorsionReport:
    """Flat summary of every scalar quantity entering the identities."""

    R: float
    z: tuple
    m_lower: float
    unu_max: float
    max_neg_u: float
    deficit_plain: float
    deficit_weighted: float
    gamma1_flux: float
    gamma1_flux_weighted: float
    unu_minus_R_L2: float
    hess_h_L2: float
    rho_i: float
    rho_e: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["z"] = f"{self.z[0]!r};{self.z[1]!r}"
        return d


def torsion_report(u: FemSolution, domain: PolarDomain | None = None,
                   k: int | None = None, z=None) -> TorsionReport:
    """Assemble the full torsion quantity report for a solved field."""
    from .geometry import normal_span_dim

    domain = domain or u.mesh.domain
    if k is None:
        k = normal_span_dim(domain.cone)
    if z is None:
        z = center_z(u, k)
    z = np.asarray(z, dtype=float)

    area, length, _ = measures(domain)
    R = reference_radius(area, length)
    prof = boundary_profile(u, domain)
    dp, dw = deficit_integrals(u)
    g1, g1w = gamma1_fluxes(u)
    hf = h_fields(u, z)
    pd = pseudodistances(domain, z, u)
    return TorsionReport(
        R=R,
        z=(float(z[0]), float(z[1])),
        m_lower=prof.m_lower,
        unu_max=prof.unu_max,
        max_neg_u=float(np.max(-u.coeffs)),
        deficit_plain=dp,
        deficit_weighted=dw,
        gamma1_flux=g1,
        gamma1_flux_weighted=g1w,
        unu_minus_R_L2=prof.unu_minus_R_L2,
        hess_h_L2=hf.hess_h_L2,
        rho_i=pd.rho_i,
        rho_e=pd.rho_e,
    )


def fan_deficit_share(u: FemSolution) -> float:
    """Fraction of the plain deficit integral carried by the vertex fan.

    The fan isolates the conical point; its share is monitored to confirm
    the vertex neighbourhood does not dominate the detector integrals.
    """
    s = interior_samples(u)
    dens = _deficit_density(s.hess)
    fan = np.tile(np.any(u.mesh.triangles == 0, axis=1), len(TRI_QW))
    total = float(np.sum(s.w * dens))
    if total <= 0.0:
        return 0.0
    return float(np.sum(s.w[fan] * dens[fan]) / total)


def boundary_distance(domain: PolarDomain, points, n_samples: int = 4096) -> np.ndarray:
    """Distance from points to the full boundary (arc plus walls)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    th = np.linspace(0.0, domain.opening, n_samples)
    arc = domain.point(th)
    d2 = np.min(np.sum((pts[:, None, :] - arc[None, :, :]) ** 2, axis=-1), axis=1)
    dist = np.sqrt(d2)
    if not domain.cone.full_plane:
        for theta_w in (0.0, domain.opening):
            end = domain.point(theta_w)
            t = np.clip(pts @ end / (end @ end), 0.0, 1.0)
            proj = t[:, None] * end[None, :]
            dist = np.minimum(dist, np.linalg.norm(pts - proj, axis=-1))
    return dist
