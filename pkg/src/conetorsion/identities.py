"""Term-by-term assembly of the three fundamental integral identities.

Each identity is reported with named left/right terms, the absolute
residual of the balance and its size relative to the total term mass.
The volume scale ``N |domain|`` is carried along so callers can judge
near-zero identities (rigidity cases) against the problem size instead
of a vanishing term sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import FemSolution
from .geometry import (
    PolarDomain,
    corner_conormal_sum,
    curvature,
    measures,
    normal_span_dim,
    reference_radius,
)
from .quantities import (
    PreconditionError,
    N_DIM,
    arc_samples,
    alternative_center_z,
    center_z,
    deficit_integrals,
    gamma1_fluxes,
    interior_samples,
    wall_samples,
    _deficit_density,
)


class MeanConvexityError(ValueError):
    """The arc has non-positive curvature somewhere."""


@dataclass
class IdentityReport:
    """One fundamental identity, split into named terms."""

    name: str
    lhs_terms: dict = field(default_factory=dict)
    rhs_terms: dict = field(default_factory=dict)
    residual: float = 0.0
    scale: float = 0.0
    relative_residual: float = 0.0
    reference: float = 0.0  # N |domain|, the natural size of the terms

    def lhs_total(self) -> float:
        return float(sum(self.lhs_terms.values()))

    def rhs_total(self) -> float:
        return float(sum(self.rhs_terms.values()))

    def terms(self) -> dict:
        out = {f"lhs_{k}": v for k, v in self.lhs_terms.items()}
        out.update({f"rhs_{k}": v for k, v in self.rhs_terms.items()})
        return out

    def as_dict(self) -> dict:
        d = {"name": self.name}
        d.update(self.terms())
        d.update(residual=self.residual, scale=self.scale,
                 relative_residual=self.relative_residual,
                 reference=self.reference)
        return d


def _finish(name, lhs, rhs, reference) -> IdentityReport:
    lhs_total = sum(lhs.values())
    rhs_total = sum(rhs.values())
    residual = abs(lhs_total - rhs_total)
    scale = sum(abs(v) for v in lhs.values()) + sum(abs(v) for v in rhs.values())
    rel = residual / scale if scale > 0 else 0.0
    return IdentityReport(name=name, lhs_terms=lhs, rhs_terms=rhs,
                          residual=residual, scale=scale,
                          relative_residual=rel, reference=reference)


def check_center_admissible(u: FemSolution, z, tol: float = 1e-10):
    """The identities need ``<x - z, nu> = 0`` along the walls."""
    s = wall_samples(u)
    if s.w.size == 0:
        return
    z = np.asarray(z, dtype=float)
    mism = np.abs(np.sum((s.x - z) * s.nu, axis=-1))
    worst = int(np.argmax(mism))
    if mism[worst] > tol:
        raise PreconditionError(
            f"center {tuple(z)} is not wall-admissible: |<x-z,nu>| = "
            f"{mism[worst]:.3e} at {tuple(s.x[worst])}")


def serrin_identity(u: FemSolution, z) -> IdentityReport:
    """Weighted-deficit balance against the overdetermined flux defect.

    Left: the (-u)-weighted Cauchy-Schwarz deficit plus the u-weighted
    wall flux.  Right: half the arc integral of
    ``(u_nu^2 - R^2)(u_nu - q_nu)`` with ``q_nu = <x - z, nu>`` from the
    analytic curve.  Requires an admissible center.
    """
    check_center_admissible(u, z)
    z = np.asarray(z, dtype=float)
    dom = u.mesh.domain
    area, length, _ = measures(dom)
    R = reference_radius(area, length)

    _, weighted = deficit_integrals(u)
    _, g1w = gamma1_fluxes(u)
    lhs = {"weighted_deficit": weighted, "gamma1_weighted_flux": g1w}

    s = arc_samples(u)
    unu = s.u_nu
    qnu = np.sum((s.x - z) * s.nu, axis=-1)
    rhs_val = 0.5 * float(np.sum(s.w * (unu ** 2 - R ** 2) * (unu - qnu)))
    rhs = {"flux_defect": rhs_val}
    return _finish("serrin", lhs, rhs, N_DIM * area)


def sbt_identity(u: FemSolution, domain: PolarDomain | None = None
                 ) -> tuple[IdentityReport, IdentityReport]:
    """Both curvature-balance forms for the soap-bubble rigidity.

    The first form balances the deficit, wall flux and the squared
    normal-derivative deviation against ``int (1/R - H) u_nu^2``.  The
    second replaces ``1/R`` by the corner-corrected constant ``H0`` and
    splits the right side into the ``u_nu^2 - R^2`` and ``R - q_nu``
    parts; the corner term is an exact two-point sum.
    """
    dom = domain or u.mesh.domain
    area, length, _ = measures(dom)
    R = reference_radius(area, length)
    k = normal_span_dim(dom.cone)
    z = center_z(u, k)

    dp, _ = deficit_integrals(u)
    g1, _ = gamma1_fluxes(u)
    s = arc_samples(u)
    unu = s.u_nu
    unu_sq = float(np.sum(s.w * unu ** 2))
    dev_sq = float(np.sum(s.w * (unu - R) ** 2))

    lhs = {
        "deficit": dp / (N_DIM - 1),
        "gamma1_flux": -g1 / (N_DIM - 1),
        "unu_deviation": dev_sq / R,
    }
    rhs = {"curvature_defect": float(np.sum(s.w * (1.0 / R - s.H) * unu ** 2))}
    first = _finish("sbt", lhs, rhs, N_DIM * area)

    corner = corner_conormal_sum(dom, z)
    H0 = 1.0 / R - corner / ((N_DIM - 1) * N_DIM * area)
    qnu = np.sum((s.x - z) * s.nu, axis=-1)
    lhs2 = {
        "deficit": dp / (N_DIM - 1),
        "gamma1_flux": -g1 / (N_DIM - 1),
        "corner": -unu_sq * corner / ((N_DIM - 1) * N_DIM * area),
        "unu_deviation": dev_sq / R,
    }
    rhs2 = {
        "H0_defect_unu": float(np.sum(s.w * (H0 - s.H) * (unu ** 2 - R ** 2))),
        "H0_defect_qnu": R * float(np.sum(s.w * (H0 - s.H) * (R - qnu))),
    }
    second = _finish("sbt_v2", lhs2, rhs2, N_DIM * area)
    return first, second


def mean_convexity_ranges(domain: PolarDomain, n: int = 2048):
    """Angular intervals where the arc curvature is non-positive."""
    th = np.linspace(0.0, domain.opening, n)
    H = curvature(domain, th)
    bad = H <= 0.0
    ranges = []
    start = None
    for i, b in enumerate(bad):
        if b and start is None:
            start = th[i]
        elif not b and start is not None:
            ranges.append((start, th[i]))
            start = None
    if start is not None:
        ranges.append((start, th[-1]))
    return ranges


def hk_identity(u: FemSolution, domain: PolarDomain | None = None) -> IdentityReport:
    """Curvature-harmonic balance behind the touching-ball inequality.

    Requires a mean-convex arc; the right side is the inequality defect
    ``int dS/H - N |domain|`` evaluated from the analytic curve.
    """
    dom = domain or u.mesh.domain
    bad = mean_convexity_ranges(dom)
    if bad:
        spans = ", ".join(f"[{a:.4f}, {b:.4f}]" for a, b in bad)
        raise MeanConvexityError(f"arc is not mean-convex on theta in {spans}")

    area, _, _ = measures(dom)
    dp, _ = deficit_integrals(u)
    g1, _ = gamma1_fluxes(u)
    s = arc_samples(u)
    unu = s.u_nu
    lhs = {
        "deficit": dp / (N_DIM - 1),
        "gamma1_flux": -g1 / (N_DIM - 1),
        "curvature_deviation": float(np.sum(s.w * (1.0 - s.H * unu) ** 2 / s.H)),
    }
    rhs = {"hk_deficit": hk_deficit(dom)}
    return _finish("hk", lhs, rhs, N_DIM * area)


def hk_deficit(domain: PolarDomain, n: int = 4096) -> float:
    """Inequality defect ``int dS/H - N |domain|`` from the analytic curve."""
    from scipy.integrate import quad

    area, _, _ = measures(domain)

    def integrand(t):
        return float(domain.arc_measure(t) / curvature(domain, t))

    val, err = quad(integrand, 0.0, domain.opening, epsabs=1e-13,
                    epsrel=1e-11, limit=400)
    return float(val - N_DIM * area)


def sbt_deviation(domain: PolarDomain, z=(0.0, 0.0)) -> float:
    """L2 curvature deviation ``||H0 - H||`` along the arc, all analytic."""
    from scipy.integrate import quad

    area, length, _ = measures(domain)
    R = reference_radius(area, length)
    corner = corner_conormal_sum(domain, z)
    H0 = 1.0 / R - corner / ((N_DIM - 1) * N_DIM * area)

    def integrand(t):
        return float((H0 - curvature(domain, t)) ** 2 * domain.arc_measure(t))

    val, _ = quad(integrand, 0.0, domain.opening, epsabs=0.0, epsrel=1e-11,
                  limit=400)
    return float(np.sqrt(val))


def rigidity_detector(u: FemSolution, tol: float = 1e-3):
    """Flag the rotationally rigid configuration and fit its center/radius.

    Rigid iff the plain deficit integral is below ``tol`` times the
    domain area.  The center is the least-squares match of the gradient
    to ``x - z``; the radius comes from the arc (the zero level set).
    """
    s = interior_samples(u)
    deficit = float(np.sum(s.w * _deficit_density(s.hess)))
    is_rigid = deficit <= tol * s.area
    z = alternative_center_z(u)
    arc = arc_samples(u)
    r2 = np.sum((arc.x - z) ** 2, axis=-1)
    R = float(np.sqrt(np.sum(arc.w * r2) / np.sum(arc.w)))
    return bool(is_rigid), z, R
