"""Convergence studies, perturbation sweeps and scaling-exponent fits.

A sweep solves the torsion problem on a one-parameter family of
perturbed domains, collects the analytic deviations (curvature and
touching-ball defects) against the measured pseudodistances, fits the
log-log exponents and verifies the stability inequalities with the
assembled constants.  Records that lose mean convexity are kept but
flagged and left out of the touching-ball fits.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantsReport, build_constants_report
from .fem import neumann_poincare, solve_torsion, trace_constant, vector_poincare
from .geometry import (
    PolarDomain,
    SectorCone,
    geometry_report,
    measures,
    normal_span_dim,
    reference_radius,
)
from .identities import (
    hk_deficit,
    hk_identity,
    mean_convexity_ranges,
    sbt_deviation,
    sbt_identity,
    serrin_identity,
)
from .mesh import generate, mesh_for_target_h, mesh_size, refine
from .quantities import (
    alternative_center_z,
    center_z,
    interior_samples,
    pseudodistances,
)

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fit_loglog(xs, ys) -> FitResult:
    """Least-squares power-law fit on the logs of positive data."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 3:
        raise ValueError("need at least 3 points for a log-log fit")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs strictly positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, len(xs))


@dataclass
class ConvergenceRow:
    level: int
    h: float
    n_nodes: int
    l2_error: float
    h1_error: float


@dataclass
class ConvergenceStudy:
    rows: list
    l2_rate: float
    h1_rate: float

    def as_rows(self) -> list[dict]:
        return [dict(level=r.level, h=r.h, n_nodes=r.n_nodes,
                     l2_error=r.l2_error, h1_error=r.h1_error) for r in self.rows]


def convergence_study(cone: SectorCone, base_radius: float = 1.0,
                      levels: int = 3, base_rings: int = 9) -> ConvergenceStudy:
    """Errors against the exact quadratic solution on the unperturbed sector.

    ``levels`` uniform refinements of the base mesh; rates are the
    log-log slopes over all levels.
    """
    domain = PolarDomain(cone, base_radius=base_radius)
    n_ang = max(8, int(np.ceil(cone.opening * (base_rings - 1))))
    mesh = generate(domain, base_rings, n_ang)
    R2 = base_radius ** 2
    rows = []
    for level in range(levels + 1):
        u = solve_torsion(mesh)
        s = interior_samples(u)
        u_exact = 0.5 * (np.sum(s.x ** 2, axis=1) - R2)
        l2 = float(np.sqrt(np.sum(s.w * (s.u - u_exact) ** 2)))
        h1 = float(np.sqrt(np.sum(s.w * np.sum((s.grad - s.x) ** 2, axis=1))))
        rows.append(ConvergenceRow(level, mesh_size(mesh), mesh.n_nodes, l2, h1))
        if level < levels:
            mesh = refine(mesh)
    hs = [r.h for r in rows]

    def rate(errors):
        if len(rows) >= 3:
            return fit_loglog(hs, errors).slope
        return float(np.log(errors[0] / errors[1]) / np.log(hs[0] / hs[1]))

    return ConvergenceStudy(rows, rate([r.l2_error for r in rows]),
                            rate([r.h1_error for r in rows]))


@dataclass
class SweepRecord:
    """One perturbation size of a stability sweep."""

    epsilon: float
    h: float
    deviation_sbt: float
    deviation_hk: float        # NaN when the arc is not mean-convex
    pd_sbt: float
    pd_hk: float
    rho_gap: float
    mean_convex: bool
    h_separated: bool          # h^2 well below epsilon, FEM error subdominant
    sbt_bound_ok: bool
    hk_bound_ok: bool
    z: tuple = (0.0, 0.0)
    constants: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = dict(epsilon=self.epsilon, h=self.h,
                 deviation_sbt=self.deviation_sbt, deviation_hk=self.deviation_hk,
                 pd_sbt=self.pd_sbt, pd_hk=self.pd_hk, rho_gap=self.rho_gap,
                 mean_convex=self.mean_convex, h_separated=self.h_separated,
                 sbt_bound_ok=self.sbt_bound_ok, hk_bound_ok=self.hk_bound_ok,
                 z_x=self.z[0], z_y=self.z[1])
        d.update({f"const_{k}": v for k, v in self.constants.items()})
        d.update({f"resid_{k}": v for k, v in self.residuals.items()})
        return d


def sweep_constants(domain: PolarDomain, k: int, eigen_target_h: float,
                    unu_max: float, max_neg_u: float) -> ConstantsReport:
    """Constants report on a coarser eigenvalue mesh.

    The variational constants converge fast under refinement and only
    enter inequality checks with wide margins, so a dedicated coarser
    mesh keeps sweeps affordable.
    """
    geo = geometry_report(domain)
    emesh = mesh_for_target_h(domain, eigen_target_h)
    lam2 = trace_constant(emesh).constant
    mu2_inv = 1.0 / neumann_poincare(emesh).constant
    eta2_inv = 1.0 / vector_poincare(emesh, k).constant if k >= 1 else None
    return build_constants_report(
        k=k, r_interior=geo.r_interior, r_exterior=geo.r_exterior,
        diameter=geo.diameter, area=geo.area, gamma0_length=geo.gamma0_length,
        lambda2=lam2, mu2_inv=mu2_inv, eta2_inv=eta2_inv,
        unu_max=unu_max, max_neg_u=max_neg_u)


def _sweep_one(opening: float, coefficients, eps: float, target_h: float,
               z_policy: str, eigen_target_h: float) -> SweepRecord:
    domain = PolarDomain(SectorCone(opening), amplitude=eps,
                         coefficients=coefficients)
    k = normal_span_dim(domain.cone)
    mesh = mesh_for_target_h(domain, target_h)
    h = mesh_size(mesh)
    u = solve_torsion(mesh)

    z_paper = center_z(u, k)
    z = alternative_center_z(u) if z_policy == "alternative" else z_paper

    mean_convex = len(mean_convexity_ranges(domain)) == 0
    dev_sbt = sbt_deviation(domain, z_paper)
    dev_hk = hk_deficit(domain) if mean_convex else float("nan")
    pd = pseudodistances(domain, z, u)

    residuals = {}
    try:
        residuals["serrin"] = serrin_identity(u, z_paper).relative_residual
    except Exception as exc:  # admissibility is policy-dependent
        log.debug("serrin residual skipped at eps=%g: %s", eps, exc)
    r_sbt, r_sbt2 = sbt_identity(u)
    residuals["sbt"] = r_sbt.relative_residual
    residuals["sbt_v2"] = r_sbt2.relative_residual
    if mean_convex:
        residuals["hk"] = hk_identity(u).relative_residual

    from .quantities import boundary_profile
    prof = boundary_profile(u)
    consts = sweep_constants(domain, k, eigen_target_h,
                             unu_max=prof.unu_max,
                             max_neg_u=float(np.max(-u.coeffs)))

    sbt_ok = pd.pd_sbt <= consts.best_sbt() * dev_sbt
    hk_ok = (not mean_convex) or (pd.pd_hk <= consts.best_hk() * np.sqrt(dev_hk))
    return SweepRecord(
        epsilon=eps, h=h, deviation_sbt=dev_sbt, deviation_hk=dev_hk,
        pd_sbt=pd.pd_sbt, pd_hk=pd.pd_hk, rho_gap=pd.rho_e - pd.rho_i,
        mean_convex=mean_convex,
        h_separated=h * h <= 0.25 * eps,
        sbt_bound_ok=bool(sbt_ok), hk_bound_ok=bool(hk_ok),
        z=(float(z[0]), float(z[1])),
        constants=consts.as_dict(),
        residuals=residuals,
    )


def stability_sweep(opening: float, coefficients, eps_list,
                    target_h: float = 0.02, z_policy: str = "paper",
                    eigen_target_h: float = 0.05, threads: int = 1
                    ) -> tuple[list[SweepRecord], dict]:
    """Run the perturbation sweep and fit the stability exponents.

    Returns the records ordered by epsilon and the log-log fits:
    ``sbt`` (pseudodistance vs curvature deviation, expected slope 1),
    ``hk`` (vs inequality defect, expected slope 1/2) and the two
    Hausdorff-gap fits.  Non-mean-convex records are excluded from the
    touching-ball fits.
    """
    if z_policy not in ("paper", "alternative"):
        raise ValueError(f"unknown z policy {z_policy!r}")
    eps_list = sorted(float(e) for e in eps_list)
    if any(e <= 0 for e in eps_list):
        raise ValueError("epsilon values must be positive")

    def work(eps):
        return _sweep_one(opening, coefficients, eps, target_h, z_policy,
                          eigen_target_h)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, eps_list))
    else:
        records = [work(e) for e in eps_list]
    records.sort(key=lambda r: r.epsilon)

    dev_sbt = np.array([r.deviation_sbt for r in records])
    pd_sbt = np.array([r.pd_sbt for r in records])
    gap = np.array([r.rho_gap for r in records])
    mc = np.array([r.mean_convex for r in records])
    dev_hk = np.array([r.deviation_hk for r in records])
    pd_hk = np.array([r.pd_hk for r in records])

    fits = {
        "sbt": fit_loglog(dev_sbt, pd_sbt),
        "rho_gap_sbt": fit_loglog(dev_sbt, gap),
    }
    if np.count_nonzero(mc) >= 3:
        fits["hk"] = fit_loglog(dev_hk[mc], pd_hk[mc])
        fits["rho_gap_hk"] = fit_loglog(np.sqrt(dev_hk[mc]), gap[mc])
    return records, fits
