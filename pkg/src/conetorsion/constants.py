"""Closed-form constants and the assembled stability constants.

Pure formula evaluation: Hopf and gradient barriers from the touching
ball radii, the annulus torsion profile behind them, the branchwise
Poincare combination, and the two stability constants in their general
and lower-bounded-flux variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


def hopf_bound(r_interior: float) -> float:
    """Lower bound for the normal derivative on the arc.

    Equals the interior touching-ball radius; 0 signals that no bound is
    available (degenerate domain).
    """
    if r_interior < 0:
        raise ValueError("r_interior must be non-negative")
    return float(r_interior)


def gradient_bound(N: int, r_exterior: float, diameter: float) -> float:
    """Barrier bound for the gradient maximum.

    ``6 re (1 + d/re)^4`` in the plane, ``(3N/2) re (1 + d/re)^N`` in
    higher dimension.
    """
    if r_exterior <= 0 or diameter < 0:
        raise ValueError("r_exterior must be positive and diameter non-negative")
    ratio = 1.0 + diameter / r_exterior
    if N == 2:
        return 6.0 * r_exterior * ratio ** 4
    return 1.5 * N * r_exterior * ratio ** N


def annulus_torsion(N: int, r_in: float, r_out: float, radius: float
                    ) -> tuple[float, float]:
    """Torsion profile of the annulus (zero on both spheres) and its
    radial derivative, from the closed form."""
    if not (0 < r_in < r_out):
        raise ValueError("need 0 < r_in < r_out")
    if not (r_in <= radius <= r_out):
        raise ValueError(f"radius {radius} outside [{r_in}, {r_out}]")
    kappa = r_in / r_out
    s = radius
    if N == 2:
        c = 0.5 * r_out ** 2 * (1.0 - kappa ** 2) / math.log(kappa)
        w = 0.5 * s ** 2 + c * math.log(s / r_in) - 0.5 * r_in ** 2
        wp = s + c / s
    else:
        c = 0.5 * r_out ** 2 / (1.0 - kappa ** (N - 2))
        t = (s / r_in) ** (2 - N)
        w = 0.5 * s ** 2 + c * ((1 - kappa ** 2) * t + kappa ** N - 1.0)
        wp = s + c * (1 - kappa ** 2) * (2 - N) * t / s
    return float(w), float(wp)


def _critical_radius(N: int, r_in: float, r_out: float) -> float:
    """Radius of the critical sphere of the annulus torsion profile."""
    kappa = r_in / r_out
    if N == 2:
        return math.sqrt(0.5 * r_out ** 2 * (1 - kappa ** 2) / math.log(1 / kappa))
    return (0.5 * (N - 2) * r_in ** (N - 2) * r_out ** 2
            * (1 - kappa ** 2) / (1 - kappa ** (N - 2))) ** (1.0 / N)


def max_u_bounds(N: int, diameter: float) -> tuple[float, float]:
    """Two explicit bounds for ``max(-u)``.

    The first is ``d^2/2`` (valid whenever some admissible point sees the
    walls tangentially, which the vertex always does).  The second comes
    from the annulus barrier with unit inner radius evaluated at its
    critical sphere.
    """
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    bound_ii = 0.5 * diameter ** 2
    if N == 2:
        r_out = 2.0 * (1.0 + diameter) ** 2
    else:
        r_out = math.sqrt(3.0) * (1.0 + diameter) ** (N / 2.0)
    zc = _critical_radius(N, 1.0, r_out)
    w, _ = annulus_torsion(N, 1.0, r_out, zc)
    return float(bound_ii), float(-w)


def lambda_combiner(k: int, mu2_inv: float, eta2_inv: float | None = None,
                    N: int = 2) -> float:
    """Branchwise Poincare constant: the zero-mean constant for k = 0, the
    wall-constrained one for k = N, the max of both in between."""
    if not 0 <= k <= N:
        raise ValueError(f"k must be in [0, {N}]")
    if k == 0:
        return float(mu2_inv)
    if eta2_inv is None:
        raise ValueError("eta2_inv is required for k >= 1")
    if k == N:
        return float(eta2_inv)
    return float(max(mu2_inv, eta2_inv))


class HkConstants(NamedTuple):
    general: float | None
    with_m: float | None


def hk_stability_constant(N: int, lambda2: float | None, Lambda2k: float,
                          m_lower: float | None = None,
                          max_neg_u: float | None = None) -> HkConstants:
    """Stability constants for the touching-ball inequality estimate.

    ``general = sqrt(N-1) * lambda2^2 * (1 + Lambda2k^2)``; when a
    positive lower bound for the normal derivative is known,
    ``with_m = sqrt(N-1)/m * (N * Lambda2k^2 + 2 max(-u))``.
    """
    general = None
    if lambda2 is not None:
        general = math.sqrt(N - 1) * lambda2 ** 2 * (1.0 + Lambda2k ** 2)
    with_m = None
    if m_lower is not None and m_lower > 0 and max_neg_u is not None:
        with_m = math.sqrt(N - 1) / m_lower * (N * Lambda2k ** 2 + 2.0 * max_neg_u)
    return HkConstants(general, with_m)


class SbtConstants(NamedTuple):
    c_bar: float
    c_hat: float


def sbt_stability_constant(N: int, trace_C: float, unu_max: float,
                           m_lower: float | None = None,
                           variant: str = "general") -> SbtConstants:
    """Stability constant for the curvature-deviation estimate.

    ``trace_C`` is the gradient trace constant of the chosen variant
    (``general``: the trace-embedding composition; ``with_m``: its
    flux-lower-bounded replacement).  Then
    ``c_bar = max(N-1, unu_max)^2 (trace_C + 3)`` and
    ``c_hat = max(trace_C, 1) * c_bar``.
    """
    if variant not in ("general", "with_m"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "with_m" and (m_lower is None or m_lower <= 0):
        raise ValueError("with_m variant needs a positive m_lower")
    c_bar = max(N - 1.0, unu_max) ** 2 * (trace_C + 3.0)
    c_hat = max(trace_C, 1.0) * c_bar
    return SbtConstants(float(c_bar), float(c_hat))


def zero_trace_bound(mu2_inv: float, lambda2: float, area: float,
                     gamma_measure: float) -> float:
    """Poincare constant bound for functions vanishing on a boundary
    portion of the given measure (p = 2 instance)."""
    if area <= 0 or gamma_measure <= 0:
        raise ValueError("area and gamma_measure must be positive")
    return float(mu2_inv + math.sqrt(area / gamma_measure) * lambda2
                 * math.sqrt(1.0 + mu2_inv ** 2))


def gradient_trace_constants(N: int, lambda2: float, Lambda2k: float,
                             m_lower: float | None = None,
                             max_neg_u: float | None = None
                             ) -> tuple[float, float | None]:
    """Trace constants for the comparison-field gradient on the arc.

    General form ``lambda2 * sqrt(1 + Lambda2k^2)``; the flux-bounded
    variant ``(N * Lambda2k^2 + 2 max(-u)) / m`` drops the trace
    embedding constant.
    """
    general = lambda2 * math.sqrt(1.0 + Lambda2k ** 2)
    with_m = None
    if m_lower is not None and m_lower > 0 and max_neg_u is not None:
        with_m = (N * Lambda2k ** 2 + 2.0 * max_neg_u) / m_lower
    return float(general), with_m


@dataclass(frozen=True)
class ConstantsReport:
    """Every closed-form bound and assembled stability constant."""

    m_hopf: float
    grad_bound: float
    max_u_bound_ii: float
    max_u_bound_i: float
    lambda2: float
    mu2_inv: float
    eta2_inv: float | None
    Lambda2k: float
    C_hk_general: float | None
    C_hk_with_m: float | None
    C_sbt_general: float | None
    C_sbt_with_m: float | None
    zero_trace_bound: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def best_hk(self) -> float:
        vals = [c for c in (self.C_hk_general, self.C_hk_with_m) if c is not None]
        return min(vals)

    def best_sbt(self) -> float:
        vals = [c for c in (self.C_sbt_general, self.C_sbt_with_m) if c is not None]
        return min(vals)


def build_constants_report(k: int, r_interior: float, r_exterior: float,
                           diameter: float, area: float, gamma0_length: float,
                           lambda2: float, mu2_inv: float,
                           eta2_inv: float | None = None,
                           unu_max: float | None = None,
                           max_neg_u: float | None = None,
                           N: int = 2) -> ConstantsReport:
    """Assemble the full constants report from geometry and eigen inputs.

    Measured ``unu_max`` / ``max(-u)`` are preferred when a solve is
    available; otherwise their closed-form bounds stand in.
    """
    m = hopf_bound(r_interior)
    grad = gradient_bound(N, r_exterior, diameter) if r_exterior > 0 else math.inf
    bound_ii, bound_i = max_u_bounds(N, diameter)
    lam_k = lambda_combiner(k, mu2_inv, eta2_inv, N=N)
    maxu = max_neg_u if max_neg_u is not None else bound_ii
    unu = unu_max if unu_max is not None else grad

    hk = hk_stability_constant(N, lambda2, lam_k, m_lower=m if m > 0 else None,
                               max_neg_u=maxu)
    tc_gen, tc_m = gradient_trace_constants(N, lambda2, lam_k,
                                            m_lower=m if m > 0 else None,
                                            max_neg_u=maxu)
    sbt_gen = sbt_stability_constant(N, tc_gen, unu).c_hat
    sbt_m = None
    if tc_m is not None:
        sbt_m = sbt_stability_constant(N, tc_m, unu, m_lower=m,
                                       variant="with_m").c_hat
    return ConstantsReport(
        m_hopf=m,
        grad_bound=grad,
        max_u_bound_ii=bound_ii,
        max_u_bound_i=bound_i,
        lambda2=lambda2,
        mu2_inv=mu2_inv,
        eta2_inv=eta2_inv,
        Lambda2k=lam_k,
        C_hk_general=hk.general,
        C_hk_with_m=hk.with_m,
        C_sbt_general=sbt_gen,
        C_sbt_with_m=sbt_m,
        zero_trace_bound=zero_trace_bound(mu2_inv, lambda2, area, gamma0_length),
    )
