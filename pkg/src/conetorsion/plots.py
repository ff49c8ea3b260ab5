"""Figure rendering for run reports.

Each CLI command that writes delimited output can also render a small
matplotlib figure next to it.  Figures are diagnostics, not data: the
CSV files stay the primary artifact.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .geometry import PolarDomain, curvature  # noqa: E402


def domain_figure(domain: PolarDomain, path, u=None):
    """Domain outline with curvature and, if given, the normal-derivative
    profile of a solution along the arc."""
    th = np.linspace(0.0, domain.opening, 720)
    arc = domain.point(th)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))

    ax = axes[0]
    ax.plot(arc[:, 0], arc[:, 1], "C0-", lw=1.5, label="arc")
    if not domain.cone.full_plane:
        for t in (0.0, domain.opening):
            end = domain.point(t)
            ax.plot([0, end[0]], [0, end[1]], "C1-", lw=1.2)
        ax.plot([0], [0], "k.", ms=6)
    ax.set_aspect("equal")
    ax.set_title("domain")

    ax = axes[1]
    ax.plot(th, curvature(domain, th), "C2-", label="curvature")
    if u is not None:
        from .quantities import arc_samples
        s = arc_samples(u)
        ax.plot(s.theta, s.u_nu, "C3.", ms=2.5, label="normal derivative")
    ax.axhline(0.0, color="0.7", lw=0.8)
    ax.set_xlabel("theta")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(records, fits, path):
    """Log-log panels of the sweep: pseudodistances and the radius gap
    against their deviations, with the fitted power laws."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))

    def panel(ax, x, y, fit, xlabel, ylabel):
        ax.loglog(x, y, "C0o", ms=5)
        if fit is not None:
            xs = np.array([min(x), max(x)])
            ax.loglog(xs, np.exp(fit.intercept) * xs ** fit.slope, "C1-",
                      label=f"slope {fit.slope:.3f} (r2={fit.r_squared:.4f})")
            ax.legend(fontsize=8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)

    dev_sbt = [r.deviation_sbt for r in records]
    panel(axes[0], dev_sbt, [r.pd_sbt for r in records], fits.get("sbt"),
          "curvature deviation", "radius pseudodistance")
    mc = [r for r in records if r.mean_convex]
    if mc:
        panel(axes[1], [r.deviation_hk for r in mc], [r.pd_hk for r in mc],
              fits.get("hk"), "inequality defect", "quadratic pseudodistance")
    panel(axes[2], dev_sbt, [r.rho_gap for r in records],
          fits.get("rho_gap_sbt"), "curvature deviation", "rho_e - rho_i")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def convergence_figure(study, path):
    """Error-versus-h plot of a convergence study."""
    hs = [r.h for r in study.rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.6))
    ax.loglog(hs, [r.l2_error for r in study.rows], "C0o-",
              label=f"L2 (rate {study.l2_rate:.2f})")
    ax.loglog(hs, [r.h1_error for r in study.rows], "C1s-",
              label=f"H1 (rate {study.h1_rate:.2f})")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
