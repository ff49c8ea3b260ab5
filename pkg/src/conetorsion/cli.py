"""Command-line entry point.

Runs are configured by a flat ``key = value`` text file; every key can
be overridden by a ``--key value`` flag.  Each command writes CSV
artifacts plus a JSON manifest (and diagnostic figures unless disabled)
into the output directory.  Exit status: 0 when all enabled checks pass,
2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .constants import build_constants_report
from .experiments import convergence_study, stability_sweep
from .fem import (
    EigenError,
    SolverError,
    neumann_poincare,
    solve_torsion,
    trace_constant,
    vector_poincare,
)
from .geometry import GeometryError, PolarDomain, SectorCone, geometry_report
from .identities import (
    MeanConvexityError,
    hk_identity,
    rigidity_detector,
    sbt_identity,
    serrin_identity,
)
from .mesh import MeshQualityError, generate, mesh_for_target_h, mesh_size
from .quantities import PreconditionError, center_z, torsion_report

log = logging.getLogger("conetorsion")

COMMANDS = ("solve", "verify", "constants", "sweep", "convergence")

DEFAULTS = {
    "command": "verify",
    "opening": "1.5707963267948966",
    "base_radius": "1.0",
    "amplitude": "0.0",
    "coefficients": "",
    "target_h": "0.02",
    "n_radial": "",
    "n_angular": "",
    "epsilons": "0.01,0.0135,0.0182,0.0245,0.0330,0.0445,0.0594,0.08",
    "z_policy": "paper",
    "eigen_target_h": "0.05",
    "levels": "3",
    "threads": "1",
    "plots": "true",
    "out": "",
    "tol_identity": "0.05",
    "tol_rigidity": "1e-3",
}

NUMERICAL_ERRORS = (SolverError, EigenError, MeshQualityError, GeometryError,
                    MeanConvexityError, PreconditionError, LookupError)


class ConfigError(ValueError):
    """Unparseable or inconsistent run configuration."""


@dataclass
class RunConfig:
    command: str
    domain: PolarDomain
    target_h: float
    n_radial: int | None
    n_angular: int | None
    epsilons: list
    z_policy: str
    eigen_target_h: float
    levels: int
    threads: int
    plots: bool
    out: Path
    tol_identity: float
    tol_rigidity: float
    raw: dict = field(default_factory=dict)


def parse_config_text(text: str) -> dict:
    """Parse the flat key-value format, reporting bad lines by number."""
    kv = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, val = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kv[key] = val.strip()
    return kv


def _parse_coefficients(text: str):
    coeffs = []
    for tok in text.replace(",", " ").split():
        m, sep, a = tok.partition(":")
        if not sep:
            raise ConfigError(f"bad coefficient {tok!r}, expected m:a")
        try:
            coeffs.append((int(m), float(a)))
        except ValueError as exc:
            raise ConfigError(f"bad coefficient {tok!r}: {exc}") from exc
    return coeffs


def build_config(kv: dict) -> RunConfig:
    merged = dict(DEFAULTS)
    merged.update(kv)

    def fl(key):
        try:
            return float(merged[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from exc

    def integer(key):
        try:
            return int(merged[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from exc

    command = merged["command"]
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; pick from {COMMANDS}")

    try:
        domain = PolarDomain(SectorCone(fl("opening")),
                             base_radius=fl("base_radius"),
                             amplitude=fl("amplitude"),
                             coefficients=_parse_coefficients(merged["coefficients"]))
    except GeometryError as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc

    eps = []
    if merged["epsilons"].strip():
        for tok in merged["epsilons"].split(","):
            try:
                eps.append(float(tok))
            except ValueError as exc:
                raise ConfigError(f"bad epsilon {tok!r}: {exc}") from exc
    if eps != sorted(eps):
        raise ConfigError("epsilon list must be sorted ascending")
    if any(e <= 0 for e in eps):
        raise ConfigError("epsilon values must be positive")

    z_policy = merged["z_policy"]
    if z_policy not in ("paper", "alternative"):
        raise ConfigError(f"unknown z_policy {z_policy!r}")

    for key in ("tol_identity", "tol_rigidity", "target_h", "eigen_target_h"):
        if fl(key) <= 0:
            raise ConfigError(f"{key} must be positive")

    out = merged["out"] or os.environ.get("CONETORSION_OUT", "runs")
    return RunConfig(
        command=command,
        domain=domain,
        target_h=fl("target_h"),
        n_radial=integer("n_radial") if merged["n_radial"] else None,
        n_angular=integer("n_angular") if merged["n_angular"] else None,
        epsilons=eps,
        z_policy=z_policy,
        eigen_target_h=fl("eigen_target_h"),
        levels=integer("levels"),
        threads=integer("threads"),
        plots=merged["plots"].lower() in ("1", "true", "yes", "on"),
        out=Path(out),
        tol_identity=fl("tol_identity"),
        tol_rigidity=fl("tol_rigidity"),
        raw=merged,
    )


# ---------------------------------------------------------------------------
# artifact writers

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, rows: list[dict]):
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in cols])


def write_manifest(outdir: Path, config: RunConfig, checks: dict,
                   artifacts: list, extra: dict | None = None):
    manifest = {
        "package": "conetorsion",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": __import__("scipy").__version__,
        "command": config.command,
        "parameters": {k: config.raw[k] for k in sorted(config.raw)},
        "checks": {k: bool(v) for k, v in checks.items()},
        "passed": all(bool(v) for v in checks.values()),
        "artifacts": sorted(str(a) for a in artifacts),
    }
    if extra:
        manifest.update(extra)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _build_mesh(config: RunConfig, domain=None):
    domain = domain or config.domain
    if config.n_radial and config.n_angular:
        return generate(domain, config.n_radial, config.n_angular)
    return mesh_for_target_h(domain, config.target_h)


# ---------------------------------------------------------------------------
# commands

def cmd_solve(config: RunConfig, outdir: Path) -> dict:
    mesh = _build_mesh(config)
    u = solve_torsion(mesh)
    rep = torsion_report(u)
    geo = geometry_report(config.domain)
    row = {"h": mesh_size(mesh), "n_nodes": mesh.n_nodes}
    row.update(geo.as_dict())
    row.update(rep.as_dict())
    write_csv(outdir / "solution.csv", [row])
    artifacts = [outdir / "solution.csv"]
    if config.plots:
        from .plots import domain_figure
        domain_figure(config.domain, outdir / "domain.png", u=u)
        artifacts.append(outdir / "domain.png")
    checks = {"solver_converged": u.cg_residual <= 1e-9,
              "solution_nonpositive": float(np.max(u.coeffs)) <= 1e-8}
    return {"checks": checks, "artifacts": artifacts,
            "extra": {"mesh": {"h": mesh_size(mesh), "nodes": mesh.n_nodes}}}


def cmd_verify(config: RunConfig, outdir: Path) -> dict:
    mesh = _build_mesh(config)
    u = solve_torsion(mesh)
    k = geometry_report(config.domain).k
    z = center_z(u, k)

    reports = [serrin_identity(u, z)]
    reports.extend(sbt_identity(u))
    mean_convex = True
    try:
        reports.append(hk_identity(u))
    except MeanConvexityError:
        mean_convex = False

    rows, term_rows, checks = [], [], {}
    for rep in reports:
        passed = rep.residual <= max(config.tol_identity * rep.scale,
                                     config.tol_rigidity * rep.reference)
        checks[f"identity_{rep.name}"] = passed
        rows.append({
            "name": rep.name,
            "lhs_total": rep.lhs_total(),
            "rhs_total": rep.rhs_total(),
            "residual": rep.residual,
            "scale": rep.scale,
            "relative_residual": rep.relative_residual,
            "reference": rep.reference,
            "passed": passed,
        })
        for side, terms in (("lhs", rep.lhs_terms), ("rhs", rep.rhs_terms)):
            for key, val in terms.items():
                term_rows.append({"identity": rep.name, "side": side,
                                  "term": key, "value": val})

    rigid, fit_z, fit_R = rigidity_detector(u, tol=config.tol_rigidity)
    write_csv(outdir / "identities.csv", rows)
    write_csv(outdir / "identity_terms.csv", term_rows)
    rep = torsion_report(u)
    sol_row = {"h": mesh_size(mesh), "n_nodes": mesh.n_nodes,
               "is_rigid": rigid, "fitted_z_x": float(fit_z[0]),
               "fitted_z_y": float(fit_z[1]), "fitted_R": fit_R,
               "mean_convex": mean_convex}
    sol_row.update(rep.as_dict())
    write_csv(outdir / "solution.csv", [sol_row])

    artifacts = [outdir / "identities.csv", outdir / "identity_terms.csv",
                 outdir / "solution.csv"]
    if config.plots:
        from .plots import domain_figure
        domain_figure(config.domain, outdir / "domain.png", u=u)
        artifacts.append(outdir / "domain.png")
    return {"checks": checks, "artifacts": artifacts,
            "extra": {"mesh": {"h": mesh_size(mesh), "nodes": mesh.n_nodes}}}


def cmd_constants(config: RunConfig, outdir: Path) -> dict:
    geo = geometry_report(config.domain)
    emesh = _build_mesh(config)
    lam2 = trace_constant(emesh).constant
    mu2_inv = 1.0 / neumann_poincare(emesh).constant
    eta2_inv = (1.0 / vector_poincare(emesh, geo.k).constant
                if geo.k >= 1 else None)
    rep = build_constants_report(
        k=geo.k, r_interior=geo.r_interior, r_exterior=geo.r_exterior,
        diameter=geo.diameter, area=geo.area, gamma0_length=geo.gamma0_length,
        lambda2=lam2, mu2_inv=mu2_inv, eta2_inv=eta2_inv)
    row = dict(geo.as_dict())
    row.update(rep.as_dict())
    write_csv(outdir / "constants.csv", [row])
    checks = {"constants_finite": all(
        v is None or np.isfinite(v) for v in rep.as_dict().values())}
    return {"checks": checks, "artifacts": [outdir / "constants.csv"]}


def cmd_sweep(config: RunConfig, outdir: Path) -> dict:
    if not config.epsilons:
        raise ConfigError("sweep needs a non-empty epsilon list")
    records, fits = stability_sweep(
        config.domain.opening,
        config.domain.coefficients or [(2, 1.0)],
        config.epsilons, target_h=config.target_h, z_policy=config.z_policy,
        eigen_target_h=config.eigen_target_h, threads=config.threads)
    write_csv(outdir / "sweep.csv", [r.as_dict() for r in records])
    fits_payload = {name: fit.as_dict() for name, fit in fits.items()}
    (outdir / "fits.json").write_text(
        json.dumps(fits_payload, indent=2, sort_keys=True) + "\n")
    checks = {
        "sbt_bounds": all(r.sbt_bound_ok for r in records),
        "hk_bounds": all(r.hk_bound_ok for r in records),
        "h_separation": all(r.h_separated for r in records),
    }
    if "sbt" in fits:
        checks["sbt_slope"] = abs(fits["sbt"].slope - 1.0) <= 0.15
    if "hk" in fits:
        checks["hk_slope"] = abs(fits["hk"].slope - 0.5) <= 0.1
    if "rho_gap_sbt" in fits:
        checks["rho_gap_slope"] = fits["rho_gap_sbt"].slope >= 0.85
    artifacts = [outdir / "sweep.csv", outdir / "fits.json"]
    if config.plots:
        from .plots import sweep_figure
        sweep_figure(records, fits, outdir / "sweep.png")
        artifacts.append(outdir / "sweep.png")
    return {"checks": checks, "artifacts": artifacts}


def cmd_convergence(config: RunConfig, outdir: Path) -> dict:
    study = convergence_study(config.domain.cone,
                              base_radius=config.domain.base_radius,
                              levels=config.levels)
    write_csv(outdir / "convergence.csv", study.as_rows())
    checks = {"l2_rate": study.l2_rate >= 2.5, "h1_rate": study.h1_rate >= 1.8}
    artifacts = [outdir / "convergence.csv"]
    if config.plots:
        from .plots import convergence_figure
        convergence_figure(study, outdir / "convergence.png")
        artifacts.append(outdir / "convergence.png")
    return {"checks": checks, "artifacts": artifacts,
            "extra": {"rates": {"l2": study.l2_rate, "h1": study.h1_rate}}}


def run(config: RunConfig) -> int:
    """Execute one configured run; returns the process exit status."""
    outdir = config.out
    outdir.mkdir(parents=True, exist_ok=True)
    dispatch = {
        "solve": cmd_solve,
        "verify": cmd_verify,
        "constants": cmd_constants,
        "sweep": cmd_sweep,
        "convergence": cmd_convergence,
    }
    try:
        result = dispatch[config.command](config, outdir)
    except NUMERICAL_ERRORS as exc:
        log.error("%s failed: %s: %s", config.command, type(exc).__name__, exc)
        return 3
    write_manifest(outdir, config, result["checks"], result["artifacts"],
                   result.get("extra"))
    failed = [k for k, v in result["checks"].items() if not v]
    if failed:
        log.error("checks failed: %s", ", ".join(failed))
        return 1
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(
        prog="conetorsion",
        description="Torsion solves, identity verification, constants, "
                    "stability sweeps and convergence studies on "
                    "cone-intersected planar domains.")
    parser.add_argument("--config", type=Path, help="flat key=value config file")
    parser.add_argument("--out", help="output directory "
                        "(default $CONETORSION_OUT or ./runs)")
    parser.add_argument("--threads", type=int, help="sweep worker threads")
    known, extra = parser.parse_known_args(argv)

    try:
        kv = {}
        if known.config is not None:
            if not known.config.exists():
                raise ConfigError(f"config file not found: {known.config}")
            kv = parse_config_text(known.config.read_text())
        # remaining --key value pairs override config keys
        i = 0
        while i < len(extra):
            tok = extra[i]
            if not tok.startswith("--"):
                raise ConfigError(f"unexpected argument {tok!r}")
            key = tok[2:]
            if key not in DEFAULTS:
                raise ConfigError(f"unknown option --{key}")
            if i + 1 >= len(extra):
                raise ConfigError(f"option --{key} needs a value")
            kv[key] = extra[i + 1]
            i += 2
        if known.out is not None:
            kv["out"] = known.out
        if known.threads is not None:
            kv["threads"] = str(known.threads)
        config = build_config(kv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    return run(config)


if __name__ == "__main__":
    sys.exit(main())
