"""Planar sector cones and polar-graph domains.

A domain is the intersection of a cone (sector with vertex at the origin,
opening ``omega``) with a star-shaped region whose outer boundary is the
polar graph ``r = rho(theta)`` over ``[0, omega]``.  The boundary splits
into the arc ``Gamma0`` (the graph), the two radial wall segments
``Gamma1`` (absent when ``omega = 2*pi``), and the corner/vertex points.

Everything here is exact, analytic geometry: curvature, measures, wall
normals, and the touching-ball radii used by the barrier bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad

TWO_PI = 2.0 * np.pi

# Angle comparisons: openings are user input, allow fp slop.
_ANGLE_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid or degenerate domain description."""


@dataclass(frozen=True)
class SectorCone:
    """Convex (or flagged non-convex) planar cone with vertex at the origin.

    Parameters
    ----------
    opening : float
        Opening angle in radians, in ``(0, 2*pi]``.  ``2*pi`` means the
        whole plane (no wall).  Openings in ``(pi, 2*pi)`` are accepted
        but the cone is then non-convex.
    """

    opening: float

    def __post_init__(self):
        if not (0.0 < self.opening <= TWO_PI + _ANGLE_TOL):
            raise GeometryError(f"opening must lie in (0, 2*pi], got {self.opening}")

    @property
    def full_plane(self) -> bool:
        return abs(self.opening - TWO_PI) <= _ANGLE_TOL

    @property
    def is_convex(self) -> bool:
        # the whole plane is trivially a convex cone
        return self.opening <= np.pi + _ANGLE_TOL or self.full_plane

    def wall_normals(self) -> list[np.ndarray]:
        """Outward unit normals of the two wall rays (empty for the plane)."""
        if self.full_plane:
            return []
        w = self.opening
        return [np.array([0.0, -1.0]), np.array([-np.sin(w), np.cos(w)])]


def normal_span_dim(cone: SectorCone) -> int:
    """Dimension of the span of the wall normals.

    0 for the full plane (no wall), 1 for the half plane (both wall
    normals collinear), 2 for every other opening.
    """
    if cone.full_plane:
        return 0
    if abs(cone.opening - np.pi) <= _ANGLE_TOL:
        return 1
    return 2


class PolarDomain:
    """Star-shaped domain ``r < rho(theta)`` inside a sector cone.

    The standard constructor takes a finite cosine series

        ``rho(theta) = base_radius * (1 + amplitude * sum_m a_m cos(m*pi*theta/omega))``

    whose derivative vanishes at both walls, so the arc meets the walls
    orthogonally.  :meth:`from_raw` accepts arbitrary smooth profiles but
    flags the domain as non-orthogonal.

    Parameters
    ----------
    cone : SectorCone
    base_radius : float
        Radius of the unperturbed arc, > 0.
    amplitude : float
        Perturbation amplitude ``eps >= 0``.
    coefficients : sequence of (m, a_m) pairs
        Cosine modes; ``m`` a positive integer.
    """

    def __init__(self, cone: SectorCone, base_radius: float = 1.0,
                 amplitude: float = 0.0,
                 coefficients: Sequence[tuple[int, float]] = ()):
        if base_radius <= 0.0:
            raise GeometryError("base_radius must be positive")
        if amplitude < 0.0:
            raise GeometryError("amplitude must be non-negative")
        self.cone = cone
        self.base_radius = float(base_radius)
        self.amplitude = float(amplitude)
        self.coefficients = tuple((int(m), float(a)) for m, a in coefficients)
        for m, _ in self.coefficients:
            if m <= 0:
                raise GeometryError("cosine mode index must be >= 1")
            if cone.full_plane and m % 2 != 0:
                # odd modes of cos(m*theta/2) break 2*pi-periodicity
                raise GeometryError("full-plane domains need even cosine modes")
        self.orthogonal = True
        self._raw = None
        self._check_positive()

    @classmethod
    def from_raw(cls, cone: SectorCone,
                 rho: Callable[[np.ndarray], np.ndarray],
                 drho: Callable[[np.ndarray], np.ndarray],
                 ddrho: Callable[[np.ndarray], np.ndarray]) -> "PolarDomain":
        """Wrap raw profile callables; the result is flagged non-orthogonal."""
        obj = cls.__new__(cls)
        obj.cone = cone
        obj.base_radius = float(np.max(rho(np.linspace(0.0, cone.opening, 64))))
        obj.amplitude = 0.0
        obj.coefficients = ()
        obj.orthogonal = False
        obj._raw = (rho, drho, ddrho)
        obj._check_positive()
        return obj

    # -- profile ---------------------------------------------------------

    def _check_positive(self):
        th = np.linspace(0.0, self.cone.opening, 4096)
        rmin = float(np.min(self.rho(th)))
        if rmin <= 0.0:
            raise GeometryError(f"rho(theta) must stay positive, min={rmin:.3g}")

    def _series(self, theta, deriv: int):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        w = self.cone.opening
        for m, a in self.coefficients:
            km = m * np.pi / w
            if deriv == 0:
                out += a * np.cos(km * theta)
            elif deriv == 1:
                out += -a * km * np.sin(km * theta)
            else:
                out += -a * km * km * np.cos(km * theta)
        return out

    def rho(self, theta):
        if self._raw is not None:
            return np.asarray(self._raw[0](np.asarray(theta, dtype=float)), dtype=float)
        return self.base_radius * (1.0 + self.amplitude * self._series(theta, 0))

    def rho_prime(self, theta):
        if self._raw is not None:
            return np.asarray(self._raw[1](np.asarray(theta, dtype=float)), dtype=float)
        return self.base_radius * self.amplitude * self._series(theta, 1)

    def rho_second(self, theta):
        if self._raw is not None:
            return np.asarray(self._raw[2](np.asarray(theta, dtype=float)), dtype=float)
        return self.base_radius * self.amplitude * self._series(theta, 2)

    # -- curve quantities --------------------------------------------------

    def point(self, theta):
        """Point(s) on the arc, shape (..., 2)."""
        theta = np.asarray(theta, dtype=float)
        r = self.rho(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def tangent(self, theta):
        """Unit tangent along increasing theta, shape (..., 2)."""
        theta = np.asarray(theta, dtype=float)
        r, rp = self.rho(theta), self.rho_prime(theta)
        c, s = np.cos(theta), np.sin(theta)
        t = np.stack([rp * c - r * s, rp * s + r * c], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def outward_normal(self, theta):
        """Unit normal pointing away from the vertex side, shape (..., 2)."""
        t = self.tangent(theta)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    def arc_measure(self, theta):
        """Line element ``dS/dtheta = sqrt(rho^2 + rho'^2)``."""
        theta = np.asarray(theta, dtype=float)
        return np.hypot(self.rho(theta), self.rho_prime(theta))

    def contains(self, points, slack: float = 0.0) -> np.ndarray:
        """Whether points lie in the closed domain (angle and radius check)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=-1)
        th = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        w = self.cone.opening
        in_cone = th <= w + _ANGLE_TOL if not self.cone.full_plane else np.ones_like(th, bool)
        th_c = np.clip(th, 0.0, w)
        return in_cone & (r <= self.rho(th_c) + slack)

    def to_config(self) -> str:
        """Serialize as the flat key-value record used by the CLI."""
        lines = [f"opening = {self.opening!r}",
                 f"base_radius = {self.base_radius!r}",
                 f"amplitude = {self.amplitude!r}"]
        coeffs = " ".join(f"{m}:{a!r}" for m, a in self.coefficients)
        lines.append(f"coefficients = {coeffs}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text: str) -> "PolarDomain":
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        coeffs = []
        for tok in kv.get("coefficients", "").split():
            m, _, a = tok.partition(":")
            coeffs.append((int(m), float(a)))
        return cls(SectorCone(float(kv["opening"])),
                   base_radius=float(kv.get("base_radius", 1.0)),
                   amplitude=float(kv.get("amplitude", 0.0)),
                   coefficients=coeffs)

    @property
    def opening(self) -> float:
        return self.cone.opening

    def __repr__(self):
        return (f"PolarDomain(opening={self.opening:.6g}, R0={self.base_radius:.6g}, "
                f"eps={self.amplitude:.6g}, modes={self.coefficients})")


def curvature(domain: PolarDomain, theta) -> np.ndarray:
    """Signed curvature of the arc w.r.t. the outward normal.

    Positive on arcs curving around the vertex; the circle ``rho = R0``
    gives ``1/R0``.
    """
    theta = np.asarray(theta, dtype=float)
    r = domain.rho(theta)
    rp = domain.rho_prime(theta)
    rpp = domain.rho_second(theta)
    return (r * r + 2.0 * rp * rp - r * rpp) / (r * r + rp * rp) ** 1.5


def corner_conormal_sum(domain: PolarDomain, z=(0.0, 0.0)) -> float:
    """Sum of ``<x - z, n_x>`` over the two arc endpoints.

    ``n_x`` is the unit tangent of the arc pointing out of it (the
    outward conormal).  Zero for every cosine-series domain with ``z`` in
    the admissible set, because the arc meets the walls orthogonally.
    Empty boundary (full plane) gives zero.
    """
    if domain.cone.full_plane:
        return 0.0
    z = np.asarray(z, dtype=float)
    w = domain.opening
    total = 0.0
    for theta, sign in ((0.0, -1.0), (w, +1.0)):
        n = sign * domain.tangent(theta)
        x = domain.point(theta)
        total += float(np.dot(x - z, n))
    return total


class Measures(NamedTuple):
    area: float
    gamma0_length: float
    diameter: float


def measures(domain: PolarDomain, n_diameter: int = 1000) -> Measures:
    """Area, arc length and diameter of the domain.

    Area and length by adaptive quadrature (relative tolerance 1e-10);
    the diameter from dense boundary samples, which is where it is
    attained on a domain star-shaped about the vertex.
    """
    w = domain.opening

    def do_quad(f, what):
        val, err = quad(f, 0.0, w, epsabs=0.0, epsrel=1e-10, limit=400)
        if not np.isfinite(val) or (val != 0 and err > 1e-7 * abs(val)):
            raise GeometryError(f"quadrature for {what} did not converge (err={err:.2g})")
        return val

    area = do_quad(lambda t: 0.5 * float(domain.rho(t)) ** 2, "area")
    length = do_quad(lambda t: float(domain.arc_measure(t)), "gamma0_length")

    th = np.linspace(0.0, w, n_diameter)
    pts = domain.point(th)
    if not domain.cone.full_plane:
        pts = np.vstack([pts, [[0.0, 0.0]]])
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return Measures(area, length, float(np.sqrt(d2.max())))


def reference_radius(area: float, gamma0_length: float) -> float:
    """Reference radius ``R = N*area/length`` with N = 2."""
    if area <= 0.0 or gamma0_length <= 0.0:
        raise GeometryError("area and gamma0_length must be positive")
    return 2.0 * area / gamma0_length


class SphereRadii(NamedTuple):
    r_interior: float
    r_exterior: float
    interior_found: bool
    exterior_found: bool
    resolution: float


def relative_sphere_radii(domain: PolarDomain, n_samples: int = 720,
                          rel_resolution: float = 1e-3) -> SphereRadii:
    """Largest interior/exterior touching-ball radii relative to the cone.

    For each arc point ``x`` the candidate centers are ``x -+ r nu(x)``.
    Interior: center must lie in the closed domain and the ball closure
    may meet the closed arc only at ``x``.  Exterior: center must lie in
    the closed cone but outside the open domain, same touching rule.
    Estimated by bisection over ``r`` against dense arc samples; the
    returned ``resolution`` is the bisection half-width.  The exterior
    radius is capped at ``10 * base_radius`` (effectively unbounded).
    A radius is reported as 0 with a cleared flag when no admissible r
    above ``1e-6 * base_radius`` exists.
    """
    R0 = domain.base_radius
    w = domain.opening
    floor = 1e-6 * R0
    cap = 10.0 * R0

    th = np.linspace(0.0, w, n_samples)
    pts = domain.point(th)
    nrm = domain.outward_normal(th)
    # second-touch detection tolerance: the sampled minimum distance from a
    # center to the arc dips below r by O(spacing^2 * curvature) even for an
    # admissible ball
    spacing = float(np.max(domain.arc_measure(th))) * w / n_samples
    kmax = float(np.max(np.abs(curvature(domain, th))))
    slack = 0.75 * spacing ** 2 * max(kmax, 1.0 / R0) + 1e-12 * R0

    def centers_ok(c, interior: bool):
        r = np.linalg.norm(c, axis=-1)
        ang = np.mod(np.arctan2(c[:, 1], c[:, 0]), TWO_PI)
        at_vertex = r <= 1e-14 * R0
        if domain.cone.full_plane:
            in_cone = np.ones(len(c), bool)
            ang_c = ang
        else:
            in_cone = (ang <= w + 1e-9) | at_vertex
            ang_c = np.clip(ang, 0.0, w)
        rho_c = domain.rho(ang_c)
        if interior:
            return in_cone & (r <= rho_c + 1e-9 * R0)
        return in_cone & (r >= rho_c - 1e-9 * R0)

    def admissible(r, interior: bool) -> bool:
        c = pts - r * nrm if interior else pts + r * nrm
        if not np.all(centers_ok(c, interior)):
            return False
        d2 = np.sum((pts[None, :, :] - c[:, None, :]) ** 2, axis=-1)
        dmin = np.sqrt(np.min(d2, axis=1))
        return bool(np.all(dmin >= r - slack))

    def bisect(interior: bool):
        hi_cap = cap
        if admissible(hi_cap, interior):
            return hi_cap, True
        lo, hi = 0.0, hi_cap
        if not admissible(floor, interior):
            return 0.0, False
        lo = floor
        while hi - lo > rel_resolution * R0:
            mid = 0.5 * (lo + hi)
            if admissible(mid, interior):
                lo = mid
            else:
                hi = mid
        return lo, True

    ri, ok_i = bisect(True)
    re, ok_e = bisect(False)
    return SphereRadii(ri, re, ok_i, ok_e, 0.5 * rel_resolution * R0)


@dataclass(frozen=True)
class GeometryReport:
    """Scalar geometric summary of a domain."""

    area: float
    gamma0_length: float
    diameter: float
    r_interior: float
    r_exterior: float
    reference_radius: float
    k: int

    def as_dict(self) -> dict:
        return {
            "area": self.area,
            "gamma0_length": self.gamma0_length,
            "diameter": self.diameter,
            "r_interior": self.r_interior,
            "r_exterior": self.r_exterior,
            "reference_radius": self.reference_radius,
            "k": self.k,
        }


def geometry_report(domain: PolarDomain, n_sphere_samples: int = 720) -> GeometryReport:
    """Compute all scalar geometry inputs used by the bounds and constants."""
    area, length, diam = measures(domain)
    radii = relative_sphere_radii(domain, n_samples=n_sphere_samples)
    return GeometryReport(
        area=area,
        gamma0_length=length,
        diameter=diam,
        r_interior=radii.r_interior,
        r_exterior=radii.r_exterior,
        reference_radius=reference_radius(area, length),
        k=normal_span_dim(domain.cone),
    )
