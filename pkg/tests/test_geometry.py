import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conetorsion.geometry import (
    GeometryError,
    PolarDomain,
    SectorCone,
    corner_conormal_sum,
    curvature,
    geometry_report,
    measures,
    normal_span_dim,
    reference_radius,
    relative_sphere_radii,
)

QUARTER = SectorCone(np.pi / 2)
HALF = SectorCone(np.pi)
FULL = SectorCone(2 * np.pi)


def fd_curvature(domain, theta, h=1e-5):
    """Independent curvature oracle: centered difference of the unit tangent
    with respect to arclength."""
    t_plus = domain.tangent(theta + h)
    t_minus = domain.tangent(theta - h)
    dt = (t_plus - t_minus) / (2 * h)
    ds = domain.arc_measure(theta)
    # curvature magnitude = |dT/ds|; sign from the turning direction
    kappa = np.linalg.norm(dt, axis=-1) / ds
    n = domain.outward_normal(theta)
    # dT/ds = -kappa * nu for our sign convention
    sign = -np.sign(np.sum(dt * n, axis=-1))
    return sign * kappa


class TestSectorCone:
    def test_opening_range(self):
        with pytest.raises(GeometryError):
            SectorCone(0.0)
        with pytest.raises(GeometryError):
            SectorCone(2 * np.pi + 0.1)

    def test_convexity_flags(self):
        assert QUARTER.is_convex
        assert HALF.is_convex
        assert FULL.is_convex
        assert not SectorCone(1.5 * np.pi).is_convex

    def test_wall_normals(self):
        n0, n1 = QUARTER.wall_normals()
        assert np.allclose(n0, [0, -1])
        assert np.allclose(n1, [-1, 0], atol=1e-15)
        assert FULL.wall_normals() == []


class TestNormalSpanDim:
    def test_full_plane(self):
        assert normal_span_dim(FULL) == 0

    def test_half_plane(self):
        assert normal_span_dim(HALF) == 1

    def test_quarter(self):
        assert normal_span_dim(QUARTER) == 2

    @given(st.floats(min_value=0.05, max_value=2 * np.pi - 0.05))
    def test_generic_opening_spans_plane(self, w):
        expected = 1 if abs(w - np.pi) < 1e-12 else 2
        assert normal_span_dim(SectorCone(w)) == expected

    @given(st.floats(min_value=0.2, max_value=5.0),
           st.floats(min_value=0.0, max_value=0.2))
    @settings(max_examples=30)
    def test_k_independent_of_size_and_amplitude(self, r0, eps):
        dom = PolarDomain(QUARTER, base_radius=r0, amplitude=eps,
                          coefficients=[(2, 1.0)])
        assert normal_span_dim(dom.cone) == 2


class TestCurvature:
    def test_unit_circle(self):
        dom = PolarDomain(FULL)
        th = np.linspace(0, 2 * np.pi, 17)
        assert np.allclose(curvature(dom, th), 1.0)

    def test_scaled_circle(self):
        dom = PolarDomain(QUARTER, base_radius=2.5)
        assert np.allclose(curvature(dom, 0.3), 1 / 2.5)

    def test_cos2theta_closed_form(self):
        # rho = 1 + 0.1 cos(2 theta) on the half disk; at theta = 0 the
        # polar formula collapses to (1 + 5 eps) / (1 + eps)^2
        eps = 0.1
        dom = PolarDomain(HALF, amplitude=eps, coefficients=[(2, 1.0)])
        expected = (1 + 5 * eps) / (1 + eps) ** 2
        assert curvature(dom, 0.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.2397, abs=5e-5)

    def test_matches_finite_difference_tangent(self):
        rng = np.random.default_rng(7)
        dom = PolarDomain(HALF, amplitude=0.07,
                          coefficients=[(1, 0.4), (2, 1.0), (3, -0.3)])
        th = rng.uniform(0.05, np.pi - 0.05, size=100)
        k_impl = curvature(dom, th)
        k_fd = fd_curvature(dom, th)
        assert np.allclose(k_impl, k_fd, rtol=1e-6)


class TestCornerConormalSum:
    def test_circular_arc_orthogonal(self):
        dom = PolarDomain(QUARTER)
        assert abs(corner_conormal_sum(dom, (0, 0))) <= 1e-12

    @given(st.floats(min_value=0.3, max_value=np.pi),
           st.floats(min_value=0.0, max_value=0.15),
           st.integers(min_value=1, max_value=4))
    @settings(max_examples=40)
    def test_cosine_series_always_zero(self, w, eps, m):
        dom = PolarDomain(SectorCone(w), amplitude=eps, coefficients=[(m, 1.0)])
        assert abs(corner_conormal_sum(dom, (0, 0))) <= 1e-12

    def test_raw_profile_nonzero(self):
        # rho = 1 + 0.1 theta meets the walls at an angle; oracle from the
        # closed-form endpoint tangents t ~ (rho' e_r + rho e_theta)
        w = np.pi / 2
        dom = PolarDomain.from_raw(
            SectorCone(w),
            rho=lambda t: 1 + 0.1 * t,
            drho=lambda t: 0.1 * np.ones_like(t),
            ddrho=lambda t: np.zeros_like(t),
        )
        assert not dom.orthogonal

        def endpoint_term(theta, sign, z):
            r, rp = 1 + 0.1 * theta, 0.1
            er = np.array([np.cos(theta), np.sin(theta)])
            et = np.array([-np.sin(theta), np.cos(theta)])
            t_hat = (rp * er + r * et) / np.hypot(r, rp)
            return float(np.dot(r * er - z, sign * t_hat))

        for z in (np.zeros(2), np.array([0.2, 0.1])):
            expected = endpoint_term(0.0, -1.0, z) + endpoint_term(w, +1.0, z)
            assert corner_conormal_sum(dom, z) == pytest.approx(expected, abs=1e-12)
            if z[0] != 0:
                assert abs(expected) > 1e-3


class TestMeasures:
    def test_quarter_disk(self):
        area, length, diam = measures(PolarDomain(QUARTER))
        assert area == pytest.approx(np.pi / 4, rel=1e-10)
        assert length == pytest.approx(np.pi / 2, rel=1e-10)
        assert diam == pytest.approx(np.sqrt(2), rel=1e-5)

    def test_unit_disk(self):
        area, length, diam = measures(PolarDomain(FULL))
        assert area == pytest.approx(np.pi, rel=1e-10)
        assert length == pytest.approx(2 * np.pi, rel=1e-10)
        assert diam == pytest.approx(2.0, rel=1e-5)

    def test_perturbed_half_disk_against_composite_gauss(self):
        # independent oracle: 200-panel composite 10-point Gauss-Legendre
        eps = 0.05
        dom = PolarDomain(HALF, amplitude=eps, coefficients=[(2, 1.0)])
        xg, wg = np.polynomial.legendre.leggauss(10)
        panels = np.linspace(0, np.pi, 201)
        a_ref = l_ref = 0.0
        for lo, hi in zip(panels[:-1], panels[1:]):
            t = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * wg
            a_ref += np.sum(w * 0.5 * dom.rho(t) ** 2)
            l_ref += np.sum(w * dom.arc_measure(t))
        area, length, _ = measures(dom)
        assert area == pytest.approx(a_ref, rel=1e-12)
        assert length == pytest.approx(l_ref, rel=1e-12)


class TestReferenceRadius:
    def test_quarter_disk(self):
        assert reference_radius(np.pi / 4, np.pi / 2) == pytest.approx(1.0)

    def test_unit_disk(self):
        assert reference_radius(np.pi, 2 * np.pi) == pytest.approx(1.0)

    def test_unperturbed_family_identity(self):
        for w in (0.7, np.pi / 2, np.pi, 2 * np.pi):
            for r0 in (0.5, 1.0, 3.0):
                area, length, _ = measures(PolarDomain(SectorCone(w), base_radius=r0))
                assert reference_radius(area, length) == pytest.approx(r0, rel=1e-9)

    def test_perturbed_value_from_measures(self):
        dom = PolarDomain(HALF, amplitude=0.05, coefficients=[(2, 1.0)])
        area, length, _ = measures(dom)
        R = reference_radius(area, length)
        # perturbation has zero mean, so R = 1 + O(eps^2)
        assert abs(R - 1.0) < 3 * 0.05 ** 2

    def test_rejects_nonpositive(self):
        with pytest.raises(GeometryError):
            reference_radius(0.0, 1.0)


class TestSphereRadii:
    def test_quarter_disk(self):
        radii = relative_sphere_radii(PolarDomain(QUARTER))
        assert radii.interior_found and radii.exterior_found
        assert radii.r_interior == pytest.approx(1.0, abs=5e-3)
        assert radii.r_exterior == pytest.approx(10.0, abs=1e-9)  # cap

    def test_unit_disk(self):
        radii = relative_sphere_radii(PolarDomain(FULL))
        assert radii.r_interior == pytest.approx(1.0, abs=5e-3)
        assert radii.r_exterior == pytest.approx(10.0, abs=1e-9)

    def test_perturbed_half_disk_vs_bruteforce(self):
        dom = PolarDomain(HALF, amplitude=0.05, coefficients=[(2, 1.0)])
        radii = relative_sphere_radii(dom)

        # low-resolution brute-force oracle straight from the definition
        th = np.linspace(0, np.pi, 160)
        pts, nrm = dom.point(th), dom.outward_normal(th)

        def ok(r, interior):
            c = pts - r * nrm if interior else pts + r * nrm
            ang = np.mod(np.arctan2(c[:, 1], c[:, 0]), 2 * np.pi)
            rad = np.linalg.norm(c, axis=1)
            in_cone = (ang <= np.pi + 1e-9) | (rad < 1e-12)
            rho_c = dom.rho(np.clip(ang, 0, np.pi))
            side = rad <= rho_c + 1e-9 if interior else rad >= rho_c - 1e-9
            d = np.sqrt(np.min(np.sum((pts[None] - c[:, None]) ** 2, -1), 1))
            return np.all(in_cone & side) and np.all(d >= r - 2e-3)

        grid = np.linspace(0.05, 2.0, 120)
        ri_ref = max([r for r in grid if ok(r, True)], default=0.0)
        assert radii.r_interior == pytest.approx(ri_ref, abs=0.05)
        # curvature cap: interior radius can't exceed 1/max(kappa)
        kmax = np.max(curvature(dom, th))
        assert radii.r_interior <= 1 / kmax + 5e-3


class TestGeometryReport:
    def test_report_fields_consistent(self):
        dom = PolarDomain(QUARTER, amplitude=0.05, coefficients=[(4, 1.0)])
        rep = geometry_report(dom)
        assert rep.area > 0 and rep.gamma0_length > 0 and rep.diameter > 0
        assert rep.k == 2
        assert rep.reference_radius == pytest.approx(
            2 * rep.area / rep.gamma0_length)
        d = rep.as_dict()
        assert set(d) == {"area", "gamma0_length", "diameter", "r_interior",
                          "r_exterior", "reference_radius", "k"}


class TestConfigRoundTrip:
    def test_round_trip(self):
        dom = PolarDomain(QUARTER, base_radius=2.0, amplitude=0.03,
                          coefficients=[(2, 1.0), (5, -0.25)])
        dom2 = PolarDomain.from_config(dom.to_config())
        assert dom2.opening == dom.opening
        assert dom2.base_radius == dom.base_radius
        assert dom2.amplitude == dom.amplitude
        assert dom2.coefficients == dom.coefficients


class TestValidation:
    def test_rho_must_stay_positive(self):
        with pytest.raises(GeometryError):
            PolarDomain(HALF, amplitude=1.5, coefficients=[(2, 1.0)])

    def test_negative_amplitude_rejected(self):
        with pytest.raises(GeometryError):
            PolarDomain(HALF, amplitude=-0.1, coefficients=[(2, 1.0)])
