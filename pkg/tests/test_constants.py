import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conetorsion.constants import (
    annulus_torsion,
    build_constants_report,
    gradient_bound,
    gradient_trace_constants,
    hk_stability_constant,
    hopf_bound,
    lambda_combiner,
    max_u_bounds,
    sbt_stability_constant,
    zero_trace_bound,
    _critical_radius,
)


class TestHopfBound:
    def test_identity(self):
        assert hopf_bound(1.0) == 1.0
        assert hopf_bound(0.3) == 0.3

    def test_degenerate_flags_zero(self):
        assert hopf_bound(0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            hopf_bound(-0.1)


class TestGradientBound:
    def test_plane_branch(self):
        assert gradient_bound(2, 1.0, 2.0) == pytest.approx(6 * 3 ** 4)  # 486

    def test_higher_dim_branch(self):
        assert gradient_bound(3, 1.0, 2.0) == pytest.approx(4.5 * 27)  # 121.5

    def test_degenerate_diameter(self):
        assert gradient_bound(2, 0.7, 0.0) == pytest.approx(6 * 0.7)

    @given(st.floats(min_value=0.1, max_value=5.0),
           st.floats(min_value=0.0, max_value=10.0))
    @settings(max_examples=50)
    def test_positive_and_monotone_in_diameter(self, re, d):
        b = gradient_bound(2, re, d)
        assert b > 0
        assert gradient_bound(2, re, d + 0.5) > b


class TestAnnulusTorsion:
    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_boundary_conditions(self, N):
        w_in, _ = annulus_torsion(N, 1.0, 3.0, 1.0)
        w_out, _ = annulus_torsion(N, 1.0, 3.0, 3.0)
        assert w_in == pytest.approx(0.0, abs=1e-13)
        assert w_out == pytest.approx(0.0, abs=1e-13)

    @pytest.mark.parametrize("N", [2, 3, 5])
    def test_radial_laplacian_equals_dimension(self, N):
        # finite-difference Laplacian of the radial profile:
        # w'' + (N-1)/r * w' = N
        r = np.linspace(1.1, 2.9, 7)
        h = 1e-4  # balances second-difference truncation and roundoff
        for s in r:
            wm, _ = annulus_torsion(N, 1.0, 3.0, s - h)
            w0, wp = annulus_torsion(N, 1.0, 3.0, s)
            wq, _ = annulus_torsion(N, 1.0, 3.0, s + h)
            lap = (wm - 2 * w0 + wq) / h ** 2 + (N - 1) / s * wp
            assert lap == pytest.approx(N, abs=1e-6)

    def test_derivative_consistent_with_values(self):
        h = 1e-6
        for N in (2, 4):
            w1, wp = annulus_torsion(N, 1.0, 3.0, 2.0)
            w2, _ = annulus_torsion(N, 1.0, 3.0, 2.0 + h)
            assert wp == pytest.approx((w2 - w1) / h, abs=1e-5)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            annulus_torsion(2, 1.0, 3.0, 0.5)
        with pytest.raises(ValueError):
            annulus_torsion(2, 3.0, 1.0, 2.0)

    def test_critical_radius_is_stationary(self):
        for N in (2, 3):
            zc = _critical_radius(N, 1.0, 5.0)
            _, wp = annulus_torsion(N, 1.0, 5.0, zc)
            assert wp == pytest.approx(0.0, abs=1e-10)


def radial_ode_max(N, r_out):
    """Independent oracle for the annulus maximum: integrate the radial
    torsion ODE w'' + (N-1)/r w' = N, w(1) = 0, and shoot on w'(1) so that
    w(r_out) = 0; report max(-w)."""
    from scipy.optimize import brentq

    def terminal(wp1):
        sol = solve_ivp(lambda r, y: [y[1], N - (N - 1) / r * y[1]],
                        (1.0, r_out), [0.0, wp1], rtol=1e-11, atol=1e-12,
                        dense_output=True)
        return sol, sol.y[0, -1]

    wp1 = brentq(lambda s: terminal(s)[1], -10 * r_out, 0.0, xtol=1e-12)
    sol, _ = terminal(wp1)
    rr = np.linspace(1.0, r_out, 20001)
    return float(np.max(-sol.sol(rr)[0]))


class TestMaxUBounds:
    def test_diameter_squared_branch(self):
        bii, _ = max_u_bounds(2, 2.0)
        assert bii == 2.0

    def test_small_diameter_limit(self):
        bii, _ = max_u_bounds(3, 1e-4)
        assert bii == pytest.approx(0.0, abs=1e-7)

    def test_annulus_branch_against_ode_oracle(self):
        d = 2.0
        _, bi = max_u_bounds(2, d)
        r_out = 2.0 * (1.0 + d) ** 2
        assert r_out == 18.0
        zc = _critical_radius(2, 1.0, r_out)
        assert zc == pytest.approx(math.sqrt((18 ** 2 - 1) / (2 * math.log(18))),
                                   rel=1e-12)
        oracle = radial_ode_max(2, r_out)
        assert bi == pytest.approx(oracle, rel=1e-6)


class TestLambdaCombiner:
    def test_branches(self):
        assert lambda_combiner(0, 0.7) == 0.7
        assert lambda_combiner(2, 0.7, 0.9) == 0.9
        assert lambda_combiner(1, 0.7, 0.9) == 0.9

    def test_missing_eta_rejected(self):
        with pytest.raises(ValueError):
            lambda_combiner(1, 0.7)

    @given(st.floats(min_value=0.01, max_value=10),
           st.floats(min_value=0.01, max_value=10))
    @settings(max_examples=50)
    def test_middle_branch_is_max_of_outer(self, mu_inv, eta_inv):
        mid = lambda_combiner(1, mu_inv, eta_inv)
        assert mid == max(lambda_combiner(0, mu_inv),
                          lambda_combiner(2, mu_inv, eta_inv))


class TestHkStabilityConstant:
    def test_general_formula(self):
        assert hk_stability_constant(2, 1.0, 1.0).general == pytest.approx(2.0)

    def test_with_m_formula(self):
        c = hk_stability_constant(2, None, 1.0, m_lower=1.0, max_neg_u=0.5)
        assert c.general is None
        assert c.with_m == pytest.approx(3.0)  # 1 * (2*1 + 2*0.5)

    @given(st.floats(min_value=0.1, max_value=3.0))
    @settings(max_examples=30)
    def test_quadratic_homogeneity_in_lambda2(self, t):
        base = hk_stability_constant(2, 1.3, 0.8).general
        scaled = hk_stability_constant(2, t * 1.3, 0.8).general
        assert scaled == pytest.approx(t ** 2 * base, rel=1e-12)


class TestSbtStabilityConstant:
    def test_unit_case(self):
        c = sbt_stability_constant(2, 1.0, 1.0)
        assert c.c_bar == pytest.approx(4.0)
        assert c.c_hat == pytest.approx(4.0)

    def test_general_case(self):
        c = sbt_stability_constant(2, 2.0, 3.0)
        assert c.c_bar == pytest.approx(45.0)
        assert c.c_hat == pytest.approx(90.0)

    def test_max_picks_dimension_branch(self):
        # unu_max below N-1 = 1: the max falls back to the dimension term
        c = sbt_stability_constant(2, 1.0, 0.5)
        assert c.c_bar == pytest.approx(1.0 * 4.0)

    def test_with_m_needs_positive_bound(self):
        with pytest.raises(ValueError):
            sbt_stability_constant(2, 1.0, 1.0, m_lower=0.0, variant="with_m")


class TestZeroTraceBound:
    def test_mu_zero_limit(self):
        assert zero_trace_bound(0.0, 1.3, 2.0, 0.5) == pytest.approx(
            1.3 * math.sqrt(4.0))

    def test_unit_substitution(self):
        assert zero_trace_bound(1.0, 1.0, 1.0, 1.0) == pytest.approx(
            1.0 + math.sqrt(2.0))

    def test_large_portion_limit(self):
        assert zero_trace_bound(0.8, 1.0, 1.0, 1e12) == pytest.approx(0.8, abs=1e-5)


class TestConstantsReport:
    def test_report_assembles_and_orders_variants(self):
        rep = build_constants_report(
            k=2, r_interior=0.8, r_exterior=10.0, diameter=1.5,
            area=0.8, gamma0_length=1.6, lambda2=1.5, mu2_inv=0.33,
            eta2_inv=0.55, unu_max=1.1, max_neg_u=0.5)
        d = rep.as_dict()
        assert all(v is None or np.isfinite(v) for v in d.values())
        assert rep.Lambda2k == 0.55
        assert rep.best_hk() <= rep.C_hk_general
        assert rep.best_sbt() <= rep.C_sbt_general
        assert rep.m_hopf == 0.8

    def test_solve_free_report_uses_bounds(self):
        rep = build_constants_report(
            k=0, r_interior=1.0, r_exterior=10.0, diameter=2.0,
            area=np.pi, gamma0_length=2 * np.pi, lambda2=1.5, mu2_inv=0.54)
        assert rep.eta2_inv is None
        assert rep.Lambda2k == 0.54
        # with no measured max(-u) the diameter bound stands in
        assert rep.C_hk_with_m == pytest.approx(
            (2 * 0.54 ** 2 + 2 * rep.max_u_bound_ii) / 1.0)


class TestGradientTraceConstants:
    def test_general_and_with_m(self):
        gen, wm = gradient_trace_constants(2, 1.5, 0.8, m_lower=0.9,
                                           max_neg_u=0.5)
        assert gen == pytest.approx(1.5 * math.sqrt(1 + 0.64))
        assert wm == pytest.approx((2 * 0.64 + 1.0) / 0.9)
