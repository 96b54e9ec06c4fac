import math

import numpy as np
import pytest

from rdcp import from_epsilon_direction, make_direction
from rdcp.errors import ConvergenceOrderViolation, OutOfRange
from rdcp.perturbation import (
    PerturbationBundle,
    asymptotic_ratios,
    correction_bounds_check,
    difference_endpoint_limit_check,
    finite_difference_check,
    hazard_correction_sign_change,
    lambda_correction_ode_check,
    omega_ode_check,
    run_verification,
    survival_hazard_consistency,
    verify_difference_functions,
    verify_lambda_squeeze,
    verify_operator_inequalities,
    verify_slope_bound,
    verify_survival_squeeze,
)


@pytest.fixture(scope="module")
def loose_bundle(r3_direction):
    # big eps, small delta: the regime where violations are expected
    return PerturbationBundle.build(r3_direction.with_epsilon(0.5), 0.05)


@pytest.fixture(scope="module")
def r5_bundle():
    return PerturbationBundle.build(make_direction({5: 1.0}, epsilon=0.01), 0.5)


class TestBundleBasics:
    def test_endpoints(self, accept_bundle):
        assert accept_bundle.upsilon == 3.0
        assert accept_bundle.t_under == pytest.approx(0.5 / 0.03)
        assert accept_bundle.t_over == pytest.approx(1.5 / 0.03)
        assert accept_bundle.t_over_one == pytest.approx(2.0 / 0.03)

    def test_values_at_zero_limits(self, accept_bundle):
        v = accept_bundle.values_at(1e-8)
        for key in ("lambda_correction", "survival_correction",
                    "omega", "omega_prime", "alpha", "beta"):
            assert abs(float(v[key][0])) < 1e-6, key
        assert float(v["u"][0]) == pytest.approx(1.0, abs=1e-6)
        # H_r(0) = r_2 = -1: the hub split removes 2-constraint mass at unit rate
        assert float(v["hazard_correction"][0]) == pytest.approx(-1.0, abs=1e-6)

    def test_out_of_range(self, accept_bundle):
        with pytest.raises(OutOfRange):
            accept_bundle.values_at(accept_bundle.grid[-1] * 2.0)

    def test_grid_matches_config(self, accept_bundle):
        g = accept_bundle.verify_grid
        assert g[0] == pytest.approx(1e-3)
        assert g[-1] == pytest.approx(accept_bundle.t_over_one)
        assert len(g) >= 2000

    def test_scalar_evaluators_match_grid(self, accept_bundle):
        b = accept_bundle
        i = b.n_verify // 2
        t = float(b.grid[i])
        assert b.lambda_correction(t) == pytest.approx(b.vals["lambda_correction"][i], rel=1e-12)
        assert b.omega(t) == pytest.approx(b.vals["omega"][i], rel=1e-12)
        assert b.hazard_correction(t) == pytest.approx(b.vals["hazard_correction"][i], rel=1e-10)

    def test_delta_validation(self, r3_direction):
        with pytest.raises(ValueError):
            PerturbationBundle.build(r3_direction, 1.5)


class TestClosedFormOracles:
    def test_lambda_correction_vs_ode(self, accept_bundle):
        res = lambda_correction_ode_check(accept_bundle)
        assert res.passed, res.details

    def test_omega_vs_ode(self, accept_bundle):
        res = omega_ode_check(accept_bundle)
        assert res.passed, res.details

    def test_survival_is_integrated_hazard(self, accept_bundle):
        res = survival_hazard_consistency(accept_bundle)
        assert res.passed, res.details
        assert res.details["tail_abs"] <= 1e-4

    def test_omega_vs_ode_other_direction(self, r5_bundle):
        assert omega_ode_check(r5_bundle).passed

    def test_bounds(self, accept_bundle, r5_bundle):
        for b in (accept_bundle, r5_bundle):
            res = correction_bounds_check(b)
            assert res.passed, res.details

    def test_beta_limit_is_molloy_reed(self, accept_bundle, r5_bundle):
        # beta_r(t) -> Upsilon_r; the approach slows with delta (higher
        # Poisson tails), so the hub-5 direction only gets a trend check
        assert correction_bounds_check(accept_bundle).details[
            "beta_at_horizon"
        ] == pytest.approx(accept_bundle.upsilon, rel=0.01)
        b5 = r5_bundle
        far = correction_bounds_check(b5).details["beta_at_horizon"]
        near = b5.beta(1.0e3)
        assert abs(far - b5.upsilon) < abs(near - b5.upsilon)
        assert far == pytest.approx(b5.upsilon, rel=0.06)

    def test_hazard_correction_changes_sign_then_stays_positive(self, accept_bundle):
        res = hazard_correction_sign_change(accept_bundle)
        assert res.passed
        assert 0.0 < res.details["last_sign_change"] < accept_bundle.t_over_one


class TestFiniteDifference:
    def test_first_order_convergence(self, r3_direction, accept_bundle):
        res = finite_difference_check(r3_direction, bundle=accept_bundle)
        assert res.passed
        assert res.details["errors_lambda"][0] > res.details["errors_lambda"][-1]

    def test_slope_value_example(self, r3_direction, accept_bundle):
        # finite-difference slope at eps=1e-3 lands within 2e-3 of the
        # closed-form directional derivative at t = 1
        from rdcp.lambda_solver import build_lambda_table

        eps = 1e-3
        dist = from_epsilon_direction(r3_direction.with_epsilon(eps))
        tab = build_lambda_table(dist, 2.0)
        slope = (tab.lambda_at(1.0) - accept_bundle.base.lambda_at(1.0)) / eps
        assert slope == pytest.approx(accept_bundle.lambda_correction(1.0), abs=2e-3)

    def test_rejects_zero_eps(self, r3_direction):
        with pytest.raises(ValueError):
            finite_difference_check(r3_direction, eps_list=(1e-2, 0.0))

    def test_order_violation_detected(self, r3_direction, accept_bundle):
        # at eps ~ 1e-7 the slope is drowned in table noise, so the observed
        # error ratio collapses far below the eps ratio
        with pytest.raises(ConvergenceOrderViolation):
            finite_difference_check(
                r3_direction, eps_list=(1e-7, 1e-8), bundle=accept_bundle
            )


class TestAcceptanceConfiguration:
    """eps = 0.01, delta = 0.5, r_3 = 1: everything must hold."""

    def test_lambda_squeeze(self, accept_bundle, accept_hazard):
        res = verify_lambda_squeeze(accept_bundle, accept_hazard)
        assert res.passed, (res.margin, res.location)

    def test_survival_squeeze(self, accept_bundle, accept_hazard):
        res = verify_survival_squeeze(accept_bundle, accept_hazard)
        assert res.passed, (res.margin, res.location)

    def test_slope_bound(self, accept_bundle):
        res = verify_slope_bound(accept_bundle, 2.0)
        assert res.passed, (res.margin, res.location)

    def test_operator_inequalities(self, accept_bundle, accept_hazard):
        res = verify_operator_inequalities(accept_bundle, accept_hazard)
        assert res.passed, res.details

    def test_difference_functions(self, accept_bundle, accept_hazard):
        res = verify_difference_functions(accept_bundle, accept_hazard)
        assert res.passed, res.details

    def test_test_functions_monotone_and_capped(self, accept_bundle):
        w_under, w_over = accept_bundle.test_functions()
        for w in (w_under, w_over):
            g = accept_bundle.verify_grid
            vals = w.value_on_verify_grid()
            assert abs(w.value(0.0)) < 1e-12
            assert np.all(np.diff(vals) >= -1e-14)
            assert np.all(vals >= 0.0)
            # constant beyond the cutoff, exactly
            assert w.value(w.cutoff * 1.5) == w.value(w.cutoff)
            assert w.derivative(w.cutoff * 1.5) == 0.0


class TestViolationRegime:
    """eps = 0.5, delta = 0.05: violations are reported, not raised."""

    def test_operator_inequalities_fire(self, loose_bundle):
        res = verify_operator_inequalities(loose_bundle)
        assert not res.passed
        assert res.margin < 0.0 and res.location is not None

    def test_difference_functions_fire(self, loose_bundle):
        res = verify_difference_functions(loose_bundle)
        assert not res.passed

    def test_slope_bound_with_large_k(self, r3_direction):
        b = PerturbationBundle.build(r3_direction.with_epsilon(0.3), 0.5)
        res = verify_slope_bound(b, 40.0)
        assert not res.passed

    def test_report_structure(self, loose_bundle):
        res = verify_lambda_squeeze(loose_bundle)
        d = res.to_dict()
        assert set(d) == {"name", "passed", "min_margin", "location", "details"}


class TestAsymptoticRatios:
    def test_direction_level_ratios_near_one(self, accept_bundle):
        r = asymptotic_ratios(accept_bundle, 1.0e3)
        assert r["omega_ratio"] == pytest.approx(1.0, abs=0.2)
        assert r["omega_prime_ratio"] == pytest.approx(1.0, abs=0.2)
        assert r["u_ratio"] == pytest.approx(1.0, abs=0.2)
        assert r["beta_over_upsilon"] == pytest.approx(1.0, abs=0.05)
        assert r["aux_ratio"] == pytest.approx(1.0, abs=0.15)

    def test_chi2_level_ratios_converge_slowly(self, accept_bundle):
        # the base-law ratios approach 1 from above as t grows
        r3 = asymptotic_ratios(accept_bundle, 1.0e3)
        r4 = asymptotic_ratios(accept_bundle, 5.0e3)
        for key in ("lambda_over_log", "exp_lambda_over_t_log", "tail_product"):
            assert r4[key] < r3[key]
            assert r4[key] > 1.0

    def test_uniformity_probe_other_direction(self, r5_bundle):
        # the limits are uniform over hub directions but convergence slows
        # with delta; at t = 1e3 the hub-5 ratios sit near 0.76-0.89 and
        # must keep improving with t
        r3 = asymptotic_ratios(r5_bundle, 1.0e3)
        r6 = asymptotic_ratios(r5_bundle, 5.0e3)
        assert r3["omega_ratio"] == pytest.approx(1.0, abs=0.3)
        assert r3["beta_over_upsilon"] == pytest.approx(1.0, abs=0.2)
        assert abs(r6["omega_ratio"] - 1.0) < abs(r3["omega_ratio"] - 1.0)
        assert abs(r6["beta_over_upsilon"] - 1.0) < abs(r3["beta_over_upsilon"] - 1.0)

    def test_endpoint_limit_loose(self, r3_direction):
        res = difference_endpoint_limit_check(r3_direction, 0.5, eps=1e-3)
        assert res.passed, res.details


class TestSuiteRunner:
    def test_acceptance_report_all_green(self, r3_direction):
        rep = run_verification(
            r3_direction.with_epsilon(0.01), 0.5, include_spectral=True
        )
        assert rep.all_passed, [c.name for c in rep.checks if not c.passed]
        names = {c.name for c in rep.checks}
        assert "critical_time_containment" in names

    def test_violation_report_not_fatal(self, r3_direction):
        rep = run_verification(
            r3_direction.with_epsilon(0.5), 0.05,
            include_spectral=False, include_finite_difference=False,
        )
        assert not rep.all_passed
        d = rep.to_dict()
        assert d["all_passed"] is False and len(d["checks"]) >= 8
