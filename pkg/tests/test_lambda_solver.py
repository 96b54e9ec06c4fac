import math

import numpy as np
import pytest

from rdcp import HazardModel, build_lambda_table, psi, pure_degree, two_regular, validate
from rdcp.errors import NonFiniteResult, OutOfRange, ToleranceUnachievable
from rdcp.lambda_solver import tail_polynomial

# frozen oracle: scipy.integrate.quad of exp(x)/(1+x) on [0,1], epsabs 1e-14
PSI_CHI2_AT_1 = 1.1253860830832696


class TestPsi:
    def test_zero(self, chi2, chi3):
        assert psi(chi2, 0.0) == 0.0
        assert psi(chi3, 0.0) == 0.0

    def test_chi2_oracle_value(self, chi2):
        assert psi(chi2, 1.0) == pytest.approx(PSI_CHI2_AT_1, abs=1e-12)

    def test_chi3_below_chi2(self, chi2, chi3):
        # larger tail polynomial in the denominator slows the clock
        for lam in (0.5, 1.0, 3.0):
            assert psi(chi3, lam) < psi(chi2, lam)

    def test_overflow_guard(self, chi2):
        with pytest.raises(NonFiniteResult):
            psi(chi2, 701.0)

    def test_strictly_increasing(self, chi3):
        vals = [psi(chi3, x) for x in (0.1, 0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.diff(vals) > 0)


class TestLambdaTable:
    def test_initial_conditions(self, chi2_hazard, chi3_hazard):
        for h in (chi2_hazard, chi3_hazard):
            assert h.table.lambda_at(0.0) == 0.0
            assert h.table.lambda_prime_at(0.0) == pytest.approx(1.0, abs=1e-14)

    def test_chi2_at_1_brackets(self, chi2_hazard):
        lam1 = chi2_hazard.table.lambda_at(1.0)
        assert math.log(2.0) <= lam1 <= 2.0 * math.log(3.0)
        # frozen from the RK45 oracle at abs tol 1e-12
        assert lam1 == pytest.approx(0.905586955529345, abs=1e-10)

    def test_psi_inversion_consistency(self, chi3):
        # lambda(psi(lam)) == lam closes the loop between the two maps
        tab = build_lambda_table(chi3, 50.0)
        for lam in (0.1, 1.0, 3.0):
            assert tab.lambda_at(psi(chi3, lam)) == pytest.approx(lam, abs=1e-11)

    def test_monotone_and_bounded_on_grid(self, chi2_hazard, chi3_hazard):
        for h in (chi2_hazard, chi3_hazard):
            t = np.linspace(0.0, h.t_max, 1000)
            lam = h.table.lambda_at(t)
            lamp = h.table.lambda_prime_at(t)
            assert np.all(np.diff(lam) > 0)
            assert np.all(lamp > 0) and np.all(lamp <= 1.0 + 1e-12)
            assert np.all(lam + 1e-9 >= np.log1p(t))
            assert np.all(lamp * (t + 1.0) >= 1.0 - 1e-9)

    def test_chi2_upper_bracket(self, chi2_hazard):
        t = np.geomspace(1e-3, chi2_hazard.t_max, 1000)
        lam = chi2_hazard.table.lambda_at(t)
        assert np.all(lam <= 2.0 * np.log(2.0 * t + 1.0) + 1e-9)

    def test_log_ratio_trend_to_one(self, chi2):
        tab = build_lambda_table(chi2, 1.0e4)
        ratios = [tab.lambda_at(t) / math.log(t) for t in (1e2, 1e3, 1e4)]
        assert np.all(np.diff(ratios) < 0)
        assert ratios[-1] > 1.0

    def test_out_of_range(self, chi3_hazard):
        with pytest.raises(OutOfRange):
            chi3_hazard.table.lambda_at(chi3_hazard.t_max * 1.01)
        with pytest.raises(OutOfRange):
            chi3_hazard.table.lambda_at(-0.5)

    def test_cross_validation_runs(self, chi3):
        # the builder itself raises if the psi and ODE paths disagree
        build_lambda_table(chi3, 20.0, tol=1e-10)

    def test_unachievable_tolerance(self, chi3):
        with pytest.raises(ToleranceUnachievable):
            build_lambda_table(chi3, 20.0, tol=1e-17)

    def test_delta_64_factorials_stay_finite(self):
        p = pure_degree(64)
        tab = build_lambda_table(p, 30.0)
        lam = tab.lambda_at(np.linspace(0, 30, 50))
        assert np.all(np.isfinite(lam))
        assert np.all(np.isfinite(tail_polynomial(p, lam)))


class TestHazardModel:
    def test_hazard_at_zero(self, chi2_hazard, chi3_hazard):
        assert chi2_hazard.hazard_density(0.0) == pytest.approx(1.0)
        assert chi3_hazard.hazard_density(0.0) == 0.0
        p = validate([0.37, 0.63], 3)
        h = HazardModel.build(p, 5.0)
        assert h.hazard_density(0.0) == pytest.approx(0.37)

    def test_survival_basics(self, chi2_hazard, chi3_hazard):
        assert chi2_hazard.survival(0.0) == pytest.approx(1.0)
        assert chi3_hazard.survival(0.0) == pytest.approx(1.0)
        t = np.geomspace(1e-3, chi3_hazard.t_max, 500)
        assert np.all(np.diff(chi3_hazard.survival(t)) < 0)

    def test_chi2_survival_closed_form(self, chi2_hazard):
        t = np.geomspace(1e-3, chi2_hazard.t_max, 400)
        lam = chi2_hazard.table.lambda_at(t)
        gap = np.abs(chi2_hazard.survival(t) - np.exp(-lam))
        assert float(np.max(gap)) <= 1e-10

    def test_chi3_survival_of_lambda(self, chi3_hazard):
        # I(lambda=1) = e^{-1} (q_2 + q_3) = 2/e
        val = float(chi3_hazard.survival_of_lambda(np.array([1.0]))[0])
        assert val == pytest.approx(2.0 / math.e, abs=1e-14)

    def test_density_integrates_to_one(self, chi2_hazard, chi3_hazard):
        from rdcp.quadrature import cumulative_integral, geometric_edges

        for h in (chi2_hazard, chi3_hazard):
            edges = geometric_edges(1e-6 * h.t_max, h.t_max, 600, include_zero=True)
            total = cumulative_integral(h.hazard_density, edges, 8)[-1]
            assert abs(total + h.survival(h.t_max) - 1.0) <= 1e-8

    def test_mean_root_degree(self, chi2_hazard):
        assert chi2_hazard.mean_root_degree(0.0) == pytest.approx(0.0, abs=1e-14)
        assert chi2_hazard.mean_root_degree(1e3) == pytest.approx(2.0, abs=2e-3)
        assert chi2_hazard.mean_root_degree(math.inf) == 2.0
        t = np.geomspace(0.01, 1e3, 200)
        f = chi2_hazard.mean_root_degree(t)
        assert np.all(np.diff(f) > 0)

    def test_mean_root_degree_matches_quadrature(self, chi3_hazard):
        import scipy.integrate as si

        val, _ = si.quad(
            lambda s: chi3_hazard.table.lambda_prime_at(s) ** 2, 0.0, 5.0, limit=200
        )
        assert chi3_hazard.mean_root_degree(5.0) == pytest.approx(val, abs=1e-9)

    def test_degree_tail_decay(self, chi2_hazard):
        # t * (E D - F(t)) drifts toward 1 from above, slowly
        vals = [t * chi2_hazard.mean_root_degree_tail(t) for t in (50.0, 100.0, 200.0)]
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] > 1.0

    def test_branching_identity(self, chi3_hazard):
        t = np.geomspace(0.05, 10.0, 64)
        h_direct = chi3_hazard.hazard_density(t)
        h_via_branching = (
            chi3_hazard.branching_mean_degree(t)
            * chi3_hazard.branching_density(t)
            / chi3_hazard.table.lambda_at(t)
        )
        assert float(np.max(np.abs(h_via_branching - h_direct))) <= 1e-10

    def test_branching_weight_positive(self, chi3_hazard):
        t = np.geomspace(1e-3, chi3_hazard.t_max, 100)
        assert np.all(chi3_hazard.branching_weight(t) > 0)

    def test_csv_export(self, tmp_path, chi3_hazard):
        path = tmp_path / "table.csv"
        chi3_hazard.export_csv(path, n_points=32)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,lambda,lambda_prime,H,I"
        assert len(lines) == 33
        first = [float(x) for x in lines[1].split(",")]
        assert first == [0.0, 0.0, 1.0, 0.0, 1.0]
