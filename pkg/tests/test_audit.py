import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tre_assure.audit import (
    MIN_EXCEEDANCES,
    N_BOOTSTRAP,
    AttributionReport,
    GpdFit,
    attribute_bound_sensitivity,
    attribute_simulation,
    audit_report,
    compliance_check,
    empirical_exceedance_ci,
    fit_gpd,
    fit_tail,
    gpd_cdf,
    gpd_quantile,
    gpd_quantile_ci,
    load_telemetry,
    risk_score,
    select_threshold,
    settle,
    tail_probability,
    update_tre,
)
from tre_assure.contracts import ArrivalEnvelope, TailRiskEnvelope, TailSLO
from tre_assure.errors import (
    BelowThreshold,
    DegenerateAttribution,
    FitError,
    InsufficientTail,
    NoUpdateNeeded,
    ParameterError,
)
from tre_assure.sim.engine import make_rng
from tre_assure.snc import aggregate_path, single_domain_bound, tandem_bound


def gpd_sample(rng, xi, beta, n):
    u = rng.random(n)
    if xi == 0:
        return -beta * np.log(u)
    return beta / xi * (u ** -xi - 1.0)


def manual_fit(q, beta, xi, zeta=0.02):
    return GpdFit(q, xi, beta, zeta, 200)


class TestThreshold:
    def test_counts(self):
        x = make_rng(1).random(10_000)
        q, zeta, y = select_threshold(x)
        assert y.size == 200 and zeta == 0.02
        assert np.all(y > 0)

    def test_guards(self):
        with pytest.raises(InsufficientTail):
            select_threshold(np.arange(40.0))
        with pytest.raises(InsufficientTail):
            select_threshold(np.full(10_000, 3.0))

    def test_defaults(self):
        assert MIN_EXCEEDANCES == 30 and N_BOOTSTRAP == 200


class TestFit:
    def test_exponential(self):
        y = make_rng(2).standard_exponential(100_000) / 0.5
        fit = fit_gpd(y, n_bootstrap=50)
        assert -0.05 <= fit.shape_xi <= 0.05
        assert 1.9 <= fit.scale_beta <= 2.1
        assert fit.xi_ci[0] <= 0.0 <= fit.xi_ci[1]

    def test_uniform(self):
        y = make_rng(3).random(100_000) * 4.0
        y = y[y > 0]
        fit = fit_gpd(y, n_bootstrap=20)
        assert fit.shape_xi == pytest.approx(-1.0, abs=0.01)
        assert fit.scale_beta == pytest.approx(4.0, rel=0.01)

    @pytest.mark.parametrize("xi", [-0.3, 0.3])
    def test_recovers_shape(self, xi):
        y = gpd_sample(make_rng(4), xi, 1.5, 100_000)
        fit = fit_gpd(y, n_bootstrap=100, seed=1)
        assert fit.xi_ci[0] <= xi <= fit.xi_ci[1]
        assert fit.beta_ci[0] <= 1.5 <= fit.beta_ci[1]

    def test_mle_beats_neighbours(self):
        y = gpd_sample(make_rng(5), 0.2, 1.0, 2000)
        fit = fit_gpd(y, n_bootstrap=0)

        def nll(xi, beta):
            z = 1 + xi * y / beta
            if np.any(z <= 0):
                return math.inf
            return y.size * math.log(beta) + (1 + 1 / xi) * np.log(z).sum()

        best = nll(fit.shape_xi, fit.scale_beta)
        for dx in (-1e-3, 1e-3):
            for db in (-1e-3, 1e-3):
                assert best <= nll(fit.shape_xi + dx, fit.scale_beta * (1 + db)) + 1e-9

    def test_pwm(self):
        y = gpd_sample(make_rng(6), 0.1, 2.0, 50_000)
        fit = fit_gpd(y, n_bootstrap=20, method="pwm")
        assert fit.shape_xi == pytest.approx(0.1, abs=0.03)
        assert fit.scale_beta == pytest.approx(2.0, rel=0.03)
        assert fit.ci_method.endswith("pwm")

    def test_bootstrap_deterministic(self):
        y = gpd_sample(make_rng(7), 0.1, 1.0, 500)
        a = fit_gpd(y, n_bootstrap=30, seed=9)
        b = fit_gpd(y, n_bootstrap=30, seed=9)
        assert a.xi_ci == b.xi_ci and a.beta_ci == b.beta_ci

    def test_guards(self):
        with pytest.raises(InsufficientTail):
            fit_gpd(np.arange(1.0, 11.0))
        with pytest.raises(ParameterError):
            fit_gpd(np.r_[np.arange(1.0, 40.0), -1.0])
        with pytest.raises(FitError):
            fit_gpd(np.ones(50))
        with pytest.raises(ParameterError):
            fit_gpd(np.arange(1.0, 50.0), method="other")

    def test_fit_tail_carries_threshold(self):
        x = make_rng(8).standard_exponential(20_000)
        fit = fit_tail(x, n_bootstrap=10)
        assert fit.exceed_frac_zeta == 0.02 and fit.n_exceed == 400
        assert fit.threshold_q == pytest.approx(math.log(50), rel=0.05)


class TestTailFormulas:
    def test_quantile_example(self):
        assert gpd_quantile(manual_fit(10, 2, 0.0), 0.999) == pytest.approx(15.99146454710798, abs=1e-6)
        assert 10 - 2 * math.log(0.05) == pytest.approx(15.9915, abs=1e-4)

    def test_below_threshold(self):
        with pytest.raises(BelowThreshold):
            gpd_quantile(manual_fit(10, 2, 0.0), 0.98)
        with pytest.raises(BelowThreshold):
            tail_probability(manual_fit(10, 2, 0.0), 10.0)

    def test_monotone_in_shape(self):
        assert gpd_quantile(manual_fit(10, 2, 0.5), 0.999) > gpd_quantile(manual_fit(10, 2, 0.0), 0.999)

    def test_near_zero_shape_continuous(self):
        a = gpd_quantile(manual_fit(10, 2, 0.0), 0.999)
        b = gpd_quantile(manual_fit(10, 2, 2e-6), 0.999)
        assert b == pytest.approx(a, rel=1e-5)

    @settings(max_examples=200)
    @given(st.floats(-0.9, 1.0), st.floats(0.1, 10), st.floats(0.001, 0.5), st.floats(0.0, 1.0))
    def test_round_trip(self, xi, beta, zeta, u):
        fit = manual_fit(5.0, beta, xi, zeta)
        p = 1 - zeta + zeta * (0.001 + 0.998 * u)
        x = gpd_quantile(fit, p)
        if x > fit.threshold_q:
            assert gpd_cdf(fit, x) == pytest.approx(p, abs=1e-9)

    def test_quantile_ci_brackets_point(self):
        y = gpd_sample(make_rng(9), 0.1, 1.0, 2000)
        fit = fit_gpd(y, n_bootstrap=50, threshold_q=3.0, exceed_frac_zeta=0.02)
        lo, mid, hi = gpd_quantile_ci(fit, 0.999)
        assert lo <= mid <= hi

    def test_empirical_ci(self):
        lo, p, hi = empirical_exceedance_ci(np.r_[np.zeros(990), np.ones(10)], 0.5)
        assert p == 0.01 and lo < 0.01 < hi
        assert empirical_exceedance_ci(np.zeros(100), 0.5)[0] == 0.0


class TestCompliance:
    def test_compliant(self):
        v = compliance_check(manual_fit(20, 0.5, 0.0), TailSLO("u", "c", 30, 1e-3), 1e-3)
        assert v.verdict == "compliant" and v.audited_quantile < 22

    def test_breach(self):
        v = compliance_check(manual_fit(35, 1.0, 0.0), TailSLO("u", "c", 30, 1e-3), 1e-3)
        assert v.verdict == "breach"

    def test_tail_regression(self):
        fit = manual_fit(22, 2.0, 0.0)
        v = compliance_check(fit, TailSLO("u", "c", 30, 1e-3), 1e-4)
        assert v.verdict == "tail-regression"
        assert v.audited_quantile <= 30
        assert v.audited_probability == pytest.approx(0.02 * math.exp(-4))

    def test_uses_lower_ci(self):
        fit = replace(manual_fit(22, 2.0, 0.0), boot_xi=np.zeros(100),
                      boot_beta=np.linspace(1.0, 3.5, 100))
        slo = TailSLO("u", "c", 30, 1e-3)
        lo, mid, hi = gpd_quantile_ci(fit, 0.999)
        assert lo < 30 < hi
        assert compliance_check(fit, slo, 1.0).verdict == "compliant"


def sample_tre(**kw):
    base = dict(theta=1.0, R=2.0, T=0.5, kappa=0.1, eta=0.3)
    base.update(kw)
    return TailRiskEnvelope("d", "gold", **base)


class TestUpdate:
    def test_unit_shift(self):
        t = sample_tre()
        env = ArrivalEnvelope(1.0, 1.0)
        p_b = single_domain_bound(t, env, 12.0).probability
        new = update_tre(t, math.e * p_b, p_b)
        assert new.eta - t.eta == pytest.approx(1.0, abs=1e-12)
        p_new = single_domain_bound(new, env, 12.0).probability
        assert p_new >= math.e * p_b
        assert p_new == pytest.approx(math.e * p_b, rel=1e-12)

    def test_no_update(self):
        t = sample_tre()
        for p in (1e-4, 5e-5):
            with pytest.raises(NoUpdateNeeded) as exc:
                update_tre(t, p, 1e-4)
            assert exc.value.tre is t

    def test_signature_cleared(self):
        t = replace(sample_tre(), signature=b"x" * 64, signer_id="dom")
        new = update_tre(t, 2e-3, 1e-3)
        assert new.signature == b"" and new.signer_id == ""

    def test_kappa_after_persistence(self):
        t = sample_tre()
        assert update_tre(t, 2e-3, 1e-3, 2, 3, 0.05).kappa == t.kappa
        assert update_tre(t, 2e-3, 1e-3, 3, 3, 0.05).kappa == pytest.approx(t.kappa + 0.05)

    def test_guards(self):
        with pytest.raises(ParameterError):
            update_tre(sample_tre(), 0.5, 1.0)
        with pytest.raises(ParameterError):
            update_tre(sample_tre(), 0.0, 1e-3)

    @settings(max_examples=300)
    @given(st.floats(0.2, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 3.0), st.floats(1.0, 1e6))
    def test_conservative(self, theta, eta, slack, ratio):
        t = sample_tre(theta=theta, eta=eta, kappa=0.0)
        env = ArrivalEnvelope(theta, 1.0)
        tau = t.T + 10.0 + slack * 10
        p_b = single_domain_bound(t, env, tau).probability
        p_a = min(1.0, p_b * ratio)
        if not p_a > p_b:
            return
        new = update_tre(t, p_a, p_b)
        assert single_domain_bound(new, env, tau).probability >= p_a
        assert (new.eta - t.eta) * theta == pytest.approx(math.log(p_a / p_b), abs=1e-12)


class TestRiskScore:
    def test_values(self):
        assert risk_score(1e-3).value == pytest.approx(6.9078, abs=1e-4)
        assert risk_score(7.1822e-5).value == pytest.approx(9.5414, abs=1e-4)
        assert risk_score(1.0).value == 0.0
        assert risk_score(0.5, "audit").source == "audit"

    def test_guards(self):
        for p in (0.0, -1.0, 1.5):
            with pytest.raises(ParameterError):
                risk_score(p)


class TestSensitivity:
    def setup_method(self):
        self.env = ArrivalEnvelope(1.0, 0.5)

    def path(self, rs=(1.0, 1.15, 1.25)):
        return [TailRiskEnvelope(f"d{i}", "gold", 1.0, r, 0.5, 0.05, 0.2) for i, r in enumerate(rs)]

    def test_eta_is_minus_theta(self):
        rep = attribute_bound_sensitivity(self.path(), self.env, 30.0)
        for s in rep.sensitivities.values():
            assert s["eta"] == pytest.approx(-1.0, abs=1e-6)

    def test_eta_analytic_theta(self):
        env = ArrivalEnvelope(0.4, 0.5)
        tres = [replace(t, theta=0.4) for t in self.path()]
        rep = attribute_bound_sensitivity(tres, env, 60.0)
        assert all(s["eta"] == pytest.approx(-0.4, abs=1e-6) for s in rep.sensitivities.values())

    def test_bottleneck_only_r(self):
        rep = attribute_bound_sensitivity(self.path(), self.env, 30.0)
        assert rep.sensitivities["d0"]["R"] > 0
        assert rep.sensitivities["d1"]["R"] == 0.0 and rep.sensitivities["d2"]["R"] == 0.0

    def test_symmetric_path(self):
        rep = attribute_bound_sensitivity(self.path((1.0, 1.0, 1.0)), self.env, 30.0)
        s = rep.sensitivities
        for k in ("R", "T", "kappa", "eta"):
            assert s["d0"][k] == pytest.approx(s["d1"][k], rel=1e-9)
            assert s["d0"][k] == pytest.approx(s["d2"][k], rel=1e-9)
        single = attribute_bound_sensitivity(self.path((1.0, 1.1, 1.2)), self.env, 30.0)
        assert 3 * s["d0"]["R"] == pytest.approx(single.sensitivities["d0"]["R"], rel=1e-4)

    def test_share_rule(self):
        rep = attribute_bound_sensitivity(self.path(), self.env, 30.0)
        t = self.path()[0]
        s = rep.sensitivities["d0"]
        expect = 0.01 * (-s["R"] * t.R + s["T"] * t.T + s["kappa"] * t.kappa + s["eta"] * t.eta)
        assert rep.per_domain_share["d0"] == pytest.approx(expect, rel=1e-12)
        assert all(v < 0 for v in rep.per_domain_share.values())
        assert rep.method == "bound-sensitivity"

    def test_one_sided_near_zero_margin(self):
        env = ArrivalEnvelope(1.0, 0.99995)
        tres = [TailRiskEnvelope("a", "g", 1.0, 1.0, 0.5, eta=0.1),
                TailRiskEnvelope("b", "g", 1.0, 3.0, 0.5, eta=0.1)]
        rep = attribute_bound_sensitivity(tres, env, 1e6)
        assert rep.one_sided["a"]["R"] is True
        assert rep.one_sided["b"]["T"] is False
        # kappa = 0 is a boundary: the downward step is negative, the upward one infeasible
        assert rep.one_sided["a"]["kappa"] is True
        assert rep.sensitivities["a"]["kappa"] < 0

    @given(st.floats(-100, 100), st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    def test_conservation_mixed_signs(self, total, parts):
        if abs(math.fsum(parts)) < 1e-6:
            return
        rep = attribute_simulation(total, parts)
        if min(abs(v) for v in rep.per_domain_share.values()) >= 2 * abs(total):
            return
        assert math.fsum(rep.per_domain_share.values()) == total


class TestSimulationAttribution:
    def test_example(self):
        rep = attribute_simulation(12.0, [6, 3, 1])
        assert list(rep.per_domain_share.values()) == pytest.approx([7.2, 3.6, 1.2], rel=1e-14)

    def test_zero_and_single(self):
        assert list(attribute_simulation(0.0, [0, 0, 0]).per_domain_share.values()) == [0, 0, 0]
        assert attribute_simulation(5.5, {"x": 2.0}).per_domain_share == {"x": 5.5}

    def test_degenerate(self):
        with pytest.raises(DegenerateAttribution):
            attribute_simulation(1.0, [1.0, -1.0])

    @given(st.floats(-100, 100), st.lists(st.floats(0.01, 50), min_size=1, max_size=8))
    def test_conservation(self, total, parts):
        rep = attribute_simulation(total, parts)
        assert math.fsum(rep.per_domain_share.values()) == total


class TestSettle:
    def report(self, values):
        return AttributionReport({f"d{i}": v for i, v in enumerate(values)}, sum(values),
                                 "bound-sensitivity")

    def test_example(self):
        out = settle(self.report([2, 1, -1]), 300, 90)
        assert list(out.revenue_amounts().values()) == pytest.approx([200, 100, 0])
        assert list(out.penalty_amounts().values()) == pytest.approx([0, 0, 90])

    def test_all_positive(self):
        out = settle(self.report([1, 1]), 100, 50)
        assert out.penalty_undistributed and not out.revenue_undistributed
        assert list(out.revenue_shares.values()) == [0.5, 0.5]
        assert sum(out.penalty_amounts().values()) == 0

    def test_simulation_shares_are_penalties(self):
        rep = attribute_simulation(12.0, [6, 3, 1])
        out = settle(rep, 100, 60)
        assert out.revenue_undistributed
        assert out.penalty_amounts()["1"] == pytest.approx(36.0)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(0, 1e4), st.floats(0, 1e4))
    def test_conservation(self, vals, pay, pen):
        out = settle(self.report(vals), pay, pen)
        rev = math.fsum(out.revenue_amounts().values())
        pn = math.fsum(out.penalty_amounts().values())
        assert all(0 <= f <= 1 for f in out.revenue_shares.values())
        assert rev <= pay * (1 + 1e-12) and pn <= pen * (1 + 1e-12)
        if any(v > 0 for v in vals):
            assert rev == pytest.approx(pay, rel=1e-12)
        if any(v < 0 for v in vals):
            assert pn == pytest.approx(pen, rel=1e-12)


class TestTelemetry:
    def test_formats(self, tmp_path):
        assert list(load_telemetry("1.5\n2.5\n")) == [1.5, 2.5]
        assert list(load_telemetry("id,delay\n1,4.0\n2,5.0\n")) == [4.0, 5.0]
        f = tmp_path / "t.csv"
        f.write_text("delay\n3\n4\n")
        assert list(load_telemetry(str(f))) == [3.0, 4.0]

    def test_bad_rows(self):
        with pytest.raises(ParameterError):
            load_telemetry("1\n2\nabc\n")
        with pytest.raises(InsufficientTail):
            load_telemetry("delay\n")


class TestReport:
    def test_breach_updates_bottleneck(self):
        tres = [TailRiskEnvelope(f"d{i}", "gold", 1.0, r, t) for i, (r, t) in
                enumerate(zip((1.0, 1.15, 1.25), (0.6, 0.5, 0.4)))]
        env = ArrivalEnvelope(1.0, 0.5)
        slo = TailSLO("u", "c", 30.0, 1e-3)
        bound = tandem_bound(aggregate_path(tres), env, slo.tau)
        x = 25.0 + gpd_sample(make_rng(10), 0.2, 4.0, 20_000)
        rep = audit_report(x, slo, bound, tres, n_bootstrap=20)
        assert rep["verdict"] == "breach"
        assert [u["domain_id"] for u in rep["updated_tres"]] == ["d0"]
        assert rep["updated_tres"][0]["eta"] > 0

    def test_compliant_has_no_update(self):
        tres = [TailRiskEnvelope("d", "gold", 0.3, 1.0, 0.0)]
        env = ArrivalEnvelope(0.3, 0.55 * math.expm1(0.3) / 0.3)
        slo = TailSLO("u", "c", 30.0, 1e-3)
        bound = tandem_bound(aggregate_path(tres), env, slo.tau)
        x = make_rng(11).standard_exponential(20_000) / 0.45
        rep = audit_report(x, slo, bound, tres, n_bootstrap=20)
        assert rep["verdict"] == "compliant" and rep["updated_tres"] == []
        assert rep["audited_probability"]["source"] == "gpd"
