"""
Auditing telemetry against a contract
=====================================

Delay telemetry arrives from the field.  A generalized Pareto tail fitted
above the empirical p98 extrapolates to p99.9; the result is compared with
the contract bound, the responsible domain's ``eta`` is raised so the bound
covers what was observed, and money moves according to each domain's
marginal effect on the risk score.
"""

import numpy as np

from tre_assure import TailRiskEnvelope, TailSLO, aggregate_path, tandem_bound
from tre_assure.audit import (
    attribute_bound_sensitivity,
    audit_report,
    fit_tail,
    gpd_quantile_ci,
    settle,
)
from tre_assure.contracts import ArrivalEnvelope
from tre_assure.sim import make_rng

path = [TailRiskEnvelope(f"d{i + 1}", "gold", 1.0, r, t)
        for i, (r, t) in enumerate(zip((1.0, 1.15, 1.25), (0.6, 0.5, 0.4)))]
env = ArrivalEnvelope(1.0, 0.5)
slo = TailSLO("tenant-a", "interactive", 30.0, 1e-3)
bound = tandem_bound(aggregate_path(path), env, slo.tau)
print(f"contract bound P(W > 30) <= {bound.probability:.3e}")

# synthetic telemetry with a heavier tail than promised
rng = make_rng(42)
delays = 4.0 + rng.standard_exponential(50_000) * 2.0
slow = rng.random(delays.size) < 0.01
delays[slow] += 8.0 * (rng.random(slow.sum()) ** -0.25 - 1.0)

fit = fit_tail(delays, n_bootstrap=100)
lo, q, hi = gpd_quantile_ci(fit, 1 - slo.epsilon)
print(f"GPD above q={fit.threshold_q:.2f}: xi={fit.shape_xi:.3f} {fit.xi_ci}, "
      f"beta={fit.scale_beta:.3f}")
print(f"audited p99.9 = {q:.2f}  (95% CI {lo:.2f} .. {hi:.2f})")

# bound sensitivities decide who pays if the audit falls short
attr = attribute_bound_sensitivity(path, env, slo.tau)
for d, s in attr.sensitivities.items():
    print(f"  {d}: dK/dR={s['R']:+.3f} dK/dT={s['T']:+.3f} dK/deta={s['eta']:+.3f}")

report = audit_report(delays, slo, bound, path, n_bootstrap=100, attribution=attr,
                      payment=300.0, penalty=90.0)
print(f"\nverdict: {report['verdict']}")
p = report["audited_probability"]
print(f"audited P(W > 30) in [{p['lower']:.2e}, {p['upper']:.2e}] ({p['source']})")
for upd in report["updated_tres"]:
    print(f"re-issue {upd['domain_id']}: eta -> {upd['eta']:.4f} (unsigned until re-signed)")
print("penalty amounts:", {d: round(v, 2) for d, v in settle(attr, 300.0, 90.0).penalty_amounts().items()})
