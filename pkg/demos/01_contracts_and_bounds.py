"""
Signed contracts and end-to-end delay bounds
============================================

Three domains each publish a tail-risk envelope: a guaranteed rate ``R``, a
latency ``T`` and an impairment allowance ``(kappa, eta)``, all at one
tilting parameter ``theta``.  A broker checks the signatures, composes the
path and asks whether a p99.9 deadline of 30 time units is reachable.
"""

import math
from dataclasses import replace

from tre_assure import (
    TailRiskEnvelope,
    TailSLO,
    aggregate_path,
    effective_rate_poisson,
    feasibility_check,
    generate_keypair,
    sign_tre,
    single_domain_bound,
    tandem_bound,
    verify_tre,
)
from tre_assure.snc import optimize_theta

# each domain signs its own contract
rates, shifts = (1.0, 1.15, 1.25), (0.6, 0.5, 0.4)
keys = {f"d{i + 1}": generate_keypair() for i in range(3)}
path = []
for (name, (sk, pk)), r, t in zip(keys.items(), rates, shifts):
    tre = TailRiskEnvelope(name, "gold", theta=1.0, R=r, T=t, kappa=0.01, eta=0.1)
    path.append(sign_tre(tre, sk, signer_id=name))

print("signatures valid:", all(verify_tre(t, keys[t.domain_id][1]) for t in path))

# a tampered rate no longer verifies
forged = replace(path[0], R=2.0)
print("forged contract valid:", verify_tre(forged, keys["d1"][1]))

# Poisson traffic at rate 0.3 has this effective bandwidth at theta = 1
env = effective_rate_poisson(0.3, 1.0)
print(f"effective rate {env.rho:.4f} (mean rate 0.3)")

# per-domain bounds, then the composed path
for t in path:
    print(f"  {t.domain_id}: P(W > 10) <= {single_domain_bound(t, env, 10.0).probability:.3e}")
desc = aggregate_path(path)
bound = tandem_bound(desc, env, 30.0)
print(f"path: R_min={desc.r_min}, T_sum={desc.t_sigma:.2f}, P(W > 30) <= {bound.probability:.3e}")

# the sufficient condition in log form
slo = TailSLO("tenant-a", "interactive", tau=30.0, epsilon=1e-3)
rep = feasibility_check(desc, env, slo)
print(f"feasible for p99.9 <= 30: {rep.feasible} (slack {rep.slack:.3f} nats)")

# A tighter deadline fails; the report shows by how much.
rep = feasibility_check(desc, env, 15.0, 1e-3)
print(f"feasible for p99.9 <= 15: {rep.feasible} (slack {rep.slack:.3f} nats)")

# Domains may publish several theta values; pick the one minimising the bound.
families = [[TailRiskEnvelope(t.domain_id, "gold", th, t.R, t.T, 0.01, 0.1)
             for th in (0.5, 1.0, 1.5, 2.0)] for t in path]
theta, best = optimize_theta(families, lambda th: effective_rate_poisson(0.3, th), 30.0)
print(f"best theta {theta}: P(W > 30) <= {best.probability:.3e} "
      f"(risk score {-math.log(best.probability):.2f} nats)")
