"""
Admission control, burst isolation and domain degradation
=========================================================

Packet-level runs of the three-domain tandem.  The trial counts here are
small so the script finishes in seconds; ``tre-assure simulate all`` runs
the full 100-trial versions and writes CSV files.
"""

import numpy as np

from tre_assure.audit import attribute_simulation
from tre_assure.sim import derive_trial_seed
from tre_assure.sim.scenarios import (
    MU,
    degradation_scenario,
    isolation_scenario,
    reference_tandem,
    sweep_load,
)

TRIALS = 20

# Load sweep: best effort against admission at a guarded deadline of 0.985 * 30
be, tre = sweep_load(reference_tandem(0.0), rho_grid=np.linspace(0.55, 0.98, 6),
                     n_trials=TRIALS, master_seed=derive_trial_seed(1, 1))
print("rho    best-effort  managed  alpha")
for rho, q_be, q_tre, extra in zip(be.grid, be.metric, tre.metric, tre.extra):
    print(f"{rho:.3f}  {q_be:10.2f}  {q_tre:7.2f}  {extra['alpha']:.3f}")

# Isolation: a bursty co-tenant against a victim at load 0.55
shared = isolation_scenario(mode="shared", b_grid=(1, 4, 8), n_trials=TRIALS)
reserved = isolation_scenario(mode="reserved", b_grid=(1, 4, 8), n_trials=TRIALS)
print("\nb   shared p99.9  reserved p99.9 (pooled)")
for b, qs, e in zip(shared.grid, shared.metric, reserved.extra):
    print(f"{b:.0f}  {qs:12.2f}  {e['pooled_q']:14.2f}")

# Degradation: slow every domain, or one at a time, and split the increase
res = degradation_scenario(reference_tandem(0.85 * min(MU)), n_trials=TRIALS)
for i in res.stable_indices():
    if res.grid[i] == 1.0:
        continue
    rep = attribute_simulation(res.dq_all[i], [res.dq_only[d][i] for d in range(len(MU))])
    shares = ", ".join(f"d{k}: {v:.2f}" for k, v in rep.per_domain_share.items())
    print(f"\ns={res.grid[i]}: dQ_all={res.dq_all[i]:.2f} -> {shares}")
print("saturated grid points:", [s for s, sat in zip(res.grid, res.saturated_all) if sat])
