"""Regenerate ``two_domain.json``: a 2-domain provisioning instance and its brute-force optimum.

The reference solver shares no code with the package.  It evaluates the
single-domain bound in mpmath, inverts it for the minimum rate by bisection
and searches the budget split on a fine grid over ``log(eps_A)``, then
refines around the best grid point.
"""
import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40

INSTANCE = {
    "stages": [
        [{"domain_id": "A", "cost_slope": 1.0, "capacity": 3.0, "admissible_tags": ["eu"],
          "tres": [{"domain_id": "A", "reservation_class": "gold", "theta": 1.0, "R": 3.0,
                    "T": 0.5, "kappa": 0.05, "eta": 0.2}]}],
        [{"domain_id": "B", "cost_slope": 2.0, "capacity": 3.0, "admissible_tags": ["eu"],
          "tres": [{"domain_id": "B", "reservation_class": "gold", "theta": 1.0, "R": 3.0,
                    "T": 0.5, "kappa": 0.05, "eta": 0.2}]}],
    ],
    "slos": [{"tenant_id": "u1", "class_id": "inference", "tau": 20.0, "epsilon": 1e-3,
              "policy": ["eu"]}],
    "envelopes": {"u1": {"theta": 1.0, "lambda": 0.5}},
}


def min_rate(theta, lam, T, kappa, eta, tau_d, eps):
    rho = lam * mp.expm1(theta) / theta
    burst = eta + kappa * T

    def log_bound(delta):
        x = theta * delta
        return theta * burst - mp.log(1 - mp.exp(-x)) - x * (tau_d - T)

    lo, hi = mp.mpf(0), mp.mpf(1)
    while log_bound(hi) > mp.log(eps):
        hi *= 2
    for _ in range(200):
        mid = (lo + hi) / 2
        if log_bound(mid) > mp.log(eps):
            lo = mid
        else:
            hi = mid
    return rho + kappa + hi


def cost(log_eps_a):
    slo = INSTANCE["slos"][0]
    eps = mp.mpf(slo["epsilon"])
    eps_a = mp.exp(log_eps_a)
    eps_b = eps - eps_a
    (a,), (b,) = INSTANCE["stages"]
    ta, tb = a["tres"][0], b["tres"][0]
    # equal split of the deadline slack above the summed latency floors
    slack = (slo["tau"] - ta["T"] - tb["T"]) / 2
    lam = INSTANCE["envelopes"]["u1"]["lambda"]
    ra = min_rate(1.0, lam, ta["T"], ta["kappa"], ta["eta"], ta["T"] + slack, eps_a)
    rb = min_rate(1.0, lam, tb["T"], tb["kappa"], tb["eta"], tb["T"] + slack, eps_b)
    return a["cost_slope"] * ra + b["cost_slope"] * rb, eps_a, eps_b


def main():
    eps = INSTANCE["slos"][0]["epsilon"]
    top = mp.log(eps)
    grid = [top + mp.log(mp.mpf(k) / 400) for k in range(1, 400)]
    best = min(grid, key=lambda x: cost(x)[0])
    lo, hi = best + mp.log(0.99), min(best + mp.log(1.01), top + mp.log(0.9999))
    for _ in range(100):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if cost(m1)[0] < cost(m2)[0]:
            hi = m2
        else:
            lo = m1
    c, ea, eb = cost((lo + hi) / 2)
    out = dict(INSTANCE)
    out["reference"] = {"cost": float(c), "eps_A": float(ea), "eps_B": float(eb),
                        "grid_points": len(grid)}
    path = Path(__file__).with_name("two_domain.json")
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(out["reference"])


if __name__ == "__main__":
    main()
