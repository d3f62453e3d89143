"""Federated provisioning: risk budgets, per-tenant reservations and the ADMM solve.

The decision variables for a fixed path are, per tenant ``u`` and domain ``d``,
a reserved rate ``R[d,u]`` and a violation budget ``eps[u,d]``.  A domain's
cheapest rate for a given budget is the inverse of the single-domain bound, so
the problem reduces to splitting each tenant's budget across domains.

ADMM splitting used here (all budgets in log space, ``x = ln eps``):

* domain step, private to each domain:
  ``min  c_d(sum_u r_du(x_du)) + penalty/2 * sum_u (x_du - z_ud + w_ud)^2``
  subject to the domain's own capacity.  ``r_du`` is convex and decreasing
  in ``x``, so every local problem is a one-dimensional convex search per
  tenant plus a scalar price for the shared cost/capacity.
* broker step: ``z_u = proj_{sum_d e^z <= eps_u}(x_u + w_u)``, solved with
  the Lambert W function, then ``w += x - z``.

Domains with an expensive rate push their local budget up, the projection
hands them that budget at the expense of cheaper domains: risk is bought
where reliability is expensive.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import lambertw

from .contracts import (
    ArrivalEnvelope,
    DomainOffer,
    TailRiskEnvelope,
    TailSLO,
    Violation,
)
from .errors import (
    EmptyPath,
    Infeasible,
    LocalInfeasible,
    NoPath,
    ParameterError,
)
from .snc import (
    DelayBound,
    aggregate_path,
    invert_bound_for_rate,
    log_one_minus_exp_neg,
    margin_slope,
    same_theta,
    single_domain_bound,
    tandem_bound,
)

log = logging.getLogger(__name__)

THREADS_ENV = "TRE_ASSURE_THREADS"


# -- cost curves -------------------------------------------------------------

@dataclass(frozen=True)
class LinearCost:
    slope: float

    def __call__(self, x: float) -> float:
        return self.slope * x

    def slopes_at(self, x: float) -> tuple[float, float]:
        return self.slope, self.slope


@dataclass(frozen=True)
class PiecewiseLinearCost:
    """Convex piecewise-linear cost through ``(0, 0)``.

    ``slopes[i]`` applies on ``[breakpoints[i-1], breakpoints[i])`` with an
    implicit leading breakpoint at zero; the last slope extends to infinity.
    """

    breakpoints: tuple
    slopes: tuple

    def __post_init__(self):
        bp, sl = tuple(map(float, self.breakpoints)), tuple(map(float, self.slopes))
        if len(sl) != len(bp) + 1:
            raise ParameterError("need exactly one more slope than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip((0.0,) + bp, bp)):
            raise ParameterError("breakpoints must be positive and increasing")
        if any(s2 < s1 for s1, s2 in zip(sl, sl[1:])) or sl[0] < 0:
            raise ParameterError("slopes must be non-negative and non-decreasing (convexity)")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)

    def __call__(self, x: float) -> float:
        total, prev = 0.0, 0.0
        for b, s in zip(self.breakpoints, self.slopes):
            if x <= b:
                return total + s * (x - prev)
            total += s * (b - prev)
            prev = b
        return total + self.slopes[-1] * (x - prev)

    def slopes_at(self, x: float) -> tuple[float, float]:
        for i, b in enumerate(self.breakpoints):
            if x < b:
                return self.slopes[i], self.slopes[i]
            if x == b:
                return self.slopes[i], self.slopes[i + 1]
        return self.slopes[-1], self.slopes[-1]


# -- data types --------------------------------------------------------------

@dataclass(frozen=True)
class RiskBudget:
    per_domain: dict
    total: float

    def spent(self) -> float:
        return math.fsum(self.per_domain.values())


@dataclass(frozen=True)
class Assignment:
    """What the broker asks of one domain for one tenant."""

    tenant_id: str
    epsilon: float
    tau: float
    env: ArrivalEnvelope


@dataclass(frozen=True)
class DomainResult:
    domain_id: str
    shares: dict
    log_budgets: dict
    price: float
    marginal_risk_cost: dict


@dataclass
class AdmmState:
    """Broker-held consensus (log budgets), scaled duals and residuals.

    Keys of ``consensus`` and ``duals`` are ``(tenant_id, domain_id)``.
    """

    consensus: dict
    duals: dict
    iteration: int = 0
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    tolerance: float = 1e-6
    max_iterations: int = 500
    penalty: float = 1.0

    def converged(self) -> bool:
        return self.primal_residual < self.tolerance and self.dual_residual < self.tolerance


@dataclass
class ReservationPlan:
    path: tuple
    shares: dict
    budgets: dict
    sub_deadlines: dict
    objective_cost: float
    residual_trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "path": [list(p) for p in self.path],
            "shares": [
                {"domain_id": d, "tenant_id": u, "rate": r}
                for (d, u), r in sorted(self.shares.items())
            ],
            "budgets": {
                u: {"total": b.total, "per_domain": dict(b.per_domain)}
                for u, b in sorted(self.budgets.items())
            },
            "sub_deadlines": {u: dict(v) for u, v in sorted(self.sub_deadlines.items())},
            "objective_cost": self.objective_cost,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass
class ProvisionConfig:
    tolerance: float = 1e-6
    max_iterations: int = 500
    penalty: float = 1.0
    max_stages: int = 5
    max_candidates: int = 8
    budget_weights: Sequence[float] | None = None
    deadline_weights: Sequence[float] | None = None
    # "split": per-domain deadlines sum to tau; "literal": every domain uses tau
    deadline_mode: str = "split"
    threads: int | None = None
    cost_curves: Mapping[str, object] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProvisionConfig":
        kw = dict(d)
        curves = {}
        for dom, spec in (kw.pop("cost_curves", None) or {}).items():
            curves[dom] = PiecewiseLinearCost(spec["breakpoints"], spec["slopes"])
        return cls(cost_curves=curves, **kw)


class IsolationViolation(Violation):
    pass


class CapacityViolation(Violation):
    pass


class BoundViolation(Violation):
    pass


class BudgetViolation(Violation):
    pass


# -- budget and deadline splits ----------------------------------------------

def _split_exact(total: float, weights: Sequence[float]) -> list[float]:
    """Proportional split whose float sum never exceeds ``total``; last entry absorbs rounding."""
    wsum = math.fsum(weights)
    parts = [total * w / wsum for w in weights[:-1]]
    last = total - math.fsum(parts)
    parts.append(last)
    while math.fsum(parts) > total:
        parts[-1] = math.nextafter(parts[-1], -math.inf)
    return parts


def decompose_budget(slo: TailSLO, path_tres: Sequence[TailRiskEnvelope],
                     weights: Sequence[float] | None = None) -> RiskBudget:
    """Split ``slo.epsilon`` across the path, equally unless ``weights`` are given."""
    path_tres = list(path_tres)
    if not path_tres:
        raise EmptyPath("cannot split a budget over an empty path")
    if weights is None:
        weights = [1.0] * len(path_tres)
    if len(weights) != len(path_tres) or any(not w > 0 for w in weights):
        raise ParameterError("weights must be positive, one per domain")
    parts = _split_exact(slo.epsilon, list(weights))
    return RiskBudget({t.domain_id: e for t, e in zip(path_tres, parts)}, slo.epsilon)


def sub_deadlines(tau: float, path_tres: Sequence[TailRiskEnvelope],
                  weights: Sequence[float] | None = None, mode: str = "split") -> dict:
    """Per-domain deadlines: latency floor plus a proportional share of the slack."""
    path_tres = list(path_tres)
    if mode == "literal":
        return {t.domain_id: tau for t in path_tres}
    if mode != "split":
        raise ParameterError(f"unknown deadline mode {mode!r}")
    t_sum = math.fsum(t.T for t in path_tres)
    if not tau > t_sum:
        raise Infeasible(f"deadline {tau} does not exceed path latency floor {t_sum}")
    if weights is None:
        weights = [1.0] * len(path_tres)
    slack = _split_exact(tau - t_sum, list(weights))
    out = {t.domain_id: t.T + s for t, s in zip(path_tres[:-1], slack[:-1])}
    last = path_tres[-1]
    out[last.domain_id] = tau - math.fsum(out.values())
    return out


# -- isolation and plan checks -----------------------------------------------

def _offer_map(offers) -> dict:
    if isinstance(offers, Mapping):
        return dict(offers)
    return {o.domain_id: o for o in offers}


def _path_tres(plan: ReservationPlan, offers: dict) -> dict:
    return {d: offers[d].tre_for(c) for d, c in plan.path}


def check_isolation(offers, plan: ReservationPlan, envs: Mapping[str, ArrivalEnvelope],
                    rtol: float = 1e-12) -> list[Violation]:
    """Per-tenant margin ``rho_u <= R[d,u] - kappa_d`` and per-domain capacity.

    Both inequalities are closed; ``rtol`` only absorbs floating-point rounding.
    """
    offers = _offer_map(offers)
    tres = _path_tres(plan, offers)
    out: list[Violation] = []
    totals: dict = {}
    for (d, u), r in sorted(plan.shares.items()):
        totals.setdefault(d, []).append(r)
        rho = envs[u].rho
        headroom = r - tres[d].kappa
        if rho > headroom + rtol * max(1.0, abs(r)):
            out.append(IsolationViolation(d, "rate", f"rho={rho} > R-kappa={headroom}", u))
    for d, rates in sorted(totals.items()):
        cap = offers[d].capacity
        used = math.fsum(rates)
        if used > cap * (1 + rtol):
            out.append(CapacityViolation(d, "capacity", f"reserved {used} > capacity {cap}"))
    return out


def tenant_domain_bound(plan: ReservationPlan, offers, envs: Mapping[str, ArrivalEnvelope],
                        tenant_id: str, domain_id: str) -> DelayBound:
    """Bound for one tenant in one domain, computed from its reserved share only."""
    offers = _offer_map(offers)
    tre = _path_tres(plan, offers)[domain_id]
    share = plan.shares[(domain_id, tenant_id)]
    tau = plan.sub_deadlines[tenant_id][domain_id]
    return single_domain_bound(replace(tre, R=share), envs[tenant_id], tau)


def check_plan_bounds(plan: ReservationPlan, offers, envs: Mapping[str, ArrivalEnvelope],
                      slos: Sequence[TailSLO], rtol: float = 1e-9) -> list[Violation]:
    """Re-check per-domain bounds against budgets and budgets against the SLO."""
    out: list[Violation] = []
    for slo in slos:
        u = slo.tenant_id
        budget = plan.budgets[u]
        if budget.spent() > slo.epsilon:
            out.append(BudgetViolation("", "epsilon", f"spent {budget.spent()} > {slo.epsilon}", u))
        deadlines = plan.sub_deadlines[u]
        if len(plan.path) > 1 and math.fsum(deadlines.values()) > slo.tau * (1 + 1e-12):
            out.append(BudgetViolation("", "tau", "sub-deadlines exceed the end-to-end deadline", u))
        for d, _ in plan.path:
            b = tenant_domain_bound(plan, offers, envs, u, d)
            if b.probability > budget.per_domain[d] * (1 + rtol):
                out.append(BoundViolation(d, "probability",
                                          f"bound {b.probability} > budget {budget.per_domain[d]}", u))
    return out


# -- domain step -------------------------------------------------------------

def _log_bound(theta, burst, delta, slack):
    x = theta * delta
    return theta * burst - log_one_minus_exp_neg(x) - x * slack


def _local_margin(theta, burst, slack, target, price, penalty):
    """Margin minimising ``price*Delta + penalty/2*(logbound(Delta) - target)^2``."""
    if price <= 0.0:
        return _margin_for_log_eps(theta, burst, slack, target)

    def h(delta):
        return penalty * (_log_bound(theta, burst, delta, slack) - target) \
            - price / margin_slope(theta, delta, slack)

    hi = 1.0 / theta
    while h(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise Infeasible("local margin search diverged")
    lo = hi / 2.0
    while h(lo) < 0:
        lo /= 2.0
    return brentq(h, lo, hi, xtol=1e-15, rtol=1e-14)


def _margin_for_log_eps(theta, burst, slack, target):
    """Margin with log-bound exactly ``target`` (any real target, no clamp)."""
    def f(delta):
        return _log_bound(theta, burst, delta, slack) - target
    hi = 1.0 / theta
    while f(hi) > 0:
        hi *= 2.0
    lo = hi / 2.0
    while f(lo) < 0:
        lo /= 2.0
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-14)


def domain_subproblem(offer: DomainOffer, tre: TailRiskEnvelope, assigned: Sequence[Assignment],
                      duals: Mapping[str, float] | None = None, penalty: float = 1.0,
                      cost=None) -> DomainResult:
    """Size every tenant's reserved rate in one domain.

    Without ``duals`` the assigned budgets are met exactly at the smallest
    rate.  With ``duals`` (scaled multipliers keyed by tenant) the domain also
    chooses its local budget copy, trading its private cost against the
    augmented-Lagrangian pull toward the assigned budget.  Only this domain's
    cost curve and capacity are consulted.
    """
    cost = cost or LinearCost(offer.cost_slope)
    d = offer.domain_id
    params = []
    for a in assigned:
        if not same_theta(tre.theta, a.env.theta):
            raise Infeasible(f"tenant {a.tenant_id} envelope theta differs from {d}")
        slack = a.tau - tre.T
        if not slack > 0:
            raise LocalInfeasible(d, f"sub-deadline {a.tau} not above latency floor {tre.T} in {d}")
        burst = a.env.sigma + tre.eta + tre.kappa * tre.T
        params.append((a, burst, slack))

    if duals is None:
        shares = {a.tenant_id: invert_bound_for_rate(a.env, tre.T, tre.kappa, tre.eta,
                                                     tre.theta, a.tau, a.epsilon)
                  for a in assigned}
        total = math.fsum(shares.values())
        if total > offer.capacity:
            raise LocalInfeasible(d)
        price = cost.slopes_at(total)[1]
        mrc = {}
        for a, burst, slack in params:
            delta = shares[a.tenant_id] - a.env.rho - tre.kappa
            mrc[a.tenant_id] = price / margin_slope(tre.theta, delta, slack)
        return DomainResult(d, shares, {a.tenant_id: math.log(a.epsilon) for a in assigned},
                            price, mrc)

    floor = math.fsum(a.env.rho + tre.kappa for a in assigned)
    if floor >= offer.capacity:
        raise LocalInfeasible(d, f"sustained load alone exhausts capacity of {d}")

    def solve(price):
        margins = {}
        for a, burst, slack in params:
            target = math.log(a.epsilon) - duals.get(a.tenant_id, 0.0)
            margins[a.tenant_id] = _local_margin(tre.theta, burst, slack, target, price, penalty)
        rates = {a.tenant_id: a.env.rho + tre.kappa + margins[a.tenant_id] for a, _, _ in params}
        return margins, rates

    def slopes(total):
        if total > offer.capacity:
            return math.inf, math.inf
        left, right = cost.slopes_at(total)
        return left, (math.inf if total >= offer.capacity else right)

    # find a price in the subdifferential of cost+capacity at the induced load
    p = cost.slopes_at(0.0)[1]
    margins, rates = solve(p)
    total = math.fsum(rates.values())
    left, right = slopes(total)
    if not (left <= p <= right):
        lo, hi = p, max(2.0 * p, 1.0)
        while True:
            margins, rates = solve(hi)
            left, right = slopes(math.fsum(rates.values()))
            if hi <= right:
                break
            lo, hi = hi, hi * 2.0
            if hi > 1e15:
                raise LocalInfeasible(d)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            margins, rates = solve(mid)
            left, right = slopes(math.fsum(rates.values()))
            if mid < left:
                lo = mid
            elif mid > right:
                hi = mid
            else:
                break
            if hi - lo <= 1e-13 * hi:
                break
        p = mid
        margins, rates = solve(p)
        if math.fsum(rates.values()) > offer.capacity:
            # land on the capacity face from the feasible side
            margins, rates = solve(hi)
            p = hi
    log_budgets = {}
    mrc = {}
    for a, burst, slack in params:
        m = margins[a.tenant_id]
        log_budgets[a.tenant_id] = _log_bound(tre.theta, burst, m, slack)
        mrc[a.tenant_id] = p / margin_slope(tre.theta, m, slack)
    return DomainResult(d, rates, log_budgets, p, mrc)


# -- broker step -------------------------------------------------------------

def project_log_budgets(v: np.ndarray, log_total: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{z : sum(exp(z)) <= exp(log_total)}``."""
    v = np.asarray(v, dtype=float)
    total = math.exp(log_total)
    a = np.exp(v)
    if math.fsum(a) <= total:
        return v.copy()

    # stationarity: z = v - W(lam * e^v);  e^z = W(lam e^v) / lam
    def excess(log_lam):
        lam = math.exp(log_lam)
        return math.fsum(lambertw(lam * a).real) / lam - total

    lo, hi = -50.0, 0.0
    while excess(hi) > 0:
        hi += 10.0
    while excess(lo) < 0:
        lo -= 10.0
    log_lam = brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15)
    lam = math.exp(log_lam)
    z = v - lambertw(lam * a).real
    s = math.fsum(np.exp(z))
    if s > total:
        z = z + math.log(total / s)
    # rounding can leave the sum an ulp high; step every entry down one float
    while math.fsum(np.exp(z)) > total:
        z = np.nextafter(z, -np.inf)
    return z


def broker_step(state: AdmmState, local_results: Sequence[DomainResult],
                slos: Sequence[TailSLO]) -> AdmmState:
    """Consensus update of each tenant's budget split, dual ascent and residuals.

    The projection keeps every tenant's summed budget at or below its SLO
    epsilon; when the local results already agree with the consensus the
    state is returned unchanged.
    """
    local = {}
    for res in local_results:
        for u, x in res.log_budgets.items():
            local[(u, res.domain_id)] = x

    new_z = dict(state.consensus)
    primal_sq = 0.0
    dual_sq = 0.0
    for slo in slos:
        u = slo.tenant_id
        keys = [k for k in state.consensus if k[0] == u]
        if not keys:
            continue
        v = np.array([local[k] + state.duals[k] for k in keys])
        z = project_log_budgets(v, math.log(slo.epsilon))
        for k, zk in zip(keys, z):
            new_z[k] = float(zk)
    new_w = {}
    for k, zk in new_z.items():
        r = local[k] - zk
        new_w[k] = state.duals[k] + r
        primal_sq += r * r
        dz = zk - state.consensus[k]
        dual_sq += dz * dz
    return replace(
        state,
        consensus=new_z,
        duals=new_w,
        iteration=state.iteration + 1,
        primal_residual=math.sqrt(primal_sq),
        dual_residual=state.penalty * math.sqrt(dual_sq),
    )


# -- federated solve ---------------------------------------------------------

def _thread_count(config: ProvisionConfig) -> int:
    if config.threads:
        return max(1, int(config.threads))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _admissible_candidates(stage: Sequence[DomainOffer], slos, envs, policy, cap):
    out = []
    for offer in stage:
        if not frozenset(policy) <= offer.admissible_tags:
            continue
        if not all(s.allows(offer.admissible_tags) for s in slos):
            continue
        for tre in offer.tres:
            if all(same_theta(tre.theta, envs[s.tenant_id].theta) for s in slos):
                out.append((offer, tre))
    return out[:cap]


def _exact_budget(domains, log_budgets, epsilon) -> RiskBudget:
    """Exponentiated budgets nudged down until their float sum is at most ``epsilon``."""
    vals = np.exp(np.asarray(log_budgets, dtype=float))
    while math.fsum(vals) > epsilon:
        vals = vals * (1.0 - 4 * np.finfo(float).eps)
    return RiskBudget(dict(zip(domains, map(float, vals))), epsilon)


def _solve_path(path, slos, envs, config: ProvisionConfig, pool=None) -> ReservationPlan:
    offers = [o for o, _ in path]
    tres = [t for _, t in path]
    costs = {o.domain_id: config.cost_curves.get(o.domain_id, LinearCost(o.cost_slope))
             for o in offers}
    deadlines = {s.tenant_id: sub_deadlines(s.tau, tres, config.deadline_weights,
                                            config.deadline_mode) for s in slos}
    consensus = {}
    for s in slos:
        for d, e in decompose_budget(s, tres, config.budget_weights).per_domain.items():
            consensus[(s.tenant_id, d)] = math.log(e)
    state = AdmmState(consensus=consensus, duals={k: 0.0 for k in consensus},
                      tolerance=config.tolerance, max_iterations=config.max_iterations,
                      penalty=config.penalty)

    def assignments(d):
        return [Assignment(s.tenant_id, math.exp(state.consensus[(s.tenant_id, d)]),
                           deadlines[s.tenant_id][d], envs[s.tenant_id]) for s in slos]

    def step(i):
        o, t = offers[i], tres[i]
        duals = {s.tenant_id: state.duals[(s.tenant_id, o.domain_id)] for s in slos}
        return domain_subproblem(o, t, assignments(o.domain_id), duals, config.penalty,
                                 costs[o.domain_id])

    trace = []
    # the budget split is trivial on one-domain paths
    if len(path) > 1:
        while state.iteration < state.max_iterations:
            idx = range(len(offers))
            results = list(pool.map(step, idx)) if pool else [step(i) for i in idx]
            state = broker_step(state, results, slos)
            trace.append((state.iteration, state.primal_residual, state.dual_residual))
            if state.converged():
                break
    else:
        state.primal_residual = state.dual_residual = 0.0

    shares, budgets = {}, {}
    for s in slos:
        budgets[s.tenant_id] = _exact_budget(
            [o.domain_id for o in offers],
            [state.consensus[(s.tenant_id, o.domain_id)] for o in offers], s.epsilon)
    total_cost = 0.0
    for o, t in path:
        final = [Assignment(s.tenant_id, budgets[s.tenant_id].per_domain[o.domain_id],
                            deadlines[s.tenant_id][o.domain_id], envs[s.tenant_id]) for s in slos]
        res = domain_subproblem(o, t, final, cost=costs[o.domain_id])
        for u, r in res.shares.items():
            shares[(o.domain_id, u)] = r
        total_cost += costs[o.domain_id](math.fsum(res.shares.values()))
    return ReservationPlan(
        path=tuple((t.domain_id, t.reservation_class) for t in tres),
        shares=shares,
        budgets=budgets,
        sub_deadlines=deadlines,
        objective_cost=total_cost,
        residual_trace=trace,
        converged=state.converged(),
        iterations=state.iteration,
    )


def enumerate_paths(stages: Sequence[Sequence[DomainOffer]], slos: Sequence[TailSLO],
                    envs: Mapping[str, ArrivalEnvelope], policy=(),
                    config: ProvisionConfig | None = None) -> list[tuple]:
    """All admissible (offer, tre) sequences, one per stage, with distinct domains."""
    config = config or ProvisionConfig()
    if not stages:
        raise NoPath("no stages given")
    if len(stages) > config.max_stages:
        raise ParameterError(f"{len(stages)} stages exceed the cap of {config.max_stages}")
    cands = [_admissible_candidates(st, slos, envs, policy, config.max_candidates) for st in stages]
    paths = []
    for combo in itertools.product(*cands):
        ids = [o.domain_id for o, _ in combo]
        if len(set(ids)) == len(ids):
            paths.append(combo)
    return paths


def solve_federated(stages: Sequence[Sequence[DomainOffer]], slos: Sequence[TailSLO],
                    envs: Mapping[str, ArrivalEnvelope], policy=(),
                    config: ProvisionConfig | None = None) -> ReservationPlan:
    """Cheapest verified reservation plan over every admissible path.

    Each path is solved by ADMM and then re-checked from the plan alone
    (isolation, capacity, per-domain bounds, budgets).  Raises :class:`NoPath`
    when policy admits no path and :class:`Infeasible` with a per-path report
    when none can be provisioned.
    """
    config = config or ProvisionConfig()
    slos = list(slos)
    if not slos:
        raise ParameterError("at least one SLO is required")
    paths = enumerate_paths(stages, slos, envs, policy, config)
    if not paths:
        raise NoPath("no policy-admissible path")

    report = {}
    best = None
    threads = _thread_count(config)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for path in paths:
            key = " -> ".join(f"{o.domain_id}/{t.reservation_class}" for o, t in path)
            try:
                plan = _solve_path(path, slos, envs, config, pool)
            except Infeasible as exc:
                report[key] = {"status": "infeasible", "reason": str(exc)}
                continue
            offers = {o.domain_id: o for o, _ in path}
            problems = check_isolation(offers, plan, envs) + \
                check_plan_bounds(plan, offers, envs, slos)
            if problems:
                report[key] = {"status": "rejected", "reason": [p.detail for p in problems]}
                continue
            report[key] = {"status": "feasible", "cost": plan.objective_cost,
                           "converged": plan.converged, "iterations": plan.iterations}
            log.debug("path %s cost %.6g", key, plan.objective_cost)
            if best is None or plan.objective_cost < best.objective_cost:
                best = plan
    finally:
        if pool:
            pool.shutdown()
    if best is None:
        raise Infeasible("no admissible path can be provisioned", report=report)
    return best


def end_to_end_bound(plan: ReservationPlan, offers, env: ArrivalEnvelope,
                     tenant_id: str, tau: float) -> DelayBound:
    """Composed tandem bound using the tenant's reserved shares as path rates."""
    offers = _offer_map(offers)
    tres = [replace(offers[d].tre_for(c), R=plan.shares[(d, tenant_id)]) for d, c in plan.path]
    return tandem_bound(aggregate_path(tres), env, tau)
