"""Delay-violation bounds from contract parameters (stochastic network calculus).

All bounds share one shape::

    P{W > tau} <= exp(theta * burst) / (1 - exp(-theta * Delta)) * exp(-theta * Delta * (tau - floor))

with ``burst = sigma + eta_sum`` and ``Delta = R_min - rho - kappa_sum``.  They
are evaluated in log space and clamped at one.  Time is slotted: one time
unit is one slot of the union bound's geometric series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .contracts import ArrivalEnvelope, TailRiskEnvelope, TailSLO
from .errors import (
    DeadlineBelowFloor,
    EmptyPath,
    Infeasible,
    NoCommonTheta,
    ParameterError,
    ThetaMismatch,
)

# theta*Delta below this uses the series of -log(1 - e^-x)
_SMALL_X = 1e-12
_THETA_RTOL = 1e-12


def same_theta(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_THETA_RTOL, abs_tol=0.0)


def log_one_minus_exp_neg(x: float) -> float:
    """``log(1 - e^{-x})`` for ``x > 0`` without cancellation."""
    if x < _SMALL_X:
        # 1 - e^-x = x (1 - x/2 + ...)
        return math.log(x) + math.log1p(-x / 2.0)
    return math.log(-math.expm1(-x))


@dataclass(frozen=True)
class Margin:
    delta: float

    @property
    def feasible(self) -> bool:
        return self.delta > 0


@dataclass(frozen=True)
class PathDescriptor:
    r_min: float
    t_sigma: float
    kappa_sigma: float
    eta_sigma: float
    theta: float
    path: tuple = ()


@dataclass(frozen=True)
class DelayBound:
    """Evaluated bound; ``log_probability`` is the unclamped natural log."""

    prefactor: float
    decay_rate: float
    latency_floor: float
    probability: float
    tau: float
    log_probability: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    lhs: float
    rhs: float
    slack: float
    margin: float
    log_inv_eps: float
    burst_term: float
    margin_term: float


def net_margin(tre: TailRiskEnvelope, env: ArrivalEnvelope) -> Margin:
    if not same_theta(tre.theta, env.theta):
        raise ThetaMismatch(f"TRE theta {tre.theta} != envelope theta {env.theta}")
    return Margin(tre.R - env.rho - tre.kappa)


def aggregate_path(tres: Sequence[TailRiskEnvelope]) -> PathDescriptor:
    """Fold a tandem of envelopes into bottleneck rate, summed latency and impairments."""
    tres = list(tres)
    if not tres:
        raise EmptyPath("cannot aggregate an empty path")
    theta = tres[0].theta
    for t in tres[1:]:
        if not same_theta(t.theta, theta):
            raise ThetaMismatch(f"path mixes theta {theta} and {t.theta}")
    return PathDescriptor(
        r_min=min(t.R for t in tres),
        t_sigma=math.fsum(t.T for t in tres),
        kappa_sigma=math.fsum(t.kappa for t in tres),
        eta_sigma=math.fsum(x for t in tres for x in (t.eta, t.kappa * t.T)),
        theta=theta,
        path=tuple((t.domain_id, t.reservation_class) for t in tres),
    )


def _bound(theta, burst, delta, floor, tau) -> DelayBound:
    if not delta > 0:
        raise Infeasible(f"non-positive net margin {delta}")
    if tau < floor:
        raise DeadlineBelowFloor(f"deadline {tau} below latency floor {floor}")
    x = theta * delta
    log_pref = theta * burst - log_one_minus_exp_neg(x)
    log_p = log_pref - x * (tau - floor)
    return DelayBound(
        prefactor=math.exp(log_pref) if log_pref < 709.0 else math.inf,
        decay_rate=x,
        latency_floor=floor,
        probability=1.0 if log_p >= 0.0 else math.exp(log_p),
        tau=tau,
        log_probability=log_p,
    )


def tandem_bound(desc: PathDescriptor, env: ArrivalEnvelope, tau: float) -> DelayBound:
    """End-to-end delay-violation bound of a composed path at deadline ``tau``."""
    if not same_theta(desc.theta, env.theta):
        raise ThetaMismatch(f"path theta {desc.theta} != envelope theta {env.theta}")
    delta = desc.r_min - env.rho - desc.kappa_sigma
    return _bound(desc.theta, env.sigma + desc.eta_sigma, delta, desc.t_sigma, tau)


def single_domain_bound(tre: TailRiskEnvelope, env: ArrivalEnvelope, tau: float) -> DelayBound:
    # routed through the one-element path so both agree bit-for-bit
    return tandem_bound(aggregate_path([tre]), env, tau)


def feasibility_check(desc: PathDescriptor, env: ArrivalEnvelope, slo: TailSLO | float,
                      epsilon: float | None = None) -> FeasibilityReport:
    """Sufficient condition for ``P{W > tau} <= epsilon`` in additive (log) form.

    ``slo`` may be a :class:`TailSLO` or a bare deadline with ``epsilon`` given.
    """
    if isinstance(slo, TailSLO):
        tau, eps = slo.tau, slo.epsilon
    else:
        tau, eps = float(slo), epsilon
    if eps is None or not 0 < eps <= 1:
        raise ParameterError(f"epsilon must lie in (0, 1], got {eps}")
    if not same_theta(desc.theta, env.theta):
        raise ThetaMismatch(f"path theta {desc.theta} != envelope theta {env.theta}")
    delta = desc.r_min - env.rho - desc.kappa_sigma
    if not delta > 0:
        raise Infeasible(f"non-positive end-to-end margin {delta}")
    if tau < desc.t_sigma:
        raise DeadlineBelowFloor(f"deadline {tau} below latency floor {desc.t_sigma}")
    th = desc.theta
    lhs = th * delta * (tau - desc.t_sigma)
    log_inv_eps = -math.log(eps)
    burst_term = th * (env.sigma + desc.eta_sigma)
    margin_term = -log_one_minus_exp_neg(th * delta)
    rhs = log_inv_eps + burst_term + margin_term
    return FeasibilityReport(
        feasible=lhs >= rhs, lhs=lhs, rhs=rhs, slack=lhs - rhs, margin=delta,
        log_inv_eps=log_inv_eps, burst_term=burst_term, margin_term=margin_term,
    )


def optimize_theta(families: Sequence[Sequence[TailRiskEnvelope] | Mapping[float, TailRiskEnvelope]],
                   env_builder: Callable[[float], ArrivalEnvelope],
                   tau: float) -> tuple[float, DelayBound]:
    """Pick the published theta shared by every domain that minimises the tandem bound.

    ``families`` holds, per domain on the path, the TREs that domain publishes
    at different theta values (a list, or a mapping keyed by theta).  Ties in
    probability go to the larger theta.
    """
    per_domain = []
    for fam in families:
        items = fam.values() if isinstance(fam, Mapping) else fam
        per_domain.append({t.theta: t for t in items})
    if not per_domain:
        raise EmptyPath("no domains given")
    common = set(per_domain[0])
    for fam in per_domain[1:]:
        common &= set(fam)
    if not common:
        raise NoCommonTheta("domains share no published theta")

    best = None
    for theta in sorted(common):
        env = env_builder(theta)
        try:
            b = tandem_bound(aggregate_path([fam[theta] for fam in per_domain]), env, tau)
        except (Infeasible, DeadlineBelowFloor):
            continue
        if best is None or b.probability <= best[1].probability:
            best = (theta, b)
    if best is None:
        raise Infeasible("every common theta has a non-positive margin or too short a deadline")
    return best


def _log_bound_of_margin(theta, burst, delta, slack):
    x = theta * delta
    return theta * burst - log_one_minus_exp_neg(x) - x * slack


def invert_margin(theta: float, burst: float, slack: float, epsilon: float,
                  tol: float = 1e-12) -> float:
    """Smallest margin ``Delta`` whose bound at deadline slack ``slack`` is ``<= epsilon``.

    The log-bound is strictly decreasing in ``Delta``; bisection keeps the
    upper end on the feasible side, so the returned margin always satisfies
    the constraint.
    """
    if not slack > 0:
        raise DeadlineBelowFloor(f"deadline slack must be positive, got {slack}")
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    target = math.log(epsilon)
    hi = 1.0 / theta
    while _log_bound_of_margin(theta, burst, hi, slack) > target:
        hi *= 2.0
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _log_bound_of_margin(theta, burst, mid, slack) > target:
            lo = mid
        else:
            hi = mid
    return hi


def invert_bound_for_rate(env: ArrivalEnvelope, T: float, kappa: float, eta: float,
                          theta: float, tau: float, epsilon: float) -> float:
    """Minimum service rate R with ``single_domain_bound <= epsilon`` at ``tau``."""
    if not same_theta(theta, env.theta):
        raise ThetaMismatch(f"TRE theta {theta} != envelope theta {env.theta}")
    if not tau > T:
        raise DeadlineBelowFloor(f"deadline {tau} must exceed latency floor {T}")
    delta = invert_margin(theta, env.sigma + eta + kappa * T, tau - T, epsilon)
    return env.rho + kappa + delta


def margin_slope(theta: float, delta: float, slack: float) -> float:
    """d(-log bound)/d(Delta) at fixed burst; positive."""
    x = theta * delta
    # d/dDelta [x*slack - log(1-e^-x)] = theta*slack + theta/(e^x - 1)
    return theta * slack + theta / math.expm1(x)
