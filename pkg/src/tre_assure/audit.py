"""Telemetry auditing: peaks-over-threshold tail fits, compliance, updates, attribution.

The generalized Pareto fit maximises the likelihood along the profile curve
of ``t = xi / beta``: for fixed ``t`` the optimal shape is
``xi(t) = mean(log1p(t * y))`` and ``beta = xi / t``, so the search is 1-D.
``xi(t)`` is increasing in ``t``, hence a range of shapes is an interval of
``t``.  Bootstrap refits start Newton's method from the point estimate.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import beta as beta_dist

from .contracts import ArrivalEnvelope, TailRiskEnvelope, TailSLO
from .errors import (
    BelowThreshold,
    DeadlineBelowFloor,
    DegenerateAttribution,
    FitError,
    Infeasible,
    InsufficientTail,
    NoUpdateNeeded,
    ParameterError,
)
from .sim.engine import derive_trial_seed, empirical_quantile, make_rng
from .snc import DelayBound, aggregate_path, tandem_bound

MIN_EXCEEDANCES = 30
N_BOOTSTRAP = 200
XI_BOUNDS = (-1.0, 1.0)
_XI_ZERO = 1e-6


@dataclass(frozen=True)
class GpdFit:
    threshold_q: float
    shape_xi: float
    scale_beta: float
    exceed_frac_zeta: float
    n_exceed: int
    ci_method: str = "percentile-bootstrap"
    xi_ci: tuple = (math.nan, math.nan)
    beta_ci: tuple = (math.nan, math.nan)
    confidence: float = 0.95
    boot_xi: np.ndarray | None = field(default=None, repr=False, compare=False)
    boot_beta: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.scale_beta > 0:
            raise FitError(f"non-positive scale {self.scale_beta}")
        if not 0 < self.exceed_frac_zeta <= 1:
            raise ParameterError(f"exceedance fraction {self.exceed_frac_zeta} outside (0, 1]")

    def with_threshold(self, q: float, zeta: float) -> "GpdFit":
        return replace(self, threshold_q=float(q), exceed_frac_zeta=float(zeta))

    def to_dict(self) -> dict:
        return {
            "threshold_q": self.threshold_q, "shape_xi": self.shape_xi,
            "scale_beta": self.scale_beta, "exceed_frac_zeta": self.exceed_frac_zeta,
            "n_exceed": self.n_exceed, "ci_method": self.ci_method,
            "xi_ci": list(self.xi_ci), "beta_ci": list(self.beta_ci),
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class RiskScore:
    value: float
    source: str = "bound"


@dataclass
class AttributionReport:
    """Per-domain tail-risk shares.

    ``per_domain_share`` holds delay increases for ``simulation-marginal``
    and risk-score changes under unit degradation for ``bound-sensitivity``.
    """

    per_domain_share: dict
    total: float
    method: str
    sensitivities: dict = field(default_factory=dict)
    one_sided: dict = field(default_factory=dict)

    def contributions(self) -> dict:
        """Signed change of the risk score attributed to each domain.

        A delay increase lowers the score, so simulation shares flip sign.
        """
        if self.method == "simulation-marginal":
            return {d: -v for d, v in self.per_domain_share.items()}
        return dict(self.per_domain_share)

    def to_dict(self) -> dict:
        out = {"method": self.method, "total": self.total,
               "per_domain_share": dict(self.per_domain_share)}
        if self.sensitivities:
            out["sensitivities"] = self.sensitivities
            out["one_sided"] = self.one_sided
        return out


@dataclass(frozen=True)
class SettlementOutcome:
    revenue_shares: dict
    penalty_shares: dict
    payment: float
    penalty: float
    revenue_undistributed: bool = False
    penalty_undistributed: bool = False

    def revenue_amounts(self) -> dict:
        return {d: f * self.payment for d, f in self.revenue_shares.items()}

    def penalty_amounts(self) -> dict:
        return {d: f * self.penalty for d, f in self.penalty_shares.items()}

    def to_dict(self) -> dict:
        return {
            "revenue_shares": self.revenue_shares, "penalty_shares": self.penalty_shares,
            "payment": self.payment, "penalty": self.penalty,
            "revenue_amounts": self.revenue_amounts(), "penalty_amounts": self.penalty_amounts(),
            "revenue_undistributed": self.revenue_undistributed,
            "penalty_undistributed": self.penalty_undistributed,
        }


@dataclass(frozen=True)
class ComplianceVerdict:
    verdict: str
    audited_quantile: float
    quantile_lower: float
    audited_probability: float
    bound_probability: float


# -- thresholds and fitting --------------------------------------------------

def select_threshold(samples, frac: float = 0.98,
                     min_exceed: int = MIN_EXCEEDANCES) -> tuple[float, float, np.ndarray]:
    """Threshold at the empirical ``frac`` quantile.

    Returns ``(q, zeta, exceedances)`` where ``exceedances = x[x > q] - q``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if not 0 < frac < 1:
        raise ParameterError(f"frac must lie in (0, 1), got {frac}")
    if x.size == 0:
        raise InsufficientTail("no samples")
    q = empirical_quantile(x, frac)
    y = x[x > q] - q
    if y.size < min_exceed:
        raise InsufficientTail(f"{y.size} exceedances above {q}, need {min_exceed}")
    return q, y.size / x.size, y


def _xi_of_t(t, y):
    return float(np.mean(np.log1p(t * y)))


def _profile_nll(t, y):
    """Negative log-likelihood maximised over the shape for fixed ``t``."""
    n = y.size
    if abs(t) * y.max() < 1e-9:
        # t -> 0 is the exponential model
        beta = float(y.mean())
        return n * math.log(beta) + n
    s = np.log1p(t * y)
    xi = float(s.mean())
    beta = xi / t
    if not beta > 0:
        return math.inf
    return n * math.log(beta) + (1.0 + 1.0 / xi) * float(s.sum()) if abs(xi) > 1e-12 \
        else n * math.log(beta) + n


def _params_of_t(t, y):
    if abs(t) * y.max() < 1e-9:
        return 0.0, float(y.mean())
    xi = _xi_of_t(t, y)
    return xi, xi / t


def _t_interval(y, xi_bounds):
    """Interval of ``t`` whose ``xi(t)`` lies in ``xi_bounds``."""
    lo_xi, hi_xi = xi_bounds
    ymax = float(y.max())
    t_floor = -1.0 / ymax
    # xi(t) -> -inf at t_floor; step inward until xi(t) >= lo_xi
    def g_lo(t):
        return _xi_of_t(t, y) - lo_xi

    a = t_floor * (1 - 1e-12)
    if g_lo(a) >= 0:
        t_lo = a
    else:
        b = 0.0 if lo_xi < 0 else 1.0 / ymax
        while g_lo(b) < 0:
            b = 2 * b + 1.0 / ymax
        t_lo = brentq(g_lo, a, b, xtol=1e-14 / ymax, rtol=1e-12)

    def g_hi(t):
        return _xi_of_t(t, y) - hi_xi

    b = 1.0 / ymax
    while g_hi(b) < 0:
        b *= 4.0
        if b > 1e300:
            raise FitError("cannot bracket the upper shape bound")
    t_hi = brentq(g_hi, t_lo, b, xtol=1e-14 / ymax, rtol=1e-12)
    return t_lo, t_hi


def _mle(y, xi_bounds):
    t_lo, t_hi = _t_interval(y, xi_bounds)
    res = minimize_scalar(_profile_nll, bounds=(t_lo, t_hi), args=(y,), method="bounded",
                          options={"xatol": 1e-10 * max(abs(t_lo), abs(t_hi))})
    if not np.isfinite(res.fun):
        raise FitError("profile likelihood is not finite on the search interval")
    # the bounded search never evaluates the end points themselves
    best_t, best_f = res.x, res.fun
    for t in (t_lo, t_hi):
        f = _profile_nll(t, y)
        if f < best_f:
            best_t, best_f = t, f
    return best_t


def _newton_mle(y, t0, t_lo, t_hi, iters=25):
    """Newton steps on the profile likelihood from ``t0``; None when it leaves the interval."""
    n = y.size
    scale = float(y.mean())
    t = t0
    for _ in range(iters):
        u = 1.0 + t * y
        if np.any(u <= 0):
            return None
        r = y / u
        s = float(np.log(u).sum())
        s1 = float(r.sum())
        s2 = -float((r * r).sum())
        # nll(t) = n log(s / (n t)) + s + n  (profile in t, xi = s / n)
        if abs(t) < 1e-12 or abs(s) < 1e-300:
            return None
        g = n * (s1 / s - 1.0 / t) + s1
        h = n * (s2 / s - (s1 / s) ** 2 + 1.0 / t ** 2) + s2
        if not h > 0:
            return None
        step = g / h
        t_new = t - step
        if not t_lo < t_new < t_hi:
            return None
        if abs(step) * scale <= 1e-12:
            return t_new
        t = t_new
    return t


def _pwm(y):
    """Probability-weighted-moment estimates (Hosking and Wallis)."""
    ys = np.sort(y)
    n = ys.size
    p = (np.arange(1, n + 1) - 0.35) / n
    a0 = float(ys.mean())
    a1 = float(np.mean((1 - p) * ys))
    denom = a0 - 2 * a1
    if not denom > 0:
        raise FitError("probability-weighted moments are degenerate")
    return 2.0 - a0 / denom, 2.0 * a0 * a1 / denom


def _point_estimate(y, method, xi_bounds):
    if method == "pwm":
        return _pwm(y)
    t = _mle(y, xi_bounds)
    return _params_of_t(t, y)


def fit_gpd(exceedances, n_bootstrap: int = N_BOOTSTRAP, confidence: float = 0.95,
            seed: int = 0, method: str = "mle", xi_bounds: tuple = XI_BOUNDS,
            min_exceed: int = MIN_EXCEEDANCES, threshold_q: float = 0.0,
            exceed_frac_zeta: float = 1.0) -> GpdFit:
    """Generalized Pareto fit of positive exceedances with bootstrap intervals.

    ``method`` is ``"mle"`` (profile likelihood) or ``"pwm"`` (moments, for
    small samples).  ``threshold_q`` and ``exceed_frac_zeta`` are carried
    into the fit so it can produce quantiles of the original variable.
    """
    y = np.asarray(exceedances, dtype=float).ravel()
    if y.size < min_exceed:
        raise InsufficientTail(f"{y.size} exceedances, need {min_exceed}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ParameterError("exceedances must be finite and positive")
    if method not in ("mle", "pwm"):
        raise ParameterError(f"unknown method {method!r}")
    if y.max() == y.min():
        raise FitError("exceedances have zero spread")
    xi, beta = _point_estimate(y, method, xi_bounds)
    if not beta > 0:
        raise FitError(f"fit produced non-positive scale {beta}")

    boot_xi = np.full(n_bootstrap, np.nan)
    boot_beta = np.full(n_bootstrap, np.nan)
    t_hat = xi / beta
    for b in range(n_bootstrap):
        rng = make_rng(derive_trial_seed(seed, b))
        yb = y[rng.integers(0, y.size, y.size)]
        if yb.max() == yb.min():
            continue
        if method == "pwm":
            boot_xi[b], boot_beta[b] = _pwm(yb)
            continue
        t = None
        if abs(t_hat) * yb.max() > 1e-6:
            t = _newton_mle(yb, t_hat, -1.0 / yb.max(), math.inf)
        if t is not None:
            xb, bb = _params_of_t(t, yb)
            if not xi_bounds[0] <= xb <= xi_bounds[1]:
                t = None
        if t is None:
            xb, bb = _params_of_t(_mle(yb, xi_bounds), yb)
        boot_xi[b], boot_beta[b] = xb, bb
    ok = np.isfinite(boot_xi)
    a = (1.0 - confidence) / 2.0
    if ok.sum() >= 2:
        xi_ci = tuple(float(v) for v in np.quantile(boot_xi[ok], [a, 1 - a]))
        beta_ci = tuple(float(v) for v in np.quantile(boot_beta[ok], [a, 1 - a]))
    else:
        xi_ci = beta_ci = (math.nan, math.nan)
    return GpdFit(float(threshold_q), float(xi), float(beta), float(exceed_frac_zeta), int(y.size),
                  f"percentile-bootstrap/{method}", xi_ci, beta_ci, confidence,
                  boot_xi[ok], boot_beta[ok])


def fit_tail(samples, frac: float = 0.98, **kwargs) -> GpdFit:
    """Threshold selection followed by :func:`fit_gpd` on the exceedances."""
    q, zeta, y = select_threshold(samples, frac, kwargs.get("min_exceed", MIN_EXCEEDANCES))
    return fit_gpd(y, threshold_q=q, exceed_frac_zeta=zeta, **kwargs)


# -- tail formulas -----------------------------------------------------------

def _quantile(q, xi, beta, zeta, p):
    r = (1.0 - p) / zeta
    if abs(xi) < _XI_ZERO:
        return q - beta * math.log(r)
    return q + beta / xi * math.expm1(-xi * math.log(r))


def gpd_quantile(fit: GpdFit, p: float) -> float:
    """Extreme quantile ``Q_p`` above the threshold."""
    if not p < 1:
        raise ParameterError(f"p must be < 1, got {p}")
    if not p > 1.0 - fit.exceed_frac_zeta:
        raise BelowThreshold(f"p={p} is not above the threshold level {1 - fit.exceed_frac_zeta}")
    return _quantile(fit.threshold_q, fit.shape_xi, fit.scale_beta, fit.exceed_frac_zeta, p)


def _tail_prob(q, xi, beta, zeta, tau):
    z = (tau - q) / beta
    if abs(xi) < _XI_ZERO:
        return zeta * math.exp(-z)
    base = 1.0 + xi * z
    if base <= 0:
        return 0.0
    return zeta * math.exp(-math.log(base) / xi)


def tail_probability(fit: GpdFit, tau: float) -> float:
    """``P{L > tau}`` from the fitted tail, valid for ``tau > q``."""
    if not tau > fit.threshold_q:
        raise BelowThreshold(f"deadline {tau} not above threshold {fit.threshold_q}")
    return _tail_prob(fit.threshold_q, fit.shape_xi, fit.scale_beta, fit.exceed_frac_zeta, tau)


def gpd_cdf(fit: GpdFit, x: float) -> float:
    """Model CDF of the original variable above the threshold."""
    return 1.0 - tail_probability(fit, x)


def _boot_values(fit, fn):
    if fit.boot_xi is None or fit.boot_xi.size < 2:
        return None
    return np.array([fn(x, b) for x, b in zip(fit.boot_xi, fit.boot_beta)])


def tail_probability_ci(fit: GpdFit, tau: float, confidence: float | None = None) -> tuple:
    """``(lower, point, upper)`` of ``P{L > tau}`` from the bootstrap draws."""
    point = tail_probability(fit, tau)
    c = fit.confidence if confidence is None else confidence
    v = _boot_values(fit, lambda x, b: _tail_prob(fit.threshold_q, x, b, fit.exceed_frac_zeta, tau))
    if v is None:
        return point, point, point
    lo, hi = np.quantile(v, [(1 - c) / 2, 1 - (1 - c) / 2])
    return float(lo), point, float(hi)


def gpd_quantile_ci(fit: GpdFit, p: float, confidence: float | None = None) -> tuple:
    """``(lower, point, upper)`` of ``Q_p`` from the bootstrap draws."""
    point = gpd_quantile(fit, p)
    c = fit.confidence if confidence is None else confidence
    v = _boot_values(fit, lambda x, b: _quantile(fit.threshold_q, x, b, fit.exceed_frac_zeta, p))
    if v is None:
        return point, point, point
    lo, hi = np.quantile(v, [(1 - c) / 2, 1 - (1 - c) / 2])
    return float(lo), point, float(hi)


# -- compliance and updates --------------------------------------------------

def compliance_check(fit: GpdFit, slo: TailSLO, bound: DelayBound | float) -> ComplianceVerdict:
    """Classify an audit as ``compliant``, ``tail-regression`` or ``breach``."""
    p_bound = bound.probability if isinstance(bound, DelayBound) else float(bound)
    q_lo, q_hat, _ = gpd_quantile_ci(fit, 1.0 - slo.epsilon)
    if q_lo > slo.tau:
        return ComplianceVerdict("breach", q_hat, q_lo, math.nan, p_bound)
    p_hat = tail_probability(fit, slo.tau) if slo.tau > fit.threshold_q else fit.exceed_frac_zeta
    verdict = "tail-regression" if p_hat > p_bound else "compliant"
    return ComplianceVerdict(verdict, q_hat, q_lo, p_hat, p_bound)


def update_tre(tre: TailRiskEnvelope, p_audit: float, p_bound: float,
               consecutive_regressions: int = 1, persistence: int = 3,
               kappa_step: float = 0.0) -> TailRiskEnvelope:
    """Raise ``eta`` so the contract bound covers the audited probability.

    ``p_audit`` should be the upper confidence limit of the audited
    violation probability.  ``kappa`` grows by ``kappa_step`` once
    ``consecutive_regressions`` reaches ``persistence``.  The result is
    unsigned and must be re-signed by its domain.
    """
    if not 0 < p_bound < 1:
        raise ParameterError(f"bound probability must lie in (0, 1), got {p_bound}")
    if not 0 < p_audit <= 1:
        raise ParameterError(f"audited probability must lie in (0, 1], got {p_audit}")
    if not p_audit > p_bound:
        raise NoUpdateNeeded(tre)
    shift = math.log(p_audit / p_bound)
    # pad by a few rounding errors of the bound's log so recomputation stays above p_audit
    pad = 16.0 * 2.0 ** -52 * (1.0 + abs(math.log(p_bound)))
    eta = tre.eta + (shift + pad) / tre.theta
    kappa = tre.kappa
    if kappa_step > 0 and consecutive_regressions >= persistence:
        kappa += kappa_step
    return replace(tre, eta=eta, kappa=kappa, signature=b"", signer_id="")


def risk_score(probability: float, source: str = "bound") -> RiskScore:
    if not 0 < probability <= 1:
        raise ParameterError(f"probability must lie in (0, 1], got {probability}")
    return RiskScore(-math.log(probability), source)


# -- attribution and settlement ----------------------------------------------

_PARAMS = ("R", "T", "kappa", "eta")
# sign of a unit degradation for each parameter
_DEGRADE = {"R": -1.0, "T": 1.0, "kappa": 1.0, "eta": 1.0}


def _score(tres, env, tau):
    return -tandem_bound(aggregate_path(tres), env, tau).log_probability


def _try_score(tres, env, tau):
    try:
        return _score(tres, env, tau)
    except (Infeasible, DeadlineBelowFloor):
        return None


def _derivative(make, v, delta, shrink_steps=12):
    """Central difference of ``make(x)`` at ``v``; falls back to one side.

    When neither side is feasible the step shrinks tenfold, up to
    ``shrink_steps`` times; such results are flagged one-sided too.
    """
    h = delta * abs(v) if v != 0 else delta
    up = make(v + h)
    down = make(v - h) if v - h >= 0 else None
    if up is not None and down is not None:
        return (up - down) / (2 * h), False
    base = make(v)
    for _ in range(shrink_steps + 1):
        if up is not None:
            return (up - base) / h, True
        if down is not None:
            return (base - down) / h, True
        h /= 10.0
        up = make(v + h)
        down = make(v - h) if v - h >= 0 else None
    raise Infeasible("no finite difference is feasible at this point")


def attribute_bound_sensitivity(path_tres: Sequence[TailRiskEnvelope], env: ArrivalEnvelope,
                                tau: float, delta: float = 1e-4,
                                degradation: float = 0.01) -> AttributionReport:
    """Sensitivity of the risk score ``-log P`` to each domain's contract parameters.

    The score uses the unclamped log of the composed bound.  R-sensitivity
    goes to the bottleneck, split equally among domains tied at the minimum.
    Each domain's share is the score change under a ``degradation``
    relative worsening of all four of its parameters.
    """
    tres = list(path_tres)
    _score(tres, env, tau)  # raises if the composed bound is infeasible
    r_min = min(t.R for t in tres)
    tied = [i for i, t in enumerate(tres) if abs(t.R - r_min) <= 1e-12 * r_min]
    ids = [t.domain_id for t in tres]
    if len(set(ids)) != len(ids):
        raise ParameterError("domain ids on a path must be distinct")

    def with_r_min(r):
        if r <= 0:
            return None
        return _try_score([replace(t, R=r) if i in tied else t for i, t in enumerate(tres)], env, tau)

    d_rmin, r_one = _derivative(with_r_min, r_min, delta)
    sens, flags, shares = {}, {}, {}
    for i, t in enumerate(tres):
        s = {"R": d_rmin / len(tied) if i in tied else 0.0}
        f = {"R": r_one if i in tied else False}
        for name in ("T", "kappa", "eta"):
            def make(x, i=i, name=name):
                return _try_score([replace(u, **{name: x}) if j == i else u
                                   for j, u in enumerate(tres)], env, tau)
            s[name], f[name] = _derivative(make, getattr(t, name), delta)
        sens[t.domain_id] = s
        flags[t.domain_id] = f
        shares[t.domain_id] = math.fsum(_DEGRADE[k] * s[k] * abs(getattr(t, k)) * degradation
                                        for k in _PARAMS)
    return AttributionReport(shares, math.fsum(shares.values()), "bound-sensitivity", sens, flags)


def attribute_simulation(dq_all: float, dq_only: Mapping[str, float] | Sequence[float]
                         ) -> AttributionReport:
    """Split ``dq_all`` in proportion to single-domain degradations.

    The smallest share absorbs rounding so the shares add up to ``dq_all``
    exactly under ``math.fsum``.
    """
    if isinstance(dq_only, Mapping):
        keys, vals = list(dq_only), [float(v) for v in dq_only.values()]
    else:
        vals = [float(v) for v in dq_only]
        keys = [str(i + 1) for i in range(len(vals))]
    if not vals:
        raise ParameterError("no domains to attribute")
    if not all(math.isfinite(v) for v in vals) or not math.isfinite(dq_all):
        raise ParameterError("degradation inputs must be finite")
    total_only = math.fsum(vals)
    if total_only == 0:
        if dq_all != 0:
            raise DegenerateAttribution("single-domain effects sum to zero")
        return AttributionReport({k: 0.0 for k in keys}, 0.0, "simulation-marginal")
    shares = [v / total_only * dq_all for v in vals]
    if dq_all != 0:
        # Others go onto the ulp grid of dq_all; the remainder is then exact
        # whenever the absorbing share is below 2 * |dq_all|, which always
        # holds when all inputs share a sign.
        j = min(range(len(shares)), key=lambda i: abs(shares[i]))
        g = math.ulp(dq_all)
        shares = [x if i == j else round(x / g) * g for i, x in enumerate(shares)]
        shares[j] = dq_all - math.fsum(shares[:j] + shares[j + 1:])
        for _ in range(64):
            s = math.fsum(shares)
            if s == dq_all:
                break
            shares[j] = math.nextafter(shares[j], math.inf if s < dq_all else -math.inf)
    return AttributionReport(dict(zip(keys, shares)), float(dq_all), "simulation-marginal")


def settle(report: AttributionReport, payment: float, penalty: float) -> SettlementOutcome:
    """Revenue to domains that raise the risk score, penalties to those that lower it."""
    contrib = report.contributions()
    if not contrib:
        raise ParameterError("empty attribution report")
    pos = {d: max(v, 0.0) for d, v in contrib.items()}
    neg = {d: max(-v, 0.0) for d, v in contrib.items()}
    sp, sn = math.fsum(pos.values()), math.fsum(neg.values())
    rev = {d: (v / sp if sp > 0 else 0.0) for d, v in pos.items()}
    pen = {d: (v / sn if sn > 0 else 0.0) for d, v in neg.items()}
    return SettlementOutcome(rev, pen, float(payment), float(penalty), sp == 0, sn == 0)


# -- telemetry and reports ---------------------------------------------------

def load_telemetry(source) -> np.ndarray:
    """Delays from a CSV file or text: one value per line, or a column named ``delay``.

    Non-numeric header lines are skipped.
    """
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = source if isinstance(source, str) else source.read()
    rows = list(csv.reader(io.StringIO(text)))
    col = 0
    values = []
    for row in rows:
        if not row or not row[0].strip():
            continue
        try:
            values.append(float(row[col]))
        except (ValueError, IndexError):
            if not values and "delay" in [c.strip() for c in row]:
                col = [c.strip() for c in row].index("delay")
            elif values:
                raise ParameterError(f"non-numeric telemetry row {row!r}")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InsufficientTail("telemetry holds no samples")
    return arr


def empirical_exceedance_ci(samples, tau: float, confidence: float = 0.95) -> tuple:
    """``(lower, point, upper)`` Clopper-Pearson interval of ``P{L > tau}``."""
    x = np.asarray(samples, dtype=float).ravel()
    n, k = x.size, int(np.count_nonzero(x > tau))
    a = (1.0 - confidence) / 2.0
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a, k + 1, n - k))
    return lo, k / n, hi


def audit_report(samples, slo: TailSLO, bound: DelayBound,
                 path_tres: Sequence[TailRiskEnvelope] = (), frac: float = 0.98,
                 n_bootstrap: int = N_BOOTSTRAP, confidence: float = 0.95, seed: int = 0,
                 attribution: AttributionReport | None = None,
                 payment: float = 0.0, penalty: float = 0.0) -> dict:
    """Fit, verdict, TRE update, attribution and settlement as one JSON-ready dict.

    When the audited probability's upper limit exceeds the bound, the whole
    ``eta`` increase goes to one domain: the largest penalty share under
    ``attribution``, or the bottleneck when there is none.
    """
    fit = fit_tail(samples, frac, n_bootstrap=n_bootstrap, confidence=confidence, seed=seed)
    verdict = compliance_check(fit, slo, bound)
    if slo.tau > fit.threshold_q:
        p_lo, p_hat, p_up = tail_probability_ci(fit, slo.tau, confidence)
        p_source = "gpd"
    else:
        p_lo, p_hat, p_up = empirical_exceedance_ci(samples, slo.tau, confidence)
        p_source = "empirical"
    out = {
        "fit": fit.to_dict(),
        "verdict": verdict.verdict,
        "audited_quantile": verdict.audited_quantile,
        "audited_quantile_lower": verdict.quantile_lower,
        "audited_probability": {"lower": p_lo, "point": p_hat, "upper": p_up,
                                "source": p_source},
        "bound_probability": bound.probability,
        "audit_risk_score": risk_score(p_hat, "audit").value if p_hat > 0 else None,
        "bound_risk_score": risk_score(bound.probability).value,
        "updated_tres": [],
    }
    settlement = settle(attribution, payment, penalty) if attribution is not None else None
    tres = list(path_tres)
    if tres and 0 < bound.probability < 1 and min(p_up, 1.0) > bound.probability:
        if settlement is not None and not settlement.penalty_undistributed:
            target = max(settlement.penalty_shares, key=settlement.penalty_shares.get)
        else:
            target = min(tres, key=lambda t: t.R).domain_id
        for t in tres:
            if t.domain_id == target:
                new = update_tre(t, min(p_up, 1.0), bound.probability)
                out["updated_tres"].append({"domain_id": t.domain_id,
                                            "reservation_class": t.reservation_class,
                                            "eta": new.eta, "kappa": new.kappa, "signed": False})
    if attribution is not None:
        out["attribution"] = attribution.to_dict()
        out["settlement"] = settlement.to_dict()
    return out
