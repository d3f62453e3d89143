"""Load sweep with admission control, isolation under ON/OFF bursts, degradation.

Every scenario draws all randomness from one master seed.  Evaluation trials
use ``derive_trial_seed(master, t)`` for every grid point (common random
numbers across the grid); calibration runs use a separate salted stream.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import ParameterError, Unstable
from .engine import (
    OnOffAttacker,
    TandemConfig,
    derive_trial_seed,
    empirical_quantile,
    fifo_departures,
    make_rng,
    mean_stderr,
    run_tandem,
)

# reference three-domain tandem and experiment settings
MU = (1.0, 1.15, 1.25)
SHIFTS = (0.6, 0.5, 0.4)
TAU = 30.0
P_TAIL = 0.999
N_PACKETS = 6000
GUARD = 0.985
BISECT_ITERS = 18
RHO_GRID = tuple(np.round(np.linspace(0.55, 0.98, 10), 10))
B_GRID = tuple(float(b) for b in range(1, 9))
S_GRID = tuple(np.round(np.linspace(0.60, 1.0, 6), 10))
VICTIM_LOAD = 0.55
ATTACKER_MEAN = 0.12
VICTIM_SHARE = 0.85
DEGRADATION_LOAD = 0.85

_CAL_STREAM = 0xCA11B
_ATTACK_STREAM = 0xA77AC


@dataclass
class ScenarioResult:
    grid: list
    metric: list
    stderr: list
    extra: list = field(default_factory=list)

    def __post_init__(self):
        if not len(self.grid) == len(self.metric) == len(self.stderr):
            raise ParameterError("grid, metric and stderr must have equal length")


def reference_tandem(lam: float, seed: int = 0, n_packets: int = N_PACKETS) -> TandemConfig:
    return TandemConfig(MU, SHIFTS, lam, n_packets, seed)


def trial_quantiles(base: TandemConfig, n_trials: int, master_seed: int,
                    p: float = P_TAIL) -> np.ndarray:
    return np.array([
        empirical_quantile(run_tandem(replace(base, seed=derive_trial_seed(master_seed, t))).values, p)
        for t in range(n_trials)
    ])


def pooled_samples(base: TandemConfig, n_trials: int, master_seed: int) -> np.ndarray:
    return np.concatenate([
        run_tandem(replace(base, seed=derive_trial_seed(master_seed, t))).values
        for t in range(n_trials)
    ])


def calibrate_admission(base: TandemConfig, target: float, bisect_iters: int,
                        seed: int, p: float = P_TAIL) -> float:
    """Largest acceptance factor whose single calibration run meets ``target``.

    Every probe reuses ``seed``, so probes differ only in the admitted rate.
    """
    def q(alpha):
        cfg = replace(base, lam=alpha * base.lam, seed=seed)
        return empirical_quantile(run_tandem(cfg).values, p)

    if q(1.0) <= target:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        if q(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo if lo > 0 else hi * 0.5 ** bisect_iters


def sweep_load(base: TandemConfig, rho_grid: Sequence[float] = RHO_GRID, tau: float = TAU,
               guard: float = GUARD, bisect_iters: int = BISECT_ITERS, n_trials: int = 100,
               master_seed: int | None = None, p: float = P_TAIL
               ) -> tuple[ScenarioResult, ScenarioResult]:
    """Best-effort versus admission-controlled tail quantile over offered load.

    ``base`` supplies the tandem (``lam`` is ignored, ``rho * min(mu)`` is
    used).  Returns ``(best_effort, tre_managed)``; the latter logs the chosen
    ``alpha`` per point in ``extra``.
    """
    if not 0 < guard <= 1:
        raise ParameterError("guard must lie in (0, 1]")
    master = base.seed if master_seed is None else master_seed
    cal_master = derive_trial_seed(master, _CAL_STREAM)
    target = guard * tau
    be = ScenarioResult([], [], [], [])
    tre = ScenarioResult([], [], [], [])
    for i, rho in enumerate(rho_grid):
        if not 0 < rho < 1:
            raise ParameterError(f"load {rho} outside (0, 1)")
        cfg = replace(base, lam=rho * min(base.mu))
        q_be = trial_quantiles(cfg, n_trials, master, p)
        alpha = calibrate_admission(cfg, target, bisect_iters, derive_trial_seed(cal_master, i), p)
        q_tre = q_be if alpha == 1.0 else \
            trial_quantiles(replace(cfg, lam=alpha * cfg.lam), n_trials, master, p)
        m, s = mean_stderr(q_be)
        be.grid.append(float(rho)); be.metric.append(m); be.stderr.append(s)
        be.extra.append({"alpha": 1.0})
        m, s = mean_stderr(q_tre)
        tre.grid.append(float(rho)); tre.metric.append(m); tre.stderr.append(s)
        tre.extra.append({"alpha": alpha})
    return be, tre


def _victim_trial(mu, lam_v, attacker: OnOffAttacker, mode, s_v, n_packets, seed, p):
    victim_rng, service_rng, attack_rng = (
        make_rng(derive_trial_seed(seed, k)) for k in (0, 1, _ATTACK_STREAM))
    arr_v = np.cumsum(victim_rng.standard_exponential(n_packets) / lam_v)
    horizon = float(arr_v[-1])
    arr_a = attacker.arrivals(attack_rng, horizon)
    if mode == "shared":
        times = np.concatenate([arr_v, arr_a])
        is_victim = np.concatenate([np.ones(arr_v.size, bool), np.zeros(arr_a.size, bool)])
        order = np.argsort(times, kind="stable")
        times, is_victim = times[order], is_victim[order]
        dep = fifo_departures(times, service_rng.standard_exponential(times.size) / mu)
        victim = (dep - times)[is_victim]
        return empirical_quantile(victim, p), math.nan, victim
    dep_v = fifo_departures(arr_v, service_rng.standard_exponential(n_packets) / (s_v * mu))
    victim = dep_v - arr_v
    q_v = empirical_quantile(victim, p)
    q_a = math.nan
    if arr_a.size and s_v < 1:
        a_service = make_rng(derive_trial_seed(seed, 2)).standard_exponential(arr_a.size)
        dep_a = fifo_departures(arr_a, a_service / ((1 - s_v) * mu))
        q_a = empirical_quantile(dep_a - arr_a, p)
    return q_v, q_a, victim


def isolation_scenario(mu: float = min(MU), lam_v: float = VICTIM_LOAD * min(MU),
                       lam_a: float = ATTACKER_MEAN * min(MU), b_grid: Sequence[float] = B_GRID,
                       mode: str = "shared", s_v: float = VICTIM_SHARE,
                       n_packets: int = N_PACKETS, n_trials: int = 100, master_seed: int = 0,
                       p: float = P_TAIL) -> ScenarioResult:
    """Victim tail quantile against attacker burstiness, shared FIFO or reserved.

    In ``shared`` mode victim and attacker packets are merged into one FIFO
    queue of rate ``mu`` and the victim's packets are tagged; in
    ``reserved`` mode the victim owns a server of rate ``s_v * mu``.  Each
    point's ``extra["pooled_q"]`` is the quantile of all trials' victim delays
    pooled together; the per-trial mean in ``metric`` carries the downward
    small-sample bias of a 6000-packet run started empty.
    """
    if mode not in ("shared", "reserved"):
        raise ParameterError(f"unknown mode {mode!r}")
    if mode == "shared" and not lam_v < mu:
        raise Unstable(f"victim load {lam_v} >= service rate {mu}")
    if mode == "reserved" and not lam_v < s_v * mu:
        raise Unstable(f"victim load {lam_v} >= reserved rate {s_v * mu}")
    res = ScenarioResult([], [], [], [])
    for b in b_grid:
        attacker = OnOffAttacker(lam_a, float(b))
        qs, qa, pool = [], [], []
        for t in range(n_trials):
            v, a, samples = _victim_trial(mu, lam_v, attacker, mode, s_v, n_packets,
                                          derive_trial_seed(master_seed, t), p)
            qs.append(v)
            qa.append(a)
            pool.append(samples)
        m, s = mean_stderr(qs)
        res.grid.append(float(b)); res.metric.append(m); res.stderr.append(s)
        extra = {"mode": mode, "total_load": (lam_v + lam_a) / mu,
                 "pooled_q": empirical_quantile(np.concatenate(pool), p)}
        if mode == "reserved":
            extra["attacker_q"] = float(np.nanmean(qa)) if not np.all(np.isnan(qa)) else math.nan
            extra["attacker_saturated"] = lam_a >= (1 - s_v) * mu
        res.extra.append(extra)
    return res


@dataclass
class DegradationResult:
    """Inputs for marginal attribution; ``dq_only[d][i]`` is domain ``d`` at ``grid[i]``."""

    grid: list
    dq_all: list
    dq_only: list
    stderr_all: list
    saturated_all: list
    saturated_only: list
    baseline: float

    def stable_indices(self) -> list[int]:
        return [i for i, sat in enumerate(self.saturated_all) if not sat]


def degradation_scenario(base: TandemConfig, s_grid: Sequence[float] = S_GRID,
                         n_trials: int = 100, master_seed: int | None = None,
                         p: float = P_TAIL) -> DegradationResult:
    """Tail increase when all domains, or one domain, run at ``s`` times their rate.

    All variants reuse the same trial seeds, so ``s = 1`` gives exactly zero.
    Points where a degraded stage has ``lam >= s * mu`` are run anyway and
    flagged as saturated.
    """
    master = base.seed if master_seed is None else master_seed
    n_dom = len(base.mu)
    q0 = trial_quantiles(base, n_trials, master, p)
    baseline = float(q0.mean())
    out = DegradationResult([], [], [[] for _ in range(n_dom)], [], [], [[] for _ in range(n_dom)],
                            baseline)
    for s in s_grid:
        if not 0 < s <= 1:
            raise ParameterError(f"scale {s} outside (0, 1]")
        mu_all = tuple(m * s for m in base.mu)
        q_all = trial_quantiles(replace(base, mu=mu_all), n_trials, master, p)
        out.grid.append(float(s))
        out.dq_all.append(float(q_all.mean()) - baseline)
        out.stderr_all.append(mean_stderr(q_all - q0)[1])
        out.saturated_all.append(base.lam >= min(mu_all))
        for d in range(n_dom):
            mu_d = tuple(m * s if j == d else m for j, m in enumerate(base.mu))
            q_d = trial_quantiles(replace(base, mu=mu_d), n_trials, master, p)
            out.dq_only[d].append(float(q_d.mean()) - baseline)
            out.saturated_only[d].append(base.lam >= mu_d[d])
    return out


# -- CSV output --------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(header: Sequence[str], rows: Sequence[Sequence], fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def sweep_csv(be: ScenarioResult, tre: ScenarioResult) -> str:
    rows = []
    for i, rho in enumerate(be.grid):
        rows.append([rho, be.metric[i], tre.metric[i], tre.extra[i]["alpha"],
                     be.stderr[i], tre.stderr[i], tre.extra[i]["alpha"] < 1.0])
    return write_csv(["rho", "q999_best_effort", "q999_tre", "alpha", "stderr_be",
                      "stderr_tre", "admission_limited"], rows)


def isolation_csv(res: ScenarioResult) -> str:
    rows = [[b, m, s, e["pooled_q"], e["total_load"]]
            for b, m, s, e in zip(res.grid, res.metric, res.stderr, res.extra)]
    return write_csv(["b", "q999_victim", "stderr", "q999_pooled", "total_load"], rows)


def degradation_csv(res: DegradationResult) -> str:
    n_dom = len(res.dq_only)
    header = ["s", "dq_all"] + [f"dq_only_{d + 1}" for d in range(n_dom)] + \
        ["stderr_all", "saturated_all"] + [f"saturated_{d + 1}" for d in range(n_dom)]
    rows = []
    for i, s in enumerate(res.grid):
        rows.append([s, res.dq_all[i]] + [res.dq_only[d][i] for d in range(n_dom)] +
                    [res.stderr_all[i], res.saturated_all[i]] +
                    [res.saturated_only[d][i] for d in range(n_dom)])
    return write_csv(header, rows)
