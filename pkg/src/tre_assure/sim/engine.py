"""Packet-level FIFO machinery: seeds, tandem runs, quantiles, slotted validation.

FIFO departures are computed without a Python loop.  For one stage with
arrivals ``a`` and service draws ``S`` (``C = cumsum(S)``)::

    D_i = max(a_i, D_{i-1}) + S_i = C_i + max_{j <= i} (a_j - C_{j-1})

so a whole stage is one ``cumsum`` and one ``maximum.accumulate``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..contracts import TailRiskEnvelope, effective_rate_poisson
from ..errors import EmptySample, Infeasible, ParameterError
from ..snc import single_domain_bound

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    """SplitMix64 finalizer over ``master + (index + 1) * 0x9E3779B97F4A7C15 mod 2^64``.

    The pre-image is injective in ``trial_index`` (odd multiplier) and the
    finalizer is a bijection, so distinct indices give distinct seeds.
    """
    return _splitmix64((int(master_seed) + (int(trial_index) + 1) * _GOLDEN) & _MASK)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK))


@dataclass(frozen=True)
class TandemConfig:
    mu: tuple
    shifts: tuple
    lam: float
    n_packets: int = 6000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        object.__setattr__(self, "shifts", tuple(float(s) for s in self.shifts))
        if not self.mu or len(self.mu) != len(self.shifts):
            raise ParameterError("mu and shifts must be non-empty and of equal length")
        if any(not m > 0 for m in self.mu):
            raise ParameterError("service rates must be positive")
        if any(s < 0 for s in self.shifts):
            raise ParameterError("shifts must be non-negative")
        if not self.lam >= 0:
            raise ParameterError("arrival rate must be non-negative")
        if int(self.n_packets) < 1:
            raise ParameterError("n_packets must be at least 1")

    @property
    def load(self) -> float:
        return self.lam / min(self.mu)


@dataclass
class DelaySamples:
    values: np.ndarray
    per_domain: list | None = field(default=None)


def fifo_departures(arrivals: np.ndarray, service: np.ndarray) -> np.ndarray:
    """Departure times of a work-conserving FIFO single server."""
    c = np.cumsum(service)
    return c + np.maximum.accumulate(arrivals - (c - service))


def run_tandem(config: TandemConfig, keep_per_domain: bool = False) -> DelaySamples:
    """Poisson arrivals through exponential FIFO stages, each followed by its shift.

    A fixed ``(config, seed)`` always yields the same samples.  Interarrival
    times are drawn first, then one block of service times per stage, so runs
    that differ only in ``lam`` share their random numbers.
    """
    n = int(config.n_packets)
    rng = make_rng(config.seed)
    std_gaps = rng.standard_exponential(n)
    services = [rng.standard_exponential(n) / m for m in config.mu]
    per = []
    if config.lam == 0:
        # packets never meet: each sees an empty tandem
        total = np.zeros(n)
        for s, shift in zip(services, config.shifts):
            per.append(s)
            total += s + shift
        return DelaySamples(total, per if keep_per_domain else None)

    arrivals = np.cumsum(std_gaps / config.lam)
    t = arrivals
    for s, shift in zip(services, config.shifts):
        dep = fifo_departures(t, s)
        if keep_per_domain:
            per.append(dep - t)
        t = dep + shift
    return DelaySamples(t - arrivals, per if keep_per_domain else None)


def empirical_quantile(samples, p: float) -> float:
    """Nearest-rank quantile: order statistic ``ceil(p * n)`` (1-based)."""
    if not 0 < p < 1:
        raise ParameterError(f"p must lie in (0, 1), got {p}")
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise EmptySample("no samples")
    k = max(1, math.ceil(p * n - 1e-9 * p * n))
    return float(np.partition(x, k - 1)[k - 1])


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass(frozen=True)
class OnOffAttacker:
    """Alternating ON/OFF Poisson source with peak-to-mean ratio ``b``.

    ON rate ``b*lam``, OFF rate ``lam/b``; mean ON ``10*b`` and mean OFF
    ``10*b**2`` (both exponential) give ON fraction ``1/(b+1)`` and hence a
    long-run rate of exactly ``lam``.
    """

    mean_rate: float
    burstiness: float = 1.0
    base_duration: float = 10.0

    def __post_init__(self):
        if not self.mean_rate >= 0:
            raise ParameterError("mean_rate must be non-negative")
        if not self.burstiness >= 1:
            raise ParameterError("burstiness must be >= 1")

    @property
    def on_rate(self) -> float:
        return self.burstiness * self.mean_rate

    @property
    def off_rate(self) -> float:
        return self.mean_rate / self.burstiness

    @property
    def mean_on(self) -> float:
        return self.base_duration * self.burstiness

    @property
    def mean_off(self) -> float:
        return self.base_duration * self.burstiness ** 2

    @property
    def on_fraction(self) -> float:
        return self.mean_on / (self.mean_on + self.mean_off)

    def _phases(self, rng, horizon):
        """Phase start times, durations and rates covering ``[0, horizon)``."""
        starts, durs, rates = [], [], []
        t = 0.0
        on = rng.random() < self.on_fraction
        chunk = max(16, int(2 * horizon / (self.mean_on + self.mean_off)) + 16)
        while t < horizon:
            means = np.where(np.arange(chunk) % 2 == 0,
                             self.mean_on if on else self.mean_off,
                             self.mean_off if on else self.mean_on)
            d = rng.standard_exponential(chunk) * means
            r = np.where(np.arange(chunk) % 2 == 0,
                         self.on_rate if on else self.off_rate,
                         self.off_rate if on else self.on_rate)
            s = t + np.concatenate(([0.0], np.cumsum(d)[:-1]))
            starts.append(s)
            durs.append(d)
            rates.append(r)
            t = s[-1] + d[-1]
            if chunk % 2 == 1:
                on = not on
        starts = np.concatenate(starts)
        durs = np.concatenate(durs)
        rates = np.concatenate(rates)
        keep = starts < horizon
        starts, durs, rates = starts[keep], durs[keep], rates[keep]
        durs = np.minimum(durs, horizon - starts)
        return starts, durs, rates

    def arrivals(self, rng: np.random.Generator, horizon: float) -> np.ndarray:
        """Sorted arrival times on ``[0, horizon)``."""
        starts, durs, rates = self._phases(rng, horizon)
        counts = rng.poisson(rates * durs)
        offsets = rng.random(int(counts.sum()))
        base = np.repeat(starts, counts)
        span = np.repeat(durs, counts)
        return np.sort(base + offsets * span)

    def count(self, rng: np.random.Generator, horizon: float) -> int:
        starts, durs, rates = self._phases(rng, horizon)
        return int(rng.poisson(rates * durs).sum())


@dataclass(frozen=True)
class ValidationPoint:
    tau: float
    frequency: float
    stderr: float
    bound: float
    n: int

    @property
    def dominated(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.stderr


def slotted_validate(lam: float, theta: float, R: float, T: float, tau_grid: Sequence[float],
                     n_slots: int, seed: int) -> list[ValidationPoint]:
    """Empirical ``P{W > tau}`` of a slotted queue next to its contract bound.

    Each slot brings Poisson(``lam``) unit jobs; the server drains ``R`` per
    slot and adds a pure latency ``T``.  The post-service backlog ``Q_t``
    follows the reflected walk of ``a_t - R``; work arriving in slot ``t`` is
    out after ``W_t = T + Q_t / R``.  One sample is taken per arrived job.
    """
    env = effective_rate_poisson(lam, theta)
    tre = TailRiskEnvelope("slotted", "validation", theta, R, T)
    if not R - env.rho > 0:
        raise Infeasible(f"non-positive margin {R - env.rho}")
    rng = make_rng(seed)
    a = rng.poisson(lam, int(n_slots)).astype(float)
    walk = np.cumsum(a - R)
    backlog = walk - np.minimum(np.minimum.accumulate(walk), 0.0)
    delay = T + backlog / R
    weights = a
    n = float(weights.sum())
    out = []
    for tau in tau_grid:
        b = single_domain_bound(tre, env, tau).probability
        if n == 0:
            out.append(ValidationPoint(tau, 0.0, 0.0, b, 0))
            continue
        freq = float(weights[delay > tau].sum() / n)
        se = math.sqrt(freq * (1 - freq) / n)
        out.append(ValidationPoint(tau, freq, se, b, int(n)))
    return out
