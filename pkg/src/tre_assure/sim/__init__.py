"""Packet-level Monte-Carlo of tandem FIFO domains and the reference experiments."""
from .engine import (
    DelaySamples,
    OnOffAttacker,
    TandemConfig,
    ValidationPoint,
    derive_trial_seed,
    empirical_quantile,
    fifo_departures,
    make_rng,
    mean_stderr,
    run_tandem,
    slotted_validate,
)
from .scenarios import (
    DegradationResult,
    ScenarioResult,
    degradation_scenario,
    isolation_scenario,
    sweep_load,
    reference_tandem,
)

__all__ = [
    "DegradationResult", "DelaySamples", "OnOffAttacker", "ScenarioResult", "TandemConfig",
    "ValidationPoint", "degradation_scenario", "derive_trial_seed", "empirical_quantile",
    "fifo_departures", "isolation_scenario", "make_rng", "mean_stderr", "run_tandem",
    "slotted_validate", "sweep_load", "reference_tandem",
]
