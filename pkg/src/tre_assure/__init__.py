"""Tail-risk envelopes for federated multi-domain services.

Domains publish signed rate-latency contracts with an exponential-moment
impairment term; this package composes them into end-to-end delay bounds,
provisions reservations across domains, simulates the reference tandem
experiments and audits telemetry with extreme-value tail fits.
"""
__version__ = "0.1.0"

from .contracts import (
    ArrivalEnvelope,
    DomainOffer,
    TailRiskEnvelope,
    TailSLO,
    effective_rate_poisson,
    generate_keypair,
    sign_tre,
    verify_tre,
)
from .errors import TreAssureError
from .snc import (
    aggregate_path,
    feasibility_check,
    net_margin,
    single_domain_bound,
    tandem_bound,
)
from .provision import ProvisionConfig, ReservationPlan, solve_federated

__all__ = [
    "ArrivalEnvelope", "DomainOffer", "ProvisionConfig", "ReservationPlan", "TailRiskEnvelope",
    "TailSLO", "TreAssureError", "aggregate_path", "effective_rate_poisson", "feasibility_check",
    "generate_keypair", "net_margin", "sign_tre", "single_domain_bound", "solve_federated",
    "tandem_bound", "verify_tre",
]
