"""Contract data model: tail SLOs, arrival envelopes, tail-risk envelopes.

A :class:`TailRiskEnvelope` (TRE) is what a domain publishes instead of its
internal state: a rate-latency guardrail ``(R, T)`` plus an exponential-moment
bound ``(kappa, eta)`` on the residual impairment, all valid at one tilting
parameter ``theta``.  Envelopes are signed over a fixed binary layout so that
signatures are reproducible bit-for-bit by any implementation.

Canonical layout (``canonical_serialize``)::

    b"TRE\\x01"
    then every non-signature field in ASCII-sorted name order
    (R, T, domain_id, eta, kappa, reservation_class, signer_id, theta):
      float fields  -> IEEE-754 binary64, big-endian (-0.0 written as 0.0)
      string fields -> uint32 big-endian byte length + UTF-8 bytes
"""
from __future__ import annotations

import base64
import math
import struct
from dataclasses import dataclass, fields, replace
from typing import Any, Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    MalformedKeyError,
    ParameterError,
    SerializationError,
    VerifyError,
)

MAGIC = b"TRE\x01"

_FLOAT_FIELDS = ("R", "T", "eta", "kappa", "theta")
_STR_FIELDS = ("domain_id", "reservation_class", "signer_id")
SIGNED_FIELDS = tuple(sorted(_FLOAT_FIELDS + _STR_FIELDS))

# below this theta, (e^theta - 1)/theta is evaluated by its series
_THETA_SERIES = 1e-8


@dataclass(frozen=True)
class TailSLO:
    """End-to-end tail objective ``P{W > tau} <= epsilon`` for one tenant class.

    ``quality`` and ``freshness`` are carried along untouched.
    """

    tenant_id: str
    class_id: str
    tau: float
    epsilon: float
    policy: frozenset = frozenset()
    quality: Any = None
    freshness: Any = None

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ParameterError(f"tau must be positive and finite, got {self.tau}")
        if not 0 < self.epsilon < 1:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        object.__setattr__(self, "policy", frozenset(self.policy))

    def allows(self, tags: Iterable[str]) -> bool:
        """True when every policy tag of the tenant is offered in ``tags``."""
        return self.policy <= frozenset(tags)


@dataclass(frozen=True)
class ArrivalEnvelope:
    """(sigma, rho) bound on the arrival MGF at tilting parameter theta."""

    theta: float
    rho: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not self.rho >= 0:
            raise ParameterError(f"rho must be non-negative, got {self.rho}")
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class TailRiskEnvelope:
    """Signed per-domain contract ``(R, T, kappa, eta)`` at tilting ``theta``.

    Construction does not validate: envelopes arrive from other parties and
    their defects are reported by :func:`validate_offer` rather than raised.
    """

    domain_id: str
    reservation_class: str
    theta: float
    R: float
    T: float = 0.0
    kappa: float = 0.0
    eta: float = 0.0
    signature: bytes = b""
    signer_id: str = ""

    def invariant_violations(self) -> list[tuple[str, str]]:
        out = []
        for name in _FLOAT_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                out.append((name, f"{name} must be finite, got {v!r}"))
        if out:
            return out
        if not self.theta > 0:
            out.append(("theta", f"theta must be > 0, got {self.theta}"))
        if not self.R > 0:
            out.append(("R", f"R must be > 0, got {self.R}"))
        for name in ("T", "kappa", "eta"):
            if getattr(self, name) < 0:
                out.append((name, f"{name} must be >= 0, got {getattr(self, name)}"))
        return out

    def unsigned(self) -> "TailRiskEnvelope":
        return replace(self, signature=b"")


@dataclass(frozen=True)
class DomainOffer:
    """A domain's published TRE family together with its private economics."""

    domain_id: str
    tres: tuple
    cost_slope: float
    capacity: float
    admissible_tags: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "tres", tuple(self.tres))
        object.__setattr__(self, "admissible_tags", frozenset(self.admissible_tags))

    def tre_for(self, reservation_class: str) -> TailRiskEnvelope:
        for t in self.tres:
            if t.reservation_class == reservation_class:
                return t
        raise KeyError(f"{self.domain_id!r} has no reservation class {reservation_class!r}")


# -- canonical serialization -------------------------------------------------

def _pack_float(name, v):
    try:
        v = float(v)
    except (TypeError, ValueError) as exc:
        raise SerializationError(f"{name} is not numeric: {v!r}") from exc
    if not math.isfinite(v):
        raise SerializationError(f"{name} is not finite: {v!r}")
    if v == 0.0:
        v = 0.0
    return struct.pack(">d", v)


def _pack_str(name, s):
    if not isinstance(s, str):
        raise SerializationError(f"{name} must be a string, got {type(s).__name__}")
    raw = s.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def canonical_serialize(tre: TailRiskEnvelope) -> bytes:
    """Deterministic byte layout of every non-signature field (see module doc)."""
    parts = [MAGIC]
    for name in SIGNED_FIELDS:
        v = getattr(tre, name)
        parts.append(_pack_float(name, v) if name in _FLOAT_FIELDS else _pack_str(name, v))
    return b"".join(parts)


def canonical_deserialize(data: bytes) -> TailRiskEnvelope:
    """Inverse of :func:`canonical_serialize`; the result carries no signature."""
    if not data.startswith(MAGIC):
        raise SerializationError("missing TRE magic header")
    pos = len(MAGIC)
    values = {}
    try:
        for name in SIGNED_FIELDS:
            if name in _FLOAT_FIELDS:
                (values[name],) = struct.unpack_from(">d", data, pos)
                pos += 8
            else:
                (n,) = struct.unpack_from(">I", data, pos)
                pos += 4
                chunk = data[pos:pos + n]
                if len(chunk) != n:
                    raise SerializationError("truncated string field")
                values[name] = chunk.decode("utf-8")
                pos += n
    except struct.error as exc:
        raise SerializationError("truncated TRE payload") from exc
    if pos != len(data):
        raise SerializationError("trailing bytes after TRE payload")
    return TailRiskEnvelope(**values)


# -- signatures --------------------------------------------------------------

class Ed25519Scheme:
    """Default detached signature scheme.

    Any object with the same four methods can be passed as ``scheme=`` to the
    signing helpers; keys may be given as library key objects or raw bytes.
    """

    name = "ed25519"

    def load_private(self, key):
        if isinstance(key, Ed25519PrivateKey):
            return key
        try:
            return Ed25519PrivateKey.from_private_bytes(bytes(key))
        except (TypeError, ValueError) as exc:
            raise MalformedKeyError(f"not an Ed25519 private key: {exc}") from exc

    def load_public(self, key):
        if isinstance(key, Ed25519PublicKey):
            return key
        if isinstance(key, Ed25519PrivateKey):
            raise MalformedKeyError("expected a public key, got a private key")
        try:
            return Ed25519PublicKey.from_public_bytes(bytes(key))
        except (TypeError, ValueError) as exc:
            raise MalformedKeyError(f"not an Ed25519 public key: {exc}") from exc

    def sign(self, private_key, data: bytes) -> bytes:
        return self.load_private(private_key).sign(data)

    def verify(self, public_key, data: bytes, signature: bytes) -> bool:
        pub = self.load_public(public_key)
        try:
            pub.verify(signature, data)
        except InvalidSignature:
            return False
        return True


DEFAULT_SCHEME = Ed25519Scheme()


def generate_keypair() -> tuple[bytes, bytes]:
    """Fresh raw (private, public) Ed25519 key bytes."""
    sk = Ed25519PrivateKey.generate()
    raw_sk = sk.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )
    raw_pk = sk.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return raw_sk, raw_pk


def public_key_bytes(private_key, scheme=DEFAULT_SCHEME) -> bytes:
    return scheme.load_private(private_key).public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def sign_tre(tre: TailRiskEnvelope, signing_key, signer_id: str | None = None,
             scheme=DEFAULT_SCHEME) -> TailRiskEnvelope:
    """Return a copy of ``tre`` signed over its canonical serialization.

    ``signer_id`` (when given) is set before signing, so it is covered too.
    """
    if signer_id is not None:
        tre = replace(tre, signer_id=signer_id)
    payload = canonical_serialize(tre)
    return replace(tre, signature=scheme.sign(signing_key, payload))


def verify_tre(tre: TailRiskEnvelope, public_key, scheme=DEFAULT_SCHEME) -> bool:
    if not tre.signature:
        raise VerifyError(f"TRE {tre.domain_id}/{tre.reservation_class} is unsigned")
    try:
        payload = canonical_serialize(tre)
    except SerializationError:
        return False
    return scheme.verify(public_key, payload, tre.signature)


# -- traffic envelopes -------------------------------------------------------

def effective_rate_poisson(lam: float, theta: float) -> ArrivalEnvelope:
    """Envelope of a unit-increment Poisson(lam) process at ``theta``.

    ``rho = lam (e^theta - 1) / theta`` makes the MGF bound tight; sigma = 0.
    """
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if not lam >= 0:
        raise ParameterError(f"arrival rate must be non-negative, got {lam}")
    if theta < _THETA_SERIES:
        rho = lam * (1.0 + theta / 2.0 + theta * theta / 6.0)
    else:
        rho = lam * (math.expm1(theta) / theta)
    return ArrivalEnvelope(theta=theta, rho=rho, sigma=0.0)


# -- offer validation --------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    domain_id: str
    field: str = ""
    detail: str = ""
    tenant_id: str = ""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvariantViolation(Violation):
    pass


class SignatureViolation(Violation):
    pass


def validate_offer(offer: DomainOffer, keyring: Mapping[str, Any] | None = None,
                   require_signatures: bool = True, scheme=DEFAULT_SCHEME) -> list[Violation]:
    """List every invariant or signature problem in ``offer`` (empty when clean).

    ``keyring`` maps ``signer_id`` to a public key.  With
    ``require_signatures=False`` signatures are not checked at all.
    """
    out: list[Violation] = []
    d = offer.domain_id
    if not offer.tres:
        out.append(InvariantViolation(d, "tres", "offer publishes no TRE"))
    if not (math.isfinite(offer.cost_slope) and offer.cost_slope >= 0):
        out.append(InvariantViolation(d, "cost_slope", f"got {offer.cost_slope}"))
    if not (math.isfinite(offer.capacity) and offer.capacity > 0):
        out.append(InvariantViolation(d, "capacity", f"got {offer.capacity}"))
    for t in offer.tres:
        if t.domain_id != d:
            out.append(InvariantViolation(d, "domain_id",
                                          f"TRE belongs to {t.domain_id!r}"))
        for name, msg in t.invariant_violations():
            out.append(InvariantViolation(d, name, msg))
        if math.isfinite(t.R) and t.R > offer.capacity:
            out.append(InvariantViolation(d, "capacity",
                                          f"class {t.reservation_class!r} R={t.R} exceeds capacity"))
        if not require_signatures:
            continue
        if not t.signature:
            out.append(SignatureViolation(d, "signature",
                                          f"class {t.reservation_class!r} is unsigned"))
            continue
        key = (keyring or {}).get(t.signer_id)
        if key is None:
            out.append(SignatureViolation(d, "signer_id",
                                          f"no public key for signer {t.signer_id!r}"))
            continue
        try:
            ok = verify_tre(t, key, scheme=scheme)
        except MalformedKeyError as exc:
            out.append(SignatureViolation(d, "signer_id", str(exc)))
            continue
        if not ok:
            out.append(SignatureViolation(d, "signature",
                                          f"class {t.reservation_class!r} fails verification"))
    return out


# -- JSON exchange format ----------------------------------------------------

def tre_to_dict(tre: TailRiskEnvelope) -> dict:
    d = {f.name: getattr(tre, f.name) for f in fields(tre)}
    d["signature"] = base64.b64encode(tre.signature).decode("ascii")
    return d


def tre_from_dict(d: Mapping) -> TailRiskEnvelope:
    kw = dict(d)
    sig = kw.pop("signature", "") or ""
    kw["signature"] = base64.b64decode(sig) if isinstance(sig, str) else bytes(sig)
    for name in _FLOAT_FIELDS:
        if name in kw:
            kw[name] = float(kw[name])
    return TailRiskEnvelope(**kw)


def offer_to_dict(offer: DomainOffer) -> dict:
    return {
        "domain_id": offer.domain_id,
        "tres": [tre_to_dict(t) for t in offer.tres],
        "cost_slope": offer.cost_slope,
        "capacity": offer.capacity,
        "admissible_tags": sorted(offer.admissible_tags),
    }


def offer_from_dict(d: Mapping) -> DomainOffer:
    return DomainOffer(
        domain_id=d["domain_id"],
        tres=tuple(tre_from_dict(t) for t in d.get("tres", ())),
        cost_slope=float(d.get("cost_slope", 0.0)),
        capacity=float(d["capacity"]),
        admissible_tags=frozenset(d.get("admissible_tags", ())),
    )


def slo_from_dict(d: Mapping) -> TailSLO:
    return TailSLO(
        tenant_id=str(d["tenant_id"]),
        class_id=str(d.get("class_id", "default")),
        tau=float(d["tau"]),
        epsilon=float(d["epsilon"]),
        policy=frozenset(d.get("policy", ())),
        quality=d.get("quality"),
        freshness=d.get("freshness"),
    )


def slo_to_dict(slo: TailSLO) -> dict:
    return {
        "tenant_id": slo.tenant_id,
        "class_id": slo.class_id,
        "tau": slo.tau,
        "epsilon": slo.epsilon,
        "policy": sorted(slo.policy),
        "quality": slo.quality,
        "freshness": slo.freshness,
    }


def envelope_from_dict(d: Mapping) -> ArrivalEnvelope:
    """Accepts ``{theta, rho, sigma}`` or the Poisson shorthand ``{theta, lambda}``."""
    if "lambda" in d:
        return effective_rate_poisson(float(d["lambda"]), float(d["theta"]))
    return ArrivalEnvelope(theta=float(d["theta"]), rho=float(d["rho"]),
                           sigma=float(d.get("sigma", 0.0)))


def envelope_to_dict(env: ArrivalEnvelope) -> dict:
    return {"theta": env.theta, "rho": env.rho, "sigma": env.sigma}
