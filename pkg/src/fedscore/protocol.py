"""One-shot surrogate-likelihood federation for logistic regression.

Topology: the lead site fits a local MLE ``beta_bar`` and broadcasts it once;
every site answers once with its sample size, gradient and Hessian at
``beta_bar``; the lead then maximizes a second-order surrogate of the pooled
log-likelihood built from its own data plus those summaries.

Every payload crossing a site boundary is a JSON string.  Numbers are
written in fixed width so a payload's byte length depends only on the
model dimension, never on how many rows a site holds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import glm
from .errors import ConvergenceError, ProtocolError

PROTOCOL_VERSION = 1
_INT_WIDTH = 20


def _fnum(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ProtocolError("payloads may only carry finite numbers")
    if x == 0.0:
        mant, exp = " 0.0000000000000000", 0
    else:
        s = f"{x:.16e}"
        m, e = s.split("e")
        mant, exp = (m if m.startswith("-") else " " + m), int(e)
    return f"{mant}e{exp:+04d}"


def _fint(n: int) -> str:
    return f"{int(n):>{_INT_WIDTH}d}"


def _fvec(v) -> str:
    return "[" + ",".join(_fnum(x) for x in v) + "]"


def _fmat(m) -> str:
    return "[" + ",".join(_fvec(row) for row in m) + "]"


@dataclass(frozen=True)
class EncodedSite:
    """A site's training design matrix; never leaves the site object."""

    site_id: int
    X: np.ndarray
    y: np.ndarray
    encoding: glm.DesignEncoding

    @property
    def n(self) -> int:
        return int(self.X.shape[0])


@dataclass(frozen=True)
class BroadcastPacket:
    beta_bar: np.ndarray
    encoding: glm.DesignEncoding
    version: int = PROTOCOL_VERSION

    def __post_init__(self):
        b = np.asarray(self.beta_bar, dtype=np.float64)
        if b.shape != (self.encoding.width,) or not np.isfinite(b).all():
            raise ProtocolError("beta_bar must be finite and match the encoding width")
        object.__setattr__(self, "beta_bar", b)

    def to_json(self) -> str:
        enc = json.dumps(self.encoding.to_dict(), sort_keys=True, separators=(",", ":"))
        return (
            '{"version":' + _fint(self.version)
            + ',"encoding":' + enc
            + ',"beta_bar":' + _fvec(self.beta_bar) + "}"
        )

    @classmethod
    def from_json(cls, text: str) -> "BroadcastPacket":
        try:
            d = json.loads(text)
            if int(d["version"]) != PROTOCOL_VERSION:
                raise ProtocolError(f"unsupported protocol version {d['version']}")
            return cls(np.array(d["beta_bar"], dtype=np.float64),
                       glm.DesignEncoding.from_dict(d["encoding"]), int(d["version"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed broadcast packet: {exc}") from None


@dataclass(frozen=True)
class SiteMessage:
    site_id: int
    n: int
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grad, dtype=np.float64)
        H = np.asarray(self.hess, dtype=np.float64)
        p = g.shape[0]
        if g.ndim != 1 or H.shape != (p, p):
            raise ProtocolError("gradient/Hessian dimensions disagree")
        if self.n < 1:
            raise ProtocolError("site message must report n >= 1")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12:
            raise ProtocolError("Hessian is not symmetric")
        object.__setattr__(self, "grad", g)
        object.__setattr__(self, "hess", H)

    def to_json(self) -> str:
        return (
            '{"site_id":' + _fint(self.site_id)
            + ',"n":' + _fint(self.n)
            + ',"grad":' + _fvec(self.grad)
            + ',"hess":' + _fmat(self.hess) + "}"
        )

    @classmethod
    def from_json(cls, text: str) -> "SiteMessage":
        try:
            d = json.loads(text)
            return cls(int(d["site_id"]), int(d["n"]), np.array(d["grad"], dtype=np.float64),
                       np.array(d["hess"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed site message: {exc}") from None


@dataclass(frozen=True)
class AggregateGradients:
    N: int
    grad_bar: np.ndarray
    hess_bar: np.ndarray


@dataclass
class Transcript:
    """Append-only log of every serialized payload."""

    records: list[dict] = field(default_factory=list)

    def record(self, kind: str, sender: int, recipient: int | str, payload: str) -> None:
        self.records.append(
            {"kind": kind, "from": sender, "to": recipient, "bytes": len(payload.encode()), "payload": payload}
        )

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    def to_dict(self) -> dict:
        return {"format_version": 1, "records": self.records}


# --------------------------------------------------------------------------
# protocol steps


def lead_initialize(lead: EncodedSite, tol: float = 1e-8) -> BroadcastPacket:
    """Fit the lead site's MLE; it becomes the expansion point ``beta_bar``."""
    fit = glm.fit_mle(lead.X, lead.y, tol=tol)
    return BroadcastPacket(fit.beta, lead.encoding)


def remote_summarize(packet: BroadcastPacket, site: EncodedSite) -> SiteMessage:
    """Gradient and Hessian of a site's average log-likelihood at ``beta_bar``."""
    if site.encoding != packet.encoding:
        raise ProtocolError(f"site {site.site_id}: design encoding does not match the broadcast")
    g = glm.gradient(packet.beta_bar, site.X, site.y)
    H = glm.hessian(packet.beta_bar, site.X, site.y)
    return SiteMessage(site.site_id, site.n, g, H)


def aggregate(messages: Sequence[SiteMessage]) -> AggregateGradients:
    """Sample-size-weighted averages of the site gradients and Hessians."""
    if not messages:
        raise ProtocolError("no site messages to aggregate")
    ids = [m.site_id for m in messages]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate site_id among messages")
    p = messages[0].grad.shape[0]
    if any(m.grad.shape[0] != p for m in messages):
        raise ProtocolError("messages disagree on dimension")
    # fixed summation order (by site_id) keeps the result order-independent
    ordered = sorted(messages, key=lambda m: m.site_id)
    N = sum(m.n for m in ordered)
    g = np.zeros(p)
    H = np.zeros((p, p))
    for m in ordered:
        g += m.n * m.grad
        H += m.n * m.hess
    H = 0.5 * (H + H.T)
    return AggregateGradients(N, g / N, H / N)


@dataclass(frozen=True)
class Surrogate:
    """Second-order surrogate of the pooled log-likelihood around ``beta_bar``.

    ``value(b) = L1(b) + (gL - gL1)'b + 0.5 (b - bb)'(HL - HL1)(b - bb)``
    where the ``1`` terms are the lead's own and ``L`` the aggregated ones.
    """

    lead: EncodedSite
    beta_bar: np.ndarray
    grad_shift: np.ndarray
    hess_shift: np.ndarray

    @classmethod
    def build(cls, lead: EncodedSite, packet: BroadcastPacket, agg: AggregateGradients) -> "Surrogate":
        bb = packet.beta_bar
        g1 = glm.gradient(bb, lead.X, lead.y)
        H1 = glm.hessian(bb, lead.X, lead.y)
        if agg.grad_bar.shape != g1.shape:
            raise ProtocolError("aggregate dimension does not match the lead's design")
        return cls(lead, bb, agg.grad_bar - g1, agg.hess_bar - H1)

    def value(self, beta) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        d = beta - self.beta_bar
        return (
            glm.log_likelihood(beta, self.lead.X, self.lead.y)
            + float(self.grad_shift @ beta)
            + 0.5 * float(d @ self.hess_shift @ d)
        )

    def gradient(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        return (
            glm.gradient(beta, self.lead.X, self.lead.y)
            + self.grad_shift
            + self.hess_shift @ (beta - self.beta_bar)
        )

    def hessian(self, beta) -> np.ndarray:
        H = glm.hessian(beta, self.lead.X, self.lead.y) + self.hess_shift
        return 0.5 * (H + H.T)


def surrogate_loglik(beta, lead: EncodedSite, packet: BroadcastPacket, agg: AggregateGradients) -> float:
    return Surrogate.build(lead, packet, agg).value(beta)


def surrogate_gradient(beta, lead, packet, agg) -> np.ndarray:
    return Surrogate.build(lead, packet, agg).gradient(beta)


def surrogate_hessian(beta, lead, packet, agg) -> np.ndarray:
    return Surrogate.build(lead, packet, agg).hessian(beta)


def fit_global(lead: EncodedSite, packet: BroadcastPacket, agg: AggregateGradients,
               tol: float = 1e-8, max_iter: int = 100) -> glm.FitResult:
    """Maximize the surrogate by Newton's method starting at ``beta_bar``."""
    s = Surrogate.build(lead, packet, agg)
    try:
        return glm.newton_maximize(s.value, s.gradient, s.hessian, packet.beta_bar,
                                   tol=tol, max_iter=max_iter, separation_norm=None)
    except ConvergenceError as exc:
        raise ConvergenceError(f"surrogate optimization failed: {exc}") from None


# --------------------------------------------------------------------------
# in-process harness


class Site:
    """A data holder that only talks through serialized payloads."""

    def __init__(self, data: EncodedSite):
        self._data = data

    @property
    def site_id(self) -> int:
        return self._data.site_id

    @property
    def n(self) -> int:
        return self._data.n

    def handle_broadcast(self, payload: str) -> str:
        packet = BroadcastPacket.from_json(payload)
        return remote_summarize(packet, self._data).to_json()


Transport = Callable[[Site, str], str]


def in_process(site: Site, payload: str) -> str:
    return site.handle_broadcast(payload)


def run_one_shot(sites: Sequence[EncodedSite], lead_index: int = 0, tol: float = 1e-8,
                 transport: Transport = in_process, transcript: Transcript | None = None):
    """Run the full one-shot exchange; return ``(FitResult, Transcript)``.

    The transcript holds one broadcast, one reply per remote site and the
    lead's own summary (computed in place, logged for audit symmetry).
    """
    if not sites:
        raise ProtocolError("at least one site is required")
    if not 0 <= lead_index < len(sites):
        raise ProtocolError(f"lead index {lead_index} out of range")
    ids = [s.site_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate site ids")
    transcript = transcript if transcript is not None else Transcript()
    lead = sites[lead_index]
    packet = lead_initialize(lead, tol=tol)
    wire = packet.to_json()
    transcript.record("broadcast", lead.site_id, "all", wire)

    messages = []
    own = remote_summarize(packet, lead)
    transcript.record("local", lead.site_id, lead.site_id, own.to_json())
    messages.append(own)
    for s in sorted((s for s in sites if s is not lead), key=lambda s: s.site_id):
        reply = transport(Site(s), wire)
        transcript.record("reply", s.site_id, lead.site_id, reply)
        messages.append(SiteMessage.from_json(reply))

    agg = aggregate(messages)
    return fit_global(lead, packet, agg, tol=tol), transcript
