"""
Parametric arrival and service curves of a single node and their
closed-form delay bounds.

Every bound here is the horizontal deviation between the flow's arrival
curve (:func:`curve_of`) and the rate-latency service curve
(:func:`service_curve`); the closed forms avoid the numerical search and
report their terms separately so the effect of each correction is visible.

Units: seconds, bits, bits/second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from . import curves
from .curves import Curve
from .errors import (
    DegenerateFlowError,
    DomainError,
    InfeasibleSourceError,
    PreconditionError,
    UnboundedDelayError,
)

__all__ = [
    "RateLatencyServer",
    "TokenBucketFlow",
    "FourTupleFlow",
    "PeriodicStaircaseFlow",
    "RealSourceFlow",
    "DelayBound",
    "ideal_delay",
    "token_bucket_bound",
    "model_a_bound",
    "model_b_bound",
    "model_c_bound",
    "real_source_from_load",
    "curve_of",
    "service_curve",
    "all_bounds",
]

_REL = 1e-9


def _require(cond: bool, exc, msg: str):
    if not cond:
        raise exc(msg)


@dataclass(frozen=True)
class RateLatencyServer:
    """Server guaranteeing ``R * max(0, t - e)``; ``C`` is the nominal rate."""

    R: float
    e: float
    C: float = math.inf

    def __post_init__(self):
        _require(self.R > 0, DomainError, "service rate R must be positive")
        _require(self.e >= 0, DomainError, "error term e must be non-negative")
        _require(self.R <= self.C * (1 + _REL), DomainError,
                 "service rate R cannot exceed the nominal rate C")


@dataclass(frozen=True)
class TokenBucketFlow:
    r: float
    b: float

    def __post_init__(self):
        _require(self.r > 0, DomainError, "rate r must be positive")
        _require(self.b >= 0, DomainError, "burst b must be non-negative")


@dataclass(frozen=True)
class FourTupleFlow:
    """Token bucket ``(r, b)`` seen through a link of speed ``p`` carrying
    packets of ``l`` bits."""

    p: float
    l: float
    r: float
    b: float

    def __post_init__(self):
        _require(self.r > 0 and self.l > 0, DomainError, "r and l must be positive")
        _require(self.p >= self.r, DomainError, "link speed p must be at least r")
        _require(self.b >= self.l, DomainError, "burst b must hold at least one packet")


@dataclass(frozen=True)
class PeriodicStaircaseFlow:
    """``b`` bits every ``T`` seconds over a link of speed ``p``."""

    T: float
    b: float
    p: float
    l: float

    def __post_init__(self):
        _require(self.T > 0 and self.l > 0, DomainError, "T and l must be positive")
        _require(self.b >= self.l, DomainError, "burst b must hold at least one packet")
        _require(self.p * self.T >= self.b * (1 - _REL), DomainError,
                 "link speed p cannot carry b bits per period")


@dataclass(frozen=True)
class RealSourceFlow:
    """Bursts of ``n`` packets spaced ``tau`` apart, one burst every ``T_p``.

    ``tau = l / r_p`` is the spacing imposed by the sending device and
    ``delta`` the gap between the last packet of a burst and the first of
    the next.  The arrival curve is the minimum of ``r1 t + b1`` and
    ``r2 t + b2``.
    """

    l: float
    n: int
    tau: float
    T_p: float
    delta: float
    r_p: float
    load: float
    C: float

    def __post_init__(self):
        _require(self.l > 0 and self.n >= 1, DomainError, "need l > 0 and n >= 1")
        _require(self.r_p > 0 and self.C > 0, DomainError, "rates must be positive")
        _require(math.isclose(self.tau, self.l / self.r_p, rel_tol=_REL),
                 DomainError, "tau must equal l / r_p")
        _require(math.isclose(self.T_p, (self.n - 1) * self.tau + self.delta,
                              rel_tol=_REL), DomainError,
                 "T_p must equal (n - 1) tau + delta")
        _require(math.isclose(self.n * self.l / self.T_p, self.load * self.C,
                              rel_tol=_REL), DomainError,
                 "n l / T_p must equal load * C")
        _require(self.delta > 0, InfeasibleSourceError,
                 "inter-burst gap delta must be positive")

    @property
    def r1(self) -> float:
        return self.l / self.tau

    @property
    def b1(self) -> float:
        return self.l

    @property
    def r2(self) -> float:
        return self.n * self.l / self.T_p

    @property
    def b2(self) -> float:
        return self.n * self.l - self.r2 * self.tau * (self.n - 1)

    @property
    def kink_t(self) -> float:
        return (self.n - 1) * self.tau

    @property
    def kink_value(self) -> float:
        return self.n * self.l


Flow = Union[TokenBucketFlow, FourTupleFlow, PeriodicStaircaseFlow, RealSourceFlow]


@dataclass(frozen=True)
class DelayBound:
    """A delay bound and its signed terms; ``value == sum(components)``.

    ``details`` carries non-additive information such as the kink witness.
    """

    model: str
    value: float
    components: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _bound(model, details=None, **components) -> DelayBound:
    return DelayBound(model, sum(components.values()), components, details or {})


def real_source_from_load(l: float, n: int, load: float, C: float,
                          r_p: float) -> RealSourceFlow:
    """Source timing that offers ``load * C`` with ``n``-packet bursts.

    Raises :class:`InfeasibleSourceError` when the bursts do not fit in the
    period or the offered rate exceeds the device rate ``r_p``.

    >>> f = real_source_from_load(2048, 3, 0.5, 1e9, 0.96e9)
    >>> round(f.T_p * 1e6, 4), round(f.tau * 1e6, 4), round(f.delta * 1e6, 4)
    (12.288, 2.1333, 8.0213)
    """
    _require(0 < load <= 1, DomainError, "load must lie in (0, 1]")
    _require(n >= 1 and l > 0, DomainError, "need n >= 1 and l > 0")
    _require(C > 0 and r_p > 0, DomainError, "rates must be positive")
    tau = l / r_p
    T_p = n * l / (load * C)
    delta = T_p - (n - 1) * tau
    if not delta > T_p * _REL:
        raise InfeasibleSourceError(
            f"load {load} is too high for {n}-packet bursts spaced {tau!r} s apart"
        )
    if load * C > r_p * (1 + _REL):
        raise InfeasibleSourceError(
            f"offered rate {load * C!r} exceeds the sending device rate {r_p!r}")
    return RealSourceFlow(l, int(n), tau, T_p, delta, r_p, load, C)


# -- bounds -----------------------------------------------------------------------


def ideal_delay(l: float, C: float) -> DelayBound:
    """Transmission time of one packet at the nominal rate."""
    _require(l > 0 and C > 0, DomainError, "l and C must be positive")
    return _bound("ideal", base=l / C)


def token_bucket_bound(flow: TokenBucketFlow, server: RateLatencyServer) -> DelayBound:
    if flow.r > server.R:
        raise UnboundedDelayError(f"flow rate {flow.r!r} exceeds service rate {server.R!r}")
    return _bound("token_bucket", base=flow.b / server.R, error=server.e)


def model_a_bound(flow: FourTupleFlow, server: RateLatencyServer) -> DelayBound:
    """Token-bucket bound minus the link-speed reduction
    ``(R - r)(b - l) / ((p - r) R)``."""
    p, l, r, b = flow.p, flow.l, flow.r, flow.b
    R = server.R
    if r > R:
        raise UnboundedDelayError(f"flow rate {r!r} exceeds service rate {R!r}")
    if p == r:
        raise DegenerateFlowError("link speed equals sustained rate; no kink exists")
    if R > p * (1 + _REL):
        raise PreconditionError(f"service rate {R!r} exceeds link speed {p!r}")
    reduction = (R - r) * (b - l) / ((p - r) * R)
    return _bound("model_A", base=b / R, error=server.e, reduction=-reduction,
                  details={"kink_t": (b - l) / (p - r)})


def model_b_bound(flow: PeriodicStaircaseFlow, server: RateLatencyServer) -> DelayBound:
    """``b/R + e - (b - l)/p``; the worst case sits in the first period."""
    R = server.R
    if flow.b / flow.T > R * (1 + _REL):
        raise UnboundedDelayError(
            f"periodic rate {flow.b / flow.T!r} exceeds service rate {R!r}")
    if R > flow.p * (1 + _REL):
        raise PreconditionError(f"service rate {R!r} exceeds link speed {flow.p!r}")
    return _bound("model_B", base=flow.b / R, error=server.e,
                  reduction=-(flow.b - flow.l) / flow.p,
                  details={"kink_t": (flow.b - flow.l) / flow.p})


def model_c_bound(flow: RealSourceFlow, server: RateLatencyServer,
                  strict: bool = True) -> DelayBound:
    """``(l/R - tau) n + e + tau`` for ``r2 <= R <= r1``.

    With ``strict=False`` a server faster than the source spacing
    (``R > r1``) is accepted; the per-packet queueing term ``l/R - tau`` is
    then clamped at zero and the bound becomes ``l/R + e``.
    """
    R = server.R
    if R < flow.r2 * (1 - _REL):
        raise UnboundedDelayError(f"burst rate {flow.r2!r} exceeds service rate {R!r}")
    if strict and R > flow.r1 * (1 + _REL):
        raise PreconditionError(
            f"service rate {R!r} exceeds the source peak rate {flow.r1!r}")
    per_packet = max(flow.l / R - flow.tau, 0.0)
    details = {"kink_t": flow.kink_t, "kink_value": flow.kink_value}
    return _bound("model_C", transmission=flow.l / R,
                  queueing=per_packet * (flow.n - 1), error=server.e,
                  details=details)


# -- curves -----------------------------------------------------------------------


def service_curve(server: RateLatencyServer) -> Curve:
    return curves.rate_latency(server.R, server.e)


def curve_of(flow: Flow, periods: int = curves.DEFAULT_PERIODS) -> Curve:
    """Exact arrival curve of a flow model."""
    if isinstance(flow, TokenBucketFlow):
        return curves.affine(flow.r, flow.b)
    if isinstance(flow, FourTupleFlow):
        return curves.minimum(curves.affine(flow.p, flow.l), curves.affine(flow.r, flow.b))
    if isinstance(flow, PeriodicStaircaseFlow):
        return curves.convolve(curves.affine(flow.p, flow.l),
                               curves.staircase(flow.b, flow.T, periods))
    if isinstance(flow, RealSourceFlow):
        return curves.minimum(curves.affine(flow.r1, flow.b1),
                              curves.affine(flow.r2, flow.b2))
    raise TypeError(f"not a flow model: {type(flow).__name__}")


def all_bounds(l: float, n: int, load: float, server: RateLatencyServer,
               p: float, r_p: float) -> dict:
    """Every model's bound for one ``(l, n, load)`` configuration.

    Entries whose preconditions fail hold the raised exception instead of a
    :class:`DelayBound`.
    """
    C = server.C
    out: dict = {}

    def attempt(name, fn):
        try:
            out[name] = fn()
        except (PreconditionError, DomainError) as exc:
            out[name] = exc

    attempt("ideal", lambda: ideal_delay(l, C))
    attempt("tb", lambda: token_bucket_bound(TokenBucketFlow(load * C, n * l), server))
    attempt("a", lambda: model_a_bound(FourTupleFlow(p, l, load * C, n * l), server))
    attempt("b", lambda: model_b_bound(
        PeriodicStaircaseFlow(n * l / (load * C), n * l, p, l), server))
    attempt("c", lambda: model_c_bound(real_source_from_load(l, n, load, C, r_p), server))
    return out
