"""
Min-plus algebra on ultimately-affine piecewise-linear curves.

A :class:`Curve` is a non-decreasing function on ``t >= 0`` made of a value
at the origin followed by linear segments.  Segment ``k`` covers the
half-open interval ``(times[k], times[k+1]]`` and starts from the right
limit ``values[k]``; the last segment extends to infinity and is the affine
tail.  Curves are left-continuous at jumps, which is the usual convention
for cumulative arrival functions, so ``staircase(b, T)`` evaluates to
``b * ceil(t / T)``.

Units are seconds and bits throughout.  All functions are pure and curves
are immutable.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    HorizonError,
    UnboundedDelayError,
    UnsupportedOperationError,
)

__all__ = [
    "Curve",
    "HorizontalDeviation",
    "affine",
    "concave",
    "rate_latency",
    "staircase",
    "delta",
    "zero",
    "minimum",
    "convolve",
    "subadditive_closure",
    "horizontal_deviation",
    "pseudo_inverse",
    "export_csv",
    "read_csv",
    "TIME_ATOL",
    "VALUE_RTOL",
]

TIME_ATOL = 1e-15
VALUE_RTOL = 1e-12
DEFAULT_PERIODS = 16

KINDS = ("affine", "concave", "staircase", "rate_latency", "delta", "composite")
_CONCAVE_KINDS = ("affine", "concave")


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= VALUE_RTOL * max(abs(a), abs(b), 1.0)


@dataclass(frozen=True, eq=False)
class Curve:
    """Piecewise-linear, non-decreasing, ultimately affine function of time.

    :param origin: value at ``t = 0`` in bits.
    :param times: segment start times, ``times[0] == 0``, strictly increasing.
    :param values: right-limit value at each segment start.
    :param slopes: slope of each segment in bits/second; the last one is the
        tail rate.
    :param kind: shape tag, one of :data:`KINDS`.
    :param exact_until: the curve is exact on ``[0, exact_until]``; beyond it
        the tail is only a lower bound of the intended function.
    :param parts: for ``composite`` curves built by :func:`minimum`, the
        operands whose pointwise minimum this curve is.
    :param subadditive: whether ``f(s + t) <= f(s) + f(t)`` is known to hold.
    """

    origin: float
    times: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    kind: str = "composite"
    exact_until: float = math.inf
    parts: tuple = field(default=(), repr=False)
    subadditive: bool = False

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        slopes = np.array(self.slopes, dtype=float)
        if not (times.ndim == values.ndim == slopes.ndim == 1):
            raise DomainError("curve arrays must be one-dimensional")
        if not (len(times) == len(values) == len(slopes) >= 1):
            raise DomainError("curve needs equally sized, non-empty arrays")
        if self.kind not in KINDS:
            raise DomainError(f"unknown curve kind {self.kind!r}")
        if times[0] != 0.0:
            raise DomainError("first segment must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise DomainError("breakpoint times must be strictly increasing")
        if np.any(slopes < 0) or np.any(np.isnan(slopes)):
            raise DomainError("slopes must be non-negative")
        if self.origin < 0 or math.isnan(self.origin):
            raise DomainError("curve value at t = 0 must be non-negative")
        if values[0] < self.origin and not _close(values[0], self.origin):
            raise DomainError("curve decreases right after t = 0")
        if len(times) > 1:
            left = values[:-1] + slopes[:-1] * np.diff(times)
            bad = (values[1:] < left) & ~np.isclose(
                values[1:], left, rtol=VALUE_RTOL, atol=0.0
            )
            if np.any(bad):
                k = int(np.argmax(bad)) + 1
                raise DomainError(f"curve decreases at t = {times[k]!r}")
        for arr in (times, values, slopes):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "origin", float(self.origin))

    # -- introspection -----------------------------------------------------

    @property
    def tail_start(self) -> float:
        return float(self.times[-1])

    @property
    def tail_rate(self) -> float:
        return float(self.slopes[-1])

    @property
    def n_segments(self) -> int:
        return len(self.times)

    def left_value(self, k: int) -> float:
        """Value at the start of segment ``k`` (the left limit, ``k >= 1``)."""
        if k == 0:
            return self.origin
        return float(
            self.values[k - 1] + self.slopes[k - 1] * (self.times[k] - self.times[k - 1])
        )

    def segment_index(self, t: float) -> int:
        """Index of the segment covering ``t > 0`` (``(times[k], times[k+1]]``)."""
        return int(np.searchsorted(self.times, t, side="left")) - 1

    def right_piece(self, t: float) -> tuple[float, float]:
        """Right limit of the value at ``t`` and the slope just after ``t``."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[k] + self.slopes[k] * (t - self.times[k])), float(
            self.slopes[k]
        )

    def __call__(self, t):
        return eval_curve(self, t)

    def __repr__(self):
        return (
            f"Curve(kind={self.kind!r}, origin={self.origin!r}, "
            f"segments={self.n_segments}, tail_rate={self.tail_rate!r})"
        )

    def equals(self, other: "Curve", rtol: float = VALUE_RTOL) -> bool:
        """Structural equality up to ``rtol`` on values and slopes."""
        if self.n_segments != other.n_segments:
            return False
        return (
            np.allclose(self.times, other.times, rtol=rtol, atol=TIME_ATOL)
            and np.allclose(self.values, other.values, rtol=rtol, atol=0.0)
            and np.allclose(self.slopes, other.slopes, rtol=rtol, atol=0.0)
            and _close(self.origin, other.origin)
        )

    def with_origin(self, origin: float) -> "Curve":
        return _make(origin, self.times, self.values, self.slopes, self.kind,
                     self.exact_until, self.parts, self.subadditive)


@dataclass(frozen=True)
class HorizontalDeviation:
    """Maximum horizontal distance between two curves.

    ``witness_t`` is a time at which the supremum is reached, or approached
    from the right when it sits on a jump of the arrival curve.
    """

    value: float
    witness_t: float

    def __float__(self):
        return self.value


def _make(origin, times, values, slopes, kind="composite", exact_until=math.inf,
          parts=(), subadditive=False) -> Curve:
    return Curve(origin, np.asarray(times, float), np.asarray(values, float),
                 np.asarray(slopes, float), kind, exact_until, tuple(parts), subadditive)


# -- constructors -------------------------------------------------------------


def affine(rate: float, burst: float = 0.0) -> Curve:
    """``t -> rate * t + burst`` for ``t > 0``, zero at the origin."""
    if rate < 0 or burst < 0:
        raise DomainError("affine curve needs rate >= 0 and burst >= 0")
    return _make(0.0, [0.0], [burst], [rate], "affine", subadditive=True)


def concave(pieces: Sequence[tuple[float, float]]) -> Curve:
    """Minimum of affine curves given as ``(rate, burst)`` pairs."""
    if not pieces:
        raise DomainError("concave curve needs at least one affine piece")
    out = affine(*pieces[0])
    for rate, burst in pieces[1:]:
        out = minimum(out, affine(rate, burst))
    return out


def rate_latency(rate: float, latency: float = 0.0) -> Curve:
    """Service curve ``t -> rate * max(0, t - latency)``."""
    if rate <= 0 or latency < 0:
        raise DomainError("rate-latency curve needs rate > 0 and latency >= 0")
    if latency <= TIME_ATOL:
        return _make(0.0, [0.0], [0.0], [rate], "rate_latency")
    return _make(0.0, [0.0, latency], [0.0, 0.0], [0.0, rate], "rate_latency")


def staircase(burst: float, period: float, periods: int = DEFAULT_PERIODS) -> Curve:
    """``t -> burst * ceil(t / period)``, unrolled for ``periods`` steps.

    Beyond ``periods * period`` the curve continues with slope
    ``burst / period`` from the last step, which stays below the true
    staircase; ``exact_until`` records where exactness ends.
    """
    if burst <= 0 or period <= 0:
        raise DomainError("staircase needs burst > 0 and period > 0")
    if periods < 1:
        raise DomainError("staircase needs at least one unrolled period")
    k = np.arange(periods + 1, dtype=float)
    times = k * period
    values = np.append((k[:-1] + 1.0) * burst, periods * burst)
    slopes = np.append(np.zeros(periods), burst / period)
    return _make(0.0, times, values, slopes, "staircase", periods * period,
                 subadditive=True)


def delta() -> Curve:
    """The min-plus identity: zero at the origin, infinite afterwards."""
    return _make(0.0, [0.0], [math.inf], [0.0], "delta", subadditive=True)


def zero() -> Curve:
    return _make(0.0, [0.0], [0.0], [0.0], "affine", subadditive=True)


# -- evaluation -----------------------------------------------------------------


def eval_curve(curve: Curve, t):
    """Exact value of ``curve`` at ``t`` (scalar or array)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("curves are defined for t >= 0 only")
    k = np.searchsorted(curve.times, arr, side="left") - 1
    kk = np.maximum(k, 0)
    with np.errstate(invalid="ignore"):
        val = curve.values[kk] + curve.slopes[kk] * (arr - curve.times[kk])
    out = np.where(k < 0, curve.origin, val)
    if out.ndim == 0:
        return float(out)
    return out


# -- normalisation -----------------------------------------------------------------


def _normalise(origin, pieces, kind="composite", exact_until=math.inf, parts=(),
               subadditive=False) -> Curve:
    """Build a curve from ``(start, right_value, slope)`` pieces, merging
    collinear continuations and breakpoints closer than ``TIME_ATOL``."""
    pieces = sorted(pieces, key=lambda p: p[0])
    out: list[list[float]] = []
    for start, value, slope in pieces:
        if out and start - out[-1][0] <= TIME_ATOL:
            # zero-length piece; keep the later one, which owns the interval
            out[-1] = [out[-1][0], value, slope]
            continue
        if out:
            s0, v0, a0 = out[-1]
            left = v0 + a0 * (start - s0)
            if _close(left, value) and _close(a0, slope):
                continue
            if value < left:
                value = left
        value = max(value, 0.0)
        out.append([float(start), float(value), float(slope)])
    if not out or out[0][0] > TIME_ATOL:
        raise DomainError("pieces must cover t = 0")
    out[0][0] = 0.0
    arr = np.array(out)
    return _make(min(origin, arr[0, 1]), arr[:, 0], arr[:, 1], arr[:, 2], kind,
                 exact_until, parts, subadditive)


def _flatten_parts(c: Curve) -> tuple:
    return c.parts if (c.kind == "composite" and c.parts) else (c,)


# -- minimum -----------------------------------------------------------------------


def minimum(a: Curve, b: Curve) -> Curve:
    """Pointwise minimum of two curves."""
    if a.kind == "delta":
        return b.with_origin(0.0)
    if b.kind == "delta":
        return a.with_origin(0.0)
    xs = np.union1d(a.times, b.times)
    pieces = []
    for i, x in enumerate(xs):
        end = xs[i + 1] if i + 1 < len(xs) else math.inf
        va, sa = a.right_piece(x)
        vb, sb = b.right_piece(x)
        if va < vb or (va == vb and sa <= sb):
            lo, hi = (va, sa), (vb, sb)
        else:
            lo, hi = (vb, sb), (va, sa)
        pieces.append((x, lo[0], lo[1]))
        if lo[1] > hi[1]:
            tc = x + (hi[0] - lo[0]) / (lo[1] - hi[1])
            if tc < end - TIME_ATOL:
                pieces.append((tc, lo[0] + lo[1] * (tc - x), hi[1]))
    if a.kind in _CONCAVE_KINDS and b.kind in _CONCAVE_KINDS:
        kind, parts = "concave", ()
    elif a.equals(b):
        return a
    else:
        kind, parts = "composite", _flatten_parts(a) + _flatten_parts(b)
    sub = kind == "concave" and a.origin == 0.0 and b.origin == 0.0
    return _normalise(min(a.origin, b.origin), pieces, kind,
                      min(a.exact_until, b.exact_until), parts, sub)


# -- convolution ---------------------------------------------------------------


def _lower_envelope(lo, hi, v0, sl):
    """Lower envelope of linear pieces ``v0 + sl * (t - lo)`` on ``[lo, hi]``.

    Returns ``(start, right_value, slope)`` pieces covering ``(0, inf)``.
    """
    xs = np.unique(np.concatenate([lo, hi[np.isfinite(hi)]]))
    pieces = []
    for i, x in enumerate(xs):
        end = xs[i + 1] if i + 1 < len(xs) else math.inf
        act = (lo <= x + TIME_ATOL) & (hi >= end - TIME_ATOL)
        if not np.any(act):
            continue
        val = v0[act] + sl[act] * np.maximum(x - lo[act], 0.0)
        s = sl[act]
        t = x
        # near-ties in value go to the flatter piece, which stays lowest
        near = val <= val.min() + VALUE_RTOL * max(abs(val.min()), 1.0)
        cur = int(np.lexsort((val, s, ~near))[0])
        while True:
            vc = val[cur] + s[cur] * (t - x)
            pieces.append((t, vc, s[cur]))
            steeper = s < s[cur]
            if not np.any(steeper):
                break
            vt = val + s * (t - x)
            with np.errstate(divide="ignore", invalid="ignore"):
                tc = t + (vt - vc) / (s[cur] - s)
            # a crossing at or just before t is float noise: switch now
            tc = np.where(steeper, np.where(tc > t + TIME_ATOL, tc, t), math.inf)
            j = int(np.argmin(np.where(tc == tc.min(), s, math.inf)))
            if not tc[j] < end - TIME_ATOL:
                break
            t, cur = float(tc[j]), j
    return pieces


def _pieces(c: Curve):
    """Origin point plus segments as ``(start, length, value, slope)``."""
    ends = np.append(c.times[1:], math.inf)
    out = [(0.0, 0.0, c.origin, 0.0)]
    out.extend(zip(c.times, ends - c.times, c.values, c.slopes))
    return out


def _convolve_general(a: Curve, b: Curve, kind: str = "composite") -> Curve:
    lo, hi, v0, sl = [], [], [], []
    for sa, la, va, ra in _pieces(a):
        for sb, lb, vb, rb in _pieces(b):
            start, v = sa + sb, va + vb
            (r1, l1), (r2, l2) = sorted([(ra, la), (rb, lb)])
            if l1 == 0 and l2 == 0:
                continue  # origin + origin, handled as the new origin
            if l1 > 0:
                lo.append(start); hi.append(start + l1); v0.append(v); sl.append(r1)
            if l2 > 0 and math.isfinite(l1):
                s2 = start + l1
                lo.append(s2); hi.append(s2 + l2); v0.append(v + r1 * l1); sl.append(r2)
    pieces = _lower_envelope(np.array(lo), np.array(hi), np.array(v0), np.array(sl))
    return _normalise(a.origin + b.origin, pieces, kind,
                      min(a.exact_until, b.exact_until),
                      subadditive=a.subadditive and b.subadditive)


def _affine_staircase(f: Curve, s: Curve) -> Curve:
    """Closed form of ``(p t + l) (x) b ceil(t / T)`` when ``p T >= b >= l``.

    On each period ``(kT, (k+1)T]`` the result ramps at ``p`` from
    ``k b + l`` and saturates at ``(k+1) b``.
    """
    p, l = f.tail_rate, float(f.values[0])
    b = float(s.values[0])
    T = float(s.times[1])
    periods = len(s.times) - 1
    ramp = (b - l) / p if p > 0 else math.inf
    pieces = []
    for k in range(periods):
        pieces.append((k * T, k * b + l, p))
        if ramp < T:
            pieces.append((k * T + ramp, (k + 1) * b, 0.0))
    pieces.append((periods * T, periods * b, b / T))
    return _normalise(0.0, pieces, "composite", s.exact_until, subadditive=True)


def _is_plain_affine(c: Curve) -> bool:
    return c.kind == "affine" and c.n_segments == 1 and c.origin == 0.0


def convolve(a: Curve, b: Curve) -> Curve:
    """Min-plus convolution ``(a (x) b)(t) = inf_{0<=s<=t} a(s) + b(t-s)``.

    Concave curves through the origin reduce to their minimum and an affine
    curve against a staircase uses the closed form; every other pair goes
    through the exact lower envelope of all segment-pair convolutions.
    """
    if a.kind == "delta":
        return b
    if b.kind == "delta":
        return a
    for x, y in ((a, b), (b, a)):
        if (_is_plain_affine(x) and y.kind == "staircase"
                and x.tail_rate * y.times[1] >= y.values[0] >= x.values[0]):
            return _affine_staircase(x, y)
    if (a.kind in _CONCAVE_KINDS and b.kind in _CONCAVE_KINDS
            and a.origin == 0.0 and b.origin == 0.0):
        return minimum(a, b)
    return _convolve_general(a, b)


def subadditive_closure(c: Curve) -> Curve:
    """Pointwise infimum of ``delta, c, c (x) c, ...``.

    Supported: curves already known to be sub-additive, concave curves with
    any offset, and minima of supported curves through
    ``(f ^ g)* = f* (x) g*``.
    """
    if c.subadditive:
        return c.with_origin(0.0)
    if c.kind in _CONCAVE_KINDS:
        return c.with_origin(0.0)
    if c.kind == "composite" and c.parts:
        closures = [subadditive_closure(p) for p in c.parts]
        out = closures[0]
        for nxt in closures[1:]:
            out = convolve(out, nxt)
        return out
    raise UnsupportedOperationError(
        f"sub-additive closure is not supported for curves of kind {c.kind!r}"
    )


# -- horizontal deviation ------------------------------------------------------------


def _segment_ends(c: Curve) -> np.ndarray:
    ends = np.empty(c.n_segments)
    ends[:-1] = c.values[:-1] + c.slopes[:-1] * np.diff(c.times)
    ends[-1] = math.inf if c.slopes[-1] > 0 else c.values[-1]
    return ends


def pseudo_inverse(beta: Curve, y: float, right: bool = False) -> float:
    """``inf {s >= 0 : beta(s) >= y}``; with ``right=True`` the limit from
    above, ``inf {s >= 0 : beta(s) > y}``.  Returns ``inf`` when never
    reached."""
    if (y <= beta.origin) if not right else (y < beta.origin):
        return 0.0
    ends = _segment_ends(beta)
    hit = ends > y if right else ends >= y
    if not np.any(hit):
        return math.inf
    k = int(np.argmax(hit))
    v = beta.values[k]
    if (y < v) if right else (y <= v):
        return float(beta.times[k])
    return float(beta.times[k] + (y - v) / beta.slopes[k])


def horizontal_deviation(alpha: Curve, beta: Curve) -> HorizontalDeviation:
    """``sup_t inf {d >= 0 : beta(t + d) >= alpha(t)}``, computed exactly.

    The supremum is taken over the upper value of ``alpha`` at jumps.  The
    search visits every breakpoint of ``alpha`` and every time at which
    ``alpha`` crosses a breakpoint level of ``beta``; between those points
    the distance is affine, so the endpoints suffice.
    """
    if beta.kind == "delta":
        return HorizontalDeviation(0.0, 0.0)
    if alpha.kind == "delta":
        raise UnboundedDelayError("an impulse arrival curve has unbounded delay")
    if alpha.tail_rate > beta.tail_rate and not _close(alpha.tail_rate, beta.tail_rate):
        raise UnboundedDelayError(
            f"arrival rate {alpha.tail_rate!r} exceeds service rate {beta.tail_rate!r}"
        )
    levels = np.unique(np.concatenate([beta.values, _segment_ends(beta)[:-1]]))
    best, best_t = -math.inf, 0.0

    def consider(d, t):
        nonlocal best, best_t
        if math.isinf(d):
            raise UnboundedDelayError("service curve never reaches the arrival curve")
        if d > best + TIME_ATOL:
            best, best_t = d, t

    consider(pseudo_inverse(beta, alpha.origin), 0.0)
    n = alpha.n_segments
    for k in range(n):
        t0 = float(alpha.times[k])
        t1 = float(alpha.times[k + 1]) if k + 1 < n else math.inf
        v0, a = float(alpha.values[k]), float(alpha.slopes[k])
        if a == 0.0:
            consider(pseudo_inverse(beta, v0) - t0, t0)
            continue
        v1 = v0 + a * (t1 - t0)
        inner = levels[(levels > v0) & (levels < v1)]
        cuts = [t0] + [t0 + (y - v0) / a for y in inner] + [t1]
        for ta, tb in zip(cuts[:-1], cuts[1:]):
            ya = v0 + a * (ta - t0)
            consider(pseudo_inverse(beta, ya, right=True) - ta, ta)
            if math.isfinite(tb):
                consider(pseudo_inverse(beta, v0 + a * (tb - t0)) - tb, tb)
    value = max(0.0, best)
    if best_t >= alpha.exact_until or best_t + value >= beta.exact_until:
        raise HorizonError(
            f"delay witness t={best_t!r} lies beyond the exactly represented range"
        )
    return HorizontalDeviation(value, best_t)


# -- CSV export ------------------------------------------------------------------


def export_csv(curve: Curve, path=None) -> str:
    """Breakpoint list as ``t_seconds,value_bits,slope_bps`` CSV.

    The value at ``t = 0`` and the exactness horizon are written as
    ``#`` comment lines.  Returns the text; writes it when ``path`` is given.
    """
    buf = io.StringIO()
    buf.write(f"# kind={curve.kind}\n")
    buf.write(f"# value_at_zero_bits={curve.origin!r}\n")
    buf.write(f"# exact_until_s={curve.exact_until!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_seconds", "value_bits", "slope_bps"])
    for t, v, s in zip(curve.times, curve.values, curve.slopes):
        w.writerow([repr(float(t)), repr(float(v)), repr(float(s))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def read_csv(source) -> Curve:
    """Inverse of :func:`export_csv`; ``source`` is a path or CSV text."""
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    meta = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        elif line.strip() and not line.startswith("t_seconds"):
            rows.append([float(x) for x in line.split(",")])
    arr = np.array(rows, dtype=float)
    return _make(float(meta.get("value_at_zero_bits", 0.0)), arr[:, 0], arr[:, 1],
                 arr[:, 2], meta.get("kind", "composite"),
                 float(meta.get("exact_until_s", "inf")))


def sample(curve: Curve, ts: Iterable[float]) -> np.ndarray:
    return np.asarray(eval_curve(curve, np.asarray(list(ts), float)))
