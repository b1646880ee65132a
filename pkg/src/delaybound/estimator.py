"""
Service-curve estimation from measured per-packet arrival and departure
times.

For a candidate rate ``R`` the virtual finishing times of an ideal
rate-``R`` server are ``t_i* = max(T_i, t_{i-1}*) + L_i / R`` and the slack
of packet ``i`` is ``T_i* - t_i*``.  Inside a backlog period the slack of a
server slower than ``R`` grows packet after packet, while at or below the
true rate it stays flat or shrinks.  The estimate is the largest ``R`` whose
slack never rises inside a backlog period by more than the jitter floor;
the error term is the largest slack at that rate, so every packet satisfies
``T_i* <= t_i* + e``.

The search walks ``R`` down from ``C`` geometrically until a rate is
accepted, then bisects between that rate and the previous (rejected) one.
When no grid rate passes, the rates implied by consecutive departure
spacings are tried from the largest down.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, EstimationError
from .trace import MeasuredTrace

__all__ = [
    "MeasuredTrace",
    "SearchConfig",
    "EstimationResult",
    "IoDelayTable",
    "virtual_finishing_times",
    "slack",
    "accepts",
    "estimate",
    "io_delay_lookup",
    "apply_io_correction",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the rate search.

    ``jitter_floor`` should match the timing noise of the measurement: a
    rise of the slack up to this amount is not taken as evidence of a slower
    server.  ``method="linear"`` stops at the first accepted rate of the
    geometric walk without refining it.
    """

    method: str = "bisect"
    resolution: float = 1e-4
    scan_step: float = 0.999
    min_rate_fraction: float = 0.01
    jitter_floor: float = 50e-9
    backlog_only: bool = True
    outlier_threshold: float = 1e-6

    def __post_init__(self):
        if self.method not in ("bisect", "linear"):
            raise ConfigError(f"unknown search method {self.method!r}")
        if not 0 < self.scan_step < 1:
            raise ConfigError("scan_step must lie in (0, 1)")
        if self.resolution <= 0 or self.jitter_floor < 0:
            raise ConfigError("resolution must be positive, jitter_floor non-negative")


@dataclass(frozen=True)
class EstimationResult:
    R_hat: float
    e_hat: float
    e_with_io: float
    iterations: int
    slack_profile: np.ndarray = field(repr=False)
    C: float = math.inf
    step: float = 0.0
    io_delay: float = 0.0
    warnings: tuple = ()


@dataclass(frozen=True)
class IoDelayTable:
    """IO delay in seconds keyed by ``(length_bytes, load_fraction)``."""

    entries: dict

    def __post_init__(self):
        if any(v <= 0 for v in self.entries.values()):
            raise ConfigError("IO delays must be positive")

    @property
    def lengths(self) -> list[int]:
        return sorted({k[0] for k in self.entries})

    def length_class(self, length_bytes: float) -> int:
        """Nearest length class; ties go to the larger class."""
        if not self.entries:
            raise ConfigError("IO delay table is empty")
        return min(self.lengths, key=lambda c: (abs(c - length_bytes), -c))

    def maximum(self, length_bytes: float) -> float:
        c = self.length_class(length_bytes)
        return max(v for (lb, _), v in self.entries.items() if lb == c)

    def at(self, length_bytes: float, load: float) -> float:
        c = self.length_class(length_bytes)
        loads = {ld: v for (lb, ld), v in self.entries.items() if lb == c}
        return loads[min(loads, key=lambda x: abs(x - load))]


def virtual_finishing_times(trace: MeasuredTrace, R: float) -> np.ndarray:
    """``t_i* = max(T_i, t_{i-1}*) + L_i / R`` with ``t_0* = T_1 + L_1 / R``."""
    if not R > 0:
        raise DomainError("rate must be positive")
    out = []
    prev = -math.inf
    for T, L in zip(trace.arrival.tolist(), trace.length.tolist()):
        prev = max(T, prev) + L / R
        out.append(prev)
    return np.array(out)


def _vft_fast(arrival: np.ndarray, length: np.ndarray, R: float) -> np.ndarray:
    # t_i* = S_i + max_{k<=i}(T_k - S_{k-1}) with S the cumulative service time
    svc = length / R
    cum = np.cumsum(svc)
    return cum + np.maximum.accumulate(arrival - (cum - svc))


def slack(trace: MeasuredTrace, R: float) -> np.ndarray:
    return trace.departure - virtual_finishing_times(trace, R)


def _check(arrival, length, departure, R, cfg: SearchConfig) -> tuple[bool, bool]:
    """Return ``(accepted, saw_backlog)`` for candidate rate ``R``."""
    t = _vft_fast(arrival, length, R)
    s = departure - t
    busy = np.empty(len(t), dtype=bool)
    busy[0] = False
    busy[1:] = arrival[1:] < t[:-1]
    if not busy.any():
        return False, False
    if not cfg.backlog_only:
        return bool(np.all(np.diff(s) <= cfg.jitter_floor)), True
    # running minimum restarted at each backlog period: offset every period
    # below all earlier ones, accumulate, then undo the offset
    period = np.cumsum(~busy)
    span = float(s.max() - s.min()) * 2.0 + 1e-9
    shifted = s - period * span
    runmin = np.minimum.accumulate(shifted) + period * span
    return bool(np.max(s - runmin) <= cfg.jitter_floor), True


def _spacing_rates(length, departure, lo, hi) -> np.ndarray:
    """Rates ``L_i / (D_i - D_{i-1})`` within ``[lo, hi]``, descending and
    de-duplicated to relative 1e-9.  Inside a busy period of a jitter-free
    server these equal its rate exactly."""
    gap = np.diff(departure)
    pos = gap > 0
    rates = np.unique(length[1:][pos] / gap[pos])[::-1]
    rates = rates[(rates >= lo) & (rates <= hi)]
    if len(rates) < 2:
        return rates
    keep = np.concatenate([[True], -np.diff(rates) > 1e-9 * rates[1:]])
    return rates[keep]


def accepts(trace: MeasuredTrace, R: float, search: SearchConfig = SearchConfig()) -> bool:
    """Whether ``R`` passes the slack test on ``trace``."""
    return _check(trace.arrival, trace.length, trace.departure, R, search)[0]


def estimate(trace: MeasuredTrace, C: float,
             search: SearchConfig = SearchConfig()) -> EstimationResult:
    """Largest rate ``R <= C`` consistent with the trace, and its error term."""
    if len(trace) < 2:
        raise EstimationError("estimation needs at least two packets")
    if not C > 0:
        raise DomainError("nominal rate C must be positive")
    T, L, D = trace.arrival, trace.length, trace.departure
    step = C * search.resolution
    floor_rate = C * search.min_rate_fraction
    iterations = 1
    ok, seen = _check(T, L, D, C, search)
    rejected = C
    R = C
    while not ok and R * search.scan_step >= floor_rate:
        rejected, R = R, R * search.scan_step
        iterations += 1
        ok, s = _check(T, L, D, R, search)
        seen = seen or s
    if not ok:
        # an irregular trace may accept only a sliver of rates that the
        # geometric walk steps over; try the rates implied by departure spacing
        for R in _spacing_rates(L, D, floor_rate, C):
            iterations += 1
            ok, s = _check(T, L, D, R, search)
            seen = seen or s
            if ok:
                break
        if not ok:
            why = ("no backlog period found at any rate" if not seen else
                   "slack rises inside a backlog period at every rate")
            raise EstimationError(
                f"no rate in [{floor_rate:g}, {C:g}] bps passes: {why}; "
                "the trace may violate FIFO order or carry clock skew")
    elif search.method == "bisect" and R < C:
        lo, hi = R, rejected
        while hi - lo > step:
            mid = 0.5 * (lo + hi)
            iterations += 1
            if _check(T, L, D, mid, search)[0]:
                lo = mid
            else:
                hi = mid
        # the predicate is only locally monotone; climb off any plateau
        while lo + step <= C and _check(T, L, D, lo + step, search)[0]:
            iterations += 1
            lo += step
        R = lo
    profile = slack(trace, R)
    e_hat = float(profile.max())
    warnings = []
    if e_hat < 0:
        warnings.append(f"largest slack {e_hat:.3e} s is negative; error term clamped to 0")
        e_hat = 0.0
    if len(profile) >= 2:
        top2 = np.partition(profile, -2)[-2:]
        if top2[1] - top2[0] > search.outlier_threshold:
            warnings.append(
                f"error term set by a single packet {top2[1] - top2[0]:.3e} s above the rest")
    for w in warnings:
        log.warning(w)
    return EstimationResult(R, e_hat, e_hat, iterations, profile, C,
                            step if search.method == "bisect" else R * (1 / search.scan_step - 1),
                            0.0, tuple(warnings))


def io_delay_lookup(table: IoDelayTable, length: float, load: float | None = None) -> float:
    """Largest IO delay of the length class nearest to ``length`` bytes.

    The load is accepted for symmetry with the table layout; the correction
    always uses the maximum over loads.
    """
    if not table.entries:
        raise ConfigError("IO delay table is empty")
    return table.maximum(length)


def apply_io_correction(result: EstimationResult, table: IoDelayTable,
                        length: float) -> EstimationResult:
    io = io_delay_lookup(table, length)
    return dataclasses.replace(result, e_with_io=result.e_hat + io, io_delay=io)
