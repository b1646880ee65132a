"""
Deterministic single-node FIFO simulator and periodic burst sources.

The node receives packets over an ingress link of speed ``p_in``: a packet
is on the node once its last bit has been received, which is the instant
recorded as its arrival in the produced trace.  It then waits in an
unbounded FIFO queue, is served at rate ``R`` and leaves after a fixed
processing delay ``e_proc`` plus optional seeded jitter.  Per packet::

    received_i = max(emitted_i, received_{i-1}) + L_i / p_in
    start_i    = max(received_i, finish_{i-1})
    finish_i   = start_i + L_i / R
    departure  = finish_i + e_proc + jitter_i

so that ``departure - received == T_queue + T_proc + T_trans`` exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from . import models
from .errors import DelayBoundError, DomainError, InfeasibleSourceError
from .trace import MeasuredTrace

__all__ = [
    "ServerConfig",
    "SourceConfig",
    "Arrivals",
    "SimulationReport",
    "SweepRow",
    "generate_arrivals",
    "simulate",
    "max_delay_sweep",
]

SOURCE_KINDS = ("real_source", "ideal_periodic")


@dataclass(frozen=True)
class ServerConfig:
    R: float
    e_proc: float = 0.0
    p_in: float = math.inf
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError("service rate R must be positive")
        if self.e_proc < 0 or self.jitter < 0:
            raise DomainError("e_proc and jitter must be non-negative")
        if not self.p_in > 0:
            raise DomainError("ingress link speed must be positive")


@dataclass(frozen=True)
class SourceConfig:
    kind: str
    total_packets: int

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise DomainError(f"unknown source kind {self.kind!r}")
        if self.total_packets < 0:
            raise DomainError("total_packets must be non-negative")


@dataclass(frozen=True)
class Arrivals:
    """Packets as emitted by a source: ids, lengths in bits, times in seconds."""

    packet_id: np.ndarray
    length: np.ndarray
    time: np.ndarray

    def __len__(self):
        return len(self.time)

    def __iter__(self):
        return iter(zip(self.packet_id.tolist(), self.length.tolist(),
                        self.time.tolist()))


@dataclass(frozen=True)
class SimulationReport:
    """Result of :func:`simulate`.

    ``trace`` holds node-side arrival (fully received) and departure times;
    ``emitted`` the source-side emission instants.  ``backlog`` is sampled
    after every arrival and departure event as ``(t, B(t))`` rows.
    """

    trace: MeasuredTrace
    emitted: np.ndarray
    per_packet_delay: np.ndarray
    t_queue: np.ndarray
    t_proc: np.ndarray
    t_trans: np.ndarray
    backlog: np.ndarray

    @property
    def max_delay(self) -> float:
        return float(self.per_packet_delay.max()) if len(self.per_packet_delay) else 0.0


def generate_arrivals(src: SourceConfig, flow: models.RealSourceFlow) -> Arrivals:
    """Emission times of ``src.total_packets`` packets.

    Packet ``k`` of burst ``m`` leaves at ``m T_p + k tau`` for a real
    source, at ``m T_p`` for an ideal periodic one.
    """
    if not flow.delta > 0:
        raise InfeasibleSourceError("source needs a positive inter-burst gap")
    idx = np.arange(src.total_packets)
    m, k = np.divmod(idx, flow.n)
    t = m * flow.T_p
    if src.kind == "real_source":
        t = t + k * flow.tau
    return Arrivals(idx.astype(np.int64), np.full(len(idx), float(flow.l)), t.astype(float))


def _jitter(server: ServerConfig, n: int) -> np.ndarray:
    if server.jitter == 0:
        return np.zeros(n)
    rng = np.random.default_rng(server.seed)
    return rng.uniform(0.0, server.jitter, size=n)


def simulate(arrivals: Arrivals, server: ServerConfig) -> SimulationReport:
    emitted = np.asarray(arrivals.time, dtype=float)
    lengths = np.asarray(arrivals.length, dtype=float)
    if np.any(np.diff(emitted) < 0):
        raise DomainError("arrivals must be time-ordered")
    n = len(emitted)
    jitter = _jitter(server, n)
    received = [0.0] * n
    start = [0.0] * n
    finish = [0.0] * n
    prev_rx = -math.inf
    prev_fin = -math.inf
    R, p_in = server.R, server.p_in
    for i, (a, L) in enumerate(zip(emitted.tolist(), lengths.tolist())):
        rx = max(a, prev_rx) + L / p_in
        st = max(rx, prev_fin)
        fin = st + L / R
        received[i], start[i], finish[i] = rx, st, fin
        prev_rx, prev_fin = rx, fin
    received = np.array(received)
    start = np.array(start)
    finish = np.array(finish)
    t_proc = server.e_proc + jitter
    departure = finish + t_proc
    trace = MeasuredTrace(np.asarray(arrivals.packet_id, dtype=np.int64), lengths,
                          received, departure, validate=False)
    return SimulationReport(
        trace=trace,
        emitted=emitted,
        per_packet_delay=departure - received,
        t_queue=start - received,
        t_proc=t_proc,
        t_trans=lengths / R,
        backlog=_backlog(received, departure, lengths),
    )


def _backlog(arrival, departure, lengths) -> np.ndarray:
    """``B(t) = A(t) - D(t)`` after each event; arrivals sort before
    departures at equal instants."""
    if len(arrival) == 0:
        return np.empty((0, 2))
    t = np.concatenate([arrival, departure])
    dq = np.concatenate([lengths, -lengths])
    order = np.lexsort((np.concatenate([np.zeros(len(arrival)), np.ones(len(arrival))]), t))
    return np.column_stack([t[order], np.cumsum(dq[order])])


# -- sweep -------------------------------------------------------------------------


@dataclass
class SweepRow:
    length_bytes: int
    load: float
    n: int
    source: str
    R: float
    e: float
    max_delay: float = math.nan
    bounds: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def bound(self, name: str) -> float:
        return self.bounds.get(name, math.nan)


def max_delay_sweep(
    grid: Sequence[tuple[int, float, int]],
    server: Union[ServerConfig, Mapping[int, ServerConfig]],
    source: str = "real_source",
    C: float = 1e9,
    r_p: float = 0.96e9,
    bursts: int = 50,
    workers: int = 1,
) -> list[SweepRow]:
    """Simulate every ``(length_bytes, load, n)`` grid point and record the
    maximum delay next to the ideal and model A/B/C bounds.

    ``server`` may map packet length in bytes to its own configuration.  The
    link speed ``p`` of models A and B is the server's ingress speed, and the
    bounds use ``e = e_proc`` since delays are measured from reception.
    Points whose model preconditions fail carry the message in ``errors``.
    """

    def run(point) -> SweepRow:
        length_bytes, load, n = point
        srv = server[length_bytes] if isinstance(server, Mapping) else server
        row = SweepRow(int(length_bytes), float(load), int(n), source, srv.R, srv.e_proc)
        l = 8.0 * length_bytes
        try:
            flow = models.real_source_from_load(l, n, load, C, r_p)
            arr = generate_arrivals(SourceConfig(source, bursts * n), flow)
            row.max_delay = simulate(arr, srv).max_delay
        except DelayBoundError as exc:
            row.errors["sim"] = str(exc)
        rl = models.RateLatencyServer(srv.R, srv.e_proc + srv.jitter, C)
        for name, res in models.all_bounds(l, n, load, rl, srv.p_in, r_p).items():
            if isinstance(res, Exception):
                row.errors[name] = str(res)
            else:
                row.bounds[name] = res.value
        return row

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, grid))
    return [run(point) for point in grid]
