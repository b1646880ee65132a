"""Per-packet measurement records shared by the simulator and the estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TraceFormatError

__all__ = ["MeasuredTrace"]


@dataclass(frozen=True, eq=False)
class MeasuredTrace:
    """Ordered packets with lengths in bits and times in seconds.

    Invariants: arrivals non-decreasing, every departure after its arrival,
    departures non-decreasing (FIFO).
    """

    packet_id: np.ndarray
    length: np.ndarray
    arrival: np.ndarray
    departure: np.ndarray
    validate: bool = True

    def __post_init__(self):
        pid = np.asarray(self.packet_id, dtype=np.int64)
        arrays = [np.asarray(a, dtype=float) for a in (self.length, self.arrival,
                                                       self.departure)]
        if not all(len(a) == len(pid) for a in arrays):
            raise TraceFormatError("trace columns have different lengths")
        object.__setattr__(self, "packet_id", pid)
        for name, arr in zip(("length", "arrival", "departure"), arrays):
            object.__setattr__(self, name, arr)
        if self.validate:
            self.check()

    def check(self) -> None:
        """Raise :class:`TraceFormatError` naming the first violated rule."""
        rules = (
            (np.diff(self.arrival) < 0, "arrivals must be non-decreasing"),
            (self.departure <= self.arrival, "departure must follow arrival"),
            (np.diff(self.departure) < 0, "departures must be FIFO-ordered"),
            (self.length <= 0, "packet length must be positive"),
        )
        for bad, rule in rules:
            if np.any(bad):
                i = int(np.argmax(bad))
                raise TraceFormatError(f"packet index {i}: {rule}")

    def __len__(self):
        return len(self.arrival)

    def __eq__(self, other):
        if not isinstance(other, MeasuredTrace):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("packet_id", "length", "arrival", "departure"))

    @property
    def delay(self) -> np.ndarray:
        return self.departure - self.arrival

    def shifted(self, departure_offset: float) -> "MeasuredTrace":
        """Same trace with every departure moved by ``departure_offset``."""
        return MeasuredTrace(self.packet_id, self.length, self.arrival,
                             self.departure + departure_offset)
