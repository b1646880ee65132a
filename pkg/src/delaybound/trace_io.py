"""
File formats: packet traces, key-value configuration, the IO-delay table,
sweep and estimation reports, and the shipped testbed reference tables.

Persisted times are integer nanoseconds and lengths are bytes; in memory
everything is seconds and bits.  Files are UTF-8 with LF endings and may
carry ``#`` comment lines.  Writers replace their target atomically.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ReferenceDataError, TraceFormatError
from .estimator import EstimationResult, IoDelayTable
from .trace import MeasuredTrace

__all__ = [
    "TRACE_HEADER",
    "IO_TABLE_HEADER",
    "SWEEP_HEADER",
    "read_trace",
    "write_trace",
    "trace_to_text",
    "read_config",
    "parse_config",
    "read_io_table",
    "write_io_table",
    "default_io_table",
    "ReferenceDataset",
    "load_reference",
    "write_sweep",
    "write_estimation_report",
    "atomic_write",
]

TRACE_HEADER = ["packet_id", "length_bytes", "arrival_ns", "departure_ns"]
IO_TABLE_HEADER = ["length_bytes", "load_fraction", "io_delay_us"]
SWEEP_HEADER = ["length_bytes", "load_fraction", "burst", "source", "R_bps", "e_us",
                "max_delay_us", "bound_ideal_us", "bound_a_us", "bound_b_us",
                "bound_c_us", "errors"]

UNIT_SUFFIXES = {
    "_bps": 1.0,
    "_mbps": 1e6,
    "_gbps": 1e9,
    "_bits": 1.0,
    "_bytes": 8.0,
    "_s": 1.0,
    "_us": 1e-6,
    "_ns": 1e-9,
}


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _data_lines(text: str):
    """Yield ``(line_number, line)`` skipping blanks and ``#`` comments."""
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield no, stripped


# -- traces ------------------------------------------------------------------------


def trace_to_text(trace: MeasuredTrace) -> str:
    if np.any(np.mod(trace.length, 8) != 0):
        raise TraceFormatError("packet lengths must be whole bytes to be written")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    arr = np.rint(trace.arrival * 1e9).astype(np.int64)
    dep = np.rint(trace.departure * 1e9).astype(np.int64)
    lb = (trace.length // 8).astype(np.int64)
    w.writerows(zip(trace.packet_id.tolist(), lb.tolist(), arr.tolist(), dep.tolist()))
    return buf.getvalue()


def write_trace(trace: MeasuredTrace, path) -> None:
    atomic_write(path, trace_to_text(trace))


def read_trace(path) -> MeasuredTrace:
    """Parse a trace CSV; errors name the line and the violated rule."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = _data_lines(text)
    first = next(lines, None)
    if first is None or first[1].split(",") != TRACE_HEADER:
        raise TraceFormatError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    rows = []
    prev_arr = prev_dep = None
    for no, line in lines:
        fields = line.split(",")
        if len(fields) != 4:
            raise TraceFormatError(f"{path}:{no}: expected 4 fields, got {len(fields)}")
        try:
            pid, lb, arr, dep = (int(x) for x in fields)
        except ValueError:
            raise TraceFormatError(f"{path}:{no}: fields must be integers") from None
        if lb <= 0:
            raise TraceFormatError(f"{path}:{no}: length_bytes must be positive")
        if dep <= arr:
            raise TraceFormatError(f"{path}:{no}: departure_ns must exceed arrival_ns")
        if prev_arr is not None and arr < prev_arr:
            raise TraceFormatError(f"{path}:{no}: arrivals must be non-decreasing")
        if prev_dep is not None and dep < prev_dep:
            raise TraceFormatError(f"{path}:{no}: departures must be FIFO-ordered")
        prev_arr, prev_dep = arr, dep
        rows.append((pid, lb, arr, dep))
    a = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return MeasuredTrace(a[:, 0], a[:, 1] * 8.0, a[:, 2] / 1e9, a[:, 3] / 1e9)


# -- key-value configuration ---------------------------------------------------------


def _parse_value(raw: str):
    parts = [p.strip() for p in raw.split(",")]
    out = []
    for p in parts:
        try:
            out.append(int(p))
        except ValueError:
            try:
                out.append(float(p))
            except ValueError:
                out.append(p)
    return out if len(out) > 1 else out[0]


def _scale(value, factor):
    if isinstance(value, list):
        return [_scale(v, factor) for v in value]
    if isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}")
    return value * factor


def parse_config(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines into canonical units.

    A recognised unit suffix is stripped from the key and the value is
    converted to seconds, bits or bits/second, so ``l_bytes = 256`` yields
    ``{"l": 2048.0}``.  Comma-separated values become lists.
    """
    out: dict = {}
    origin: dict = {}
    for no, line in _data_lines(text):
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.split("#", 1)[0].strip()
        if not sep or not key or not raw:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        value = _parse_value(raw)
        base = key
        for suffix, factor in UNIT_SUFFIXES.items():
            if key.endswith(suffix) and len(key) > len(suffix):
                base = key[: -len(suffix)]
                try:
                    value = _scale(value, factor)
                except ConfigError as exc:
                    raise ConfigError(f"{source}:{no}: {exc}") from None
                break
        if base in out:
            raise ConfigError(f"{source}:{no}: {key!r} repeats {origin[base]!r}")
        out[base], origin[base] = value, key
    return out


def read_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


# -- IO delay table -------------------------------------------------------------


def read_io_table(path) -> IoDelayTable:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = _data_lines(text)
    first = next(lines, None)
    if first is None or first[1].split(",") != IO_TABLE_HEADER:
        raise TraceFormatError(f"{path}: expected header {','.join(IO_TABLE_HEADER)}")
    entries = {}
    for no, line in lines:
        try:
            lb, load, us = line.split(",")
            entries[(int(lb), float(load))] = float(us) * 1e-6
        except ValueError:
            raise TraceFormatError(f"{path}:{no}: malformed IO delay row") from None
    if not entries:
        raise ConfigError(f"{path}: IO delay table is empty")
    return IoDelayTable(entries)


def write_io_table(table: IoDelayTable, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(IO_TABLE_HEADER)
    for (lb, load), v in sorted(table.entries.items()):
        w.writerow([lb, repr(load), repr(round(v * 1e6, 9))])
    atomic_write(path, buf.getvalue())


# -- reference data -----------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceDataset:
    """Testbed tables in canonical units.

    ``service`` maps length in bytes to ``(R_bps, e_s)``; ``max_delay`` maps
    ``(length_bytes, load, burst)`` to the measured maximum delay in
    seconds and ``max_delay_variance`` keeps the spread column verbatim.
    """

    name: str
    io_delay: IoDelayTable
    service: dict
    max_delay: dict
    max_delay_variance: dict
    anchors: dict


_FILES = ("io_delay.csv", "service.csv", "max_delay.csv",
          "anchors.csv")


def _reference_root(name: str) -> Path:
    return Path(str(resources.files("delaybound") / "data" / name))


def _verify(root: Path) -> None:
    sums = root / "SHA256SUMS"
    if not sums.is_file():
        raise ReferenceDataError(f"{root}: missing SHA256SUMS")
    expected = {}
    for line in sums.read_text(encoding="utf-8").splitlines():
        digest, _, fname = line.partition("  ")
        expected[fname.strip()] = digest.strip()
    for fname in _FILES:
        path = root / fname
        if not path.is_file():
            raise ReferenceDataError(f"{path}: reference file missing")
        got = hashlib.sha256(path.read_bytes()).hexdigest()
        if expected.get(fname) != got:
            raise ReferenceDataError(f"{path}: checksum mismatch")


def _rows(path: Path):
    lines = _data_lines(path.read_text(encoding="utf-8"))
    header = next(lines)[1].split(",")
    for _, line in lines:
        yield dict(zip(header, line.split(",")))


def load_reference(name: str = "testbed", root=None) -> ReferenceDataset:
    """Load and checksum-verify a shipped reference dataset."""
    root = Path(root) if root is not None else _reference_root(name)
    if not root.is_dir():
        raise ReferenceDataError(f"unknown reference dataset {name!r}")
    _verify(root)
    try:
        io_delay = read_io_table(root / "io_delay.csv")
        service = {int(r["length_bytes"]): (float(r["service_rate_mbps"]) * 1e6,
                                           float(r["error_term_us"]) * 1e-6)
                  for r in _rows(root / "service.csv")}
        max_delay, variance = {}, {}
        for r in _rows(root / "max_delay.csv"):
            key = (int(r["length_bytes"]), float(r["load_fraction"]))
            max_delay[key + (int(r["burst"]),)] = float(r["max_delay_us"]) * 1e-6
            variance[key] = float(r["variance"])
        anchors = {r["name"]: float(r["value_us"]) * 1e-6
                   for r in _rows(root / "anchors.csv")}
    except (KeyError, ValueError, StopIteration) as exc:
        raise ReferenceDataError(f"{root}: corrupt reference data ({exc})") from None
    return ReferenceDataset(name, io_delay, service, max_delay, variance, anchors)


def default_io_table() -> IoDelayTable:
    return load_reference().io_delay


# -- reports -------------------------------------------------------------------------


def _us(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(round(x * 1e6, 6))


def sweep_to_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([r.length_bytes, repr(r.load), r.n, r.source, repr(r.R), _us(r.e),
                    _us(r.max_delay), _us(r.bound("ideal")), _us(r.bound("a")),
                    _us(r.bound("b")), _us(r.bound("c")),
                    "; ".join(f"{k}: {v}" for k, v in sorted(r.errors.items()))])
    return buf.getvalue()


def write_sweep(rows, path) -> None:
    atomic_write(path, sweep_to_text(rows))


def estimation_report_text(result: EstimationResult) -> str:
    lines = [
        f"R_hat_bps = {result.R_hat!r}",
        f"e_hat_us = {result.e_hat * 1e6!r}",
        f"io_delay_us = {result.io_delay * 1e6!r}",
        f"e_with_io_us = {result.e_with_io * 1e6!r}",
        f"C_bps = {result.C!r}",
        f"search_step_bps = {result.step!r}",
        f"iterations = {result.iterations}",
    ]
    lines += [f"# warning: {w}" for w in result.warnings]
    return "\n".join(lines) + "\n"


def write_estimation_report(result: EstimationResult, path, slack_path=None) -> None:
    atomic_write(path, estimation_report_text(result))
    if slack_path is not None:
        buf = io.StringIO()
        buf.write("packet_index,slack_ns\n")
        for i, s in enumerate(result.slack_profile.tolist()):
            buf.write(f"{i},{s * 1e9:.3f}\n")
        atomic_write(slack_path, buf.getvalue())
