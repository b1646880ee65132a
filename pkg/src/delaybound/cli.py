"""
Command-line front end.

Subcommands::

    delaybound gen       --config src.cfg --out arrivals.csv
    delaybound sim       --arrivals arrivals.csv --config server.cfg --out trace.csv
    delaybound estimate  --trace trace.csv --C-bps 1e9 --out estimate.txt
    delaybound bound     --config flow.cfg --model all --out bounds.csv
    delaybound compare   --config sweep.cfg --out compare.csv
    delaybound curve     --config flow.cfg --curve a --out curve.csv

Configuration files hold ``key = value`` lines; a unit suffix on the key
(``_bps``, ``_mbps``, ``_gbps``, ``_bits``, ``_bytes``, ``_s``, ``_us``, ``_ns``)
converts the value.  Recognised keys:

* server: ``R``, ``e``, ``C`` (default 1 Gbit/s), ``p_in`` (default
  infinite), ``jitter`` (default 0), ``seed``
* flow: ``l``, ``n``, ``load``, ``r`` (default ``load * C``), ``b`` (default
  ``n * l``), ``p`` (link speed, default ``C``), ``T`` (default ``b / r``),
  ``r_p`` (sending device rate, default ``p``)
* source: ``source`` (``real_source`` or ``ideal_periodic``),
  ``total_packets``
* sweep: ``lengths`` (bytes, list), ``loads`` (list), ``bursts`` (list),
  ``bursts_per_point``, ``server_params = reference`` to take ``R`` and
  ``e`` per length from the shipped testbed table

Every output file gets a ``<out>.manifest.json`` next to it.  Exit codes:
0 success, 1 usage or configuration error, 2 precondition failure
(instability, infeasible source, failed estimation), 3 I/O error.
Errors are printed to stderr as one ``error code=.. type=.. msg=..`` line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, curves, estimator, models, simulator, trace_io
from .errors import (
    ConfigError,
    DelayBoundError,
    DomainError,
    EstimationError,
    HorizonError,
    PreconditionError,
    ReferenceDataError,
    TraceFormatError,
)
from .trace import MeasuredTrace

ARRIVALS_HEADER = ["packet_id", "length_bytes", "arrival_ns"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- config resolution ------------------------------------------------------------


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing configuration key {key!r}")
    return cfg[key]


def _num(cfg: dict, key: str, default=None) -> float:
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(f"missing configuration key {key!r}")
    if isinstance(value, (str, list)):
        raise ConfigError(f"configuration key {key!r} must be a single number")
    return float(value)


def server_from_config(cfg: dict) -> models.RateLatencyServer:
    return models.RateLatencyServer(_num(cfg, "R"), _num(cfg, "e", 0.0), _num(cfg, "C", 1e9))


def sim_server_from_config(cfg: dict, seed=None) -> simulator.ServerConfig:
    return simulator.ServerConfig(
        R=_num(cfg, "R"), e_proc=_num(cfg, "e", 0.0), p_in=_num(cfg, "p_in", math.inf),
        jitter=_num(cfg, "jitter", 0.0),
        seed=int(seed if seed is not None else cfg.get("seed", 0)))


def flow_params(cfg: dict) -> dict:
    """Fill derived flow parameters from the ones given."""
    C = _num(cfg, "C", 1e9)
    l = _num(cfg, "l")
    out = {"C": C, "l": l}
    if "n" in cfg:
        out["n"] = int(_num(cfg, "n"))
    if "load" in cfg:
        out["load"] = _num(cfg, "load")
    out["r"] = _num(cfg, "r", out["load"] * C if "load" in out else None)
    out["b"] = _num(cfg, "b", out["n"] * l if "n" in out else None)
    out["p"] = _num(cfg, "p", C)
    out["T"] = _num(cfg, "T", out["b"] / out["r"])
    out["r_p"] = _num(cfg, "r_p", out["p"])
    out.setdefault("n", max(1, int(round(out["b"] / l))))
    out.setdefault("load", out["r"] / C)
    return out


def flow_of(model: str, fp: dict):
    if model == "tb":
        return models.TokenBucketFlow(fp["r"], fp["b"])
    if model == "a":
        return models.FourTupleFlow(fp["p"], fp["l"], fp["r"], fp["b"])
    if model == "b":
        return models.PeriodicStaircaseFlow(fp["T"], fp["b"], fp["p"], fp["l"])
    if model == "c":
        return models.real_source_from_load(fp["l"], fp["n"], fp["load"], fp["C"], fp["r_p"])
    raise ConfigError(f"unknown model {model!r}")


def bound_of(model: str, fp: dict, server: models.RateLatencyServer) -> models.DelayBound:
    if model == "ideal":
        return models.ideal_delay(fp["l"], server.C)
    flow = flow_of(model, fp)
    fn = {"tb": models.token_bucket_bound, "a": models.model_a_bound,
          "b": models.model_b_bound, "c": models.model_c_bound}[model]
    return fn(flow, server)


# -- output helpers ---------------------------------------------------------------


def _manifest(args, command: str, config: dict, inputs: dict, outputs: list) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v

    doc = {
        "subcommand": command,
        "tool_version": __version__,
        "seed": args.seed,
        "config": {k: clean(v) for k, v in sorted(config.items())},
        "inputs": inputs,
        "outputs": outputs,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(args, command, config, inputs, files: dict) -> None:
    """Write ``{path: text}`` atomically, then the manifest of the first."""
    for path, text in files.items():
        trace_io.atomic_write(path, text)
    main_out = next(iter(files))
    trace_io.atomic_write(f"{main_out}.manifest.json",
                          _manifest(args, command, config, inputs, list(files)))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_arrivals(path) -> simulator.Arrivals:
    """Arrivals file from ``gen``; a full trace file is also accepted."""
    text = Path(path).read_text(encoding="utf-8")
    rows = [line.split(",") for no, line in trace_io._data_lines(text)]
    if not rows or rows[0][:3] != ARRIVALS_HEADER:
        raise TraceFormatError(f"{path}: expected header starting {','.join(ARRIVALS_HEADER)}")
    try:
        a = np.array([[int(x) for x in r[:3]] for r in rows[1:]], dtype=np.int64).reshape(-1, 3)
    except ValueError:
        raise TraceFormatError(f"{path}: fields must be integers") from None
    if np.any(np.diff(a[:, 2]) < 0):
        raise TraceFormatError(f"{path}: arrivals must be non-decreasing")
    return simulator.Arrivals(a[:, 0], a[:, 1] * 8.0, a[:, 2] / 1e9)


# -- subcommands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = trace_io.read_config(args.config)
    fp = flow_params(cfg)
    flow = models.real_source_from_load(fp["l"], fp["n"], fp["load"], fp["C"], fp["r_p"])
    src = simulator.SourceConfig(str(cfg.get("source", "real_source")),
                                 int(_need(cfg, "total_packets")))
    arr = simulator.generate_arrivals(src, flow)
    rows = zip(arr.packet_id.tolist(), (arr.length // 8).astype(int).tolist(),
               np.rint(arr.time * 1e9).astype(np.int64).tolist())
    _emit(args, "gen", cfg, {"config": args.config},
          {args.out: _csv_text(ARRIVALS_HEADER, rows)})
    return 0


def cmd_sim(args) -> int:
    cfg = trace_io.read_config(args.config)
    if args.arrivals:
        arr = _read_arrivals(args.arrivals)
    else:
        fp = flow_params(cfg)
        flow = models.real_source_from_load(fp["l"], fp["n"], fp["load"], fp["C"], fp["r_p"])
        arr = simulator.generate_arrivals(
            simulator.SourceConfig(str(cfg.get("source", "real_source")),
                                   int(_need(cfg, "total_packets"))), flow)
    server = sim_server_from_config(cfg, args.seed)
    rep = simulator.simulate(arr, server)
    files = {args.out: trace_io.trace_to_text(rep.trace)}
    if args.report:
        rows = zip(rep.trace.packet_id.tolist(),
                   *(np.round(x * 1e9, 3).tolist() for x in
                     (rep.per_packet_delay, rep.t_queue, rep.t_proc, rep.t_trans)))
        files[args.report] = _csv_text(
            ["packet_id", "delay_ns", "queue_ns", "proc_ns", "trans_ns"], rows)
    _emit(args, "sim", cfg, {"config": args.config, "arrivals": args.arrivals}, files)
    print(f"max_delay_us = {rep.max_delay * 1e6!r}")
    return 0


def cmd_estimate(args) -> int:
    trace = trace_io.read_trace(args.trace)
    search = estimator.SearchConfig(method=args.method,
                                    jitter_floor=args.jitter_floor_ns * 1e-9,
                                    resolution=args.resolution)
    result = estimator.estimate(trace, args.C_bps, search)
    if args.io_table or args.length_bytes:
        table = (trace_io.read_io_table(args.io_table) if args.io_table
                 else trace_io.default_io_table())
        length = args.length_bytes or int(np.median(trace.length) // 8)
        result = estimator.apply_io_correction(result, table, length)
    text = trace_io.estimation_report_text(result)
    files = {args.out: text}
    if args.slack_out:
        files[args.slack_out] = _csv_text(
            ["packet_index", "slack_ns"],
            ((i, f"{s * 1e9:.3f}") for i, s in enumerate(result.slack_profile.tolist())))
    _emit(args, "estimate", {"C": args.C_bps, "method": args.method,
                             "jitter_floor_ns": args.jitter_floor_ns},
          {"trace": args.trace, "io_table": args.io_table}, files)
    sys.stdout.write(text)
    return 0


BOUND_HEADER = ["model", "value_us", "components_us", "error"]


def cmd_bound(args) -> int:
    cfg = trace_io.read_config(args.config)
    server = server_from_config(cfg)
    fp = flow_params(cfg)
    names = ["ideal", "tb", "a", "b", "c"] if args.model == "all" else [args.model]
    rows, failed = [], None
    for name in names:
        try:
            bd = bound_of(name, fp, server)
        except (PreconditionError, DomainError) as exc:
            if len(names) == 1:
                raise
            failed = failed or exc
            rows.append([name, "", "", f"{type(exc).__name__}: {exc}"])
            continue
        comps = " ".join(f"{k}={v * 1e6:.6f}" for k, v in bd.components.items())
        rows.append([name, f"{bd.value * 1e6:.6f}", comps, ""])
    text = _csv_text(BOUND_HEADER, rows)
    _emit(args, "bound", cfg, {"config": args.config}, {args.out: text})
    sys.stdout.write(text)
    if failed is not None:
        raise failed
    return 0


def cmd_compare(args) -> int:
    cfg = trace_io.read_config(args.config)

    def as_list(key):
        v = cfg.get(key, [])
        return v if isinstance(v, list) else [v]

    lengths = [int(round(x / 8)) for x in as_list("lengths")]
    grid = [(lb, float(ld), int(n)) for lb in lengths for ld in as_list("loads")
            for n in as_list("bursts")]
    C = _num(cfg, "C", 1e9)
    r_p = _num(cfg, "r_p", C)
    if cfg.get("server_params") == "reference":
        ref = trace_io.load_reference()
        server = {lb: simulator.ServerConfig(R, e, _num(cfg, "p_in", r_p), _num(cfg, "jitter", 0.0),
                                             int(args.seed or 0))
                  for lb, (R, e) in ref.service.items()}
        missing = [lb for lb in lengths if lb not in server]
        if missing:
            raise ConfigError(f"no reference server parameters for lengths {missing}")
    else:
        server = sim_server_from_config({"p_in": r_p, **cfg}, args.seed)
    rows = simulator.max_delay_sweep(
        grid, server, str(cfg.get("source", "real_source")), C=C, r_p=r_p,
        bursts=int(cfg.get("bursts_per_point", 50)), workers=args.workers)
    _emit(args, "compare", cfg, {"config": args.config},
          {args.out: trace_io.sweep_to_text(rows)})
    return 0


def cmd_curve(args) -> int:
    cfg = trace_io.read_config(args.config)
    if args.curve == "service":
        curve = models.service_curve(server_from_config(cfg))
    else:
        curve = models.curve_of(flow_of(args.curve, flow_params(cfg)), args.periods)
    _emit(args, "curve", cfg, {"config": args.config}, {args.out: curves.export_csv(curve)})
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", required=True, help="output file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--io-table", default=None, help="IO delay table CSV")

    p = _Parser(prog="delaybound", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen", parents=[common], help="generate source arrivals")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("sim", parents=[common], help="simulate the FIFO node")
    s.add_argument("--config", required=True, help="server (and source) parameters")
    s.add_argument("--arrivals", default=None, help="arrivals or trace CSV")
    s.add_argument("--report", default=None, help="per-packet delay breakdown CSV")
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("estimate", parents=[common], help="estimate (R, e) from a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--C-bps", dest="C_bps", type=float, default=1e9)
    s.add_argument("--method", choices=["bisect", "linear"], default="bisect")
    s.add_argument("--jitter-floor-ns", type=float, default=50.0)
    s.add_argument("--resolution", type=float, default=1e-4)
    s.add_argument("--length-bytes", type=int, default=None,
                   help="packet length class for the IO correction")
    s.add_argument("--slack-out", default=None, help="slack profile CSV")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("bound", parents=[common], help="closed-form delay bounds")
    s.add_argument("--config", required=True)
    s.add_argument("--model", choices=["ideal", "tb", "a", "b", "c", "all"], default="all")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("compare", parents=[common], help="simulated vs bounded delay sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("curve", parents=[common], help="export a curve as CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--curve", choices=["tb", "a", "b", "c", "service"], required=True)
    s.add_argument("--periods", type=int, default=curves.DEFAULT_PERIODS)
    s.set_defaults(func=cmd_curve)
    return p


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f"error code={code} type={type(exc).__name__} msg={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        return _fail(1, exc)
    except (TraceFormatError, ReferenceDataError, OSError) as exc:
        return _fail(3, exc)
    except (PreconditionError, EstimationError, HorizonError, DomainError) as exc:
        return _fail(2, exc)
    except DelayBoundError as exc:
        return _fail(2, exc)


if __name__ == "__main__":
    sys.exit(main())
