"""``siriette`` command line.

Exit codes: 0 on success (fallback included), 1 for errors the user can
act on (bad input, missing tables, exhausted memory, unreachable nodes),
2 for anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import statistics
import subprocess
import sys
import time
from pathlib import Path
from typing import Optional

from . import queries
from .columnar import read_csv, write_csv
from .config import EngineConfig, load_config, parse_bytes
from .coordinator.daemon import NodeDaemon, RemoteCluster
from .datagen import GenSpec, generate, write_tables
from .dtypes import Schema
from .engine import Engine
from .errors import (
    BindError,
    CacheFull,
    CoordinatorUnreachable,
    DispatchTimeout,
    NoAliveNodes,
    NodeLost,
    ProcessingExhausted,
    TableExists,
    UserError,
)
from .oracle import run_oracle, run_with_fallback
from .plan_ir import parse_plan
from .plan_ir.nodes import Read
from .workspace import Workspace

log = logging.getLogger("siriette")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2
USER_ERRORS = (UserError, OSError, CacheFull, ProcessingExhausted, BindError, CoordinatorUnreachable,
               NoAliveNodes, NodeLost, DispatchTimeout, json.JSONDecodeError)
TRACE = 5
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG, "trace": TRACE}
DEFAULT_DATA_DIR = "siriette-data"


def setup_logging() -> None:
    logging.addLevelName(TRACE, "TRACE")
    name = os.environ.get("SIRIETTE_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name, logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


# -- shared helpers -----------------------------------------------------------

def make_config(args) -> EngineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else EngineConfig()
    changes = {}
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if getattr(args, "memory", None) is not None:
        changes["memory_total_bytes"] = parse_bytes(args.memory)
    return cfg.replace(**changes)


def read_plan(spec: str) -> bytes:
    """A plan file path, or the name of a bundled plan such as ``q6``."""
    path = Path(spec)
    if path.is_file():
        return path.read_bytes()
    if spec in queries.names():
        return queries.load(spec)
    raise FileNotFoundError(f"no plan file {spec!r} (bundled plans: {', '.join(queries.names())})")


def plan_tables(document: bytes) -> list:
    seen, stack = set(), [parse_plan(document).root]
    while stack:
        node = stack.pop()
        if isinstance(node, Read):
            seen.add(node.table)
        stack.extend(node.inputs)
    return sorted(seen)


def engine_with_tables(cfg: EngineConfig, ws: Workspace, names) -> Engine:
    engine = Engine(cfg)
    for name in names:
        engine.load_table(ws.load(name))
    return engine


def execute(engine: Engine, document: bytes, mode: str, workers: Optional[int], profile: bool):
    """(result, engine tag, report or None)."""
    if mode == "oracle":
        return run_oracle(engine, document), "oracle", None
    result, used = run_with_fallback(engine, document, workers, profile)
    if used.tag == "fallback":
        print(f"note: ran on the reference executor ({used.reason_name}: {used.reason})", file=sys.stderr)
    return result, used.tag, engine.last_profile


def parse_address(text: str) -> tuple:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise UserError(f"address must be host:port, got {text!r}")
    return host, int(port)


# -- commands -----------------------------------------------------------------

def cmd_load(args) -> int:
    cfg = make_config(args)
    schema = Schema.from_json(json.loads(Path(args.schema).read_text()))
    name = args.name or Path(args.csv).stem
    ws = Workspace(args.data_dir)
    if name in ws and not args.replace:
        raise TableExists(f"table {name!r} is already loaded")
    table = read_csv(args.csv, schema, name, header=args.header, batch_rows=cfg.batch_size_rows)
    engine = Engine(cfg)
    engine.load_table(table)  # CacheFull surfaces here, before anything is written
    entry = engine.buffers.cached(name)
    ws.save(table, replace=args.replace)
    print(f"loaded {name}: {table.num_rows} rows, {entry.resident_bytes} bytes cached")
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = GenSpec(args.seed, args.scale)
    if spec.scale <= 0:
        raise UserError("--scale must be positive")
    tables = generate(spec)
    paths = write_tables(tables, args.out)
    for name, t in tables.items():
        print(f"{paths[name]}: {t.num_rows} rows")
    if args.load:
        ws = Workspace(args.data_dir)
        for t in tables.values():
            ws.save(t, replace=True)
        print(f"loaded {len(tables)} tables into {args.data_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = make_config(args)
    document = read_plan(args.plan)
    engine = engine_with_tables(cfg, Workspace(args.data_dir), plan_tables(document))
    result, _, report = execute(engine, document, args.engine, cfg.workers, args.profile)
    write_csv(result, sys.stdout, header=not args.no_header)
    if args.profile:
        if report is None:
            print("profile: not available for the reference executor", file=sys.stderr)
        else:
            print(report.format(), file=sys.stderr)
            if args.profile_json:
                Path(args.profile_json).write_text(json.dumps(report.to_json(), indent=2) + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = make_config(args)
    coordinator = parse_address(args.coordinator) if args.coordinator else None
    daemon = NodeDaemon(args.node_id, parse_address(args.listen), coordinator, cfg)
    signal.signal(signal.SIGTERM, lambda *_: daemon.stop())
    print(f"node {args.node_id} listening on {daemon.address[0]}:{daemon.address[1]}", flush=True)
    try:
        daemon.serve_forever()
    except KeyboardInterrupt:
        daemon.stop()
    return EXIT_OK


def _spawn_daemons(n: int, coordinator: tuple, args) -> list:
    procs = []
    for i in range(n):
        cmd = [sys.executable, "-m", "siriette", "serve", "--node-id", str(i), "--listen", "127.0.0.1:0",
               "--coordinator", f"{coordinator[0]}:{coordinator[1]}"]
        if args.config:
            cmd += ["--config", args.config]
        if args.memory:
            cmd += ["--memory", args.memory]
        procs.append(subprocess.Popen(cmd, stdout=subprocess.DEVNULL))
    return procs


def cmd_dist_run(args) -> int:
    cfg = make_config(args)
    document = read_plan(args.plan)
    ws = Workspace(args.data_dir)
    names = plan_tables(document)
    tables = [ws.load(n) for n in names]
    procs = []
    with RemoteCluster(cfg, listen=parse_address(args.listen), timeout=args.timeout) as cluster:
        try:
            if args.nodes.isdigit():
                procs = _spawn_daemons(int(args.nodes), cluster.address, args)
                cluster.wait_for_nodes(int(args.nodes), timeout=args.timeout)
            else:
                for addr in args.nodes.split(","):
                    cluster.add_node(parse_address(addr.strip()))
            for t in tables:
                cluster.load_table(t)
            cluster.heartbeat()
            result, q = cluster.run(document, workers=cfg.workers)
            write_csv(result, sys.stdout, header=not args.no_header)
            if args.profile:
                print(cluster.timing_report(q).format(), file=sys.stderr)
                for node, rep in sorted(cluster.node_reports.get(q.query_id, {}).items()):
                    cats = " ".join(f"{k}={v * 1e3:.3f}ms" for k, v in rep["categories"].items())
                    print(f"node {node}: total={rep['total'] * 1e3:.3f}ms {cats}", file=sys.stderr)
        finally:
            for p in procs:
                p.terminate()
            for p in procs:
                try:
                    p.wait(5)
                except subprocess.TimeoutExpired:
                    p.kill()
    return EXIT_OK


def _query_files(path: Optional[str]) -> dict:
    if path is None:
        return {name: queries.load(name) for name in queries.TPCH}
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise UserError(f"no *.json plans in {path}")
    return {f.stem: f.read_bytes() for f in files}


def cmd_bench(args) -> int:
    cfg = make_config(args)
    plans = _query_files(args.queries)
    ws = Workspace(args.data_dir)
    if args.scale is not None:
        generated = generate(GenSpec(args.seed, args.scale))
        source = generated.__getitem__
    else:
        source = ws.load
    report = {"config": cfg.to_dict(), "engine": args.engine, "repetitions": args.repetitions, "queries": {}}
    for name, document in plans.items():
        entry: dict = {"status": "ok"}
        try:
            names = plan_tables(document)
            # cold: tables are brought into the caching region as part of the run
            t0 = time.perf_counter()
            engine = Engine(cfg)
            for n in names:
                engine.load_table(source(n))
            _, tag, _ = execute(engine, document, args.engine, cfg.workers, False)
            entry["cold_s"] = time.perf_counter() - t0
            hot, report_json = [], None
            for _ in range(args.repetitions):
                t0 = time.perf_counter()
                _, tag, prof = execute(engine, document, args.engine, cfg.workers, True)
                hot.append(time.perf_counter() - t0)
                if prof is not None:
                    report_json = prof.to_json()
            entry.update(engine_used=tag, hot_s=hot, hot_median_s=statistics.median(hot) if hot else None,
                         breakdown=report_json)
        except Exception as exc:  # noqa: BLE001 - a failed query is recorded, the bench goes on
            entry = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        report["queries"][name] = entry
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    print(format_bench(report))
    return EXIT_OK


def format_bench(report: dict) -> str:
    lines = [f"{'query':<16}{'engine':<10}{'cold ms':>12}{'hot median ms':>16}  breakdown"]
    for name, e in report["queries"].items():
        if e["status"] != "ok":
            lines.append(f"{name:<16}{'FAILED':<10}  {e['error']}")
            continue
        hot = f"{e['hot_median_s'] * 1e3:16.3f}" if e["hot_median_s"] is not None else f"{'-':>16}"
        parts = ""
        if e.get("breakdown"):
            cats = e["breakdown"]["categories"]
            parts = " ".join(f"{k}={v * 1e3:.2f}" for k, v in cats.items() if v > 0)
        lines.append(f"{name:<16}{e['engine_used']:<10}{e['cold_s'] * 1e3:12.3f}{hot}  {parts}")
    return "\n".join(lines)


# -- argument parsing ---------------------------------------------------------

def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="key=value engine configuration file")
    p.add_argument("--workers", type=int, help="executor worker threads")
    p.add_argument("--memory", help="total buffer memory, e.g. 1GiB (split 50/50)")
    if data:
        p.add_argument("--data-dir", default=DEFAULT_DATA_DIR, help="table store (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siriette", description="Plan-native analytical query engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="ingest a CSV file as a table")
    p.add_argument("csv")
    p.add_argument("--schema", required=True, help="JSON list of {name, type, nullable}")
    p.add_argument("--name", help="table name (default: file stem)")
    p.add_argument("--header", action="store_true", help="skip the first line")
    p.add_argument("--replace", action="store_true", help="overwrite an existing table")
    _common(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("gen", help="generate TPC-H-shaped CSV data")
    p.add_argument("--scale", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="tpch-data")
    p.add_argument("--load", action="store_true", help="also store the tables in --data-dir")
    p.add_argument("--data-dir", default=DEFAULT_DATA_DIR)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="execute a plan document on this machine")
    p.add_argument("plan", help="plan file or bundled plan name")
    p.add_argument("--engine", choices=("native", "oracle"), default="native")
    p.add_argument("--profile", action="store_true", help="print the category breakdown to stderr")
    p.add_argument("--profile-json", help="also write the breakdown as JSON")
    p.add_argument("--no-header", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run a node daemon")
    p.add_argument("--node-id", type=int, required=True)
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--coordinator", help="host:port to announce this node to")
    _common(p, data=False)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("dist-run", help="execute a plan over node daemons")
    p.add_argument("plan")
    p.add_argument("--nodes", required=True,
                   help="number of local daemons to start, or a comma list of host:port daemons")
    p.add_argument("--listen", default="127.0.0.1:0", help="coordinator address")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--profile", action="store_true")
    p.add_argument("--no-header", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_dist_run)

    p = sub.add_parser("bench", help="cold and hot timings for a set of plans")
    p.add_argument("queries", nargs="?", help="directory of plan files (default: bundled q1, q3, q6)")
    p.add_argument("--repetitions", type=int, default=3, help="hot runs per query")
    p.add_argument("--engine", choices=("native", "oracle"), default="native")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--scale", type=float, help="generate data in memory instead of using --data-dir")
    p.add_argument("--seed", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[list] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
