"""Operator entry point: serve the store, seed data, run scenarios, and
replay gate read streams against a live store."""

from __future__ import annotations

import argparse
import json
import socket
import sys

from . import gate
from .server import AppServer
from .sim import ScenarioError, Simulation, load_scenario
from .store import StoreLoadError
from .wire import (Complete, Malformed, Method, canonical_json, json_parse,
                   parse_http_response, request, serialize_http_request)

DEFAULT_PORT = 8084
DEFAULT_DATA = "./data"

EXIT_OK = 0
EXIT_SETUP = 2       # usage errors, unreadable files, bind failure
EXIT_DEGRADED = 3    # faults, invariant violations, missed deadline, fail-closed

FAIL_CLOSED = "store unreachable, failing closed"


class CliError(Exception):
    """Operator-facing failure before or during a command."""


# -- plain HTTP client --------------------------------------------------------------

def http_call(host: str, port: int, req, timeout: float = 5.0):
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(serialize_http_request(req))
        buf = b""
        while True:
            got = parse_http_response(buf)
            if isinstance(got, Complete):
                return got.message
            if isinstance(got, Malformed):
                raise OSError("bad response: %s" % got.reason)
            chunk = sock.recv(65536)
            if not chunk:
                raise OSError("connection closed mid-response")
            buf += chunk


# -- serve ---------------------------------------------------------------------------

def cmd_serve(args) -> int:
    try:
        server = AppServer(args.port, args.data_dir, host=args.host,
                           panel=args.panel,
                           assets_dir=args.assets if args.panel else None)
    except (OSError, StoreLoadError) as exc:
        print("serve: %s" % exc, file=sys.stderr)
        return EXIT_SETUP
    mode = " with panel" if args.panel else ""
    print("serve: listening on %s:%d%s, data in %s"
          % (args.host, server.port, mode, args.data_dir), file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


# -- seed ----------------------------------------------------------------------------

def _load_seed_file(path: str | None, what: str) -> list:
    if path is None:
        return []
    try:
        with open(path, "rb") as fh:
            docs = json.loads(fh.read().decode("utf-8"))
    except (OSError, ValueError) as exc:
        raise CliError("cannot read %s file %s: %s" % (what, path, exc))
    if not isinstance(docs, list):
        raise CliError("%s file must hold a JSON list" % what)
    seen = set()
    for doc in docs:
        if not (isinstance(doc, dict) and isinstance(doc.get("_id"), str)
                and doc["_id"]):
            raise CliError("every %s document needs a string _id" % what)
        if doc["_id"] in seen:
            raise CliError("duplicate %s _id %s" % (what, doc["_id"]))
        seen.add(doc["_id"])
        if not isinstance(doc.get("name"), str):
            raise CliError("%s %s needs a name" % (what, doc["_id"]))
        money_key = "cash" if what == "users" else "cost"
        value = doc.get(money_key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise CliError("%s %s needs non-negative integer %s"
                           % (what, doc["_id"], money_key))
    return docs


def cmd_seed(args) -> int:
    try:
        users = _load_seed_file(args.users, "users")
        tags = _load_seed_file(args.tags, "tags")
    except CliError as exc:
        print("seed: %s" % exc, file=sys.stderr)
        return EXIT_SETUP
    try:
        if args.reset:
            resp = http_call(args.host, args.port, request(Method.POST, "/admin/reset"))
            if resp.status != 200:
                raise CliError("reset failed with status %d" % resp.status)
        for db, docs in (("users", users), ("tags", tags)):
            for doc in docs:
                resp = http_call(args.host, args.port,
                                 request(Method.GET, "/%s/%s" % (db, doc["_id"])))
                if resp.status == 200:
                    raise CliError("%s %s already exists (use --reset)"
                                   % (db, doc["_id"]))
        created: list[tuple[str, str, str]] = []
        for db, docs in (("users", users), ("tags", tags)):
            for doc in docs:
                body = dict(doc)
                if db == "users":
                    body.setdefault("history", [])
                resp = http_call(args.host, args.port,
                                 request(Method.PUT, "/%s/%s" % (db, doc["_id"]),
                                         canonical_json(body)))
                if resp.status != 201:
                    _roll_back(args, created)
                    raise CliError("PUT /%s/%s failed with status %d"
                                   % (db, doc["_id"], resp.status))
                created.append((db, doc["_id"], json_parse(resp.body)["rev"]))
    except OSError as exc:
        print("seed: store unreachable: %s" % exc, file=sys.stderr)
        return EXIT_SETUP
    except CliError as exc:
        print("seed: %s" % exc, file=sys.stderr)
        return EXIT_SETUP
    print("%d tag%s, %d user%s" % (len(tags), "" if len(tags) == 1 else "s",
                                   len(users), "" if len(users) == 1 else "s"))
    return EXIT_OK


def _roll_back(args, created: list) -> None:
    """Tombstone everything this command created, so GETs see the prior state."""
    for db, doc_id, rev in created:
        try:
            http_call(args.host, args.port,
                      request(Method.DELETE, "/%s/%s?rev=%s" % (db, doc_id, rev)))
        except OSError:
            pass


# -- run -----------------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        sim = Simulation(scenario, seed=args.seed, horizon=args.horizon)
    except ScenarioError as exc:
        print("run: %s" % exc, file=sys.stderr)
        return EXIT_SETUP
    report = sim.run()
    blob = canonical_json(report) + b"\n"
    if args.report:
        try:
            with open(args.report, "wb") as fh:
                fh.write(blob)
        except OSError as exc:
            print("run: cannot write report: %s" % exc, file=sys.stderr)
            return EXIT_SETUP
        print("run: report written to %s" % args.report, file=sys.stderr)
    else:
        sys.stdout.buffer.write(blob)
        sys.stdout.buffer.flush()
    degraded = (bool(report["faults"]) or not report["invariants"]["ok"]
                or report["deadline_exceeded"])
    if degraded:
        _dump_stuck(sim, report)
        return EXIT_DEGRADED
    return EXIT_OK


def _dump_stuck(sim: Simulation, report: dict) -> None:
    if report["deadline_exceeded"]:
        print("run: deadline exceeded at %d ms" % report["horizon_ms"],
              file=sys.stderr)
    for violation in report["invariants"]["violations"]:
        print("run: invariant violated: %s" % violation, file=sys.stderr)
    for host in sim.carts:
        fsm = host.fsm
        print("run: cart %s: phase=%s op=%s fault=%s"
              % (host.id, fsm.phase.value,
                 fsm.op.kind if fsm.op else "-", fsm.fault_reason or "-"),
              file=sys.stderr)


# -- gate ----------------------------------------------------------------------------

def _load_stream(path: str, default_lane: str) -> list:
    reads = []
    try:
        with open(path, "rb") as fh:
            lines = fh.read().decode("utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError("cannot read stream file %s: %s" % (path, exc))
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except ValueError as exc:
            raise CliError("%s:%d: %s" % (path, lineno, exc))
        if not isinstance(entry, dict):
            raise CliError("%s:%d: read must be an object" % (path, lineno))
        at = entry.get("at")
        uid = entry.get("uid")
        lane = entry.get("lane", default_lane)
        if not isinstance(at, int) or isinstance(at, bool) or at < 0:
            raise CliError("%s:%d: needs a non-negative integer at" % (path, lineno))
        if not (isinstance(uid, str) and uid.isalnum()):
            raise CliError("%s:%d: needs an alphanumeric uid" % (path, lineno))
        if not (isinstance(lane, str) and lane):
            raise CliError("%s:%d: lane must be a non-empty string" % (path, lineno))
        reads.append(gate.GateRead(at, lane, uid))
    return reads


def cmd_gate(args) -> int:
    try:
        reads = _load_stream(args.stream, args.lane)
    except CliError as exc:
        print("gate: %s" % exc, file=sys.stderr)
        return EXIT_SETUP

    def lookup(uid: str):
        try:
            resp = http_call(args.host, args.port,
                             request(Method.GET, "/tags/%s" % uid))
            return resp.status
        except OSError:
            return None

    verdicts = gate.process_stream(reads, lookup)
    for verdict in verdicts:
        sys.stdout.buffer.write(canonical_json(gate.to_record(verdict)) + b"\n")
    sys.stdout.buffer.flush()
    if any(v.reason == FAIL_CLOSED for v in verdicts):
        return EXIT_DEGRADED
    return EXIT_OK


# -- argument plumbing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smartcart",
        description="RFID smart-cart checkout: store server, seeding, "
                    "simulation runs, and gate replay.")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="serve the document store over HTTP")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", default=DEFAULT_DATA)
    serve.add_argument("--panel", action="store_true",
                       help="also serve live cart endpoints and the browser panel")
    serve.add_argument("--assets", default="frontend/dist",
                       help="static files for the panel")
    serve.set_defaults(fn=cmd_serve)

    seed = sub.add_parser("seed", help="load user and tag documents into a live store")
    seed.add_argument("--users", help="JSON list of user documents")
    seed.add_argument("--tags", help="JSON list of tag documents")
    seed.add_argument("--reset", action="store_true",
                      help="wipe the store before seeding")
    seed.add_argument("--host", default="127.0.0.1")
    seed.add_argument("--port", type=int, default=DEFAULT_PORT)
    seed.set_defaults(fn=cmd_seed)

    run = sub.add_parser("run", help="run a scenario and write its report")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed (default: scenario value or 1)")
    run.add_argument("--horizon", type=int, default=None,
                     help="override the scenario horizon in ms")
    run.add_argument("--report", help="write the report here instead of stdout")
    run.set_defaults(fn=cmd_run)

    gate_cmd = sub.add_parser("gate", help="replay a gate read stream against a live store")
    gate_cmd.add_argument("--stream", required=True,
                          help="JSON-lines file of {at, uid[, lane]} reads")
    gate_cmd.add_argument("--lane", default="L1")
    gate_cmd.add_argument("--host", default="127.0.0.1")
    gate_cmd.add_argument("--port", type=int, default=DEFAULT_PORT)
    gate_cmd.set_defaults(fn=cmd_gate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


def entry() -> None:
    raise SystemExit(main(sys.argv[1:]))
