"""Deterministic discrete-event simulation: carts, modems, links, store, gates.

All time is virtual milliseconds. Every run of the same scenario and seed
produces a byte-identical report; randomness comes only from per-channel
SplitMix64 streams mixed from the link seed, the channel name, and the run
seed.
"""

from __future__ import annotations

import heapq
import itertools
import json
import os
from collections import deque
from dataclasses import dataclass

from . import atlink, cart, display, gate
from .store import NOT_FOUND, Store, fnv1a64
from .wire import (
    Complete, Malformed, json_response, parse_http_request, parse_http_response,
    serialize_http_request, serialize_http_response,
)

HORIZON_MS = 600_000
HTTP_TIMEOUT_MS = 2000   # waiting on a response for one request
LINK_TIMEOUT_MS = 3000   # waiting on wifi join or server connect
GATE_TIMEOUT_MS = 2000
SERIAL_RATE = 11520      # 115200 baud, 8N1: bytes per second

_MASK64 = (1 << 64) - 1


class ScenarioError(ValueError):
    pass


class SplitMix64:
    """Tiny deterministic PRNG; one instance per channel."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return self.next_u64() / 2.0 ** 64

    def randrange(self, n: int) -> int:
        return self.next_u64() % n


class Scheduler:
    """Min-heap of (time, seq) so same-time events keep submission order."""

    def __init__(self):
        self.now = 0
        self._heap = []
        self._seq = itertools.count()

    def at(self, time: int, fn) -> None:
        heapq.heappush(self._heap, (max(time, self.now), next(self._seq), fn))

    def after(self, delay: int, fn) -> None:
        self.at(self.now + delay, fn)

    def run(self, horizon: int) -> bool:
        """Drain all events; False if work remained beyond the horizon."""
        while self._heap:
            time, _, fn = heapq.heappop(self._heap)
            if time > horizon:
                return False
            self.now = time
            fn()
        return True


@dataclass
class LinkConfig:
    latency_ms: int = 0
    jitter_ms: int = 0
    drop: float = 0.0
    rate: int = 0          # bytes per second, 0 = unlimited
    seed: int = 0


DEFAULT_LINKS = {
    "serial": {"rate": SERIAL_RATE},
    "net": {"latency_ms": 20, "jitter_ms": 10},
}


class Channel:
    """One direction of a link: FIFO with byte rate, latency, and loss."""

    def __init__(self, sched: Scheduler, name: str, cfg: LinkConfig, run_seed: int):
        self.sched = sched
        self.cfg = cfg
        self.rng = SplitMix64(cfg.seed ^ fnv1a64(name.encode()) ^ run_seed)
        self.busy_until = 0
        self.last_arrival = 0
        self.dropped = 0

    def send(self, size: int, deliver) -> None:
        start = max(self.busy_until, self.sched.now)
        tx = (size * 1000 + self.cfg.rate - 1) // self.cfg.rate if self.cfg.rate else 0
        done = start + tx
        self.busy_until = done
        if self.cfg.drop > 0.0 and self.rng.uniform() < self.cfg.drop:
            self.dropped += 1
            return
        latency = self.cfg.latency_ms
        if self.cfg.jitter_ms:
            latency += self.rng.randrange(2 * self.cfg.jitter_ms + 1) - self.cfg.jitter_ms
        arrival = max(done + max(latency, 0), self.last_arrival)
        self.last_arrival = arrival
        self.sched.at(arrival, deliver)


def _msg_size(msg: tuple) -> int:
    return len(msg[2]) if msg[0] == "data" else 8


class NetPort:
    """A client's two-way message link to the server endpoint."""

    def __init__(self, sim: "Simulation", name: str, on_receive):
        self.name = name
        self.sim = sim
        self.on_receive = on_receive
        self.out = sim.channel("net", name, "out")
        self.inbound = sim.channel("net", name, "in")

    def send(self, msg: tuple) -> None:
        self.out.send(_msg_size(msg), lambda: self.sim.endpoint.on_message(self, msg))

    def deliver(self, msg: tuple) -> None:
        self.inbound.send(_msg_size(msg), lambda: self.on_receive(msg))


class StoreEndpoint:
    """Server side: one request per connection against the document store."""

    def __init__(self, sim: "Simulation", host: str, port: int):
        self.sim = sim
        self.host = host
        self.port = port
        self.conns: dict = {}
        self.requests = 0
        self.conflicts = 0

    def on_message(self, peer: NetPort, msg: tuple) -> None:
        kind = msg[0]
        if kind == "open":
            conn, host, port = msg[1], msg[2], msg[3]
            ok = (host, port) == (self.host, self.port)
            if ok:
                self.conns[(peer.name, conn)] = b""
            peer.deliver(("open_ack", conn, ok))
        elif kind == "data":
            conn, data = msg[1], msg[2]
            key = (peer.name, conn)
            if key not in self.conns:
                return
            self.conns[key] += data
            self._try_respond(peer, conn)
        elif kind == "close":
            self.conns.pop((peer.name, msg[1]), None)

    def _try_respond(self, peer: NetPort, conn: int) -> None:
        # connections stay open; clients send one request at a time
        key = (peer.name, conn)
        while key in self.conns:
            parsed = parse_http_request(self.conns[key])
            if isinstance(parsed, Malformed):
                resp = json_response(400, {"error": "bad_request"})
                self.conns[key] = b""
            elif isinstance(parsed, Complete):
                self.requests += 1
                resp = self.sim.store.handle_request(parsed.message)
                self.conns[key] = self.conns[key][parsed.consumed:]
            else:
                return  # need more bytes
            if resp.status == 409:
                self.conflicts += 1
            peer.deliver(("data", conn, serialize_http_response(resp)))
            if not self.conns.get(key):
                return


class ModemHost:
    """Wraps the pure modem state machine and wires it to the channels."""

    def __init__(self, sim: "Simulation", cart_id: str, ssid: str):
        self.state = atlink.ModemState(ap_ssid=ssid)
        self.port = NetPort(sim, "cart:%s" % cart_id, self.on_net)
        self.serial_in = sim.channel("serial", cart_id, "in")
        self.host: "CartHost | None" = None  # set by the cart host

    def on_serial(self, data: bytes) -> None:
        self._advance(atlink.SerialBytes(data))

    def on_net(self, msg: tuple) -> None:
        kind = msg[0]
        if kind == "open_ack":
            self._advance(atlink.NetOpenResult(msg[1], msg[2]))
        elif kind == "data":
            self._advance(atlink.NetData(msg[1], msg[2]))
        elif kind == "close":
            self._advance(atlink.NetClosed(msg[1]))

    def _advance(self, event) -> None:
        self.state, out, actions = atlink.modem_step(self.state, event)
        if out:
            self.serial_in.send(len(out), lambda d=out: self.host.on_serial(d))
        for act in actions:
            if isinstance(act, atlink.NetOpen):
                self.port.send(("open", act.conn, act.host, act.port))
            elif isinstance(act, atlink.NetSend):
                self.port.send(("data", act.conn, act.data))
            elif isinstance(act, atlink.NetClose):
                self.port.send(("close", act.conn))


class CartHost:
    """Runs one cart: firmware FSM, AT driver sequencing, and watchdogs."""

    def __init__(self, sim: "Simulation", cart_id: str, config: cart.CartConfig,
                 modem_ssid: str, events: list):
        self.sim = sim
        self.id = cart_id
        self.fsm = cart.CartFsm(config=config)
        self.modem = ModemHost(sim, cart_id, modem_ssid)
        self.modem.host = self
        self.serial_out = sim.channel("serial", cart_id, "out")
        self.tok = atlink.Tokenizer()
        # link protocol state
        self.expect: str | None = None
        self.conn_open = False
        self.request_bytes: bytes | None = None
        self.chunks: list = []
        self.current_chunk = b""
        self.resp_buf = b""
        self.awaiting_http = False
        self.http_token = 0
        self.link_token = 0
        self.link_seen = 0
        self.wakes: set = set()
        # report material
        self.phases = [[0, self.fsm.phase.value]]
        self.frames: list = []
        self.log: list = []
        self.http: list = []
        self.beeps = 0
        self.session_start: int | None = None
        self.sessions: list = []
        sim.sched.at(0, lambda: self.dispatch(cart.PowerOn()))
        for at, event in events:
            sim.sched.at(at, lambda e=event: self.dispatch(e))

    # -- firmware plumbing ------------------------------------------------------

    def dispatch(self, event) -> None:
        now = self.sim.sched.now
        if not isinstance(event, cart.Tick) and self.fsm.now < now:
            self._step(cart.Tick(now))
        self._step(event)

    def _step(self, event) -> None:
        prev = self.fsm.phase
        self.fsm, effects = cart.step(self.fsm, event)
        now = self.sim.sched.now
        if self.fsm.phase.value != self.phases[-1][1]:
            self.phases.append([now, self.fsm.phase.value])
        for eff in effects:
            if isinstance(eff, cart.Render):
                self.frames.append([now, display.frame_to_ascii(display.layout(eff.view))])
            elif isinstance(eff, cart.Log):
                self.log.append([now, eff.message])
            elif isinstance(eff, cart.Beep):
                self.beeps += 1
            elif isinstance(eff, cart.SendHttp):
                self._begin_http(eff.request)
        if self.fsm.phase is cart.Phase.BOOT:
            self.sim.sched.at(now, lambda: self.dispatch(cart.PowerOn()))
        if self.fsm.link_attempt != self.link_seen:
            self.link_seen = self.fsm.link_attempt
            self._bring_up()
        wake = cart.next_wake(self.fsm)
        if wake is not None and wake not in self.wakes:
            self.wakes.add(wake)
            self.sim.sched.at(wake, lambda w=wake: self._on_wake(w))
        # checkout session accounting: card accepted -> back at the card prompt
        if prev is cart.Phase.PAYING and self.fsm.phase is cart.Phase.AWAIT_CARD \
                and self.session_start is not None:
            self.sessions.append(now - self.session_start)
            self.session_start = None
        elif prev is cart.Phase.AWAIT_CARD and self.fsm.phase is prev \
                and self.fsm.op is None:
            self.session_start = None  # lookup rejected or idle
        if self.session_start is None and prev is cart.Phase.AWAIT_CARD \
                and self.fsm.op is not None and self.fsm.op.kind == "user_get":
            self.session_start = now
        if self.fsm.phase in (cart.Phase.FAULT, cart.Phase.BOOT):
            self.session_start = None

    def _on_wake(self, wake: int) -> None:
        self.wakes.discard(wake)
        due = cart.next_wake(self.fsm)
        if due is not None and due <= self.sim.sched.now:
            self.dispatch(cart.Tick(self.sim.sched.now))

    # -- AT command sequencing --------------------------------------------------

    def _at(self, cmd) -> None:
        data = atlink.encode_command(cmd)
        self.serial_out.send(len(data), lambda d=data: self.modem.on_serial(d))

    def _raw(self, data: bytes) -> None:
        self.serial_out.send(len(data), lambda d=data: self.modem.on_serial(d))

    def _bring_up(self) -> None:
        cfg = self.fsm.config
        if self.fsm.phase is cart.Phase.JOINING_WIFI:
            self.conn_open = False
            self.expect = "ready"
            self._at(atlink.Reset())
            self._arm_link()
        elif self.fsm.phase is cart.Phase.CONNECTING_SERVER:
            self.expect = "connect"
            self._at(atlink.TcpStart(cfg.host, cfg.port))
            self._arm_link()

    def _arm_link(self) -> None:
        self.link_token += 1
        token = self.link_token
        self.sim.sched.after(LINK_TIMEOUT_MS, lambda: self._link_timeout(token))

    def _link_timeout(self, token: int) -> None:
        if token != self.link_token:
            return
        if self.fsm.phase in (cart.Phase.JOINING_WIFI, cart.Phase.CONNECTING_SERVER):
            self.expect = None
            self.dispatch(cart.NetFail("link timeout"))

    def _begin_http(self, request) -> None:
        self.request_bytes = serialize_http_request(request)
        self.resp_buf = b""
        self.awaiting_http = True
        self.http.append([self.sim.sched.now,
                          "%s %s" % (request.method.value, request.path), None])
        self.http_token += 1
        token = self.http_token
        self.sim.sched.after(HTTP_TIMEOUT_MS, lambda: self._http_timeout(token))
        if self.conn_open:
            self._send_payload()
        else:
            self.expect = "connect"
            self._at(atlink.TcpStart(self.fsm.config.host, self.fsm.config.port))

    def _send_payload(self) -> None:
        data = self.request_bytes
        self.chunks = [data[i:i + atlink.SEND_MAX]
                       for i in range(0, len(data), atlink.SEND_MAX)]
        self._next_chunk()

    def _next_chunk(self) -> None:
        if self.chunks:
            self.current_chunk = self.chunks.pop(0)
            self.expect = "prompt"
            self._at(atlink.Send(len(self.current_chunk)))
        else:
            self.expect = None  # response arrives as +IPD payloads

    def _http_timeout(self, token: int) -> None:
        if token != self.http_token or not self.awaiting_http:
            return
        self._finish_http(None)
        self.dispatch(cart.NetFail("http timeout"))

    def _finish_http(self, status) -> None:
        self.awaiting_http = False
        self.http_token += 1
        self.request_bytes = None
        self.chunks = []
        self.resp_buf = b""
        self.http[-1][2] = status if status is not None else "timeout"
        if status is None and (self.conn_open or self.expect in ("connect", "prompt", "sendok")):
            # abandon the connection so a late response cannot cross sessions
            self._at(atlink.Close())
            self.conn_open = False
        if status is None:
            self.expect = None

    # -- serial tokens from the modem --------------------------------------------

    def on_serial(self, data: bytes) -> None:
        for token in self.tok.feed(data):
            self._on_token(token)

    def _on_token(self, token) -> None:
        if isinstance(token, atlink.Ok):
            if self.expect == "ready":
                self.expect = "join"
                self._at(atlink.JoinAp(self.fsm.config.ssid, self.fsm.config.password))
            return
        if isinstance(token, atlink.WifiGotIp):
            if self.expect == "join":
                self.expect = None
                self.link_token += 1  # disarm
                self.dispatch(cart.LinkUp("wifi"))
            return
        if isinstance(token, atlink.Connect):
            if self.expect == "connect":
                self.expect = None
                self.conn_open = True
                if self.request_bytes is not None:
                    self._send_payload()
                elif self.fsm.phase is cart.Phase.CONNECTING_SERVER:
                    self.link_token += 1  # disarm
                    self.dispatch(cart.LinkUp("server"))
            else:
                self._at(atlink.Close())  # late open nobody wants
            return
        if isinstance(token, atlink.SendPrompt):
            if self.expect == "prompt":
                self.expect = "sendok"
                self._raw(self.current_chunk)
            return
        if isinstance(token, atlink.SendOk):
            if self.expect == "sendok":
                self._next_chunk()
            return
        if isinstance(token, atlink.Closed):
            self.conn_open = False
            return
        if isinstance(token, atlink.Ipd):
            self._on_response_bytes(token.payload)
            return
        if isinstance(token, atlink.Error):
            self._on_at_error()
            return

    def _on_at_error(self) -> None:
        if self.expect in ("join", "ready"):
            self.expect = None
            self.dispatch(cart.NetFail("wifi join refused"))
        elif self.expect == "connect":
            self.expect = None
            if self.awaiting_http:
                self._finish_http(None)
                self.dispatch(cart.NetFail("connect failed"))
            else:
                self.dispatch(cart.NetFail("connect refused"))
        elif self.expect in ("prompt", "sendok"):
            self.expect = None
            self._finish_http(None)
            self.dispatch(cart.NetFail("send failed"))

    def _on_response_bytes(self, payload: bytes) -> None:
        if not self.awaiting_http:
            return
        self.resp_buf += payload
        parsed = parse_http_response(self.resp_buf)
        if isinstance(parsed, Complete):
            resp = parsed.message
            self._finish_http(resp.status)
            self.dispatch(cart.NetReply(resp))
        elif isinstance(parsed, Malformed):
            self._finish_http(None)
            self.dispatch(cart.NetFail("bad response: %s" % parsed.reason))


class GateHost:
    """One exit lane: reads queue up, each asks the store, single-flight."""

    def __init__(self, sim: "Simulation", lane: str, reads: list):
        self.sim = sim
        self.lane = lane
        self.port = NetPort(sim, "gate:%s" % lane, self.on_net)
        self.queue = deque()
        self.busy = False
        self.read: gate.GateRead | None = None
        self.conn_seq = itertools.count(1)
        self.conn = 0
        self.buf = b""
        self.token = 0
        self.verdicts: list = []
        for read in reads:
            sim.sched.at(read.at, lambda r=read: self.on_read(r))

    def on_read(self, read: gate.GateRead) -> None:
        self.queue.append(read)
        self._pump()

    def _pump(self) -> None:
        if self.busy or not self.queue:
            return
        self.busy = True
        self.read = self.queue.popleft()
        self.conn = next(self.conn_seq)
        self.buf = b""
        self.token += 1
        token = self.token
        self.sim.sched.after(GATE_TIMEOUT_MS, lambda: self._timeout(token))
        self.port.send(("open", self.conn, self.sim.server_host, self.sim.server_port))

    def on_net(self, msg: tuple) -> None:
        if not self.busy or msg[1] != self.conn:
            return
        kind = msg[0]
        if kind == "open_ack":
            if msg[2]:
                data = serialize_http_request(gate.tag_request(self.read.uid))
                self.port.send(("data", self.conn, data))
            else:
                self._finish(None)
        elif kind == "data":
            self.buf += msg[2]
            parsed = parse_http_response(self.buf)
            if isinstance(parsed, Complete):
                self._finish(parsed.message.status)
            elif isinstance(parsed, Malformed):
                self._finish(None)

    def _timeout(self, token: int) -> None:
        if token == self.token and self.busy:
            self._finish(None)

    def _finish(self, status) -> None:
        self.token += 1
        self.port.send(("close", self.conn))
        self.verdicts.append(gate.judge(self.read, status))
        self.busy = False
        self.read = None
        self._pump()


# -- scenario loading ----------------------------------------------------------------


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


def _load_docs(value, base_dir: str, what: str) -> list:
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        try:
            with open(path, "rb") as fh:
                value = json.loads(fh.read().decode("utf-8"))
        except (OSError, ValueError) as exc:
            raise ScenarioError("cannot load %s from %s: %s" % (what, path, exc))
    _require(isinstance(value, list), "%s must be a list of documents" % what)
    seen = set()
    for doc in value:
        _require(isinstance(doc, dict) and isinstance(doc.get("_id"), str) and doc["_id"],
                 "every %s document needs a string _id" % what)
        _require(doc["_id"] not in seen, "duplicate %s _id %s" % (what, doc["_id"]))
        seen.add(doc["_id"])
    return value


def _seed_docs(scenario: dict, what: str) -> list:
    value = scenario.get(what, [])
    _require(isinstance(value, list), "%s must be a list of documents" % what)
    for doc in value:
        _require(isinstance(doc, dict) and isinstance(doc.get("_id"), str)
                 and doc["_id"], "every %s document needs a string _id" % what)
    return value


def _int_at(entry, what: str) -> int:
    _require(isinstance(entry, dict), "%s must be an object" % what)
    at = entry.get("at")
    _require(isinstance(at, int) and not isinstance(at, bool) and at >= 0,
             "%s needs a non-negative integer at" % what)
    return at


def _parse_event(entry: dict, cart_id: str):
    _require(isinstance(entry, dict), "cart %s: event must be an object" % cart_id)
    at = _int_at(entry, "cart %s event" % cart_id)
    keys = set(entry) - {"at"}
    _require(len(keys) == 1, "cart %s event at %d needs exactly one action" % (cart_id, at))
    key = keys.pop()
    value = entry[key]
    if key == "card" or key == "tag":
        _require(isinstance(value, str) and value.isalnum(),
                 "cart %s event at %d: %s uid must be alphanumeric" % (cart_id, at, key))
        return at, (cart.CardSwiped(value) if key == "card" else cart.TagSwiped(value))
    if key == "button":
        _require(value in cart.BUTTONS,
                 "cart %s event at %d: unknown button %r" % (cart_id, at, value))
        return at, cart.Button(value)
    raise ScenarioError("cart %s event at %d: unknown action %r" % (cart_id, at, key))


_LINK_KEYS = {"latency_ms", "jitter_ms", "drop", "rate", "seed"}


def _link_config(sections: list) -> LinkConfig:
    merged: dict = {}
    for section in sections:
        merged.update(section)
    unknown = set(merged) - _LINK_KEYS
    _require(not unknown, "unknown link option %s" % ", ".join(sorted(unknown)))
    cfg = LinkConfig()
    for key in ("latency_ms", "jitter_ms", "rate", "seed"):
        if key in merged:
            _require(isinstance(merged[key], int) and not isinstance(merged[key], bool)
                     and merged[key] >= 0, "link %s must be a non-negative integer" % key)
            setattr(cfg, key, merged[key])
    if "drop" in merged:
        drop = merged["drop"]
        _require(isinstance(drop, (int, float)) and not isinstance(drop, bool)
                 and 0.0 <= float(drop) <= 1.0, "link drop must be within [0, 1]")
        cfg.drop = float(drop)
    return cfg


def load_scenario(path: str) -> dict:
    """Read a scenario file and inline any referenced seed documents."""
    try:
        with open(path, "rb") as fh:
            data = json.loads(fh.read().decode("utf-8"))
    except (OSError, ValueError) as exc:
        raise ScenarioError("cannot load scenario %s: %s" % (path, exc))
    _require(isinstance(data, dict), "scenario must be a JSON object")
    base_dir = os.path.dirname(os.path.abspath(path))
    data["users"] = _load_docs(data.get("users", []), base_dir, "users")
    data["tags"] = _load_docs(data.get("tags", []), base_dir, "tags")
    return data


class Simulation:
    def __init__(self, scenario: dict, seed: int | None = None,
                 horizon: int | None = None):
        _require(isinstance(scenario, dict), "scenario must be a JSON object")
        self.seed = seed if seed is not None else scenario.get("seed", 1)
        _require(isinstance(self.seed, int) and not isinstance(self.seed, bool),
                 "seed must be an integer")
        self.horizon = horizon if horizon is not None else scenario.get(
            "horizon_ms", HORIZON_MS)
        _require(isinstance(self.horizon, int) and self.horizon > 0,
                 "horizon_ms must be a positive integer")
        self.sched = Scheduler()
        links = scenario.get("links", {})
        _require(isinstance(links, dict), "links must be an object")
        self.links = dict(links)
        self.channels: list = []

        wifi = scenario.get("wifi", {})
        server = scenario.get("server", {})
        _require(isinstance(wifi, dict) and isinstance(server, dict),
                 "wifi and server must be objects")
        self.ssid = wifi.get("ssid", "market1")
        self.password = wifi.get("password", "password1")
        self.server_host = server.get("host", "184.173.163.133")
        self.server_port = server.get("port", 80)
        _require(isinstance(self.ssid, str) and isinstance(self.password, str),
                 "wifi ssid and password must be strings")
        _require(isinstance(self.server_host, str)
                 and isinstance(self.server_port, int)
                 and not isinstance(self.server_port, bool),
                 "server host must be a string and port an integer")
        try:
            atlink.encode_command(atlink.TcpStart(self.server_host, self.server_port))
            atlink.encode_command(atlink.JoinAp(self.ssid, self.password))
        except ValueError as exc:
            raise ScenarioError("bad wifi/server settings: %s" % exc)

        self.store = Store()
        self.seeded_users: dict = {}
        self.seeded_tags: list = []
        for doc in _seed_docs(scenario, "users"):
            _require(doc["_id"] not in self.seeded_users,
                     "duplicate users _id %s" % doc["_id"])
            _require(isinstance(doc.get("name"), str), "user %s needs a name" % doc["_id"])
            _require(isinstance(doc.get("cash"), int) and not isinstance(doc["cash"], bool)
                     and doc["cash"] >= 0,
                     "user %s needs non-negative integer cash" % doc["_id"])
            body = dict(doc)
            body.setdefault("history", [])
            self.store.put_doc("users", doc["_id"], body)
            self.seeded_users[doc["_id"]] = (body["cash"], len(body["history"]))
        for doc in _seed_docs(scenario, "tags"):
            _require(doc["_id"] not in self.seeded_tags,
                     "duplicate tags _id %s" % doc["_id"])
            _require(isinstance(doc.get("name"), str), "tag %s needs a name" % doc["_id"])
            _require(isinstance(doc.get("cost"), int) and not isinstance(doc["cost"], bool)
                     and doc["cost"] >= 0,
                     "tag %s needs non-negative integer cost" % doc["_id"])
            self.store.put_doc("tags", doc["_id"], dict(doc))
            self.seeded_tags.append(doc["_id"])

        self.endpoint = StoreEndpoint(self, self.server_host, self.server_port)

        self.carts: list = []
        seen_ids: set = set()
        cart_specs = scenario.get("carts", [])
        _require(isinstance(cart_specs, list), "carts must be a list")
        for spec in cart_specs:
            _require(isinstance(spec, dict) and isinstance(spec.get("id"), str)
                     and spec["id"], "every cart needs a string id")
            cart_id = spec["id"]
            _require(all(c.isalnum() or c in "-_" for c in cart_id),
                     "cart id %r has unsupported characters" % cart_id)
            _require(cart_id not in seen_ids, "duplicate cart id %s" % cart_id)
            seen_ids.add(cart_id)
            raw_events = spec.get("events", [])
            _require(isinstance(raw_events, list), "cart %s events must be a list" % cart_id)
            events = [_parse_event(e, cart_id) for e in raw_events]
            ssid = spec.get("ssid", self.ssid)
            _require(isinstance(ssid, str), "cart %s ssid must be a string" % cart_id)
            try:
                atlink.encode_command(atlink.JoinAp(ssid, self.password))
            except ValueError as exc:
                raise ScenarioError("cart %s: %s" % (cart_id, exc))
            config = cart.CartConfig(
                ssid=ssid, password=self.password,
                host=self.server_host, port=self.server_port)
            self.carts.append(CartHost(self, cart_id, config, self.ssid, events))

        self.gates: list = []
        seen_lanes: set = set()
        gate_specs = scenario.get("gates", [])
        _require(isinstance(gate_specs, list), "gates must be a list")
        for spec in gate_specs:
            _require(isinstance(spec, dict) and isinstance(spec.get("lane"), str)
                     and spec["lane"], "every gate needs a string lane")
            lane = spec["lane"]
            _require(lane not in seen_lanes, "duplicate gate lane %s" % lane)
            seen_lanes.add(lane)
            raw_reads = spec.get("reads", [])
            _require(isinstance(raw_reads, list), "gate %s reads must be a list" % lane)
            reads = []
            for entry in raw_reads:
                at = _int_at(entry, "gate %s read" % lane)
                uid = entry.get("uid")
                _require(isinstance(uid, str) and uid.isalnum(),
                         "gate %s read at %d needs an alphanumeric uid" % (lane, at))
                reads.append(gate.GateRead(at, lane, uid))
            self.gates.append(GateHost(self, lane, reads))

    def channel(self, base: str, entity: str, direction: str) -> Channel:
        sections = [DEFAULT_LINKS.get(base, {})]
        if base in self.links:
            sections.append(self.links[base])
        override = "%s:%s" % (base, entity.split(":")[-1])
        if override in self.links:
            sections.append(self.links[override])
        cfg = _link_config(sections)
        chan = Channel(self.sched, "%s:%s:%s" % (base, entity, direction), cfg, self.seed)
        self.channels.append(chan)
        return chan

    # -- run and report ---------------------------------------------------------

    def run(self) -> dict:
        quiesced = self.sched.run(self.horizon)
        return self._report(quiesced)

    def _report(self, quiesced: bool) -> dict:
        carts = {}
        for host in self.carts:
            carts[host.id] = {
                "phases": host.phases,
                "frames": host.frames,
                "log": host.log,
                "http": host.http,
                "retries": host.fsm.total_retries,
                "conflicts": host.fsm.conflicts_seen,
                "skipped_deletes": host.fsm.skipped_deletes,
                "beeps": host.beeps,
                "fault": host.fsm.fault_reason,
                "sessions": host.sessions,
            }
        gates = {g.lane: [gate.to_record(v) for v in g.verdicts] for g in self.gates}
        store_dump = {}
        for db in ("users", "tags"):
            docs = {}
            for rec in self.store.snapshot(db):
                docs[rec.id] = {"rev": rec.rev.text(), "deleted": rec.deleted,
                                "body": rec.body}
            store_dump[db] = docs

        sessions = [d for host in self.carts for d in host.sessions]
        verdicts = [v for g in self.gates for v in g.verdicts]
        violations = self._violations()
        faults = sorted(h.id for h in self.carts if h.fsm.phase is cart.Phase.FAULT)
        metrics = {
            "sessions": len(sessions),
            "mean_checkout_ms": sum(sessions) // len(sessions) if sessions else 0,
            "alarms": sum(1 for v in verdicts if v.verdict == gate.ALARM),
            "passes": sum(1 for v in verdicts if v.verdict == gate.PASS),
            "conflicts_retried": sum(h.fsm.conflicts_seen for h in self.carts),
            "store_conflicts": self.endpoint.conflicts,
            "store_requests": self.endpoint.requests,
            "dropped_messages": sum(c.dropped for c in self.channels),
        }
        return {
            "seed": self.seed,
            "horizon_ms": self.horizon,
            "deadline_exceeded": not quiesced,
            "carts": carts,
            "gates": gates,
            "store": store_dump,
            "metrics": metrics,
            "invariants": {"ok": not violations, "violations": violations},
            "faults": faults,
        }

    def _violations(self) -> list:
        """Money and inventory conservation over the whole run."""
        out = []
        spent: dict = {}
        for uid, (cash_before, hist_len) in sorted(self.seeded_users.items()):
            got = self.store.get_doc("users", uid)
            if got is NOT_FOUND:
                out.append("user %s disappeared" % uid)
                continue
            body, _ = got
            new_records = body.get("history", [])[hist_len:]
            charged = sum(r["total"] for r in new_records)
            if cash_before != body["cash"] + charged:
                out.append("money: user %s started %d, holds %d, charged %d"
                           % (uid, cash_before, body["cash"], charged))
            for rec in new_records:
                if rec["total"] != sum(i["cost"] for i in rec["items"]):
                    out.append("money: user %s record at %d mis-totaled" % (uid, rec["at"]))
                for item in rec["items"]:
                    spent[item["uid"]] = spent.get(item["uid"], 0) + 1
        allowed_live = sum(h.fsm.skipped_deletes for h in self.carts)
        for host in self.carts:
            if host.fsm.phase is cart.Phase.FAULT and host.fsm.pay is not None:
                allowed_live += len(host.fsm.items) - host.fsm.pay.idx
        unpaid_live = 0
        for uid in self.seeded_tags:
            gone = self.store.get_doc("tags", uid) is NOT_FOUND
            count = spent.get(uid, 0)
            if count > 1:
                out.append("inventory: tag %s sold %d times" % (uid, count))
            elif gone and count != 1:
                out.append("inventory: tag %s gone but in %d records" % (uid, count))
            elif not gone and count == 1:
                unpaid_live += 1
        if unpaid_live > allowed_live:
            out.append("inventory: %d paid tags still live, only %d skips logged"
                       % (unpaid_live, allowed_live))
        return out


def run_scenario(scenario: dict, seed: int | None = None,
                 horizon: int | None = None) -> dict:
    return Simulation(scenario, seed=seed, horizon=horizon).run()
