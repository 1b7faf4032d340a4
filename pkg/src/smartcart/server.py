"""Store REST service on a plain TCP socket, with an optional panel bridge
that runs live carts against the same store for the browser front panel."""

from __future__ import annotations

import os
import re
import socket
import threading
import time

from . import cart, display
from .store import Store
from .wire import (Complete, HttpRequest, HttpResponse, JsonError, Malformed,
                   Method, json_parse, json_response, parse_http_request,
                   serialize_http_response)

TICK_MS = 100            # panel timer sweep; show/notice need ~100 ms accuracy
RECV_TIMEOUT_S = 30.0
CART_PATH = re.compile(r"/carts/([A-Za-z0-9_-]+)/(events|frame|trace)")

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
    ".txt": "text/plain; charset=utf-8",
}


class PanelCart:
    """One live cart: the pure firmware stepped against the in-process store,
    with wall-clock ticks standing in for the simulation scheduler."""

    def __init__(self, cart_id: str, store_fn, now: int):
        self.id = cart_id
        self.fsm = cart.CartFsm(config=cart.CartConfig())
        self.store_fn = store_fn
        self.frame_ascii = ""
        self.frame_pbm = b""
        self.phases: list = []
        self.log: list = []
        self.http: list = []
        self.beeps = 0
        self.link_seen = 0
        self.dispatch(cart.PowerOn(), now)

    def advance(self, now: int) -> None:
        if self.fsm.now < now and cart.next_wake(self.fsm) is not None:
            self.dispatch(cart.Tick(now), now)

    def dispatch(self, event, now: int) -> None:
        queue = [event]
        if not isinstance(event, cart.Tick) and self.fsm.now < now:
            queue.insert(0, cart.Tick(now))
        while queue:
            self._step(queue.pop(0), queue, now)

    def _step(self, event, queue: list, now: int) -> None:
        self.fsm, effects = cart.step(self.fsm, event)
        if not self.phases or self.fsm.phase.value != self.phases[-1][1]:
            self.phases.append([now, self.fsm.phase.value])
        for eff in effects:
            if isinstance(eff, cart.Render):
                self.frame_ascii = display.frame_to_ascii(display.layout(eff.view))
                self.frame_pbm = display.frame_to_pbm(display.render(eff.view))
            elif isinstance(eff, cart.Log):
                self.log.append([now, eff.message])
            elif isinstance(eff, cart.Beep):
                self.beeps += 1
            elif isinstance(eff, cart.SendHttp):
                response = self.store_fn(eff.request)
                self.http.append([now, "%s %s" % (eff.request.method.value,
                                                  eff.request.path),
                                  response.status])
                queue.append(cart.NetReply(response))
        if self.fsm.phase is cart.Phase.BOOT:
            queue.append(cart.PowerOn())
        if self.fsm.link_attempt != self.link_seen:
            # no radio or modem here: the link is the process itself
            self.link_seen = self.fsm.link_attempt
            if self.fsm.phase is cart.Phase.JOINING_WIFI:
                queue.append(cart.LinkUp("wifi"))
            elif self.fsm.phase is cart.Phase.CONNECTING_SERVER:
                queue.append(cart.LinkUp("server"))

    def frame_doc(self) -> dict:
        return {"cart": self.id, "phase": self.fsm.phase.value,
                "ascii": self.frame_ascii, "pbm": self.frame_pbm.hex()}

    def trace_doc(self) -> dict:
        return {"cart": self.id, "phases": self.phases, "log": self.log,
                "http": self.http, "beeps": self.beeps,
                "fault": self.fsm.fault_reason}


class AppServer:
    """Threaded one-request-per-connection HTTP server over the wire parser."""

    def __init__(self, port: int, data_dir: str, host: str = "127.0.0.1",
                 panel: bool = False, assets_dir: str | None = None):
        os.makedirs(data_dir, exist_ok=True)
        self.data_dir = data_dir
        self.store = Store.restore(data_dir)
        self.panel = panel
        self.assets_dir = assets_dir
        self.lock = threading.RLock()
        self.carts: dict[str, PanelCart] = {}
        self.t0 = time.monotonic()
        self._closing = False
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(32)
        self.port = self.sock.getsockname()[1]
        if panel:
            ticker = threading.Thread(target=self._tick_loop, daemon=True)
            ticker.start()

    # -- lifecycle ----------------------------------------------------------

    def serve_forever(self) -> None:
        while not self._closing:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                break
            worker = threading.Thread(target=self._serve_conn, args=(conn,),
                                      daemon=True)
            worker.start()

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def close(self) -> None:
        self._closing = True
        try:
            self.sock.close()
        except OSError:
            pass

    def now_ms(self) -> int:
        return int((time.monotonic() - self.t0) * 1000)

    def _tick_loop(self) -> None:
        while not self._closing:
            time.sleep(TICK_MS / 1000.0)
            with self.lock:
                now = self.now_ms()
                for panel_cart in self.carts.values():
                    panel_cart.advance(now)

    # -- connection handling --------------------------------------------------

    def _serve_conn(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(RECV_TIMEOUT_S)
            buf = b""
            while True:
                got = parse_http_request(buf)
                if isinstance(got, Complete):
                    self._respond(conn, self.route(got.message))
                    return
                if isinstance(got, Malformed):
                    self._respond(conn, json_response(400, {"error": "bad_request"}))
                    return
                chunk = conn.recv(65536)
                if not chunk:
                    return
                buf += chunk
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _respond(self, conn: socket.socket, resp: HttpResponse) -> None:
        if resp.header("connection") is None:
            resp.headers.append(("Connection", "close"))
        conn.sendall(serialize_http_response(resp))

    # -- routing ----------------------------------------------------------------

    def route(self, req: HttpRequest) -> HttpResponse:
        path = req.path.partition("?")[0]
        if path == "/admin/reset":
            if req.method is not Method.POST:
                return json_response(400, {"error": "bad_request"})
            with self.lock:
                self.store = Store()
                self.store.persist(self.data_dir)
            return json_response(200, {"ok": True})
        match = CART_PATH.fullmatch(path)
        if match and self.panel:
            return self._route_cart(req, match.group(1), match.group(2))
        if self.panel and req.method is Method.GET:
            name = _asset_name(path)
            if name is not None:
                return self._serve_asset(name)
        with self.lock:
            resp = self.store.handle_request(req)
            if req.method in (Method.PUT, Method.DELETE) and resp.status < 400:
                self.store.persist(self.data_dir)
        return resp

    def store_request(self, req: HttpRequest) -> HttpResponse:
        # panel carts call this re-entrantly while holding self.lock
        with self.lock:
            resp = self.store.handle_request(req)
            if req.method in (Method.PUT, Method.DELETE) and resp.status < 400:
                self.store.persist(self.data_dir)
            return resp

    # -- panel bridge ------------------------------------------------------------

    def _route_cart(self, req: HttpRequest, cart_id: str, leaf: str) -> HttpResponse:
        with self.lock:
            now = self.now_ms()
            panel_cart = self.carts.get(cart_id)
            if panel_cart is None:
                panel_cart = PanelCart(cart_id, self.store_request, now)
                self.carts[cart_id] = panel_cart
            else:
                panel_cart.advance(now)
            if leaf == "events":
                if req.method is not Method.POST:
                    return json_response(400, {"error": "bad_request"})
                event = _parse_panel_event(req.body)
                if event is None:
                    return json_response(400, {"error": "bad_event"})
                panel_cart.dispatch(event, now)
                return json_response(200, {"ok": True,
                                           "phase": panel_cart.fsm.phase.value})
            if req.method is not Method.GET:
                return json_response(400, {"error": "bad_request"})
            if leaf == "frame":
                return json_response(200, panel_cart.frame_doc())
            return json_response(200, panel_cart.trace_doc())

    # -- static assets -------------------------------------------------------------

    def _serve_asset(self, name: str) -> HttpResponse:
        full = os.path.join(self.assets_dir, name) if self.assets_dir else ""
        if not full or not os.path.isfile(full):
            return json_response(404, {"error": "not_found"})
        ext = os.path.splitext(full)[1].lower()
        ctype = CONTENT_TYPES.get(ext, "application/octet-stream")
        with open(full, "rb") as fh:
            body = fh.read()
        return HttpResponse(200, "OK", [("Content-Type", ctype),
                                        ("Content-Length", str(len(body)))], body)


def _asset_name(path: str) -> str | None:
    """Single flat file name under the assets dir, or None for non-asset paths."""
    name = "index.html" if path == "/" else path.lstrip("/")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name) or name.startswith("."):
        return None
    return name


def _parse_panel_event(body: bytes):
    """One scenario-style cart event without the timestamp, or None."""
    try:
        value = json_parse(body)
    except JsonError:
        return None
    if not isinstance(value, dict) or len(value) != 1:
        return None
    key, arg = next(iter(value.items()))
    if key in ("card", "tag") and isinstance(arg, str) and arg.isalnum():
        return cart.CardSwiped(arg) if key == "card" else cart.TagSwiped(arg)
    if key == "button" and arg in cart.BUTTONS:
        return cart.Button(arg)
    return None
