"""Live TCP server tests: REST behavior, persistence, panel bridge, assets."""

import socket
import threading
import time

import pytest

from smartcart import cart
from smartcart.cli import http_call
from smartcart.server import AppServer
from smartcart.wire import Method, canonical_json, json_parse, request

USER = "6C92D391"


@pytest.fixture
def served(tmp_path):
    server = AppServer(0, str(tmp_path / "data"), panel=True,
                       assets_dir=str(tmp_path / "assets"))
    server.start()
    yield server
    server.close()


def call(server, method, path, body=b""):
    resp = http_call("127.0.0.1", server.port, request(method, path, body))
    doc = None
    if (resp.header("content-type") or "").startswith("application/json"):
        doc = json_parse(resp.body)
    return resp.status, doc, resp


def put_json(server, path, value):
    return call(server, Method.PUT, path, canonical_json(value))


# -- REST --------------------------------------------------------------------------

def test_document_round_trip(served):
    status, doc, _ = put_json(served, "/users/%s" % USER,
                              {"name": "Yerlan Berdaliyev", "cash": 10000,
                               "history": []})
    assert status == 201
    rev = doc["rev"]
    assert rev.startswith("1-")

    status, doc, _ = call(served, Method.GET, "/users/%s" % USER)
    assert status == 200
    assert doc["_rev"] == rev
    assert doc["cash"] == 10000

    status, doc, _ = call(served, Method.DELETE, "/users/%s?rev=%s" % (USER, rev))
    assert status == 200
    status, _, _ = call(served, Method.GET, "/users/%s" % USER)
    assert status == 404


def test_conflicting_puts_one_winner_both_orders(served):
    for doc_id in ("AAA1", "AAA2"):
        path = "/users/%s" % doc_id
        status, doc, _ = put_json(served, path, {"name": "A", "cash": 10})
        base = doc["rev"]
        first = {"name": "A", "cash": 5, "_rev": base}
        second = {"name": "A", "cash": 7, "_rev": base}
        if doc_id == "AAA2":
            first, second = second, first
        s1, d1, _ = put_json(served, path, first)
        s2, d2, _ = put_json(served, path, second)
        assert (s1, s2) == (201, 409)
        status, stored, _ = call(served, Method.GET, path)
        assert stored["cash"] == first["cash"]
        assert stored["_rev"] == d1["rev"]


def test_malformed_requests_get_400(served):
    with socket.create_connection(("127.0.0.1", served.port), timeout=5) as sock:
        sock.sendall(b"NOT-HTTP nonsense\r\n\r\n")
        got = sock.recv(65536)
    assert got.startswith(b"HTTP/1.1 400 ")

    status, doc, _ = call(served, Method.PUT, "/users/X", b"not json")
    assert status == 400
    status, _, _ = call(served, Method.POST, "/users/X", b"{}")
    assert status == 400
    status, _, _ = call(served, Method.GET, "/nosuchdb/X")
    assert status == 400


def test_oversized_head_rejected(served):
    with socket.create_connection(("127.0.0.1", served.port), timeout=5) as sock:
        sock.sendall(b"GET /" + b"x" * 9000 + b" HTTP/1.1\r\n")
        got = sock.recv(65536)
    assert got.startswith(b"HTTP/1.1 400 ")


def test_responses_announce_connection_close(served):
    _, _, resp = call(served, Method.GET, "/users/nobody")
    assert resp.header("connection") == "close"


def test_concurrent_writers_all_land(served):
    results = []

    def writer(k):
        results.append(put_json(served, "/tags/T%03d" % k,
                                {"name": "ITEM%d" % k, "cost": k})[0])

    threads = [threading.Thread(target=writer, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [201] * 8
    for k in range(8):
        assert call(served, Method.GET, "/tags/T%03d" % k)[0] == 200


# -- persistence ---------------------------------------------------------------------

def shadow(server, ids):
    state = {}
    for db, doc_id in ids:
        status, doc, _ = call(server, Method.GET, "/%s/%s" % (db, doc_id))
        state[(db, doc_id)] = (status, doc)
    return state


def test_documents_survive_restart(tmp_path):
    data_dir = str(tmp_path / "data")
    ids = [("users", USER), ("tags", "E2003412"), ("tags", "GONE")]
    first = AppServer(0, data_dir)
    first.start()
    put_json(first, "/users/%s" % USER, {"name": "Yerlan Berdaliyev",
                                         "cash": 10000, "history": []})
    put_json(first, "/tags/E2003412", {"name": "MILK", "cost": 120})
    status, doc, _ = put_json(first, "/tags/GONE", {"name": "X", "cost": 1})
    call(first, Method.DELETE, "/tags/GONE?rev=%s" % doc["rev"])
    before = shadow(first, ids)
    first.close()

    second = AppServer(0, data_dir)
    second.start()
    assert shadow(second, ids) == before
    # the tombstone kept its chain: reviving GONE needs generation 3
    status, doc, _ = put_json(second, "/tags/GONE", {"name": "X", "cost": 1})
    assert status == 409
    second.close()


def test_admin_reset_wipes_disk_too(tmp_path):
    data_dir = str(tmp_path / "data")
    first = AppServer(0, data_dir)
    first.start()
    put_json(first, "/tags/T1", {"name": "A", "cost": 1})
    status, _, _ = call(first, Method.POST, "/admin/reset")
    assert status == 200
    assert call(first, Method.GET, "/tags/T1")[0] == 404
    first.close()

    second = AppServer(0, data_dir)
    second.start()
    assert call(second, Method.GET, "/tags/T1")[0] == 404
    second.close()


def test_admin_reset_rejects_get(served):
    assert call(served, Method.GET, "/admin/reset")[0] == 400


# -- panel bridge ----------------------------------------------------------------------

def seed_catalogue(server):
    put_json(server, "/users/%s" % USER,
             {"name": "Yerlan Berdaliyev", "cash": 10000, "history": []})
    for uid, name, cost in (("E2003412", "MILK", 120), ("E2003413", "BREAD", 85),
                            ("E2003414", "CHEESE", 300)):
        put_json(server, "/tags/%s" % uid, {"name": name, "cost": cost})


def post_event(server, cart_id, event):
    return call(server, Method.POST, "/carts/%s/events" % cart_id,
                canonical_json(event))


def wait_phase(server, cart_id, phase, timeout=3.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        _, doc, _ = call(server, Method.GET, "/carts/%s/frame" % cart_id)
        if doc["phase"] == phase:
            return doc
        time.sleep(0.02)
    raise AssertionError("cart %s never reached %s" % (cart_id, phase))


def test_cart_created_on_first_reference(served):
    status, doc, _ = call(served, Method.GET, "/carts/p1/frame")
    assert status == 200
    assert doc["cart"] == "p1"
    assert doc["phase"] == "await_card"
    assert "SWIPE CARD" in doc["ascii"]
    pbm = bytes.fromhex(doc["pbm"])
    assert pbm.startswith(b"P4\n128 64\n")
    assert len(pbm) == len(b"P4\n128 64\n") + 128 * 64 // 8


def test_panel_checkout_session(served, monkeypatch):
    monkeypatch.setattr(cart, "SHOW_MS", 50)
    seed_catalogue(served)
    status, doc, _ = post_event(served, "p1", {"card": USER})
    assert status == 200 and doc["phase"] == "showing_user"
    _, frame, _ = call(served, Method.GET, "/carts/p1/frame")
    assert "YERLAN BERDALIYE" in frame["ascii"]

    wait_phase(served, "p1", "scanning")
    for uid in ("E2003412", "E2003413", "E2003414"):
        status, doc, _ = post_event(served, "p1", {"tag": uid})
        assert status == 200
    post_event(served, "p1", {"button": "down"})
    post_event(served, "p1", {"button": "down"})
    _, frame, _ = call(served, Method.GET, "/carts/p1/frame")
    assert ">CHEESE      300" in frame["ascii"]

    status, doc, _ = post_event(served, "p1", {"button": "pay"})
    assert doc["phase"] == "await_card"
    status, user, _ = call(served, Method.GET, "/users/%s" % USER)
    assert user["cash"] == 10000 - 505
    assert len(user["history"]) == 1
    assert user["history"][0]["total"] == 505
    for uid in ("E2003412", "E2003413", "E2003414"):
        assert call(served, Method.GET, "/tags/%s" % uid)[0] == 404

    _, trace, _ = call(served, Method.GET, "/carts/p1/trace")
    assert [line.split()[0] for _, line, _ in trace["http"]] == [
        "GET", "GET", "GET", "GET", "PUT", "DELETE", "DELETE", "DELETE"]
    assert trace["beeps"] == 5
    assert [p for _, p in trace["phases"]] == [
        "boot", "joining_wifi", "connecting_server", "await_card",
        "showing_user", "scanning", "paying", "await_card"]


def test_panel_pay_on_empty_cart_is_ignored(served):
    call(served, Method.GET, "/carts/p2/frame")
    before = call(served, Method.GET, "/carts/p2/trace")[1]
    status, doc, _ = post_event(served, "p2", {"button": "pay"})
    assert status == 200 and doc["phase"] == "await_card"
    after = call(served, Method.GET, "/carts/p2/trace")[1]
    assert after["http"] == before["http"]
    assert after["beeps"] == before["beeps"]


def test_panel_rejects_malformed_events(served):
    for body in (b"not json", b"[]", b"{}",
                 b'{"card": "A1", "tag": "B2"}',
                 b'{"button": "explode"}',
                 b'{"tag": "NOT ALNUM"}',
                 b'{"poke": "A1"}'):
        status, doc, _ = call(served, Method.POST, "/carts/p3/events", body)
        assert status == 400
        assert doc == {"error": "bad_event"}
    assert call(served, Method.GET, "/carts/p3/events")[0] == 400
    assert call(served, Method.POST, "/carts/p3/frame")[0] == 400


def test_frame_endpoint_is_read_only(served):
    call(served, Method.GET, "/carts/p4/frame")
    a = call(served, Method.GET, "/carts/p4/trace")[1]
    for _ in range(3):
        call(served, Method.GET, "/carts/p4/frame")
    b = call(served, Method.GET, "/carts/p4/trace")[1]
    assert a["phases"] == b["phases"]
    assert a["http"] == b["http"]


def test_show_hold_expires_via_ticker(served, monkeypatch):
    monkeypatch.setattr(cart, "SHOW_MS", 50)
    seed_catalogue(served)
    post_event(served, "p5", {"card": USER})
    # no further client events: the server's own ticker must move the cart on
    deadline = time.monotonic() + 3.0
    while time.monotonic() < deadline:
        _, doc, _ = call(served, Method.GET, "/carts/p5/trace")
        if ["scanning"] == [p for _, p in doc["phases"]][-1:]:
            return
        time.sleep(0.05)
    raise AssertionError("ticker never expired the user card hold")


# -- static assets ----------------------------------------------------------------------

def test_static_assets(served, tmp_path):
    assets = tmp_path / "assets"
    assets.mkdir()
    (assets / "index.html").write_text("<h1>panel</h1>")
    (assets / "panel.js").write_text("console.log(1)")
    (assets / ".secret").write_text("hidden")

    status, _, resp = call(served, Method.GET, "/")
    assert status == 200
    assert resp.body == b"<h1>panel</h1>"
    assert resp.header("content-type").startswith("text/html")

    status, _, resp = call(served, Method.GET, "/panel.js")
    assert status == 200
    assert resp.header("content-type") == "application/javascript"

    assert call(served, Method.GET, "/missing.js")[0] == 404
    assert call(served, Method.GET, "/.secret")[0] == 400
    assert call(served, Method.GET, "/../pyproject.toml")[0] == 400


def test_store_paths_win_over_assets(served):
    put_json(served, "/tags/T9", {"name": "A", "cost": 1})
    status, doc, _ = call(served, Method.GET, "/tags/T9")
    assert status == 200 and doc["name"] == "A"
