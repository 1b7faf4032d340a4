"""Cart firmware as a pure state machine: step(fsm, event) -> (fsm', effects).

The firmware never touches sockets or clocks directly. Time arrives as Tick
events, network answers as NetReply/NetFail, link bring-up as LinkUp; the
host routes SendHttp effects to the modem and Render effects to the screen.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

from . import display
from .wire import HttpRequest, HttpResponse, JsonError, Method, canonical_json, json_parse, request

SHOW_MS = 5000     # user card hold time
NOTICE_MS = 2000   # transient notice hold time
RETRY_MS = 500     # backoff before a retry
MAX_RETRIES = 3    # retries after the first failure, then Fault

BUTTONS = ("up", "down", "delete", "pay", "reset")


class Phase(Enum):
    BOOT = "boot"
    JOINING_WIFI = "joining_wifi"
    CONNECTING_SERVER = "connecting_server"
    AWAIT_CARD = "await_card"
    SHOWING_USER = "showing_user"
    SCANNING = "scanning"
    PAYING = "paying"
    FAULT = "fault"


# -- events ----------------------------------------------------------------------

@dataclass(frozen=True)
class PowerOn:
    pass


@dataclass(frozen=True)
class Tick:
    now: int


@dataclass(frozen=True)
class CardSwiped:
    uid: str


@dataclass(frozen=True)
class TagSwiped:
    uid: str


@dataclass(frozen=True)
class Button:
    name: str

    def __post_init__(self):
        assert self.name in BUTTONS, self.name


@dataclass(frozen=True)
class NetReply:
    response: HttpResponse


@dataclass(frozen=True)
class NetFail:
    reason: str


@dataclass(frozen=True)
class LinkUp:
    kind: str  # "wifi" | "server"


CartEvent = PowerOn | Tick | CardSwiped | TagSwiped | Button | NetReply | NetFail | LinkUp


# -- effects ---------------------------------------------------------------------

@dataclass(frozen=True)
class SendHttp:
    request: HttpRequest


@dataclass(frozen=True)
class Render:
    view: display.DisplayView


@dataclass(frozen=True)
class Beep:
    pass


@dataclass(frozen=True)
class Log:
    message: str


CartEffect = SendHttp | Render | Beep | Log


# -- state -----------------------------------------------------------------------

@dataclass(frozen=True)
class CartItem:
    uid: str
    name: str
    cost: int
    rev: str  # tag revision captured at scan time


@dataclass
class Op:
    """One outstanding network operation (single-flight)."""
    kind: str
    request: HttpRequest | None = None
    uid: str = ""
    retries: int = 0
    retry_at: int | None = None


@dataclass
class Pay:
    body: dict          # user update to PUT (includes _rev base)
    record_at: int      # history record identity of this payment
    idx: int = 0        # next item to delete
    del_retried: bool = False
    put_retries: int = 0


@dataclass
class CartConfig:
    ssid: str = "market1"
    password: str = "password1"
    host: str = "184.173.163.133"
    port: int = 80


@dataclass
class CartFsm:
    config: CartConfig = field(default_factory=CartConfig)
    phase: Phase = Phase.BOOT
    now: int = 0
    user: dict | None = None
    items: list = field(default_factory=list)
    selected: int | None = None
    scroll: int = 0
    op: Op | None = None
    pay: Pay | None = None
    show_until: int | None = None
    notice_until: int | None = None
    link_attempt: int = 0    # bumps when the host must (re)issue bring-up
    fault_reason: str | None = None
    total_retries: int = 0
    conflicts_seen: int = 0
    skipped_deletes: int = 0


class InsufficientFunds(ValueError):
    pass


def compute_total(items) -> int:
    return sum(item.cost for item in items)


def build_pay_update(user: dict, items, now: int) -> dict:
    """New user body: cash reduced, one history record appended, _rev as base."""
    total = compute_total(items)
    if total > user["cash"]:
        raise InsufficientFunds("total %d exceeds cash %d" % (total, user["cash"]))
    if not items:
        raise ValueError("payment requires at least one item")
    new = copy.deepcopy(user)
    new["cash"] = user["cash"] - total
    new.setdefault("history", []).append({
        "at": now,
        "items": [{"uid": i.uid, "name": i.name, "cost": i.cost} for i in items],
        "total": total,
    })
    return new


def next_wake(fsm: CartFsm) -> int | None:
    """Earliest virtual time the host must deliver a Tick, if any."""
    times = []
    if fsm.notice_until is not None:
        times.append(fsm.notice_until)
    if fsm.show_until is not None and fsm.phase is Phase.SHOWING_USER:
        times.append(fsm.show_until)
    if fsm.op is not None and fsm.op.retry_at is not None:
        times.append(fsm.op.retry_at)
    return min(times) if times else None


def step(fsm: CartFsm, event: CartEvent) -> tuple[CartFsm, list]:
    """Pure transition: never mutates the input state."""
    fsm = copy.deepcopy(fsm)
    eff: list = []
    if isinstance(event, Tick):
        fsm.now = max(fsm.now, event.now)
        _on_tick(fsm, eff)
    elif isinstance(event, Button) and event.name == "reset":
        _reboot(fsm, eff)
    elif isinstance(event, PowerOn):
        if fsm.phase is Phase.BOOT:
            _bring_up(fsm, eff)
    elif isinstance(event, LinkUp):
        _on_link_up(fsm, eff, event.kind)
    elif isinstance(event, NetFail):
        _op_failed(fsm, eff, event.reason)
    elif isinstance(event, NetReply):
        _on_reply(fsm, eff, event.response)
    elif isinstance(event, CardSwiped):
        _on_card(fsm, eff, event.uid)
    elif isinstance(event, TagSwiped):
        _on_tag(fsm, eff, event.uid)
    elif isinstance(event, Button):
        _on_button(fsm, eff, event.name)
    return fsm, eff


# pure editing operations, exposed for direct use

def select_next(fsm: CartFsm) -> CartFsm:
    fsm = copy.deepcopy(fsm)
    _move_selection(fsm, +1)
    return fsm


def select_prev(fsm: CartFsm) -> CartFsm:
    fsm = copy.deepcopy(fsm)
    _move_selection(fsm, -1)
    return fsm


def delete_selected(fsm: CartFsm) -> CartFsm:
    fsm = copy.deepcopy(fsm)
    _delete_selected(fsm)
    return fsm


# -- internals --------------------------------------------------------------------

def _show(fsm: CartFsm, eff: list, view) -> None:
    if not isinstance(view, display.Notice):
        fsm.notice_until = None
    eff.append(Render(view))


def _notice(fsm: CartFsm, eff: list, text: str) -> None:
    fsm.notice_until = fsm.now + NOTICE_MS
    eff.append(Render(display.Notice(text)))


def _steady_view(fsm: CartFsm):
    cfg = fsm.config
    if fsm.phase is Phase.JOINING_WIFI:
        return display.WifiStatus(cfg.ssid, joined=False)
    if fsm.phase is Phase.CONNECTING_SERVER:
        return display.ServerStatus(cfg.host, cfg.port, connected=False)
    if fsm.phase is Phase.AWAIT_CARD:
        return display.SwipeCardPrompt()
    if fsm.phase is Phase.SHOWING_USER and fsm.user is not None:
        return display.UserCard(fsm.user["name"], fsm.user["cash"])
    if fsm.phase is Phase.SCANNING:
        return _item_view(fsm)
    if fsm.phase is Phase.PAYING:
        return display.Paying()
    if fsm.phase is Phase.FAULT:
        return display.Notice("FAULT")
    return display.Splash()


def _item_view(fsm: CartFsm):
    if not fsm.items:
        return display.SwipeTagPrompt()
    window = tuple((i.name, i.cost) for i in fsm.items[fsm.scroll:fsm.scroll + 2])
    selected = None
    if fsm.selected is not None and fsm.scroll <= fsm.selected < fsm.scroll + 2:
        selected = fsm.selected - fsm.scroll
    return display.ItemList(
        window=window, selected=selected,
        has_above=fsm.scroll > 0,
        has_below=fsm.scroll + 2 < len(fsm.items),
        total=compute_total(fsm.items), count=len(fsm.items))


def _clear_session(fsm: CartFsm) -> None:
    fsm.user = None
    fsm.items = []
    fsm.selected = None
    fsm.scroll = 0
    fsm.op = None
    fsm.pay = None
    fsm.show_until = None
    fsm.notice_until = None
    fsm.fault_reason = None


def _reboot(fsm: CartFsm, eff: list) -> None:
    _clear_session(fsm)
    fsm.phase = Phase.BOOT
    eff.append(Log("reset pressed, rebooting"))


def _bring_up(fsm: CartFsm, eff: list) -> None:
    _clear_session(fsm)
    fsm.phase = Phase.JOINING_WIFI
    fsm.op = Op("wifi")
    fsm.link_attempt += 1
    eff.append(Render(display.Splash()))
    eff.append(Log("boot"))
    _show(fsm, eff, display.WifiStatus(fsm.config.ssid, joined=False))


def _on_link_up(fsm: CartFsm, eff: list, kind: str) -> None:
    if kind == "wifi" and fsm.phase is Phase.JOINING_WIFI:
        fsm.phase = Phase.CONNECTING_SERVER
        fsm.op = Op("server")
        fsm.link_attempt += 1
        eff.append(Log("wifi joined: %s" % fsm.config.ssid))
        _show(fsm, eff, display.WifiStatus(fsm.config.ssid, joined=True))
        _show(fsm, eff, display.ServerStatus(fsm.config.host, fsm.config.port, False))
    elif kind == "server" and fsm.phase is Phase.CONNECTING_SERVER:
        fsm.op = None
        fsm.phase = Phase.AWAIT_CARD
        eff.append(Log("server connected: %s:%d" % (fsm.config.host, fsm.config.port)))
        _show(fsm, eff, display.ServerStatus(fsm.config.host, fsm.config.port, True))
        _show(fsm, eff, display.SwipeCardPrompt())


def _on_tick(fsm: CartFsm, eff: list) -> None:
    if fsm.notice_until is not None and fsm.now >= fsm.notice_until:
        fsm.notice_until = None
        _show(fsm, eff, _steady_view(fsm))
    if (fsm.phase is Phase.SHOWING_USER and fsm.show_until is not None
            and fsm.now >= fsm.show_until):
        fsm.show_until = None
        fsm.phase = Phase.SCANNING
        eff.append(Log("scanning"))
        _show(fsm, eff, _item_view(fsm))
    if (fsm.op is not None and fsm.op.retry_at is not None
            and fsm.now >= fsm.op.retry_at):
        fsm.op.retry_at = None
        if fsm.op.request is None:
            fsm.link_attempt += 1  # host re-issues the bring-up commands
        else:
            eff.append(SendHttp(fsm.op.request))
        eff.append(Log("retrying %s (attempt %d)" % (fsm.op.kind, fsm.op.retries + 1)))


def _op_failed(fsm: CartFsm, eff: list, reason: str) -> None:
    if fsm.op is None or fsm.op.retry_at is not None:
        return
    if fsm.op.retries < MAX_RETRIES:
        fsm.op.retries += 1
        fsm.total_retries += 1
        fsm.op.retry_at = fsm.now + RETRY_MS
        eff.append(Log("%s failed (%s), retry %d/%d" % (
            fsm.op.kind, reason, fsm.op.retries, MAX_RETRIES)))
    else:
        _fault(fsm, eff, "%s: %s" % (fsm.op.kind, reason))


def _fault(fsm: CartFsm, eff: list, reason: str) -> None:
    fsm.phase = Phase.FAULT
    fsm.fault_reason = reason
    fsm.op = None
    fsm.notice_until = None
    fsm.show_until = None
    eff.append(Log("fault: %s" % reason))
    eff.append(Render(display.Notice("FAULT")))
    eff.append(Beep())


def _on_card(fsm: CartFsm, eff: list, uid: str) -> None:
    if fsm.phase is not Phase.AWAIT_CARD or fsm.op is not None:
        return
    if not uid.isalnum():
        eff.append(Log("ignoring malformed card uid %r" % uid))
        return
    fsm.op = Op("user_get", request(Method.GET, "/users/%s" % uid,
                                    headers=(("Host", fsm.config.host),)))
    eff.append(Log("card swiped: %s" % uid))
    eff.append(SendHttp(fsm.op.request))


def _on_tag(fsm: CartFsm, eff: list, uid: str) -> None:
    if fsm.phase is not Phase.SCANNING or fsm.op is not None:
        return
    if not uid.isalnum():
        eff.append(Log("ignoring malformed tag uid %r" % uid))
        return
    if any(item.uid == uid for item in fsm.items):
        eff.append(Log("duplicate tag %s ignored" % uid))
        _notice(fsm, eff, "ALREADY LISTED")
        return
    fsm.op = Op("tag_get", request(Method.GET, "/tags/%s" % uid,
                                   headers=(("Host", fsm.config.host),)), uid=uid)
    eff.append(Log("tag swiped: %s" % uid))
    eff.append(SendHttp(fsm.op.request))


def _on_button(fsm: CartFsm, eff: list, name: str) -> None:
    if fsm.phase is not Phase.SCANNING:
        return
    if name == "up":
        if _move_selection(fsm, -1):
            _show(fsm, eff, _item_view(fsm))
    elif name == "down":
        if _move_selection(fsm, +1):
            _show(fsm, eff, _item_view(fsm))
    elif name == "delete":
        if _delete_selected(fsm):
            eff.append(Log("item removed"))
            _show(fsm, eff, _item_view(fsm))
    elif name == "pay":
        _start_payment(fsm, eff)


def _move_selection(fsm: CartFsm, delta: int) -> bool:
    if fsm.selected is None:
        return False
    new = min(max(fsm.selected + delta, 0), len(fsm.items) - 1)
    if new == fsm.selected:
        return False
    fsm.selected = new
    _scroll_into_view(fsm)
    return True


def _scroll_into_view(fsm: CartFsm) -> None:
    if fsm.selected is None:
        fsm.scroll = 0
        return
    if fsm.selected < fsm.scroll:
        fsm.scroll = fsm.selected
    elif fsm.selected >= fsm.scroll + 2:
        fsm.scroll = fsm.selected - 1
    fsm.scroll = min(fsm.scroll, max(0, len(fsm.items) - 2))


def _delete_selected(fsm: CartFsm) -> bool:
    if fsm.selected is None or not fsm.items:
        return False
    fsm.items.pop(fsm.selected)
    if not fsm.items:
        fsm.selected = None
        fsm.scroll = 0
    else:
        fsm.selected = min(fsm.selected, len(fsm.items) - 1)
        _scroll_into_view(fsm)
    return True


def _start_payment(fsm: CartFsm, eff: list) -> None:
    if not fsm.items or fsm.op is not None or fsm.user is None:
        return
    total = compute_total(fsm.items)
    if total > fsm.user["cash"]:
        eff.append(Log("insufficient funds: total %d, cash %d" % (total, fsm.user["cash"])))
        _notice(fsm, eff, "LOW BALANCE")
        return
    body = build_pay_update(fsm.user, fsm.items, fsm.now)
    fsm.pay = Pay(body=body, record_at=fsm.now)
    fsm.phase = Phase.PAYING
    fsm.op = Op("pay_put", _put_user_request(fsm, body))
    eff.append(Log("paying: total %d for %d items" % (total, len(fsm.items))))
    _show(fsm, eff, display.Paying())
    eff.append(SendHttp(fsm.op.request))


def _put_user_request(fsm: CartFsm, body: dict) -> HttpRequest:
    return request(Method.PUT, "/users/%s" % body["_id"], canonical_json(body),
                   headers=(("Host", fsm.config.host), ("Content-Type", "application/json")))


def _parse_body(resp: HttpResponse):
    try:
        body = json_parse(resp.body)
    except JsonError:
        return None
    return body if isinstance(body, dict) else None


def _on_reply(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if fsm.op is None or fsm.op.request is None:
        return  # nothing in flight, or bring-up op: no HTTP reply expected
    fsm.op.retry_at = None  # a late answer cancels any pending backoff
    kind = fsm.op.kind
    if kind == "user_get":
        _reply_user_get(fsm, eff, resp)
    elif kind == "tag_get":
        _reply_tag_get(fsm, eff, resp)
    elif kind == "pay_put":
        _reply_pay_put(fsm, eff, resp)
    elif kind == "pay_reget":
        _reply_pay_reget(fsm, eff, resp)
    elif kind == "tag_del":
        _reply_tag_del(fsm, eff, resp)
    elif kind == "del_reget":
        _reply_del_reget(fsm, eff, resp)
    else:
        _op_failed(fsm, eff, "reply in unknown op %r" % kind)


def _valid_user(body) -> bool:
    return (body is not None and isinstance(body.get("name"), str)
            and isinstance(body.get("cash"), int) and not isinstance(body.get("cash"), bool)
            and body["cash"] >= 0 and isinstance(body.get("_rev"), str)
            and isinstance(body.get("history", []), list))


def _valid_tag(body) -> bool:
    return (body is not None and isinstance(body.get("name"), str)
            and isinstance(body.get("cost"), int) and not isinstance(body.get("cost"), bool)
            and body["cost"] >= 0 and isinstance(body.get("_rev"), str))


def _reply_user_get(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if resp.status == 200:
        body = _parse_body(resp)
        if not _valid_user(body):
            _op_failed(fsm, eff, "unusable user document")
            return
        body.setdefault("history", [])
        fsm.user = body
        fsm.op = None
        fsm.phase = Phase.SHOWING_USER
        fsm.show_until = fsm.now + SHOW_MS
        eff.append(Log("user: %s cash %d" % (body["name"], body["cash"])))
        eff.append(Beep())
        _show(fsm, eff, display.UserCard(body["name"], body["cash"]))
    elif resp.status == 404:
        fsm.op = None
        eff.append(Log("unknown card"))
        _notice(fsm, eff, "UNKNOWN CARD")
    else:
        _op_failed(fsm, eff, "http %d" % resp.status)


def _reply_tag_get(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if resp.status == 200:
        body = _parse_body(resp)
        if not _valid_tag(body):
            _op_failed(fsm, eff, "unusable tag document")
            return
        item = CartItem(fsm.op.uid, body["name"], body["cost"], body["_rev"])
        fsm.op = None
        fsm.items.append(item)
        if fsm.selected is None:
            fsm.selected = 0
        eff.append(Log("item added: %s %s %d" % (item.uid, item.name, item.cost)))
        eff.append(Beep())
        _show(fsm, eff, _item_view(fsm))
    elif resp.status == 404:
        fsm.op = None
        eff.append(Log("unknown tag"))
        _notice(fsm, eff, "UNKNOWN TAG")
    else:
        _op_failed(fsm, eff, "http %d" % resp.status)


def _reply_pay_put(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if resp.status == 201:
        eff.append(Log("payment committed"))
        fsm.op = None
        _issue_delete(fsm, eff)
    elif resp.status == 409:
        fsm.conflicts_seen += 1
        if fsm.pay.put_retries >= MAX_RETRIES:
            _fault(fsm, eff, "payment conflict budget exhausted")
            return
        fsm.pay.put_retries += 1
        fsm.op = Op("pay_reget", request(Method.GET, "/users/%s" % fsm.pay.body["_id"],
                                         headers=(("Host", fsm.config.host),)))
        eff.append(Log("payment conflicted, refetching user"))
        eff.append(SendHttp(fsm.op.request))
    else:
        _op_failed(fsm, eff, "http %d" % resp.status)


def _reply_pay_reget(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if resp.status == 200:
        body = _parse_body(resp)
        if not _valid_user(body):
            _op_failed(fsm, eff, "unusable user document")
            return
        committed = any(rec.get("at") == fsm.pay.record_at
                        for rec in body.get("history", []) if isinstance(rec, dict))
        if committed:
            # our earlier PUT won after all; never charge twice
            eff.append(Log("payment already recorded, proceeding"))
            fsm.op = None
            _issue_delete(fsm, eff)
            return
        total = compute_total(fsm.items)
        if total > body["cash"]:
            _fault(fsm, eff, "insufficient funds after conflict")
            return
        new_body = build_pay_update(body, fsm.items, fsm.pay.record_at)
        fsm.pay.body = new_body
        fsm.op = Op("pay_put", _put_user_request(fsm, new_body))
        eff.append(Log("rebuilt payment update"))
        eff.append(SendHttp(fsm.op.request))
    elif resp.status == 404:
        _fault(fsm, eff, "user document vanished during payment")
    else:
        _op_failed(fsm, eff, "http %d" % resp.status)


def _issue_delete(fsm: CartFsm, eff: list) -> None:
    if fsm.pay.idx >= len(fsm.items):
        _complete_payment(fsm, eff)
        return
    item = fsm.items[fsm.pay.idx]
    fsm.op = Op("tag_del",
                request(Method.DELETE, "/tags/%s?rev=%s" % (item.uid, item.rev),
                        headers=(("Host", fsm.config.host),)),
                uid=item.uid)
    eff.append(SendHttp(fsm.op.request))


def _reply_tag_del(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if resp.status in (200, 404):
        # 404 means already tombstoned: the goal state, so success
        eff.append(Log("tag cleared: %s" % fsm.op.uid))
        fsm.op = None
        fsm.pay.idx += 1
        fsm.pay.del_retried = False
        _issue_delete(fsm, eff)
    elif resp.status == 409:
        fsm.conflicts_seen += 1
        if fsm.pay.del_retried:
            eff.append(Log("tag %s delete still conflicted, leaving it" % fsm.op.uid))
            fsm.op = None
            fsm.pay.idx += 1
            fsm.pay.del_retried = False
            fsm.skipped_deletes += 1
            _issue_delete(fsm, eff)
            return
        fsm.pay.del_retried = True
        uid = fsm.op.uid
        fsm.op = Op("del_reget", request(Method.GET, "/tags/%s" % uid,
                                         headers=(("Host", fsm.config.host),)), uid=uid)
        eff.append(Log("tag %s delete conflicted, refetching" % uid))
        eff.append(SendHttp(fsm.op.request))
    else:
        _op_failed(fsm, eff, "http %d" % resp.status)


def _reply_del_reget(fsm: CartFsm, eff: list, resp: HttpResponse) -> None:
    if resp.status == 200:
        body = _parse_body(resp)
        if body is None or not isinstance(body.get("_rev"), str):
            _op_failed(fsm, eff, "unusable tag document")
            return
        uid = fsm.op.uid
        fsm.op = Op("tag_del",
                    request(Method.DELETE, "/tags/%s?rev=%s" % (uid, body["_rev"]),
                            headers=(("Host", fsm.config.host),)),
                    uid=uid)
        eff.append(SendHttp(fsm.op.request))
    elif resp.status == 404:
        eff.append(Log("tag already gone: %s" % fsm.op.uid))
        fsm.op = None
        fsm.pay.idx += 1
        fsm.pay.del_retried = False
        _issue_delete(fsm, eff)
    else:
        _op_failed(fsm, eff, "http %d" % resp.status)


def _complete_payment(fsm: CartFsm, eff: list) -> None:
    total = fsm.pay.body["history"][-1]["total"]
    eff.append(Log("payment complete: total %d" % total))
    eff.append(Beep())
    _clear_session(fsm)
    fsm.phase = Phase.AWAIT_CARD
    fsm.notice_until = fsm.now + NOTICE_MS
    eff.append(Render(display.Done()))
