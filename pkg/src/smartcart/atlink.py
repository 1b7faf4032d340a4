"""Emulated ESP-01 serial link: AT command codec, firmware-side reply
tokenizer, and the modem state machine bridging serial bytes to a TCP-ish
transport.

The firmware side never sees sockets; it writes AT command lines and reads
reply tokens. The modem side parses those lines and talks to whatever
transport the host wires in (the simulated network or a real client).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum

CRLF = b"\r\n"
SEND_MIN = 1
SEND_MAX = 2048


# -- commands (firmware -> modem) --------------------------------------------

@dataclass(frozen=True)
class Ping:
    pass


@dataclass(frozen=True)
class Reset:
    pass


@dataclass(frozen=True)
class JoinAp:
    ssid: str
    password: str


@dataclass(frozen=True)
class TcpStart:
    host: str
    port: int


@dataclass(frozen=True)
class Send:
    length: int


@dataclass(frozen=True)
class Close:
    pass


AtCommand = Ping | Reset | JoinAp | TcpStart | Send | Close


@dataclass(frozen=True)
class MalformedAt:
    reason: str


# -- replies (modem -> firmware) ----------------------------------------------

@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Error:
    pass


@dataclass(frozen=True)
class WifiConnected:
    pass


@dataclass(frozen=True)
class WifiGotIp:
    pass


@dataclass(frozen=True)
class Connect:
    pass


@dataclass(frozen=True)
class SendPrompt:
    pass


@dataclass(frozen=True)
class SendOk:
    pass


@dataclass(frozen=True)
class Closed:
    pass


@dataclass(frozen=True)
class Ipd:
    payload: bytes


ModemReply = Ok | Error | WifiConnected | WifiGotIp | Connect | SendPrompt | SendOk | Closed | Ipd

_HOST_RE = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$")
_QUOTED = r'"([^"\\\x00-\x1f]*)"'
_CWJAP_RE = re.compile('^AT\\+CWJAP=%s,%s$' % (_QUOTED, _QUOTED))
_CIPSTART_RE = re.compile('^AT\\+CIPSTART="TCP",%s,(\\d{1,5})$' % _QUOTED)
_CIPSEND_RE = re.compile(r"^AT\+CIPSEND=(\d{1,4})$")


def _valid_host(host: str) -> bool:
    m = _HOST_RE.match(host)
    return bool(m) and all(int(g) <= 255 for g in m.groups())


def _valid_quoted(s: str) -> bool:
    return all(c not in '"\\' and ord(c) >= 0x20 for c in s)


def encode_command(cmd: AtCommand) -> bytes:
    """AT line for a command, CRLF-terminated; strings double-quoted."""
    if isinstance(cmd, Ping):
        return b"AT\r\n"
    if isinstance(cmd, Reset):
        return b"AT+RST\r\n"
    if isinstance(cmd, JoinAp):
        if not (_valid_quoted(cmd.ssid) and _valid_quoted(cmd.password)):
            raise ValueError("unquotable ssid or password")
        return ('AT+CWJAP="%s","%s"\r\n' % (cmd.ssid, cmd.password)).encode("ascii")
    if isinstance(cmd, TcpStart):
        if not _valid_host(cmd.host) or not 1 <= cmd.port <= 65535:
            raise ValueError("bad host or port: %r:%r" % (cmd.host, cmd.port))
        return ('AT+CIPSTART="TCP","%s",%d\r\n' % (cmd.host, cmd.port)).encode("ascii")
    if isinstance(cmd, Send):
        if not SEND_MIN <= cmd.length <= SEND_MAX:
            raise ValueError("send length out of range: %d" % cmd.length)
        return b"AT+CIPSEND=%d\r\n" % cmd.length
    if isinstance(cmd, Close):
        return b"AT+CIPCLOSE\r\n"
    raise ValueError("not an AT command: %r" % (cmd,))


def modem_parse_line(line: bytes):
    """Inverse of encode_command for one CRLF-terminated line."""
    if line.endswith(CRLF):
        line = line[:-2]
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError:
        return MalformedAt("non-ascii command line")
    if text == "AT":
        return Ping()
    if text == "AT+RST":
        return Reset()
    if text == "AT+CIPCLOSE":
        return Close()
    m = _CWJAP_RE.match(text)
    if m:
        return JoinAp(m.group(1), m.group(2))
    m = _CIPSTART_RE.match(text)
    if m:
        host, port = m.group(1), int(m.group(2))
        if not _valid_host(host) or not 1 <= port <= 65535:
            return MalformedAt("bad host or port")
        return TcpStart(host, port)
    m = _CIPSEND_RE.match(text)
    if m:
        n = int(m.group(1))
        if not SEND_MIN <= n <= SEND_MAX:
            return MalformedAt("send length out of range")
        return Send(n)
    return MalformedAt("unknown command: %r" % text[:32])


def encode_reply(reply: ModemReply) -> bytes:
    if isinstance(reply, Ok):
        return b"OK\r\n"
    if isinstance(reply, Error):
        return b"ERROR\r\n"
    if isinstance(reply, WifiConnected):
        return b"WIFI CONNECTED\r\n"
    if isinstance(reply, WifiGotIp):
        return b"WIFI GOT IP\r\n"
    if isinstance(reply, Connect):
        return b"CONNECT\r\n"
    if isinstance(reply, SendPrompt):
        return b"> "
    if isinstance(reply, SendOk):
        return b"SEND OK\r\n"
    if isinstance(reply, Closed):
        return b"CLOSED\r\n"
    if isinstance(reply, Ipd):
        return b"+IPD,%d:%s" % (len(reply.payload), reply.payload)
    raise ValueError("not a modem reply: %r" % (reply,))


_LINE_REPLIES = {
    b"OK": Ok(),
    b"ERROR": Error(),
    b"WIFI CONNECTED": WifiConnected(),
    b"WIFI GOT IP": WifiGotIp(),
    b"CONNECT": Connect(),
    b"SEND OK": SendOk(),
    b"CLOSED": Closed(),
}


@dataclass
class FeedResult:
    replies: list
    consumed: int
    skipped: int


def driver_feed(data: bytes) -> FeedResult:
    """Tokenize accumulated modem output into replies.

    Consumes complete tokens only; re-call with the unconsumed tail plus new
    bytes. Unknown lines are skipped (counted), so banners don't wedge the
    firmware. Tokenization is invariant under chunking of the stream.
    """
    replies: list = []
    skipped = 0
    pos = 0
    n = len(data)
    while pos < n:
        rest = data[pos:]
        if rest.startswith(b"+IPD,"):
            colon = rest.find(b":", 5, 5 + 12)
            header = rest[5:colon] if colon != -1 else rest[5:5 + 12]
            if header.isdigit() or (header == b"" and colon == -1 and len(rest) < 18):
                if colon == -1:
                    if len(rest) >= 18:  # length field overlong: drop the marker
                        skipped += 1
                        pos += 5
                        continue
                    break
                length = int(rest[5:colon])
                if len(rest) < colon + 1 + length:
                    break
                replies.append(Ipd(bytes(rest[colon + 1:colon + 1 + length])))
                pos += colon + 1 + length
                continue
            # "+IPD," not followed by a length: treat as an unknown line below
        if rest.startswith(b"> "):
            replies.append(SendPrompt())
            pos += 2
            continue
        if rest == b">":
            break  # might grow into the prompt
        eol = rest.find(CRLF)
        if eol == -1:
            break
        line = bytes(rest[:eol])
        pos += eol + 2
        if line == b"":
            continue
        token = _LINE_REPLIES.get(line)
        if token is not None:
            replies.append(token)
        else:
            skipped += 1
    return FeedResult(replies, pos, skipped)


class Tokenizer:
    """Buffering wrapper over driver_feed for stream consumers."""

    def __init__(self):
        self.buffer = b""
        self.skipped = 0

    def feed(self, chunk: bytes) -> list:
        self.buffer += chunk
        result = driver_feed(self.buffer)
        self.buffer = self.buffer[result.consumed:]
        self.skipped += result.skipped
        return result.replies


# -- modem state machine -------------------------------------------------------

class ModemPhase(Enum):
    IDLE = "idle"
    JOINED = "joined"
    CONNECTED = "connected"
    AWAITING_PAYLOAD = "awaiting_payload"


@dataclass(frozen=True)
class SerialBytes:
    data: bytes


@dataclass(frozen=True)
class NetOpenResult:
    conn: int
    ok: bool


@dataclass(frozen=True)
class NetData:
    conn: int
    data: bytes


@dataclass(frozen=True)
class NetClosed:
    conn: int


ModemInput = SerialBytes | NetOpenResult | NetData | NetClosed


@dataclass(frozen=True)
class NetOpen:
    conn: int
    host: str
    port: int


@dataclass(frozen=True)
class NetSend:
    conn: int
    data: bytes


@dataclass(frozen=True)
class NetClose:
    conn: int


NetAction = NetOpen | NetSend | NetClose


@dataclass(frozen=True)
class ModemState:
    ap_ssid: str = "market1"
    phase: ModemPhase = ModemPhase.IDLE
    line_buf: bytes = b""
    expected: int = 0
    payload_buf: bytes = b""
    conn: int = 0            # current connection id, 0 = none
    pending_open: int = 0    # connection id awaiting an open result, 0 = none
    next_conn: int = 1


def modem_step(state: ModemState, event: ModemInput) -> tuple[ModemState, bytes, list]:
    """Advance the modem by one input -> (state', serial output, net actions)."""
    out = bytearray()
    actions: list = []

    if isinstance(event, NetOpenResult):
        if event.conn == state.pending_open and state.pending_open:
            if event.ok:
                state = replace(state, phase=ModemPhase.CONNECTED,
                                conn=event.conn, pending_open=0)
                out += b"CONNECT\r\nOK\r\n"
            else:
                state = replace(state, pending_open=0)
                out += b"ERROR\r\n"
        return state, bytes(out), actions

    if isinstance(event, NetData):
        if event.conn == state.conn and state.phase in (
                ModemPhase.CONNECTED, ModemPhase.AWAITING_PAYLOAD) and event.data:
            out += b"+IPD,%d:%s" % (len(event.data), event.data)
        return state, bytes(out), actions

    if isinstance(event, NetClosed):
        if event.conn == state.conn and state.phase in (
                ModemPhase.CONNECTED, ModemPhase.AWAITING_PAYLOAD):
            state = replace(state, phase=ModemPhase.JOINED, conn=0,
                            expected=0, payload_buf=b"")
            out += b"CLOSED\r\n"
        return state, bytes(out), actions

    data = state.line_buf + event.data
    state = replace(state, line_buf=b"")
    while data:
        if state.phase is ModemPhase.AWAITING_PAYLOAD:
            take = state.expected - len(state.payload_buf)
            chunk, data = data[:take], data[take:]
            state = replace(state, payload_buf=state.payload_buf + chunk)
            if len(state.payload_buf) == state.expected:
                actions.append(NetSend(state.conn, state.payload_buf))
                out += b"SEND OK\r\n"
                state = replace(state, phase=ModemPhase.CONNECTED,
                                expected=0, payload_buf=b"")
            continue
        eol = data.find(CRLF)
        if eol == -1:
            state = replace(state, line_buf=data)
            break
        line, data = data[:eol], data[eol + 2:]
        if line == b"":
            continue
        state, line_out, line_actions = _modem_command(state, modem_parse_line(line))
        out += line_out
        actions.extend(line_actions)
    return state, bytes(out), actions


def _modem_command(state: ModemState, cmd) -> tuple[ModemState, bytes, list]:
    actions: list = []
    if isinstance(cmd, MalformedAt):
        return state, b"ERROR\r\n", actions
    if isinstance(cmd, Ping):
        return state, b"OK\r\n", actions
    if isinstance(cmd, Reset):
        if state.conn:
            actions.append(NetClose(state.conn))
        state = ModemState(ap_ssid=state.ap_ssid, next_conn=state.next_conn)
        return state, b"ready\r\nOK\r\n", actions
    if isinstance(cmd, JoinAp):
        if cmd.ssid != state.ap_ssid:
            return state, b"ERROR\r\n", actions
        if state.conn:
            actions.append(NetClose(state.conn))
        state = replace(state, phase=ModemPhase.JOINED, conn=0, pending_open=0)
        return state, b"WIFI CONNECTED\r\nWIFI GOT IP\r\nOK\r\n", actions
    if isinstance(cmd, TcpStart):
        if state.phase is ModemPhase.IDLE or state.phase is ModemPhase.AWAITING_PAYLOAD:
            return state, b"ERROR\r\n", actions
        if state.phase is ModemPhase.CONNECTED:
            return state, b"ERROR\r\n", actions  # single connection at a time
        conn = state.next_conn
        state = replace(state, pending_open=conn, next_conn=conn + 1)
        actions.append(NetOpen(conn, cmd.host, cmd.port))
        return state, b"", actions
    if isinstance(cmd, Send):
        if state.phase is not ModemPhase.CONNECTED:
            return state, b"ERROR\r\n", actions
        state = replace(state, phase=ModemPhase.AWAITING_PAYLOAD,
                        expected=cmd.length, payload_buf=b"")
        return state, b"> ", actions
    if isinstance(cmd, Close):
        if state.phase not in (ModemPhase.CONNECTED, ModemPhase.AWAITING_PAYLOAD):
            return state, b"ERROR\r\n", actions
        actions.append(NetClose(state.conn))
        state = replace(state, phase=ModemPhase.JOINED, conn=0,
                        expected=0, payload_buf=b"")
        return state, b"CLOSED\r\nOK\r\n", actions
    raise ValueError("unhandled command %r" % (cmd,))
