"""HTTP/1.1 message framing and canonical JSON encoding.

Every byte that crosses a socket (store server, cart client, gate client)
and every byte that feeds a revision digest goes through this module, so the
encodings here are pinned: CRLF framing, Content-Length bodies only, and a
canonical JSON form with bytewise-sorted object keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

HEAD_LIMIT = 8192     # request/response head incl. terminating CRLF CRLF
BODY_LIMIT = 65536
INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1

CRLF = b"\r\n"


class Method(Enum):
    GET = "GET"
    PUT = "PUT"
    POST = "POST"
    DELETE = "DELETE"


_METHODS = {m.value.encode(): m for m in Method}


class JsonError(ValueError):
    """Input is not JSON in the subset this system speaks."""


@dataclass
class HttpRequest:
    method: Method
    path: str
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    def header(self, name: str) -> str | None:
        low = name.lower()
        for k, v in self.headers:
            if k.lower() == low:
                return v
        return None


@dataclass
class HttpResponse:
    status: int
    reason: str
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    def header(self, name: str) -> str | None:
        low = name.lower()
        for k, v in self.headers:
            if k.lower() == low:
                return v
        return None


@dataclass
class Complete:
    message: object
    consumed: int


class NeedMore:
    def __repr__(self) -> str:  # pragma: no cover
        return "NeedMore()"


@dataclass
class Malformed:
    reason: str


NEED_MORE = NeedMore()


def request(method: Method, path: str, body: bytes = b"",
            headers: tuple[tuple[str, str], ...] = ()) -> HttpRequest:
    """Build a request that satisfies the framing invariants.

    Appends Content-Length when the body is non-empty and none was given.
    """
    hs = list(headers)
    req = HttpRequest(method, path, hs, body)
    if body and req.header("content-length") is None:
        hs.append(("Content-Length", str(len(body))))
    return req


def response(status: int, body: bytes = b"",
             headers: tuple[tuple[str, str], ...] = (),
             reason: str | None = None) -> HttpResponse:
    hs = list(headers)
    resp = HttpResponse(status, reason if reason is not None else REASONS.get(status, ""), hs, body)
    if resp.header("content-length") is None:
        hs.append(("Content-Length", str(len(body))))
    return resp


REASONS = {
    200: "OK",
    201: "Created",
    400: "Bad Request",
    404: "Not Found",
    409: "Conflict",
    500: "Internal Server Error",
}


def json_response(status: int, value) -> HttpResponse:
    body = canonical_json(value)
    return response(status, body, headers=(("Content-Type", "application/json"),))


# ---------------------------------------------------------------------------
# message parsing

def _parse_head(data: bytes) -> tuple[list[bytes], int] | NeedMore | Malformed:
    idx = data.find(b"\r\n\r\n", 0, HEAD_LIMIT)
    if idx == -1:
        if len(data) >= HEAD_LIMIT:
            return Malformed("head exceeds %d bytes" % HEAD_LIMIT)
        return NEED_MORE
    return data[:idx].split(CRLF), idx + 4


def _parse_headers(lines: list[bytes]) -> list[tuple[str, str]] | Malformed:
    headers = []
    for raw in lines:
        name, sep, value = raw.partition(b":")
        if not sep or not name or b" " in name or b"\t" in name:
            return Malformed("bad header line: %r" % raw[:40])
        try:
            headers.append((name.decode("ascii"), value.strip(b" \t").decode("ascii")))
        except UnicodeDecodeError:
            return Malformed("non-ascii header")
    return headers


def _content_length(headers: list[tuple[str, str]]) -> int | Malformed:
    values = [v for k, v in headers if k.lower() == "content-length"]
    if not values:
        return 0
    if len(values) > 1:
        return Malformed("multiple Content-Length headers")
    if not values[0].isdigit():
        return Malformed("non-numeric Content-Length")
    n = int(values[0])
    if n > BODY_LIMIT:
        return Malformed("body exceeds %d bytes" % BODY_LIMIT)
    return n


def parse_http_request(data: bytes) -> Complete | NeedMore | Malformed:
    """Parse one request from accumulated bytes.

    Incremental: call again with more bytes appended until the result is
    Complete or Malformed. Complete.consumed is the exact message length;
    trailing bytes belong to the next message.
    """
    head = _parse_head(data)
    if not isinstance(head, tuple):
        return head
    lines, body_start = head
    parts = lines[0].split(b" ")
    if len(parts) != 3:
        return Malformed("bad request line: %r" % lines[0][:40])
    raw_method, raw_target, version = parts
    if version != b"HTTP/1.1":
        return Malformed("unsupported protocol version")
    method = _METHODS.get(raw_method)
    if method is None:
        return Malformed("unknown method: %r" % raw_method[:16])
    if not raw_target.startswith(b"/") or b"\t" in raw_target:
        return Malformed("bad request target")
    try:
        target = raw_target.decode("ascii")
    except UnicodeDecodeError:
        return Malformed("non-ascii request target")
    headers = _parse_headers(lines[1:])
    if isinstance(headers, Malformed):
        return headers
    length = _content_length(headers)
    if isinstance(length, Malformed):
        return length
    if len(data) < body_start + length:
        return NEED_MORE
    body = bytes(data[body_start:body_start + length])
    return Complete(HttpRequest(method, target, headers, body), body_start + length)


def parse_http_response(data: bytes) -> Complete | NeedMore | Malformed:
    """Mirror of parse_http_request for the response side."""
    head = _parse_head(data)
    if not isinstance(head, tuple):
        return head
    lines, body_start = head
    parts = lines[0].split(b" ", 2)
    if len(parts) < 2 or parts[0] != b"HTTP/1.1":
        return Malformed("bad status line: %r" % lines[0][:40])
    if not parts[1].isdigit() or len(parts[1]) != 3:
        return Malformed("bad status code")
    status = int(parts[1])
    if not 100 <= status <= 599:
        return Malformed("status code out of range")
    try:
        reason = parts[2].decode("ascii") if len(parts) == 3 else ""
    except UnicodeDecodeError:
        return Malformed("non-ascii reason phrase")
    headers = _parse_headers(lines[1:])
    if isinstance(headers, Malformed):
        return headers
    length = _content_length(headers)
    if isinstance(length, Malformed):
        return length
    if len(data) < body_start + length:
        return NEED_MORE
    body = bytes(data[body_start:body_start + length])
    return Complete(HttpResponse(status, reason, headers, body), body_start + length)


def _check_framing(headers: list[tuple[str, str]], body: bytes) -> None:
    values = [v for k, v in headers if k.lower() == "content-length"]
    if len(values) > 1:
        raise ValueError("multiple Content-Length headers")
    if values and (not values[0].isdigit() or int(values[0]) != len(body)):
        raise ValueError("Content-Length does not match body length")
    if not values and body:
        raise ValueError("non-empty body requires Content-Length")
    if len(body) > BODY_LIMIT:
        raise ValueError("body exceeds %d bytes" % BODY_LIMIT)


def serialize_http_request(req: HttpRequest) -> bytes:
    if not isinstance(req.method, Method):
        raise ValueError("method must be a Method")
    if not req.path.startswith("/") or any(c.isspace() for c in req.path):
        raise ValueError("bad request path: %r" % req.path)
    _check_framing(req.headers, req.body)
    out = bytearray()
    out += b"%s %s HTTP/1.1\r\n" % (req.method.value.encode(), req.path.encode("ascii"))
    for k, v in req.headers:
        out += b"%s: %s\r\n" % (k.encode("ascii"), v.encode("ascii"))
    out += CRLF
    out += req.body
    return bytes(out)


def serialize_http_response(resp: HttpResponse) -> bytes:
    if not 100 <= resp.status <= 599:
        raise ValueError("status code out of range")
    _check_framing(resp.headers, resp.body)
    out = bytearray()
    out += b"HTTP/1.1 %d %s\r\n" % (resp.status, resp.reason.encode("ascii"))
    for k, v in resp.headers:
        out += b"%s: %s\r\n" % (k.encode("ascii"), v.encode("ascii"))
    out += CRLF
    out += resp.body
    return bytes(out)


# ---------------------------------------------------------------------------
# JSON

def canonical_json(value) -> bytes:
    """Deterministic JSON bytes: keys sorted bytewise, no whitespace, int-only
    numbers. Same value always encodes to identical bytes, so these bytes are
    safe digest input.
    """
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def _encode(value, out: bytearray) -> None:
    if value is None:
        out += b"null"
    elif value is True:
        out += b"true"
    elif value is False:
        out += b"false"
    elif isinstance(value, int):
        if not INT_MIN <= value <= INT_MAX:
            raise ValueError("integer out of 64-bit range: %d" % value)
        out += b"%d" % value
    elif isinstance(value, str):
        _encode_str(value, out)
    elif isinstance(value, (list, tuple)):
        out += b"["
        for i, item in enumerate(value):
            if i:
                out += b","
            _encode(item, out)
        out += b"]"
    elif isinstance(value, dict):
        out += b"{"
        # Python string order is codepoint order, which equals UTF-8 byte order.
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise ValueError("object keys must be strings")
            if i:
                out += b","
            _encode_str(key, out)
            out += b":"
            _encode(value[key], out)
        out += b"}"
    else:
        raise ValueError("not a JSON value: %r" % type(value))


def _encode_str(s: str, out: bytearray) -> None:
    out += b'"'
    for ch in s:
        if ch == '"':
            out += b'\\"'
        elif ch == "\\":
            out += b"\\\\"
        elif ord(ch) < 0x20:
            out += b"\\u%04x" % ord(ch)
        else:
            out += ch.encode("utf-8")
    out += b'"'


def _reject_float(text: str):
    raise JsonError("non-integer number: %s" % text)


def _reject_constant(text: str):
    raise JsonError("non-finite number: %s" % text)


def _unique_pairs(pairs):
    obj = {}
    for key, val in pairs:
        if key in obj:
            raise JsonError("duplicate object key: %r" % key)
        obj[key] = val
    return obj


def _check_ints(value) -> None:
    if isinstance(value, bool):
        return
    if isinstance(value, int):
        if not INT_MIN <= value <= INT_MAX:
            raise JsonError("integer out of 64-bit range: %d" % value)
    elif isinstance(value, list):
        for item in value:
            _check_ints(item)
    elif isinstance(value, dict):
        for item in value.values():
            _check_ints(item)


def json_parse(data: bytes | bytearray | str):
    """Parse JSON bytes; raises JsonError on anything outside the subset
    (floats, NaN, duplicate keys, out-of-range integers, bad UTF-8).
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise JsonError("invalid UTF-8: %s" % exc) from None
    else:
        text = data
    try:
        value = json.loads(text, object_pairs_hook=_unique_pairs,
                           parse_float=_reject_float, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise JsonError("invalid JSON at offset %d: %s" % (exc.pos, exc.msg)) from None
    _check_ints(value)
    return value
