"""Exit gate: reads a tag, asks the store, and decides pass or alarm.

A tag document still live means the item was never paid for. No answer from
the store also alarms: the gate fails closed rather than waving goods out.
"""

from __future__ import annotations

from dataclasses import dataclass

from .wire import HttpRequest, Method, request

PASS = "pass"
ALARM = "alarm"


@dataclass(frozen=True)
class GateRead:
    at: int
    lane: str
    uid: str


@dataclass(frozen=True)
class GateVerdict:
    at: int
    lane: str
    uid: str
    verdict: str
    reason: str | None = None


def tag_request(uid: str) -> HttpRequest:
    return request(Method.GET, "/tags/%s" % uid)


def classify(status: int | None) -> tuple[str, str | None]:
    """Map the store's answer for GET /tags/{uid} to a verdict.

    status None means no usable reply arrived in time.
    """
    if status == 404:
        return PASS, None
    if status == 200:
        return ALARM, "tag still live"
    if status is None:
        return ALARM, "store unreachable, failing closed"
    return ALARM, "unexpected status %d" % status


def judge(read: GateRead, status: int | None) -> GateVerdict:
    verdict, reason = classify(status)
    return GateVerdict(read.at, read.lane, read.uid, verdict, reason)


def process_stream(reads, lookup) -> list[GateVerdict]:
    """Judge reads in order; lookup(uid) returns an HTTP status or None."""
    return [judge(read, lookup(read.uid)) for read in reads]


def to_record(v: GateVerdict) -> dict:
    record = {"at": v.at, "lane": v.lane, "uid": v.uid, "verdict": v.verdict}
    if v.reason is not None:
        record["reason"] = v.reason
    return record
