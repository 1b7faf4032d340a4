"""Revisioned JSON document store with REST routing and snapshot persistence.

Stands in for the cloud database: two fixed databases ("users", "tags") of
documents under optimistic concurrency. Every write is a compare-and-set on
the document's revision; losers get a conflict and must re-read.
"""

from __future__ import annotations

import copy
import os
import re
import threading
from dataclasses import dataclass

from .wire import HttpRequest, HttpResponse, Method, JsonError, canonical_json, json_parse, json_response

DATABASES = ("users", "tags")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_REV_RE = re.compile(r"^([1-9][0-9]*)-([0-9a-f]{16})$")


class NotFound:
    def __repr__(self) -> str:  # pragma: no cover
        return "NotFound()"


class Conflict:
    def __repr__(self) -> str:  # pragma: no cover
        return "Conflict()"


NOT_FOUND = NotFound()
CONFLICT = Conflict()


class StoreLoadError(ValueError):
    """Snapshot file is unreadable; message names file and line."""


@dataclass(frozen=True)
class Revision:
    generation: int
    digest: str

    def text(self) -> str:
        return "%d-%s" % (self.generation, self.digest)

    @staticmethod
    def parse(text: str) -> "Revision | None":
        m = _REV_RE.match(text)
        if not m:
            return None
        return Revision(int(m.group(1)), m.group(2))


@dataclass
class StoredDoc:
    id: str
    rev: Revision
    body: dict
    deleted: bool


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _digest(body: dict) -> str:
    return "%016x" % fnv1a64(canonical_json(body))


def _check_names(db: str, doc_id: str) -> None:
    if db not in DATABASES:
        raise ValueError("unknown database: %r" % db)
    if not doc_id or "/" in doc_id or any(c.isspace() for c in doc_id):
        raise ValueError("bad document id: %r" % doc_id)


class Store:
    """In-memory document store; writes are serialized per instance."""

    def __init__(self):
        self._dbs: dict[str, dict[str, StoredDoc]] = {db: {} for db in DATABASES}
        self._lock = threading.Lock()

    # -- document operations ------------------------------------------------

    def get_doc(self, db: str, doc_id: str):
        """-> (body, Revision) of the live doc, or NOT_FOUND."""
        _check_names(db, doc_id)
        with self._lock:
            doc = self._dbs[db].get(doc_id)
            if doc is None or doc.deleted:
                return NOT_FOUND
            return copy.deepcopy(doc.body), doc.rev

    def put_doc(self, db: str, doc_id: str, body: dict, base_rev: Revision | None = None):
        """Compare-and-set write -> new Revision, or CONFLICT (state unchanged).

        base_rev absent creates generation 1 only when no revision chain
        exists yet; a tombstoned doc still holds its chain, so reviving it
        requires the tombstone's rev.
        """
        _check_names(db, doc_id)
        if not isinstance(body, dict):
            raise ValueError("document body must be an object")
        stored = {k: v for k, v in body.items() if k != "_rev"}
        if stored.get("_id", doc_id) != doc_id:
            raise ValueError("body _id does not match document id")
        stored["_id"] = doc_id
        stored = copy.deepcopy(stored)
        digest = _digest(stored)  # validates JSON subset before mutating
        with self._lock:
            cur = self._dbs[db].get(doc_id)
            if cur is None:
                if base_rev is not None:
                    return CONFLICT
                new_rev = Revision(1, digest)
            else:
                if base_rev != cur.rev:
                    return CONFLICT
                new_rev = Revision(cur.rev.generation + 1, digest)
            self._dbs[db][doc_id] = StoredDoc(doc_id, new_rev, stored, False)
            return new_rev

    def delete_doc(self, db: str, doc_id: str, rev: Revision):
        """Tombstone the doc -> deleted Revision, CONFLICT, or NOT_FOUND."""
        _check_names(db, doc_id)
        with self._lock:
            cur = self._dbs[db].get(doc_id)
            if cur is None or cur.deleted:
                return NOT_FOUND
            if rev != cur.rev:
                return CONFLICT
            tomb = {"_id": doc_id, "_deleted": True}
            new_rev = Revision(cur.rev.generation + 1, _digest(tomb))
            self._dbs[db][doc_id] = StoredDoc(doc_id, new_rev, tomb, True)
            return new_rev

    # -- inspection (simulation checks, panel listings) ----------------------

    def doc_ids(self, db: str, include_deleted: bool = False) -> list[str]:
        with self._lock:
            return sorted(i for i, d in self._dbs[db].items()
                          if include_deleted or not d.deleted)

    def snapshot(self, db: str) -> list[StoredDoc]:
        """Point-in-time copy of every doc record, tombstones included."""
        with self._lock:
            return [StoredDoc(d.id, d.rev, copy.deepcopy(d.body), d.deleted)
                    for _, d in sorted(self._dbs[db].items())]

    # -- REST ----------------------------------------------------------------

    def handle_request(self, req: HttpRequest) -> HttpResponse:
        """Route one request: GET/PUT/DELETE on "/{db}/{docid}"."""
        path, _, query = req.path.partition("?")
        parts = path.split("/")
        if len(parts) != 3 or parts[0] or parts[1] not in DATABASES or not parts[2]:
            return _error(400, "bad_request")
        db, doc_id = parts[1], parts[2]
        if any(c.isspace() for c in doc_id):
            return _error(400, "bad_request")

        if req.method is Method.GET:
            got = self.get_doc(db, doc_id)
            if got is NOT_FOUND:
                return _error(404, "not_found")
            body, rev = got
            body["_rev"] = rev.text()
            return json_response(200, body)

        if req.method is Method.PUT:
            try:
                body = json_parse(req.body)
            except JsonError:
                return _error(400, "bad_request")
            if not isinstance(body, dict):
                return _error(400, "bad_request")
            base_rev = None
            if "_rev" in body:
                if not isinstance(body["_rev"], str):
                    return _error(400, "bad_request")
                base_rev = Revision.parse(body["_rev"])
                if base_rev is None:
                    return _error(400, "bad_request")
            if body.get("_id", doc_id) != doc_id:
                return _error(400, "bad_request")
            result = self.put_doc(db, doc_id, body, base_rev)
            if result is CONFLICT:
                return _error(409, "conflict")
            return json_response(201, {"ok": True, "id": doc_id, "rev": result.text()})

        if req.method is Method.DELETE:
            rev_text = _query_param(query, "rev")
            if rev_text is None:
                return _error(400, "bad_request")
            rev = Revision.parse(rev_text)
            if rev is None:
                return _error(400, "bad_request")
            result = self.delete_doc(db, doc_id, rev)
            if result is NOT_FOUND:
                return _error(404, "not_found")
            if result is CONFLICT:
                return _error(409, "conflict")
            return json_response(200, {"ok": True, "id": doc_id, "rev": result.text()})

        return _error(400, "bad_request")

    # -- persistence ----------------------------------------------------------

    def persist(self, data_dir: str) -> None:
        """Write one snapshot file per database, atomically (tmp + replace)."""
        for db in DATABASES:
            lines = []
            for doc in self.snapshot(db):
                lines.append(b"%s %s %s %s\n" % (
                    doc.id.encode(), doc.rev.text().encode(),
                    b"true" if doc.deleted else b"false",
                    canonical_json(doc.body)))
            tmp = os.path.join(data_dir, ".%s.snap.tmp" % db)
            with open(tmp, "wb") as fh:
                fh.writelines(lines)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, os.path.join(data_dir, "%s.snap" % db))

    @classmethod
    def restore(cls, data_dir: str) -> "Store":
        """Load snapshot files; missing files mean empty databases."""
        store = cls()
        for db in DATABASES:
            path = os.path.join(data_dir, "%s.snap" % db)
            if not os.path.exists(path):
                continue
            with open(path, "rb") as fh:
                for lineno, raw in enumerate(fh, start=1):
                    where = "%s:%d" % (path, lineno)
                    if not raw.endswith(b"\n"):
                        raise StoreLoadError("%s: truncated line" % where)
                    fields = raw[:-1].split(b" ", 3)
                    if len(fields) != 4:
                        raise StoreLoadError("%s: expected 4 fields" % where)
                    raw_id, raw_rev, raw_deleted, raw_body = fields
                    rev = Revision.parse(raw_rev.decode("ascii", "replace"))
                    if rev is None:
                        raise StoreLoadError("%s: bad revision" % where)
                    if raw_deleted not in (b"true", b"false"):
                        raise StoreLoadError("%s: bad deleted flag" % where)
                    try:
                        doc_id = raw_id.decode("utf-8")
                        body = json_parse(raw_body)
                    except (UnicodeDecodeError, JsonError) as exc:
                        raise StoreLoadError("%s: %s" % (where, exc)) from None
                    if not isinstance(body, dict) or body.get("_id") != doc_id:
                        raise StoreLoadError("%s: body _id mismatch" % where)
                    store._dbs[db][doc_id] = StoredDoc(
                        doc_id, rev, body, raw_deleted == b"true")
        return store


def _error(status: int, code: str) -> HttpResponse:
    return json_response(status, {"error": code})


def _query_param(query: str, name: str) -> str | None:
    for pair in query.split("&"):
        key, sep, value = pair.partition("=")
        if sep and key == name:
            return value
    return None
