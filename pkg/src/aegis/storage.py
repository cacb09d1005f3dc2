"""File-backed stand-ins for the cloud stores: objects, credentials, events.

Layout under one data root:

    <root>/objects/<bucket>/<key>     blobs (enrolled face images)
    <root>/tables/<table>.json        one JSON document per credential table
    <root>/events.log                 append-only JSON-lines audit trail

Objects and tables are written to a temporary file and atomically renamed,
so a reader (or a process restarted mid-write) never observes a torn file.
Mutations serialize on a per-store lock; reads serve the last committed
state.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

_NAME_RE = re.compile(r"^[a-z0-9._-]{1,64}$")


class StorageError(Exception):
    """I/O-level failure inside a store."""


class NotFoundError(StorageError):
    """The requested object or record does not exist."""


class InvalidNameError(StorageError):
    """Bucket/key outside the allowed charset [a-z0-9._-]{1,64}."""


def utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"write to {path} failed: {exc}") from exc


# --------------------------------------------------------------------------
# Records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UserRecord:
    user_id: str
    display_name: str
    access_level: str = "standard"
    active: bool = True

    def validate(self) -> None:
        if not self.user_id:
            raise ValueError("user_id required")
        if self.access_level not in ("standard", "admin"):
            raise ValueError(f"access_level {self.access_level!r} invalid")

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "display_name": self.display_name,
            "access_level": self.access_level,
            "active": self.active,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "UserRecord":
        return cls(
            user_id=doc["user_id"],
            display_name=doc["display_name"],
            access_level=doc.get("access_level", "standard"),
            active=bool(doc.get("active", True)),
        )


@dataclass(frozen=True)
class FaceRecord:
    face_id: str
    user_id: str
    object_key: str
    embedding: np.ndarray
    enrolled_at: str

    def validate(self) -> None:
        if not re.fullmatch(r"[0-9a-f]{16}", self.face_id):
            raise ValueError(f"face_id {self.face_id!r} must be 16 lowercase hex chars")
        if np.asarray(self.embedding).shape != (256,):
            raise ValueError("embedding must hold 256 values")

    def to_json(self) -> dict:
        return {
            "face_id": self.face_id,
            "user_id": self.user_id,
            "object_key": self.object_key,
            "embedding": [float(v) for v in np.asarray(self.embedding)],
            "enrolled_at": self.enrolled_at,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FaceRecord":
        return cls(
            face_id=doc["face_id"],
            user_id=doc["user_id"],
            object_key=doc["object_key"],
            embedding=np.asarray(doc["embedding"], dtype=np.float64),
            enrolled_at=doc["enrolled_at"],
        )


@dataclass(frozen=True)
class AccessEvent:
    event_id: int
    timestamp: str
    device_id: str
    decision: str  # granted | denied
    reason: str
    face_id: str | None = None
    similarity: float | None = None
    liveness_score: float | None = None

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "timestamp": self.timestamp,
            "device_id": self.device_id,
            "decision": self.decision,
            "reason": self.reason,
            "face_id": self.face_id,
            "similarity": self.similarity,
            "liveness_score": self.liveness_score,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AccessEvent":
        return cls(
            event_id=int(doc["event_id"]),
            timestamp=doc["timestamp"],
            device_id=doc["device_id"],
            decision=doc["decision"],
            reason=doc["reason"],
            face_id=doc.get("face_id"),
            similarity=doc.get("similarity"),
            liveness_score=doc.get("liveness_score"),
        )


# --------------------------------------------------------------------------
# Object store
# --------------------------------------------------------------------------

class ObjectStore:
    """Durable blob store: one file per key under implicit bucket directories."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, bucket: str, key: str) -> Path:
        for name in (bucket, key):
            if not _NAME_RE.fullmatch(name):
                raise InvalidNameError(f"invalid name {name!r}")
        return self.root / bucket / key

    def put(self, bucket: str, key: str, data: bytes) -> dict:
        path = self._path(bucket, key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(path, bytes(data))
        return {"bucket": bucket, "key": key, "size": len(data)}

    def get(self, bucket: str, key: str) -> bytes:
        path = self._path(bucket, key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"{bucket}/{key} not found") from None
        except OSError as exc:
            raise StorageError(f"read of {bucket}/{key} failed: {exc}") from exc

    def delete(self, bucket: str, key: str) -> None:
        path = self._path(bucket, key)
        with self._lock:
            try:
                path.unlink()
            except FileNotFoundError:
                pass
            except OSError as exc:
                raise StorageError(f"delete of {bucket}/{key} failed: {exc}") from exc

    def list(self, bucket: str, prefix: str = "") -> list[str]:
        if not _NAME_RE.fullmatch(bucket):
            raise InvalidNameError(f"invalid name {bucket!r}")
        bucket_dir = self.root / bucket
        if not bucket_dir.is_dir():
            return []
        return sorted(p.name for p in bucket_dir.iterdir() if p.name.startswith(prefix))


# --------------------------------------------------------------------------
# Credential store
# --------------------------------------------------------------------------

_TABLE_SCHEMAS = {"users": UserRecord, "faces": FaceRecord}
_TABLE_KEYS = {"users": "user_id", "faces": "face_id"}


class CredentialStore:
    """Low-latency key-value tables, fully resident in memory.

    Each table persists as one JSON document mapping id -> record and is
    rewritten atomically on every mutation.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._tables: dict[str, dict] = {}
        for table in _TABLE_SCHEMAS:
            self._tables[table] = self._load(table)

    def _table_path(self, table: str) -> Path:
        if table not in _TABLE_SCHEMAS:
            raise StorageError(f"unknown table {table!r}")
        return self.root / f"{table}.json"

    def _load(self, table: str) -> dict:
        path = self._table_path(table)
        if not path.exists():
            return {}
        try:
            doc = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"table {table} unreadable: {exc}") from exc
        schema = _TABLE_SCHEMAS[table]
        return {key: schema.from_json(rec) for key, rec in doc.items()}

    def _persist(self, table: str) -> None:
        doc = {key: rec.to_json() for key, rec in sorted(self._tables[table].items())}
        data = json.dumps(doc, indent=2, sort_keys=True).encode("utf-8")
        self._table_path(table).parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(self._table_path(table), data)

    def put(self, table: str, record) -> None:
        record.validate()
        key = getattr(record, _TABLE_KEYS[table])
        with self._lock:
            self._tables[table][key] = record
            self._persist(table)

    def get(self, table: str, record_id: str):
        try:
            return self._tables[table][record_id]
        except KeyError:
            raise NotFoundError(f"{table}/{record_id} not found") from None

    def delete(self, table: str, record_id: str) -> None:
        with self._lock:
            if record_id in self._tables[table]:
                del self._tables[table][record_id]
                self._persist(table)

    def list(self, table: str) -> list:
        if table not in _TABLE_SCHEMAS:
            raise StorageError(f"unknown table {table!r}")
        return [rec for _, rec in sorted(self._tables[table].items())]


# --------------------------------------------------------------------------
# Event log
# --------------------------------------------------------------------------

class EventLog:
    """Append-only audit trail; event ids are strictly increasing."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._events: list[AccessEvent] = []
        if self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                line = line.strip()
                if line:
                    self._events.append(AccessEvent.from_json(json.loads(line)))
        self._next_id = self._events[-1].event_id + 1 if self._events else 1

    def append(
        self,
        device_id: str,
        decision: str,
        reason: str,
        face_id: str | None = None,
        similarity: float | None = None,
        liveness_score: float | None = None,
    ) -> AccessEvent:
        with self._lock:
            event = AccessEvent(
                event_id=self._next_id,
                timestamp=utc_now_rfc3339(),
                device_id=device_id,
                decision=decision,
                reason=reason,
                face_id=face_id,
                similarity=similarity,
                liveness_score=liveness_score,
            )
            line = json.dumps(event.to_json(), sort_keys=True) + "\n"
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageError(f"event append failed: {exc}") from exc
            self._events.append(event)
            self._next_id += 1
            return event

    def list_events(self, since: int = 0, limit: int = 1000) -> list[AccessEvent]:
        out = [e for e in self._events if e.event_id > since]
        return out[: max(0, limit)]


@dataclass
class DataStores:
    """The gateway's storage bundle rooted at one directory."""

    root: Path
    objects: ObjectStore = field(init=False)
    credentials: CredentialStore = field(init=False)
    events: EventLog = field(init=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.objects = ObjectStore(self.root / "objects")
        self.credentials = CredentialStore(self.root / "tables")
        self.events = EventLog(self.root / "events.log")
