"""HTTP decision service: enrollment, access requests, config, audit.

The access pipeline runs strictly in order: decode, detect, pick the primary
face, optional liveness check, embed, search the enrolled collection, check
the credential record, grant. Every access request appends exactly one audit
event before the response goes out.

Endpoints (HTTP/1.1, JSON bodies; images as base64 PGM under "image_pgm_b64"):

    POST   /v1/access-request   {device_id, image_pgm_b64} -> AccessDecision
    POST   /v1/users            {display_name, access_level, image_pgm_b64}
    DELETE /v1/faces/{face_id}
    GET    /v1/events?since&limit
    GET    /v1/config
    PUT    /v1/config

Environment: AEGIS_DATA_ROOT (storage root), AEGIS_LISTEN (host:port,
default 127.0.0.1:8080), AEGIS_ID_SEED (optional; seeded ids for
reproducible harness runs instead of entropy).
"""

from __future__ import annotations

import base64
import json
import os
import secrets
import sys
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .imaging import PgmDecodeError, decode_pgm, encode_pgm
from .liveness import assess_liveness
from .prng import XorShift64Star
from .recognition import (
    DetectionParams,
    RecognitionError,
    best_similarity,
    detect_faces,
    embed,
    search_collection,
    select_primary_face,
)
from .storage import (
    DataStores,
    FaceRecord,
    NotFoundError,
    StorageError,
    UserRecord,
    utc_now_rfc3339,
)

# Decision reason codes.
GRANTED = "GRANTED"
NO_FACE = "NO_FACE"
NO_MATCH = "NO_MATCH"
LOW_SIMILARITY = "LOW_SIMILARITY"
SPOOF_SUSPECTED = "SPOOF_SUSPECTED"
USER_INACTIVE = "USER_INACTIVE"

# Below this best score a denial means "nobody enrolled looks like this"
# rather than "a borderline match fell under the grant threshold".
NO_MATCH_DIAGNOSTIC_SPLIT = 40.0

# Default liveness threshold from the commissioning calibration (midpoint of
# live and spoofed Laplacian energy over a reference corpus). Harness runs
# override it with the value calibrated for their own corpus.
DEFAULT_LIVENESS_THRESHOLD = 11.7

FACES_BUCKET = "faces"


class GatewayError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass(frozen=True)
class GatewayConfig:
    similarity_threshold: float = 80.0
    liveness_enabled: bool = False
    liveness_threshold: float = DEFAULT_LIVENESS_THRESHOLD
    detection: DetectionParams = DetectionParams()

    def validate(self) -> None:
        if not 0.0 <= self.similarity_threshold <= 100.0:
            raise ValueError(f"similarity_threshold {self.similarity_threshold} outside [0, 100]")
        if self.liveness_threshold < 0:
            raise ValueError("liveness_threshold must be >= 0")
        self.detection.validate()

    def to_json(self) -> dict:
        return {
            "similarity_threshold": self.similarity_threshold,
            "liveness_enabled": self.liveness_enabled,
            "liveness_threshold": self.liveness_threshold,
            "detection": {
                "window_sizes": list(self.detection.window_sizes),
                "stride": self.detection.stride,
                "variance_threshold": self.detection.variance_threshold,
                "nms_iou": self.detection.nms_iou,
            },
        }

    @classmethod
    def from_json(cls, doc: dict, base: "GatewayConfig | None" = None) -> "GatewayConfig":
        base = base or cls()
        det_doc = doc.get("detection", {})
        detection = DetectionParams(
            window_sizes=tuple(det_doc.get("window_sizes", base.detection.window_sizes)),
            stride=int(det_doc.get("stride", base.detection.stride)),
            variance_threshold=float(
                det_doc.get("variance_threshold", base.detection.variance_threshold)
            ),
            nms_iou=float(det_doc.get("nms_iou", base.detection.nms_iou)),
        )
        cfg = cls(
            similarity_threshold=float(
                doc.get("similarity_threshold", base.similarity_threshold)
            ),
            liveness_enabled=bool(doc.get("liveness_enabled", base.liveness_enabled)),
            liveness_threshold=float(
                doc.get("liveness_threshold", base.liveness_threshold)
            ),
            detection=detection,
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class AccessDecision:
    granted: bool
    reason: str
    similarity: float | None = None
    face_id: str | None = None
    user_id: str | None = None
    display_name: str | None = None
    liveness_score: float | None = None

    def __post_init__(self):
        if self.granted != (self.reason == GRANTED):
            raise ValueError("granted holds exactly when reason is GRANTED")
        if self.granted and (
            self.similarity is None or self.face_id is None or self.user_id is None
        ):
            raise ValueError("granted decisions carry face, user, and similarity")

    def to_json(self) -> dict:
        return {
            "granted": self.granted,
            "reason": self.reason,
            "similarity": self.similarity,
            "face_id": self.face_id,
            "user_id": self.user_id,
            "display_name": self.display_name,
            "liveness_score": self.liveness_score,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AccessDecision":
        return cls(
            granted=bool(doc["granted"]),
            reason=doc["reason"],
            similarity=doc.get("similarity"),
            face_id=doc.get("face_id"),
            user_id=doc.get("user_id"),
            display_name=doc.get("display_name"),
            liveness_score=doc.get("liveness_score"),
        )


@dataclass(frozen=True)
class EnrollmentRecord:
    user_id: str
    face_id: str
    object_key: str
    display_name: str

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "face_id": self.face_id,
            "object_key": self.object_key,
            "display_name": self.display_name,
        }


class _IdAllocator:
    """16-hex-char ids: entropy in service mode, seeded in harness mode."""

    def __init__(self, seed: int | None = None):
        self._rng = XorShift64Star(seed) if seed is not None else None
        self._lock = threading.Lock()

    def next_id(self) -> str:
        if self._rng is None:
            return secrets.token_hex(8)
        with self._lock:
            return f"{self._rng.next_u64():016x}"


class GatewayApp:
    """The decision service, independent of any transport."""

    def __init__(
        self,
        stores: DataStores,
        config: GatewayConfig | None = None,
        id_seed: int | None = None,
    ):
        self.stores = stores
        self._config = config or GatewayConfig()
        self._config.validate()
        self._config_lock = threading.Lock()
        self._ids = _IdAllocator(id_seed)

    # -- config ------------------------------------------------------------

    @property
    def config(self) -> GatewayConfig:
        with self._config_lock:
            return self._config

    def handle_get_config(self) -> GatewayConfig:
        return self.config

    def handle_put_config(self, doc: dict) -> GatewayConfig:
        with self._config_lock:
            try:
                self._config = GatewayConfig.from_json(doc, base=self._config)
            except (ValueError, TypeError, RecognitionError) as exc:
                raise GatewayError(400, "INVALID_CONFIG", str(exc)) from exc
            return self._config

    # -- pipeline ----------------------------------------------------------

    def handle_access_request(self, device_id: str, image_bytes: bytes) -> AccessDecision:
        try:
            frame = decode_pgm(image_bytes)
        except PgmDecodeError as exc:
            raise GatewayError(400, "BAD_IMAGE", str(exc)) from exc
        config = self.config

        try:
            decision = self._decide(frame, config)
        except RecognitionError as exc:  # e.g. frame below the smallest window
            raise GatewayError(400, "BAD_IMAGE", str(exc)) from exc
        # The audit record precedes the response; a failed append is a 500.
        self.stores.events.append(
            device_id=device_id,
            decision="granted" if decision.granted else "denied",
            reason=decision.reason,
            face_id=decision.face_id,
            similarity=decision.similarity,
            liveness_score=decision.liveness_score,
        )
        return decision

    def _decide(self, frame, config: GatewayConfig) -> AccessDecision:
        boxes = detect_faces(frame, config.detection)
        if not boxes:
            return AccessDecision(granted=False, reason=NO_FACE)
        primary = select_primary_face(boxes)
        crop = frame.crop(primary.x, primary.y, primary.w, primary.h)

        liveness_score = None
        if config.liveness_enabled:
            verdict = assess_liveness(crop, config.liveness_threshold)
            liveness_score = verdict.score
            if not verdict.is_live:
                return AccessDecision(
                    granted=False, reason=SPOOF_SUSPECTED, liveness_score=liveness_score
                )

        probe = embed(crop)
        collection = self.stores.credentials.list("faces")
        match = search_collection(probe, collection, config.similarity_threshold)
        if match is None:
            best = best_similarity(probe, collection)
            reason = (
                NO_MATCH
                if best is None or best < NO_MATCH_DIAGNOSTIC_SPLIT
                else LOW_SIMILARITY
            )
            return AccessDecision(
                granted=False,
                reason=reason,
                similarity=best,
                liveness_score=liveness_score,
            )

        face = self.stores.credentials.get("faces", match.face_id)
        try:
            user = self.stores.credentials.get("users", face.user_id)
        except NotFoundError:
            user = None
        if user is None or not user.active:
            return AccessDecision(
                granted=False,
                reason=USER_INACTIVE,
                similarity=match.similarity,
                face_id=match.face_id,
                user_id=face.user_id,
                liveness_score=liveness_score,
            )
        return AccessDecision(
            granted=True,
            reason=GRANTED,
            similarity=match.similarity,
            face_id=match.face_id,
            user_id=user.user_id,
            display_name=user.display_name,
            liveness_score=liveness_score,
        )

    # -- enrollment --------------------------------------------------------

    def handle_enroll(
        self, display_name: str, access_level: str, image_bytes: bytes
    ) -> EnrollmentRecord:
        if not display_name or not display_name.strip():
            raise GatewayError(400, "BAD_REQUEST", "display_name required")
        if access_level not in ("standard", "admin"):
            raise GatewayError(400, "BAD_REQUEST", f"invalid access_level {access_level!r}")
        try:
            frame = decode_pgm(image_bytes)
        except PgmDecodeError as exc:
            raise GatewayError(400, "BAD_IMAGE", str(exc)) from exc

        try:
            boxes = detect_faces(frame, self.config.detection)
        except RecognitionError as exc:
            raise GatewayError(400, "BAD_IMAGE", str(exc)) from exc
        if not boxes:
            raise GatewayError(400, NO_FACE, "no face found in enrollment image")
        primary = select_primary_face(boxes)
        crop = frame.crop(primary.x, primary.y, primary.w, primary.h)

        face_id = self._ids.next_id()
        user_id = self._ids.next_id()
        object_key = f"{face_id}.pgm"
        # Store the original capture for audit, the embedding for matching.
        self.stores.objects.put(FACES_BUCKET, object_key, encode_pgm(frame))
        self.stores.credentials.put(
            "users",
            UserRecord(
                user_id=user_id,
                display_name=display_name,
                access_level=access_level,
                active=True,
            ),
        )
        self.stores.credentials.put(
            "faces",
            FaceRecord(
                face_id=face_id,
                user_id=user_id,
                object_key=object_key,
                embedding=embed(crop),
                enrolled_at=utc_now_rfc3339(),
            ),
        )
        return EnrollmentRecord(
            user_id=user_id,
            face_id=face_id,
            object_key=object_key,
            display_name=display_name,
        )

    def handle_revoke(self, face_id: str) -> dict:
        # Idempotent; the stored image object is retained for audit.
        self.stores.credentials.delete("faces", face_id)
        return {"revoked": face_id}

    def handle_get_events(self, since: int, limit: int) -> list:
        return self.stores.events.list_events(since=since, limit=limit)


# --------------------------------------------------------------------------
# HTTP layer
# --------------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "aegis-gateway/0.1"

    @property
    def app(self) -> GatewayApp:
        return self.server.app  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        if os.environ.get("AEGIS_HTTP_LOG"):
            super().log_message(fmt, *args)

    def _send_json(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            doc = json.loads(raw or b"{}")
        except json.JSONDecodeError as exc:
            raise GatewayError(400, "BAD_REQUEST", f"body is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise GatewayError(400, "BAD_REQUEST", "body must be a JSON object")
        return doc

    @staticmethod
    def _image_from(doc: dict) -> bytes:
        b64 = doc.get("image_pgm_b64")
        if not isinstance(b64, str):
            raise GatewayError(400, "BAD_REQUEST", "image_pgm_b64 required")
        try:
            return base64.b64decode(b64, validate=True)
        except (ValueError, TypeError) as exc:
            raise GatewayError(400, "BAD_IMAGE", f"invalid base64 image: {exc}") from exc

    def _dispatch(self, method: str) -> None:
        parsed = urlparse(self.path)
        try:
            try:
                self._route(method, parsed)
            except GatewayError:
                raise
            except StorageError as exc:
                raise GatewayError(500, "STORAGE_FAILURE", str(exc)) from exc
        except GatewayError as exc:
            self._send_json(exc.status, {"error": exc.code, "message": exc.message})
        except Exception as exc:  # last-resort 500, never a hung socket
            self._send_json(500, {"error": "INTERNAL", "message": str(exc)})

    def _route(self, method: str, parsed) -> None:
        path = parsed.path.rstrip("/") or "/"
        if method == "POST" and path == "/v1/access-request":
            doc = self._read_json()
            device_id = str(doc.get("device_id") or "unknown-device")
            decision = self.app.handle_access_request(device_id, self._image_from(doc))
            self._send_json(200, decision.to_json())
        elif method == "POST" and path == "/v1/users":
            doc = self._read_json()
            record = self.app.handle_enroll(
                display_name=str(doc.get("display_name") or ""),
                access_level=str(doc.get("access_level") or "standard"),
                image_bytes=self._image_from(doc),
            )
            self._send_json(200, record.to_json())
        elif method == "DELETE" and path.startswith("/v1/faces/"):
            face_id = path.rsplit("/", 1)[-1]
            self._send_json(200, self.app.handle_revoke(face_id))
        elif method == "GET" and path == "/v1/events":
            query = parse_qs(parsed.query)
            since = int(query.get("since", ["0"])[0])
            limit = int(query.get("limit", ["1000"])[0])
            events = self.app.handle_get_events(since, limit)
            self._send_json(200, {"events": [e.to_json() for e in events]})
        elif method == "GET" and path == "/v1/config":
            self._send_json(200, self.app.handle_get_config().to_json())
        elif method == "PUT" and path == "/v1/config":
            self._send_json(200, self.app.handle_put_config(self._read_json()).to_json())
        else:
            raise GatewayError(404, "NOT_FOUND", f"no route for {method} {parsed.path}")

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple, app: GatewayApp):
        super().__init__(address, _Handler)
        self.app = app


def serve(app: GatewayApp, host: str = "127.0.0.1", port: int = 8080) -> GatewayServer:
    return GatewayServer((host, port), app)


def main(argv=None) -> int:
    data_root = os.environ.get("AEGIS_DATA_ROOT", "./aegis-data")
    listen = os.environ.get("AEGIS_LISTEN", "127.0.0.1:8080")
    id_seed_env = os.environ.get("AEGIS_ID_SEED")

    root = Path(data_root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        print(f"data root {root} is not writable: {exc}", file=sys.stderr)
        return 1

    host, _, port_text = listen.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        print(f"invalid AEGIS_LISTEN {listen!r}", file=sys.stderr)
        return 1
    host = host or "127.0.0.1"

    app = GatewayApp(
        DataStores(root),
        id_seed=int(id_seed_env) if id_seed_env else None,
    )
    server = serve(app, host, port)
    print(f"aegis gateway listening on {host}:{server.server_address[1]}, data root {root}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
