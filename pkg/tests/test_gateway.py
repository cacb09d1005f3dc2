import base64
import threading

import pytest
import requests

from aegis.gateway import (
    AccessDecision,
    GatewayConfig,
    GatewayError,
    GRANTED,
    LOW_SIMILARITY,
    NO_FACE,
    NO_MATCH,
    SPOOF_SUSPECTED,
    USER_INACTIVE,
)
from aegis.harness import single_face_scene
from aegis.imaging import Image, compose_scene, encode_pgm
from aegis.prng import derive_seed
from aegis.storage import UserRecord

from .conftest import CORPUS_SEED


def identity(index=0):
    return derive_seed(CORPUS_SEED, 1000 + index)


def frame_bytes(identity_seed, scene_seed, **kwargs):
    frame, _ = compose_scene(single_face_scene(identity_seed, scene_seed, **kwargs))
    return encode_pgm(frame)


def uniform_bytes(level=128, size=96):
    return encode_pgm(Image.from_pixels(size, size, [level] * size * size))


@pytest.fixture
def enrolled(app):
    record = app.handle_enroll("User One", "standard", frame_bytes(identity(0), 11))
    return app, record


# -- pipeline ----------------------------------------------------------------

def test_grant_for_enrolled_identity(enrolled):
    app, record = enrolled
    decision = app.handle_access_request("dev-1", frame_bytes(identity(0), 22))
    assert decision.granted and decision.reason == GRANTED
    assert decision.similarity >= 99.0
    assert decision.user_id == record.user_id
    assert decision.display_name == "User One"


def test_no_face_for_uniform_frame(enrolled):
    app, _ = enrolled
    decision = app.handle_access_request("dev-1", uniform_bytes())
    assert not decision.granted and decision.reason == NO_FACE


def test_no_match_for_unknown_identity(enrolled):
    app, _ = enrolled
    decision = app.handle_access_request("dev-1", frame_bytes(identity(9), 23))
    assert not decision.granted and decision.reason == NO_MATCH
    assert decision.similarity is not None and decision.similarity < 40.0


def test_low_similarity_for_rotated_face(enrolled):
    app, _ = enrolled
    decision = app.handle_access_request("dev-1", frame_bytes(identity(0), 24, yaw=45))
    assert not decision.granted and decision.reason == LOW_SIMILARITY
    assert 40.0 <= decision.similarity < 80.0


def test_threshold_60_flips_yaw45_to_grant(enrolled):
    app, _ = enrolled
    image = frame_bytes(identity(0), 24, yaw=45)
    assert not app.handle_access_request("dev-1", image).granted
    app.handle_put_config({"similarity_threshold": 60.0})
    decision = app.handle_access_request("dev-1", image)
    assert decision.granted and decision.similarity >= 60.0


def test_spoof_vulnerability_and_fix(enrolled):
    app, _ = enrolled
    spoofed = frame_bytes(identity(0), 25, spoof=True)
    off = app.handle_access_request("dev-1", spoofed)
    assert off.granted and off.similarity >= 80.0  # reproduced vulnerability

    app.handle_put_config({"liveness_enabled": True})
    on = app.handle_access_request("dev-1", spoofed)
    assert not on.granted and on.reason == SPOOF_SUSPECTED
    assert on.liveness_score is not None


def test_liveness_enabled_still_grants_live_probe(enrolled):
    app, _ = enrolled
    app.handle_put_config({"liveness_enabled": True})
    decision = app.handle_access_request("dev-1", frame_bytes(identity(0), 26))
    assert decision.granted
    assert decision.liveness_score is not None


def test_pipeline_order_no_face_before_liveness(enrolled):
    app, _ = enrolled
    app.handle_put_config({"liveness_enabled": True})
    # uniform frame is both faceless and texture-free; detection must win
    decision = app.handle_access_request("dev-1", uniform_bytes())
    assert decision.reason == NO_FACE


def test_user_inactive_denial(enrolled):
    app, record = enrolled
    user = app.stores.credentials.get("users", record.user_id)
    app.stores.credentials.put(
        "users",
        UserRecord(
            user_id=user.user_id,
            display_name=user.display_name,
            access_level=user.access_level,
            active=False,
        ),
    )
    decision = app.handle_access_request("dev-1", frame_bytes(identity(0), 27))
    assert not decision.granted and decision.reason == USER_INACTIVE


def test_bad_image_raises_400(app):
    with pytest.raises(GatewayError) as err:
        app.handle_access_request("dev-1", b"JFIF not a pgm")
    assert err.value.status == 400


def test_decision_determinism(enrolled):
    app, _ = enrolled
    image = frame_bytes(identity(0), 31)
    first = app.handle_access_request("dev-1", image)
    second = app.handle_access_request("dev-1", image)
    assert first == second


def test_every_request_appends_one_event(enrolled):
    app, _ = enrolled
    before = len(app.stores.events.list_events(limit=10_000))
    app.handle_access_request("dev-1", frame_bytes(identity(0), 33))
    app.handle_access_request("dev-1", uniform_bytes())
    events = app.stores.events.list_events(limit=10_000)
    assert len(events) == before + 2
    assert events[-2].decision == "granted" and events[-2].reason == GRANTED
    assert events[-1].decision == "denied" and events[-1].reason == NO_FACE
    assert events[-2].similarity >= 99.0


def test_concurrent_requests_all_audited(enrolled):
    app, _ = enrolled
    image = frame_bytes(identity(0), 34)
    errors = []

    def worker():
        try:
            assert app.handle_access_request("dev-n", image).granted
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    ids = [e.event_id for e in app.stores.events.list_events(limit=10_000)]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)


# -- enrollment and revocation -------------------------------------------------

def test_enroll_stores_resolvable_object(enrolled):
    app, record = enrolled
    stored = app.stores.objects.get("faces", record.object_key)
    assert stored.startswith(b"P5")
    face = app.stores.credentials.get("faces", record.face_id)
    assert face.user_id == record.user_id


def test_enroll_uniform_image_no_face(app):
    with pytest.raises(GatewayError) as err:
        app.handle_enroll("Ghost", "standard", uniform_bytes())
    assert err.value.code == NO_FACE


def test_enroll_then_probe_same_image(app):
    image = frame_bytes(identity(1), 41)
    app.handle_enroll("User Two", "standard", image)
    decision = app.handle_access_request("dev-1", image)
    assert decision.granted and decision.similarity >= 99.0


def test_reenroll_creates_second_face(app):
    image = frame_bytes(identity(0), 42)
    first = app.handle_enroll("User One", "standard", image)
    second = app.handle_enroll("User One", "standard", image)
    assert first.face_id != second.face_id
    assert len(app.stores.credentials.list("faces")) == 2


def test_revoke_then_probe_denied(enrolled):
    app, record = enrolled
    app.handle_revoke(record.face_id)
    decision = app.handle_access_request("dev-1", frame_bytes(identity(0), 43))
    assert not decision.granted and decision.reason == NO_MATCH
    # image object retained for audit
    assert app.stores.objects.get("faces", record.object_key)


def test_revoke_is_idempotent_and_scoped(app):
    rec1 = app.handle_enroll("User One", "standard", frame_bytes(identity(0), 44))
    app.handle_enroll("User Two", "standard", frame_bytes(identity(1), 45))
    app.handle_revoke(rec1.face_id)
    app.handle_revoke(rec1.face_id)
    app.handle_revoke("0" * 16)
    other = app.handle_access_request("dev-1", frame_bytes(identity(1), 46))
    assert other.granted and other.display_name == "User Two"


def test_enroll_validates_inputs(app):
    with pytest.raises(GatewayError):
        app.handle_enroll("", "standard", uniform_bytes())
    with pytest.raises(GatewayError):
        app.handle_enroll("Name", "root", uniform_bytes())


# -- config ------------------------------------------------------------------

def test_config_round_trip(app):
    app.handle_put_config({"similarity_threshold": 75.0, "liveness_enabled": True})
    config = app.handle_get_config()
    assert config.similarity_threshold == 75.0
    assert config.liveness_enabled is True


def test_config_rejects_out_of_range(app):
    with pytest.raises(GatewayError) as err:
        app.handle_put_config({"similarity_threshold": 120.0})
    assert err.value.status == 400
    with pytest.raises(GatewayError):
        app.handle_put_config({"detection": {"nms_iou": 2.0}})


def test_config_defaults():
    config = GatewayConfig()
    assert config.similarity_threshold == 80.0
    assert config.liveness_enabled is False
    assert config.detection.window_sizes == (16, 24, 32, 48, 64)
    assert config.detection.stride == 4
    assert config.detection.variance_threshold == 400.0
    assert config.detection.nms_iou == 0.3


def test_decision_invariant_enforced():
    with pytest.raises(ValueError):
        AccessDecision(granted=True, reason=NO_FACE)
    with pytest.raises(ValueError):
        AccessDecision(granted=True, reason=GRANTED)  # missing ids/similarity


# -- HTTP surface --------------------------------------------------------------

def b64(data):
    return base64.b64encode(data).decode("ascii")


def test_http_endpoints(live_gateway):
    url = live_gateway.url
    enroll = requests.post(
        f"{url}/v1/users",
        json={
            "display_name": "User One",
            "access_level": "standard",
            "image_pgm_b64": b64(frame_bytes(identity(0), 51)),
        },
        timeout=10,
    )
    assert enroll.status_code == 200
    record = enroll.json()
    assert set(record) == {"user_id", "face_id", "object_key", "display_name"}

    access = requests.post(
        f"{url}/v1/access-request",
        json={"device_id": "dev-9", "image_pgm_b64": b64(frame_bytes(identity(0), 52))},
        timeout=10,
    )
    assert access.status_code == 200
    decision = access.json()
    assert decision["granted"] is True
    assert decision["reason"] == "GRANTED"
    assert decision["similarity"] >= 99.0

    events = requests.get(f"{url}/v1/events", params={"since": 0, "limit": 10}, timeout=10)
    assert events.status_code == 200
    listed = events.json()["events"]
    assert len(listed) == 1 and listed[0]["event_id"] == 1

    config = requests.get(f"{url}/v1/config", timeout=10)
    assert config.status_code == 200
    assert config.json()["similarity_threshold"] == 80.0

    updated = requests.put(
        f"{url}/v1/config", json={"similarity_threshold": 70.0}, timeout=10
    )
    assert updated.status_code == 200
    assert requests.get(f"{url}/v1/config", timeout=10).json()["similarity_threshold"] == 70.0

    revoke = requests.delete(f"{url}/v1/faces/{record['face_id']}", timeout=10)
    assert revoke.status_code == 200

    after = requests.post(
        f"{url}/v1/access-request",
        json={"device_id": "dev-9", "image_pgm_b64": b64(frame_bytes(identity(0), 53))},
        timeout=10,
    )
    assert after.json()["granted"] is False


def test_http_error_codes(live_gateway):
    url = live_gateway.url
    bad_image = requests.post(
        f"{url}/v1/access-request",
        json={"device_id": "d", "image_pgm_b64": b64(b"not a pgm")},
        timeout=10,
    )
    assert bad_image.status_code == 400

    bad_config = requests.put(
        f"{url}/v1/config", json={"similarity_threshold": 200}, timeout=10
    )
    assert bad_config.status_code == 400

    missing = requests.get(f"{url}/v1/not-a-route", timeout=10)
    assert missing.status_code == 404
