"""The full entry system on loopback: gateway, HTTP, edge agent, door file.

Starts the decision service on an ephemeral port with a throwaway data root,
enrolls a user over HTTP, submits probes the way the door-side agent does,
and shows the audit log and the door relay state file that result.
"""

import base64
import json
import tempfile
import threading
from pathlib import Path

import requests

from aegis.edge import actuate_door, read_door_state
from aegis.gateway import AccessDecision, GatewayApp, serve
from aegis.harness import single_face_scene
from aegis.imaging import compose_scene, encode_pgm
from aegis.storage import DataStores

root = Path(tempfile.mkdtemp(prefix="aegis-demo-"))
app = GatewayApp(DataStores(root / "data"), id_seed=1)
server = serve(app, "127.0.0.1", 0)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}"
print(f"gateway on {url}, data root {root / 'data'}")


def pgm_b64(identity_seed, scene_seed, **kwargs):
    frame, _ = compose_scene(single_face_scene(identity_seed, scene_seed, **kwargs))
    return base64.b64encode(encode_pgm(frame)).decode()


enroll = requests.post(f"{url}/v1/users", json={
    "display_name": "Dana Front-Desk",
    "access_level": "standard",
    "image_pgm_b64": pgm_b64(777, 1),
}).json()
print(f"enrolled: user={enroll['user_id']} face={enroll['face_id']}")

door = root / "door-state.json"
probes = [
    ("the enrolled person", pgm_b64(777, 2)),
    ("a stranger", pgm_b64(999, 3)),
    ("enrolled, dim light", pgm_b64(777, 4, illumination=0.4)),
]
for label, image in probes:
    doc = requests.post(f"{url}/v1/access-request", json={
        "device_id": "front-door", "image_pgm_b64": image,
    }).json()
    decision = AccessDecision.from_json(doc)
    actuate_door(decision, hold_seconds=5, state_path=door)
    state = read_door_state(door)
    outcome = f"GRANTED ({decision.display_name}, sim {decision.similarity:.1f})" \
        if decision.granted else f"DENIED ({decision.reason})"
    print(f"{label:<22} -> {outcome}; door now {state.state}")

events = requests.get(f"{url}/v1/events", params={"since": 0, "limit": 10}).json()
print("\naudit log:")
for event in events["events"]:
    print(f"  #{event['event_id']} {event['decision']:<7} {event['reason']}")

print(f"\ndoor state file: {json.dumps(read_door_state(door).to_json())}")
server.shutdown()
