"""Door-side client: capture from file, ask the gateway, drive the door.

The camera and the GPIO relay are replaced by files so the agent stays fully
testable: `capture` reads a PGM, and the door actuator writes a small JSON
state file (atomically, so observers never read a torn state). The agent
never unlocks without a GRANTED decision from the gateway; there is no local
override path.

Exit codes are stable for scripting:
    0  round-trip completed (granted or denied)
    2  input error (missing/invalid image, bad arguments)
    3  gateway unreachable after one retry
    4  gateway returned an HTTP error
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import requests

from .gateway import AccessDecision
from .imaging import PgmDecodeError, decode_pgm

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NETWORK = 3
EXIT_SERVER = 4

DEFAULT_HOLD_SECONDS = 5.0
REQUEST_TIMEOUT = 10.0


class EdgeInputError(Exception):
    pass


@dataclass(frozen=True)
class DoorState:
    state: str  # locked | unlocked
    until: str | None = None

    def to_json(self) -> dict:
        doc = {"state": self.state}
        if self.state == "unlocked":
            doc["until"] = self.until
        return doc


def capture(path: str | Path) -> bytes:
    """Read an image file, validating it is a decodable PGM."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise EdgeInputError(f"cannot read image {path}: {exc}") from exc
    try:
        decode_pgm(data)
    except PgmDecodeError as exc:
        raise EdgeInputError(f"{path} is not a valid PGM image: {exc}") from exc
    return data


def request_access(
    gateway_url: str, device_id: str, image_bytes: bytes, out=None
) -> tuple[AccessDecision | None, int]:
    """POST the capture to the gateway and print the verdict line.

    Returns (decision, exit_code); decision is None on transport/server
    failure. One retry on connection failure, then exit code 3.
    """
    out = out or sys.stdout
    url = gateway_url.rstrip("/") + "/v1/access-request"
    body = {
        "device_id": device_id,
        "image_pgm_b64": base64.b64encode(image_bytes).decode("ascii"),
    }
    response = None
    for attempt in (1, 2):
        try:
            response = requests.post(url, json=body, timeout=REQUEST_TIMEOUT)
            break
        except requests.RequestException as exc:
            if attempt == 2:
                print(f"gateway unreachable after {attempt} attempts: {exc}", file=sys.stderr)
                return None, EXIT_NETWORK
    if response.status_code >= 400:
        print(
            f"gateway error {response.status_code}: {response.text}",
            file=sys.stderr,
        )
        return None, EXIT_SERVER

    decision = AccessDecision.from_json(response.json())
    if decision.granted:
        name = decision.display_name or decision.user_id or "unknown"
        print(f"ACCESS GRANTED: {name} (similarity {decision.similarity:.1f})", file=out)
    else:
        print(f"ACCESS DENIED: {decision.reason}", file=out)
    return decision, EXIT_OK


def actuate_door(
    decision: AccessDecision,
    hold_seconds: float,
    state_path: str | Path,
    now: datetime | None = None,
) -> DoorState:
    """Write the relay stand-in file: unlock on grant, lock otherwise.

    Consecutive grants extend the unlock expiry, never shorten it.
    """
    path = Path(state_path)
    now = now or datetime.now(timezone.utc)
    if decision.granted:
        until = now + timedelta(seconds=hold_seconds)
        previous = read_door_state(path)
        if previous and previous.state == "unlocked" and previous.until:
            try:
                prior = datetime.fromisoformat(previous.until)
                if prior > until:
                    until = prior
            except ValueError:
                pass
        state = DoorState(state="unlocked", until=until.isoformat())
    else:
        state = DoorState(state="locked")
    _write_door_state(path, state)
    return state


def read_door_state(path: str | Path) -> DoorState | None:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
        return DoorState(state=doc["state"], until=doc.get("until"))
    except (OSError, json.JSONDecodeError, KeyError):
        return None


def _write_door_state(path: Path, state: DoorState) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(state.to_json()), encoding="utf-8")
    os.replace(tmp, path)


def relock_when_expired(state_path: Path) -> None:
    """Long-running mode helper: wait out the unlock hold, then lock."""
    state = read_door_state(state_path)
    if not state or state.state != "unlocked" or not state.until:
        return
    try:
        until = datetime.fromisoformat(state.until)
    except ValueError:
        return
    remaining = (until - datetime.now(timezone.utc)).total_seconds()
    if remaining > 0:
        time.sleep(remaining)
    _write_door_state(state_path, DoorState(state="locked"))


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------

def _cmd_request(args) -> int:
    if args.watch:
        return _run_watch(args)
    try:
        image = capture(args.image)
    except EdgeInputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    decision, code = request_access(args.gateway, args.device, image)
    if code != EXIT_OK:
        return code
    if args.door_state:
        actuate_door(decision, args.hold, args.door_state)
    return EXIT_OK


def _run_watch(args) -> int:
    """Process every .pgm in a directory in name order (batch watch mode)."""
    watch_dir = Path(args.watch)
    if not watch_dir.is_dir():
        print(f"watch directory {watch_dir} does not exist", file=sys.stderr)
        return EXIT_INPUT
    worst = EXIT_OK
    for pgm in sorted(watch_dir.glob("*.pgm")):
        try:
            image = capture(pgm)
        except EdgeInputError as exc:
            print(str(exc), file=sys.stderr)
            worst = max(worst, EXIT_INPUT)
            continue
        decision, code = request_access(args.gateway, args.device, image)
        if code != EXIT_OK:
            return code
        if args.door_state:
            actuate_door(decision, args.hold, args.door_state)
    if args.door_state:
        relock_when_expired(Path(args.door_state))
    return worst


def _cmd_enroll(args) -> int:
    try:
        image = capture(args.image)
    except EdgeInputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    url = args.gateway.rstrip("/") + "/v1/users"
    body = {
        "display_name": args.name,
        "access_level": args.access_level,
        "image_pgm_b64": base64.b64encode(image).decode("ascii"),
    }
    response = None
    for attempt in (1, 2):
        try:
            response = requests.post(url, json=body, timeout=REQUEST_TIMEOUT)
            break
        except requests.RequestException as exc:
            if attempt == 2:
                print(f"gateway unreachable after {attempt} attempts: {exc}", file=sys.stderr)
                return EXIT_NETWORK
    if response.status_code >= 400:
        print(f"gateway error {response.status_code}: {response.text}", file=sys.stderr)
        return EXIT_SERVER
    doc = response.json()
    print(f"ENROLLED: {doc['display_name']} user={doc['user_id']} face={doc['face_id']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edge", description="Entry-system edge agent (camera/door stand-in)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    req = sub.add_parser("request", help="submit a capture for an access decision")
    group = req.add_mutually_exclusive_group(required=True)
    group.add_argument("--image", help="path to a PGM capture")
    group.add_argument("--watch", help="process every .pgm in this directory, name order")
    req.add_argument("--gateway", required=True, help="gateway base URL")
    req.add_argument("--device", required=True, help="device identifier")
    req.add_argument("--hold", type=float, default=DEFAULT_HOLD_SECONDS,
                     help="unlock hold seconds (default 5)")
    req.add_argument("--door-state", help="door relay state file (JSON)")
    req.set_defaults(func=_cmd_request)

    enr = sub.add_parser("enroll", help="enroll a user from a capture")
    enr.add_argument("--image", required=True, help="path to a PGM capture")
    enr.add_argument("--name", required=True, help="display name for the user")
    enr.add_argument("--gateway", required=True, help="gateway base URL")
    enr.add_argument("--access-level", default="standard", choices=["standard", "admin"])
    enr.set_defaults(func=_cmd_enroll)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
