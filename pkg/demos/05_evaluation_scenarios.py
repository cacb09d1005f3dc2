"""Build a corpus and replay all six evaluation scenarios.

This is the whole evaluation in one go: derive a seeded population, render
every scenario frame, calibrate the liveness threshold, start a gateway, and
replay each cell. Scenario 3 (strong rotations) and scenario 6 with liveness
off (photo replay) are the system's designed-in failure modes; the final
scenario-6 rerun with liveness on demonstrates the remediation.
"""

import tempfile
import threading
from pathlib import Path

from aegis.gateway import GatewayApp, serve
from aegis.harness import HarnessRunner, build_corpus
from aegis.storage import DataStores

root = Path(tempfile.mkdtemp(prefix="aegis-scenarios-"))

print("building corpus (seed 20260810)...")
manifest = build_corpus(20260810, root / "corpus")
print(
    f"  {len(manifest['identities']['registered'])} registered, "
    f"{len(manifest['identities']['unregistered'])} unregistered, "
    f"{manifest['probe_frame_count']} probe frames, "
    f"liveness threshold {manifest['liveness_threshold']:.2f}"
)

app = GatewayApp(DataStores(root / "data"), id_seed=2)
server = serve(app, "127.0.0.1", 0)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}"

runner = HarnessRunner(url, root / "corpus")
summary = runner.run_all()
server.shutdown()

print(f"\nfull report: {root / 'corpus' / 'report.json'}")
