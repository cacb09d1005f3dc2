import threading

import pytest

from aegis.gateway import GatewayApp, serve
from aegis.harness import build_corpus
from aegis.storage import DataStores

CORPUS_SEED = 42


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """One deterministic corpus shared by read-only tests."""
    corpus_dir = tmp_path_factory.mktemp("corpus") / "c"
    manifest = build_corpus(CORPUS_SEED, corpus_dir)
    return corpus_dir, manifest


class LiveGateway:
    def __init__(self, root, id_seed=1234):
        self.app = GatewayApp(DataStores(root), id_seed=id_seed)
        self.server = serve(self.app, "127.0.0.1", 0)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def live_gateway(tmp_path):
    gw = LiveGateway(tmp_path / "data")
    yield gw
    gw.close()


@pytest.fixture
def app(tmp_path):
    """In-process gateway app on a fresh data root."""
    return GatewayApp(DataStores(tmp_path / "data"), id_seed=99)
