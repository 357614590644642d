import json
import socket
import threading
import time

import pytest
import uvicorn

from recstack.rawstore import RawStore


def make_event(session_id="s1", event_type="detail", sku="A", ts=1000, **extra) -> bytes:
    doc = {"session_id": session_id, "event_type": event_type, "sku": sku, "ts": ts}
    doc.update(extra)
    return json.dumps(doc).encode()


@pytest.fixture
def store(tmp_path):
    s = RawStore(tmp_path / "raw", writable=True)
    yield s
    s.close()


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class ServerThread:
    """Run a FastAPI app under uvicorn in a daemon thread."""

    def __init__(self, app, port=None):
        self.port = port or free_port()
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self):
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        return self

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def run_server():
    servers = []

    def _run(app):
        srv = ServerThread(app).start()
        servers.append(srv)
        return srv

    yield _run
    for srv in servers:
        srv.stop()
