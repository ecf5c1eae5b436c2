"""Wire-protocol client against an in-process echo stub."""

import base64
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from poa.errors import BackendError, ProtocolVersionMismatch
from poa.latent import Latent, poal_bytes
from poa.remote import RemoteBackend, latent_to_b64, remote_encode, remote_generate
from poa.seeding import MetaParams


class _StubHandler(BaseHTTPRequestHandler):
    """Echo stub: /generate derives a latent deterministically from the seed."""

    latent_shape = (4, 16, 16)
    corrupt_payload = False

    def log_message(self, *args):
        pass

    def _reply(self, code, obj):
        body = json.dumps(obj).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/info":
            self._reply(200, {
                "latent_shape": list(self.latent_shape),
                "model_tag": "echo-stub",
                "proto": "poa/1",
            })
        else:
            self._reply(404, {"error": "no such path"})

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        c, h, w = self.latent_shape
        d = c * h * w
        if self.path == "/generate":
            seed = bytes.fromhex(payload["seed"])
            vals = np.frombuffer(
                hashlib.shake_256(seed).digest(d * 2), dtype=np.uint16
            ).astype(np.float64) / 65536.0
            latent = Latent(shape=self.latent_shape, data=vals)
            blob = poal_bytes(latent)
            if self.corrupt_payload:
                blob = b"XXXX" + blob[4:]
            self._reply(200, {"latent_b64": base64.b64encode(blob).decode()})
        elif self.path == "/encode":
            latent = Latent(shape=self.latent_shape, data=np.zeros(d))
            self._reply(200, {"latent_b64": latent_to_b64(latent)})
        else:
            self._reply(400, {"error": "unsupported"})


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.corrupt_payload = False
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_info_and_generate_loopback(stub_server):
    backend = RemoteBackend(stub_server)
    info = backend.info()
    assert info["latent_shape"] == [4, 16, 16]
    m = MetaParams()
    seed = bytes(range(32))
    a = remote_generate(stub_server, m, bytes(32), seed)
    b = backend.generate(m, bytes(32), seed)
    assert a.shape == (4, 16, 16)
    assert np.array_equal(a.data, b.data)  # determinism across calls


def test_malformed_payload_rejected(stub_server):
    _StubHandler.corrupt_payload = True
    with pytest.raises(ProtocolVersionMismatch):
        RemoteBackend(stub_server).generate(MetaParams(), bytes(32), bytes(32))


def test_shape_mismatch_rejected(stub_server):
    m = MetaParams(latent_shape=(2, 8, 8))
    with pytest.raises(ProtocolVersionMismatch):
        RemoteBackend(stub_server).generate(m, bytes(32), bytes(32))


def test_encode_endpoint(stub_server):
    latent = remote_encode(stub_server, b"not-really-a-png")
    assert latent.shape == (4, 16, 16)


def test_error_status_surfaces(stub_server):
    with pytest.raises(BackendError):
        RemoteBackend(stub_server)._post("/distort", {})


def test_transport_error():
    from poa.errors import Transport

    with pytest.raises(Transport):
        RemoteBackend("http://127.0.0.1:1", timeout=0.2).info()
