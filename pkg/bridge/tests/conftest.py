import base64
import json
import os
import socket

import pytest

# Never reach for the network in tests; tiny checkpoints are local.
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

from disclip_bridge.models import CausalLMAdapter, EncoderAdapter
from disclip_bridge.server import BridgeServer, RequestHandler
from disclip_bridge.testing import TINY_IMAGE_SIZE, tiny_checkpoints


@pytest.fixture(scope="session")
def checkpoints():
    return tiny_checkpoints()


@pytest.fixture(scope="session")
def encoder(checkpoints):
    return EncoderAdapter(checkpoints[0])


@pytest.fixture(scope="session")
def lm(checkpoints):
    return CausalLMAdapter(checkpoints[1])


@pytest.fixture(scope="session")
def server(lm, encoder):
    srv = BridgeServer(RequestHandler(lm, encoder)).start()
    yield srv
    srv.stop()


class WireClient:
    """Minimal line-oriented client used by the tests."""

    def __init__(self, endpoint: str):
        host, _, port = endpoint.rpartition(":")
        self._sock = socket.create_connection((host, int(port)), timeout=30)
        self._rfile = self._sock.makefile("rb")

    def request(self, message: dict) -> dict:
        self._sock.sendall((json.dumps(message) + "\n").encode("utf-8"))
        line = self._rfile.readline()
        assert line, "server closed the connection"
        return json.loads(line)

    def close(self):
        self._sock.close()


@pytest.fixture
def client(server):
    c = WireClient(server.endpoint)
    yield c
    c.close()


def image_payload(value: int = 128, size: int = TINY_IMAGE_SIZE) -> dict:
    rgb = bytes([value, 0, 255 - value]) * (size * size)
    return {
        "width": size,
        "height": size,
        "data": base64.b64encode(rgb).decode("ascii"),
    }
