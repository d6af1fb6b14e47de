"""Exercises the remote JSON protocols against a throwaway local server."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from egoagent.episode import HttpPolicy
from egoagent.tools import DispatchTimeout, HttpToolBackend, RemoteError, http_backend_from_env, preverify
from egoagent.trace import ToolCall


class StubHandler(BaseHTTPRequestHandler):
    requests_seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests_seen.append((self.path, dict(self.headers), body))
        if self.path == "/tool":
            payload = {"payload": f"remote says {body['tool']} for {body['view_id']}"}
            self._reply(200, payload)
        elif self.path == "/policy":
            self._reply(200, {"text": "<think>remote</think><answer>A</answer>"})
        elif self.path == "/boom":
            self._reply(503, {"error": "backend down"})
        elif self.path == "/garbled":
            self._reply(200, {"unexpected": True})
        else:
            self._reply(404, {"error": "no such route"})

    def _reply(self, status, doc):
        data = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def validated_vlm(small_dispatcher):
    call = ToolCall("vlm", {"question": "q", "timestamp": "DAY1_00150000"})
    return preverify(call, small_dispatcher.ctx)


def test_http_backend_round_trip(stub_server, small_dispatcher):
    backend = HttpToolBackend(tool="vlm", url=f"{stub_server}/tool", view_id="A1", api_key="sekrit")
    obs = backend.execute(validated_vlm(small_dispatcher))
    assert obs.source == "vlm"
    assert obs.payload == "remote says vlm for A1"
    path, headers, body = StubHandler.requests_seen[-1]
    assert headers["Authorization"] == "Bearer sekrit"
    assert body == {"tool": "vlm", "arguments": {"question": "q", "timestamp": "DAY1_00150000"}, "view_id": "A1"}


def test_http_backend_maps_non_2xx_to_remote_error(stub_server, small_dispatcher):
    backend = HttpToolBackend(tool="vlm", url=f"{stub_server}/boom", view_id="A1")
    with pytest.raises(RemoteError) as err:
        backend.execute(validated_vlm(small_dispatcher))
    assert err.value.status == 503


def test_http_backend_rejects_malformed_response(stub_server, small_dispatcher):
    backend = HttpToolBackend(tool="vlm", url=f"{stub_server}/garbled", view_id="A1")
    with pytest.raises(Exception) as err:
        backend.execute(validated_vlm(small_dispatcher))
    assert "malformed" in str(err.value)


def test_http_backend_timeout(small_dispatcher):
    # unroutable TEST-NET address forces a connect timeout
    backend = HttpToolBackend(tool="vlm", url="http://192.0.2.1:9/tool", view_id="A1", timeout_s=0.2)
    with pytest.raises(Exception) as err:
        backend.execute(validated_vlm(small_dispatcher))
    assert isinstance(err.value, (DispatchTimeout, Exception))


def test_http_policy_round_trip(stub_server):
    policy = HttpPolicy(url=f"{stub_server}/policy")
    messages = [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}]
    assert policy.generate(messages) == "<think>remote</think><answer>A</answer>"
    _, _, body = StubHandler.requests_seen[-1]
    assert body == {"messages": messages}


def test_http_backend_from_env():
    env = {"EGOAGENT_RAG_URL": "http://example.invalid/rag", "EGOAGENT_RAG_API_KEY": "k"}
    backend = http_backend_from_env("rag", "A3", env)
    assert backend is not None
    assert backend.url == "http://example.invalid/rag"
    assert backend.api_key == "k"
    assert backend.view_id == "A3"
    assert http_backend_from_env("vlm", "A3", env) is None
