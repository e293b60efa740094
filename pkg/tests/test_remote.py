"""Remote actors against a local mock chat-completion server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest
import requests

from veriact.actors.base import ActorError, make_candidate
from veriact.actors.remote import (
    EndpointConfig,
    RemoteChatClient,
    RemotePolicy,
    RemoteVerifier,
    _history_block,
    encode_body,
    request_body,
)
from veriact.actors.base import PolicyContext
from veriact.world.types import Observation

GOLDEN = Path(__file__).parent / "data" / "chat_request.golden.json"


def _ok_payload(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]})


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802  (stdlib naming)
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        with self.server.lock:
            self.server.seen.append(
                {"path": self.path, "body": body, "headers": dict(self.headers)}
            )
            if self.server.script:
                status, payload = self.server.script.pop(0)
            else:
                status, payload = 200, _ok_payload("action: pick(apple_0)")
        data = payload.encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # silence the test log
        pass


@pytest.fixture
def server():
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    httpd.script = []
    httpd.seen = []
    httpd.lock = threading.Lock()
    httpd.url = f"http://127.0.0.1:{httpd.server_address[1]}"
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield httpd
    httpd.shutdown()
    thread.join()
    httpd.server_close()


def _client(server, **overrides) -> RemoteChatClient:
    defaults = dict(base_url=server.url, model="test-model", backoff_base_s=0.0)
    defaults.update(overrides)
    return RemoteChatClient(EndpointConfig(**defaults))


def _obs() -> Observation:
    return Observation(location="start", location_is_open=None, visible=(),
                       holding=None, last_action_outcome="ok")


# -- Request encoding --------------------------------------------------------------


def test_request_bytes_match_golden_file():
    body = request_body(
        "gold-model",
        [{"role": "system", "content": "be brief"},
         {"role": "user", "content": "héllo"}],
        temperature=0.25,
        max_tokens=128,
    )
    assert encode_body(body) == GOLDEN.read_bytes().rstrip(b"\n")


def test_request_body_shape():
    body = request_body("m", [{"role": "user", "content": "x"}], 0.7, 512)
    assert body == {
        "max_tokens": 512,
        "messages": [{"role": "user", "content": "x"}],
        "model": "m",
        "n": 1,
        "temperature": 0.7,
    }
    assert encode_body(body).startswith(b'{"max_tokens":512,')


# -- Happy path ----------------------------------------------------------------------


def test_complete_posts_and_returns_content(server):
    server.script.append((200, _ok_payload("action: navigate(table_0)")))
    client = _client(server, base_url=server.url + "/")  # trailing slash tolerated
    reply = client.complete([{"role": "user", "content": "go"}], 0.7)
    assert reply == "action: navigate(table_0)"
    assert client.requests_sent == 1
    assert len(client.latencies) == 1 and client.latencies[0] > 0
    (request,) = server.seen
    assert request["path"] == "/chat/completions"
    assert request["headers"]["Content-Type"] == "application/json"
    sent = json.loads(request["body"])
    assert sent["model"] == "test-model" and sent["n"] == 1


def test_bearer_token_read_from_environment_at_call_time(server, monkeypatch):
    client = _client(server)
    monkeypatch.delenv("VERIACT_API_KEY", raising=False)
    client.complete([{"role": "user", "content": "x"}], 0.0)
    assert "Authorization" not in server.seen[0]["headers"]
    monkeypatch.setenv("VERIACT_API_KEY", "sk-test-123")
    client.complete([{"role": "user", "content": "x"}], 0.0)
    assert server.seen[1]["headers"]["Authorization"] == "Bearer sk-test-123"


def test_custom_api_key_env(server, monkeypatch):
    client = _client(server, api_key_env="OTHER_KEY")
    monkeypatch.setenv("VERIACT_API_KEY", "wrong")
    monkeypatch.setenv("OTHER_KEY", "right")
    client.complete([{"role": "user", "content": "x"}], 0.0)
    assert server.seen[0]["headers"]["Authorization"] == "Bearer right"


# -- Retries -----------------------------------------------------------------------------


def test_rate_limit_and_server_errors_are_retried(server, monkeypatch):
    sleeps = []
    monkeypatch.setattr("veriact.actors.remote.time.sleep", sleeps.append)
    server.script.extend([
        (429, "busy"),
        (503, "down"),
        (200, _ok_payload("ok")),
    ])
    client = _client(server, backoff_base_s=0.5)
    assert client.complete([{"role": "user", "content": "x"}], 0.7) == "ok"
    assert client.requests_sent == 3
    assert sleeps == [0.5, 1.0]  # exponential backoff


def test_retries_exhaust_and_raise(server, monkeypatch):
    sleeps = []
    monkeypatch.setattr("veriact.actors.remote.time.sleep", sleeps.append)
    server.script.extend([(500, "boom")] * 4)
    client = _client(server, max_retries=3, backoff_base_s=0.25)
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "transport" and info.value.retryable
    assert client.requests_sent == 4  # first try + 3 retries
    assert sleeps == [0.25, 0.5, 1.0]


def test_client_errors_are_not_retried(server):
    server.script.append((404, "nope"))
    client = _client(server)
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "protocol" and not info.value.retryable
    assert client.requests_sent == 1


def test_malformed_payloads_raise_without_retry(server):
    client = _client(server)
    server.script.append((200, "this is not json"))
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "protocol"
    server.script.append((200, json.dumps({"choices": []})))
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "parse" and not info.value.retryable
    server.script.append((200, json.dumps({"choices": [{"message": {"content": 7}}]})))
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "parse"
    assert client.requests_sent == 3


class _RaisingSession:
    def __init__(self, exc: Exception):
        self.exc = exc
        self.calls = 0

    def post(self, *args, **kwargs):
        self.calls += 1
        raise self.exc


def test_timeouts_map_to_retryable_timeout_kind():
    session = _RaisingSession(requests.Timeout("read timed out"))
    config = EndpointConfig(base_url="http://unreachable", model="m", max_retries=0)
    client = RemoteChatClient(config, session=session)
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "timeout" and info.value.retryable
    assert session.calls == 1 and client.requests_sent == 1


def test_connection_failures_map_to_transport_kind(monkeypatch):
    monkeypatch.setattr("veriact.actors.remote.time.sleep", lambda _: None)
    session = _RaisingSession(requests.ConnectionError("refused"))
    config = EndpointConfig(base_url="http://unreachable", model="m", max_retries=2)
    client = RemoteChatClient(config, session=session)
    with pytest.raises(ActorError) as info:
        client.complete([{"role": "user", "content": "x"}], 0.7)
    assert info.value.kind == "transport"
    assert session.calls == 3  # retried to exhaustion


# -- Fan-out -------------------------------------------------------------------------------


def test_complete_many_is_order_preserving_when_serial(server):
    server.script.extend([(200, _ok_payload(f"reply-{i}")) for i in range(3)])
    client = _client(server, parallel_width=1)
    replies = client.complete_many([{"role": "user", "content": "x"}], 3, 0.7)
    assert replies == ["reply-0", "reply-1", "reply-2"]


def test_complete_many_fans_out_k_requests(server):
    server.script.extend([(200, _ok_payload(f"reply-{i}")) for i in range(6)])
    client = _client(server, parallel_width=4)
    replies = client.complete_many([{"role": "user", "content": "x"}], 6, 0.7)
    assert sorted(replies) == [f"reply-{i}" for i in range(6)]
    assert client.requests_sent == 6
    assert len(server.seen) == 6


# -- Remote policy / verifier -----------------------------------------------------------


def test_remote_policy_builds_prompt_and_parses_candidates(server):
    server.script.extend([
        (200, _ok_payload("The table is empty.\naction: navigate(table_0)")),
        (200, _ok_payload("gibberish with no action")),
    ])
    client = _client(server, parallel_width=1)
    policy = RemotePolicy(client)
    context = PolicyContext(
        instruction="Move the apple to the table.",
        history=((_obs(), "navigate(shelf_0)"),),
        observation=_obs(),
    )
    candidates = policy.propose(context, 2, 0.7, seed=0)
    assert policy.llm_calls == 2
    assert [c.index for c in candidates] == [0, 1]
    assert candidates[0].parsable
    assert candidates[0].record.action.render() == "navigate(table_0)"
    assert not candidates[1].parsable
    prompt = json.loads(server.seen[0]["body"])["messages"][0]["content"]
    assert "Move the apple to the table." in prompt
    assert "1. navigate(shelf_0)" in prompt
    assert "location: start" in prompt
    assert "action: verb(argument)" in prompt


def test_remote_verifier_parses_vote_verdicts(server):
    server.script.extend([
        (200, _ok_payload("Looks right.\naction_is_correct: yes")),
        (200, _ok_payload("Wrong object.\naction_is_correct: no")),
        (200, _ok_payload("I cannot decide.")),
    ])
    client = _client(server, parallel_width=1)
    verifier = RemoteVerifier(client)
    candidate = make_candidate(4, "grab it", "pick(apple_0)")
    votes = verifier.verify(
        "Move the apple.", ("navigate(shelf_0)",), _obs(), candidate, 3, 0.3, seed=0
    )
    assert verifier.llm_calls == 3
    assert [v.verdict for v in votes] == ["yes", "no", "unparsable"]
    assert [v.vote_index for v in votes] == [0, 1, 2]
    assert all(v.candidate_index == 4 for v in votes)
    prompt = json.loads(server.seen[0]["body"])["messages"][0]["content"]
    assert "Proposed action: pick(apple_0)" in prompt
    assert "grab it" in prompt
    assert "1. navigate(shelf_0)" in prompt


def test_remote_verifier_shows_raw_text_for_unparsable_candidates(server):
    server.script.append((200, _ok_payload("action_is_correct: no")))
    client = _client(server, parallel_width=1)
    verifier = RemoteVerifier(client)
    candidate = make_candidate(0, "", "fly(moon_0)")
    verifier.verify("task", (), _obs(), candidate, 1, 0.3, seed=0)
    prompt = json.loads(server.seen[0]["body"])["messages"][0]["content"]
    assert "fly(moon_0)" in prompt


def test_history_block_formatting():
    assert _history_block(()) == "(none)"
    assert _history_block(("a()", "b()")) == "1. a()\n2. b()"
