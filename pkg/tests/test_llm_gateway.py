import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from dbinsights.errors import BackendError, MockMiss
from dbinsights.llm import (
    ChatMessage,
    ChatRequest,
    LlmGateway,
    MockBackend,
    RemoteBackend,
    UsageRecord,
    aggregate_cost,
    content_hash,
    fixture_key,
    total_cost,
)


def _request(tag="summarizer", text="hello", temperature=0.0):
    return ChatRequest(
        messages=(ChatMessage("user", text),), temperature=temperature, tag=tag
    )


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(messages=(), temperature=0.0, tag="summarizer")
    with pytest.raises(ValueError):
        _request(temperature=2.5)
    with pytest.raises(ValueError):
        _request(tag="made_up_tag")
    with pytest.raises(ValueError):
        ChatMessage("narrator", "hi")


def test_mock_fixture_passthrough():
    request = _request()
    mock = MockBackend({fixture_key(request): "canned"})
    text, usage = LlmGateway(mock).send_chat(request)
    assert text == "canned"
    assert usage.tag == "summarizer"


def test_mock_miss_names_tag_and_hash():
    request = _request()
    with pytest.raises(MockMiss) as exc_info:
        MockBackend().complete(request)
    assert exc_info.value.tag == "summarizer"
    assert exc_info.value.content_hash == content_hash(request)
    assert exc_info.value.content_hash in str(exc_info.value)


def test_mock_referentially_transparent():
    mock = MockBackend()
    mock.add_rule("summarizer", lambda content: f"echo:{len(content)}")
    gateway = LlmGateway(mock)
    replies = {gateway.send("summarizer", [("user", "same text")]) for _ in range(5)}
    assert len(replies) == 1


def test_mock_hash_ignores_roles_not_content():
    a = ChatRequest(messages=(ChatMessage("user", "x"),), temperature=0.0, tag="summarizer")
    b = ChatRequest(messages=(ChatMessage("system", "x"),), temperature=0.7, tag="summarizer")
    assert content_hash(a) == content_hash(b)
    c = ChatRequest(messages=(ChatMessage("user", "y"),), temperature=0.0, tag="summarizer")
    assert content_hash(a) != content_hash(c)


def test_ledger_counts_every_call_across_threads():
    mock = MockBackend()
    mock.add_rule("summarizer", "ok")
    gateway = LlmGateway(mock)

    def worker(i):
        for j in range(25):
            gateway.send("summarizer", [("user", f"w{i}-{j}")])

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(gateway.ledger) == 200


def test_cost_formula():
    mock = MockBackend()
    mock.add_rule("summarizer", "x" * 40)  # 10 completion tokens
    gateway = LlmGateway(mock, price_in=0.001, price_out=0.002)
    _, usage = gateway.send_chat(_request(text="y" * 80))  # 20 prompt tokens
    assert usage.prompt_tokens == 20
    assert usage.completion_tokens == 10
    assert usage.cost == pytest.approx(20 * 0.001 + 10 * 0.002)


def test_negative_prices_rejected():
    with pytest.raises(ValueError):
        LlmGateway(MockBackend(), price_in=-0.1)


def _usage(tag, cost):
    return UsageRecord(tag=tag, prompt_tokens=1, completion_tokens=1, wall_ms=0.0, cost=cost)


def test_aggregate_cost_empty():
    assert aggregate_cost([]) == {}
    assert total_cost([]) == 0.0


def test_aggregate_cost_sums_per_tag():
    ledger = [_usage("sql_agent", 0.01), _usage("sql_agent", 0.02)]
    summary = aggregate_cost(ledger)
    assert summary["sql_agent"].calls == 2
    assert summary["sql_agent"].total_cost == pytest.approx(0.03)


def test_aggregate_cost_matches_hand_arithmetic():
    ledger = [_usage("hl_generator", 0.113)] + [_usage("sql_agent", 0.072)] * 7
    summary = aggregate_cost(ledger)
    assert summary["hl_generator"].total_cost == pytest.approx(0.113)
    assert summary["sql_agent"].total_cost == pytest.approx(0.504)
    assert total_cost(ledger) == pytest.approx(0.617)
    assert total_cost(ledger) == pytest.approx(
        sum(entry.total_cost for entry in summary.values())
    )


class _FlakyHandler(BaseHTTPRequestHandler):
    failures = 2
    hits = 0

    def do_POST(self):
        cls = type(self)
        cls.hits += 1
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        if cls.hits <= cls.failures:
            self.send_response(429)
            self.end_headers()
            self.wfile.write(b"slow down")
            return
        body = json.dumps(
            {
                "choices": [{"message": {"role": "assistant", "content": "remote says hi"}}],
                "usage": {"prompt_tokens": 12, "completion_tokens": 3},
            }
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def flaky_server():
    handler = type("Handler", (_FlakyHandler,), {"failures": 2, "hits": 0})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", handler
    server.shutdown()


def test_remote_retries_until_success(flaky_server):
    base_url, handler = flaky_server
    backend = RemoteBackend(base_url, model="test-model", max_attempts=3, backoff_s=0.0)
    completion = backend.complete(_request(text="ping"))
    assert completion.text == "remote says hi"
    assert completion.prompt_tokens == 12
    assert handler.hits == 3


def test_remote_exhausts_retries(flaky_server):
    base_url, handler = flaky_server
    handler.failures = 99
    backend = RemoteBackend(base_url, model="test-model", max_attempts=3, backoff_s=0.0)
    with pytest.raises(BackendError) as exc_info:
        backend.complete(_request(text="ping"))
    assert exc_info.value.status == 429
    assert exc_info.value.attempts == 3
    assert handler.hits == 3
