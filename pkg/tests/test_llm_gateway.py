from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from markner.errors import ProviderRejection, TransportError, ValidationError
from markner.llm_gateway import (
    CompletionRequest,
    FileCache,
    HttpProvider,
    LlmGateway,
    MockProvider,
    MockRule,
    Prompt,
    RateLimiter,
    ReplayProvider,
    RetryPolicy,
    cache_key,
    mock_provider,
    mock_rules_from_file,
)


def make_request(text: str = "hello", **kwargs) -> CompletionRequest:
    return CompletionRequest(prompt=Prompt(messages=(("user", text),)), **kwargs)


FAST_RETRY = RetryPolicy(attempts=3, backoff_base=0.01, backoff_factor=2.0)


class TestPrompt:
    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            Prompt(messages=())

    def test_last_role_must_be_user(self):
        with pytest.raises(ValidationError):
            Prompt(messages=(("user", "a"), ("assistant", "b")))

    def test_unknown_role_rejected(self):
        with pytest.raises(ValidationError):
            Prompt(messages=(("robot", "a"),))

    def test_text_joins_contents(self):
        p = Prompt(messages=(("system", "s"), ("user", "u")))
        assert p.text() == "s\nu"


class TestCacheKey:
    def test_identical_requests_same_digest(self):
        assert cache_key(make_request()) == cache_key(make_request())

    def test_temperature_changes_digest(self):
        assert cache_key(make_request(temperature=0.0)) != cache_key(
            make_request(temperature=0.5)
        )

    def test_model_and_tokens_change_digest(self):
        base = cache_key(make_request())
        assert cache_key(make_request(model_id="other")) != base
        assert cache_key(make_request(max_tokens=8)) != base

    def test_trailing_whitespace_trimmed(self):
        assert cache_key(make_request("hello \n")) == cache_key(make_request("hello"))

    def test_internal_whitespace_preserved(self):
        assert cache_key(make_request("a  b")) != cache_key(make_request("a b"))


class TestMockProvider:
    def test_catch_all(self):
        provider = mock_provider([MockRule(response="X", contains=None)])
        assert provider.complete_text(make_request("anything")) == "X"

    def test_first_match_wins(self):
        provider = mock_provider(
            [MockRule(response="A", contains="@@"), MockRule(response="B", contains=None)]
        )
        assert provider.complete_text(make_request("no markers")) == "B"
        assert provider.complete_text(make_request("with @@marks##")) == "A"

    def test_all_of_list_matcher(self):
        provider = mock_provider(
            [
                MockRule(response="both", contains=("alpha", "beta")),
                MockRule(response="fallback", contains=None),
            ]
        )
        assert provider.complete_text(make_request("alpha then beta")) == "both"
        assert provider.complete_text(make_request("alpha only")) == "fallback"

    def test_catch_all_required(self):
        with pytest.raises(ValidationError, match="catch-all"):
            MockProvider([MockRule(response="A", contains="x")])

    def test_empty_script_rejected(self):
        with pytest.raises(ValidationError):
            MockProvider([])

    def test_determinism(self):
        rules = [MockRule(response="A", contains="q"), MockRule(response="B", contains=None)]
        sequence = ["q1", "zz", "q2", "zz"]
        first = [mock_provider(rules).complete_text(make_request(t)) for t in sequence]
        second = [mock_provider(rules).complete_text(make_request(t)) for t in sequence]
        assert first == second == ["A", "B", "A", "B"]

    def test_rules_file_roundtrip(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(
            json.dumps(
                [
                    {"contains": ["a", "b"], "response": "AB"},
                    {"contains": "a", "response": "A"},
                    {"contains": None, "response": "D"},
                ]
            )
        )
        provider = mock_provider(mock_rules_from_file(path))
        assert provider.complete_text(make_request("a b")) == "AB"
        assert provider.complete_text(make_request("a")) == "A"
        assert provider.complete_text(make_request("c")) == "D"


class TestFileCache:
    def test_put_get(self, tmp_path):
        cache = FileCache(tmp_path / "cache")
        cache.put("k1", "stored text")
        assert cache.get("k1") == "stored text"

    def test_get_missing(self, tmp_path):
        assert FileCache(tmp_path / "cache").get("absent") is None

    def test_survives_restart(self, tmp_path):
        FileCache(tmp_path / "cache").put("k", "v")
        assert FileCache(tmp_path / "cache").get("k") == "v"

    def test_unwritable_directory_fails_at_startup(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        with pytest.raises(ValidationError, match="not writable"):
            FileCache(blocker / "cache")

    def test_distinct_keys_both_stored(self, tmp_path):
        cache = FileCache(tmp_path / "cache")
        k1 = cache_key(make_request(temperature=0.0))
        k2 = cache_key(make_request(temperature=1.0))
        cache.put(k1, "cold")
        cache.put(k2, "hot")
        assert cache.get(k1) == "cold"
        assert cache.get(k2) == "hot"


class FailingProvider(MockProvider):
    def __init__(self, failures: int, response: str = "ok"):
        super().__init__([MockRule(response=response, contains=None)])
        self.failures = failures

    def complete_text(self, request):
        text = super().complete_text(request)
        if self.calls <= self.failures:
            from markner.errors import RetryableProviderError

            raise RetryableProviderError(f"transient #{self.calls}")
        return text


class TestGateway:
    def test_cache_hit_flagged_and_skips_provider(self, tmp_path):
        provider = mock_provider([MockRule(response="R", contains=None)])
        gateway = LlmGateway(provider=provider, cache=FileCache(tmp_path / "c"))
        first = gateway.complete(make_request())
        second = gateway.complete(make_request())
        assert (first.cached, second.cached) == (False, True)
        assert first.text == second.text == "R"
        assert provider.calls == 1

    def test_cache_transparency_cold_vs_warm(self, tmp_path):
        provider = mock_provider([MockRule(response="R", contains=None)])
        cold = LlmGateway(provider=provider, cache=FileCache(tmp_path / "c")).complete(
            make_request()
        )
        warm = LlmGateway(provider=provider, cache=FileCache(tmp_path / "c")).complete(
            make_request()
        )
        assert cold.text == warm.text

    def test_retries_then_success(self):
        provider = FailingProvider(failures=2)
        gateway = LlmGateway(provider=provider, retry=FAST_RETRY)
        assert gateway.complete(make_request()).text == "ok"
        assert provider.calls == 3

    def test_exhausted_retries_raise_transport_error(self, caplog):
        provider = FailingProvider(failures=99)
        gateway = LlmGateway(provider=provider, retry=FAST_RETRY)
        with caplog.at_level("WARNING"):
            with pytest.raises(TransportError) as excinfo:
                gateway.complete(make_request())
        assert excinfo.value.attempts == 3
        assert provider.calls == 3
        attempts_logged = [r for r in caplog.records if "attempt" in r.getMessage()]
        assert len(attempts_logged) == 3

    def test_unreachable_endpoint_three_attempts(self):
        gateway = LlmGateway(
            provider=HttpProvider("http://127.0.0.1:9/v1/chat/completions", timeout=0.2),
            retry=FAST_RETRY,
        )
        with pytest.raises(TransportError) as excinfo:
            gateway.complete(make_request())
        assert excinfo.value.attempts == 3

    def test_record_then_replay_identical(self, tmp_path):
        transcript = tmp_path / "transcript.jsonl"
        provider = mock_provider(
            [MockRule(response="A", contains="one"), MockRule(response="B", contains=None)]
        )
        recorder = LlmGateway(provider=provider, transcript_path=transcript)
        requests_ = [make_request("one"), make_request("two")]
        recorded = [recorder.complete(r).text for r in requests_]

        replayer = LlmGateway(provider=ReplayProvider.from_transcript(transcript))
        replayed = [replayer.complete(r).text for r in requests_]
        assert replayed == recorded == ["A", "B"]

    def test_replay_unknown_request_rejected(self, tmp_path):
        transcript = tmp_path / "t.jsonl"
        recorder = LlmGateway(
            provider=mock_provider([MockRule(response="A", contains=None)]),
            transcript_path=transcript,
        )
        recorder.complete(make_request("known"))
        replayer = LlmGateway(provider=ReplayProvider.from_transcript(transcript))
        with pytest.raises(ProviderRejection):
            replayer.complete(make_request("never recorded"))


class TestRateLimiter:
    def test_sliding_window_never_exceeded(self):
        limit = 40
        provider = mock_provider([MockRule(response="x", contains=None)])
        gateway = LlmGateway(
            provider=provider, rate_limiter=RateLimiter(limit), max_in_flight=8
        )

        def worker(i: int):
            gateway.complete(make_request(f"req {i}"))

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(90)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        times = sorted(provider.call_times)
        assert len(times) == 90
        for i, start in enumerate(times):
            in_window = sum(1 for t in times[i:] if t - start < 1.0)
            assert in_window <= limit

    def test_cache_hits_exempt(self, tmp_path):
        provider = mock_provider([MockRule(response="x", contains=None)])
        gateway = LlmGateway(
            provider=provider,
            cache=FileCache(tmp_path / "c"),
            rate_limiter=RateLimiter(1),
        )
        started = time.monotonic()
        for _ in range(25):
            gateway.complete(make_request("same"))
        assert provider.calls == 1
        assert time.monotonic() - started < 1.0


class RejectingHandler(BaseHTTPRequestHandler):
    status = 401
    last_auth: str | None = None

    def do_POST(self):
        RejectingHandler.last_auth = self.headers.get("Authorization")
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        if self.status == 200:
            body = json.dumps(
                {"choices": [{"message": {"content": "live answer"}}]}
            ).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self.send_response(self.status)
            self.send_header("Content-Length", "0")
            self.end_headers()

    def log_message(self, *args):
        pass


@pytest.fixture
def http_endpoint():
    server = ThreadingHTTPServer(("127.0.0.1", 0), RejectingHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


class TestHttpProvider:
    def test_auth_rejection_is_immediate(self, http_endpoint):
        RejectingHandler.status = 401
        url = f"http://127.0.0.1:{http_endpoint.server_address[1]}/v1/chat/completions"
        gateway = LlmGateway(provider=HttpProvider(url), retry=FAST_RETRY)
        with pytest.raises(ProviderRejection, match="401"):
            gateway.complete(make_request())

    def test_server_error_retries_then_transport_error(self, http_endpoint):
        RejectingHandler.status = 500
        url = f"http://127.0.0.1:{http_endpoint.server_address[1]}/v1/chat/completions"
        gateway = LlmGateway(provider=HttpProvider(url), retry=FAST_RETRY)
        with pytest.raises(TransportError):
            gateway.complete(make_request())

    def test_success_extracts_first_choice(self, http_endpoint):
        RejectingHandler.status = 200
        url = f"http://127.0.0.1:{http_endpoint.server_address[1]}/v1/chat/completions"
        gateway = LlmGateway(provider=HttpProvider(url), retry=FAST_RETRY)
        assert gateway.complete(make_request()).text == "live answer"

    def test_bearer_token_from_environment(self, http_endpoint, monkeypatch):
        RejectingHandler.status = 200
        monkeypatch.setenv("LLM_API_KEY", "secret-token")
        url = f"http://127.0.0.1:{http_endpoint.server_address[1]}/v1/chat/completions"
        LlmGateway(provider=HttpProvider(url), retry=FAST_RETRY).complete(make_request())
        assert RejectingHandler.last_auth == "Bearer secret-token"
