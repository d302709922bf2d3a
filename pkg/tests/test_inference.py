"""Tests for the tag cache, inference paths, and LLM clients."""

from __future__ import annotations

import json
import logging
import random

import pytest

import ragtag.inference as inference
from ragtag.inference import (
    CacheBuildError,
    CacheFormatError,
    ClientError,
    DuplicateImageIdError,
    GenerationParams,
    InferenceError,
    RemoteClient,
    Response,
    StaleCacheError,
    StubClient,
    TagCache,
    UnknownImageIdError,
    build_cache,
    cache_from_bytes,
    cache_to_bytes,
    infer,
    infer_online,
    load_cache,
    save_cache,
)
from ragtag.prompting import Query, build_prompt
from ragtag.retrieval import build_store, enrich, store_fingerprint
from ragtag.scene import (
    MalformedDocumentError,
    build_tag_set,
    canonicalize,
    parse_scene_graph,
    split_corpus,
)

CORPUS = """SAF 1
image img_001
object person
object handbag attr black attr leather
relation 0 holding 1

SAF 1
image img_002
object dog
object ball
relation 0 chases 1

SAF 1
image img_003
object tree
"""

STORE = build_store(
    [
        ("person", "a human being in the scene"),
        ("handbag", "a small bag carried by hand"),
        ("dog", "a domestic canine companion"),
        ("ball", "a round object used in play"),
        ("tree", "a tall woody perennial plant"),
    ]
)

PINNED_TIME = "2026-08-24T00:00:00+00:00"


def _cache(**kwargs):
    defaults = dict(k=2, created_at=PINNED_TIME)
    defaults.update(kwargs)
    return build_cache(CORPUS, STORE, **defaults)


class CountingStore:
    """Delegating store wrapper that counts retrieval calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def retrieve(self, query, k):
        self.calls += 1
        return self.inner.retrieve(query, k)

    def __getattr__(self, name):
        return getattr(self.inner, name)


class CountingClient:
    """Delegating client wrapper that counts completion calls."""

    def __init__(self, inner):
        self.inner = inner
        self.client_id = inner.client_id
        self.calls = 0

    def complete(self, prompt, params):
        self.calls += 1
        return self.inner.complete(prompt, params)


class FlakyClient:
    """Fails the first ``fail_times`` calls, then answers."""

    client_id = "flaky"

    def __init__(self, fail_times):
        self.fail_times = fail_times
        self.calls = 0

    def complete(self, prompt, params):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise ClientError(f"simulated outage {self.calls}")
        return "recovered"


def _word(rng, length=5):
    return "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(length))


def _random_corpus(rng, n_images, labels):
    docs = []
    for i in range(n_images):
        lines = ["SAF 1", f"image img_{i:04d}"]
        n_objects = rng.randint(1, 4)
        chosen = [rng.choice(labels) for _ in range(n_objects)]
        for label in chosen:
            attrs = "".join(f" attr {_word(rng, 4)}" for _ in range(rng.randint(0, 2)))
            lines.append(f"object {label}{attrs}")
        if n_objects >= 2 and rng.random() < 0.7:
            s, o = rng.sample(range(n_objects), 2)
            lines.append(f"relation {s} {_word(rng, 4)} {o}")
        docs.append("\n".join(lines))
    return "\n\n".join(docs) + "\n"


class TestGenerationParams:
    def test_defaults_are_deterministic(self):
        params = GenerationParams()
        assert params.temperature == 0.0
        assert params.max_tokens == 256

    def test_negative_temperature_rejected(self):
        with pytest.raises(InferenceError):
            GenerationParams(temperature=-0.1)

    def test_nonpositive_max_tokens_rejected(self):
        with pytest.raises(InferenceError):
            GenerationParams(max_tokens=0)


class TestResponse:
    def test_negative_latency_rejected(self):
        with pytest.raises(InferenceError):
            Response(text="x", latency=-1e-9, client_id="stub", prompt_bytes=1)

    def test_fields_preserved(self):
        r = Response(text="x", latency=0.0, client_id="stub", prompt_bytes=7)
        assert (r.text, r.latency, r.client_id, r.prompt_bytes) == ("x", 0.0, "stub", 7)


class TestStubClient:
    def test_template_names_first_object_and_relation(self):
        prompt = (
            "What is the person holding? Tags: handbag(black, leather); person;"
            " (person, holding, handbag)"
        )
        text = StubClient().complete(prompt, GenerationParams())
        assert text == "The image shows handbag. The person is holding handbag."

    def test_deterministic_across_calls(self):
        client = StubClient()
        prompt = "Describe the scene. Tags: dog; tree"
        outputs = {client.complete(prompt, GenerationParams()) for _ in range(5)}
        assert len(outputs) == 1

    def test_no_tag_section(self):
        text = StubClient().complete("Just a question.", GenerationParams())
        assert text == "I cannot identify any tagged objects."

    def test_object_only(self):
        text = StubClient().complete("Q? Tags: ball", GenerationParams())
        assert text == "The image shows ball."

    def test_enrichment_suffix_is_ignored(self):
        prompt = "Q? Tags: dog [dog: a domestic canine]; (dog, chases, ball) [ball: a toy]"
        text = StubClient().complete(prompt, GenerationParams())
        assert text == "The image shows dog. The dog is chases ball."

    def test_attribute_list_is_stripped_from_label(self):
        text = StubClient().complete("Q? Tags: car(red, fast)", GenerationParams())
        assert text == "The image shows car."


class TestBuildCache:
    def test_matches_manual_pipeline(self):
        cache = _cache()
        for doc in split_corpus(CORPUS):
            graph = parse_scene_graph(doc)
            expected = enrich(canonicalize(build_tag_set(graph)), STORE, 2)
            assert cache.entries[graph.image_id] == expected

    def test_entries_ordered_by_image_id(self):
        cache = _cache()
        assert list(cache.entries) == ["img_001", "img_002", "img_003"]

    def test_fingerprint_matches_store(self):
        assert _cache().store_fingerprint == store_fingerprint(STORE)

    def test_duplicate_image_id_rejected(self):
        corpus = "SAF 1\nimage a\nobject dog\n\nSAF 1\nimage a\nobject cat\n"
        with pytest.raises(DuplicateImageIdError, match="'a'"):
            build_cache(corpus, STORE, k=1)

    def test_parse_error_carries_document_context(self):
        corpus = "SAF 1\nimage a\nobject dog\n\nSAF 1\nimage b\nbogus line\n"
        with pytest.raises(CacheBuildError, match="document 2") as err:
            build_cache(corpus, STORE, k=1)
        assert isinstance(err.value.__cause__, MalformedDocumentError)

    def test_empty_corpus_gives_empty_cache(self):
        cache = build_cache("", STORE, k=1, created_at=PINNED_TIME)
        assert len(cache) == 0
        assert cache.store_fingerprint == store_fingerprint(STORE)

    def test_deterministic_given_created_at(self):
        assert _cache() == _cache()

    def test_enrichment_options_are_forwarded(self):
        plain = _cache()
        with_relations = _cache(include_relations=True)
        tags = plain.entries["img_002"]
        assert "dog chases ball" not in tags.enrichments
        assert "dog chases ball" in with_relations.entries["img_002"].enrichments


class TestTagCacheType:
    def test_entries_are_read_only(self):
        cache = _cache()
        with pytest.raises(TypeError):
            cache.entries["img_999"] = cache.entries["img_001"]

    def test_contains_and_len(self):
        cache = _cache()
        assert "img_001" in cache
        assert "img_999" not in cache
        assert len(cache) == 3

    def test_empty_fingerprint_rejected(self):
        with pytest.raises(InferenceError):
            TagCache(entries={}, store_fingerprint="", created_at=PINNED_TIME)


class TestInfer:
    def test_response_fields(self):
        cache = _cache()
        q = Query("What is the person holding?")
        r = infer(q, "img_001", cache, StubClient(), budget=400)
        prompt = build_prompt(q, cache.entries["img_001"], 400)
        assert r.client_id == "stub"
        assert r.prompt_bytes == prompt.byte_length
        assert r.latency >= 0.0
        assert "handbag" in r.text

    def test_unknown_image_id_raises_before_client_call(self):
        cache = _cache()
        client = CountingClient(StubClient())
        with pytest.raises(UnknownImageIdError, match="img_999"):
            infer(Query("Q?"), "img_999", cache, client, budget=400)
        assert client.calls == 0

    def test_exactly_one_client_call(self):
        cache = _cache()
        client = CountingClient(StubClient())
        infer(Query("Q?"), "img_001", cache, client, budget=400)
        assert client.calls == 1

    def test_prompt_respects_budget(self):
        cache = _cache()
        r = infer(Query("What is here?"), "img_001", cache, StubClient(), budget=40)
        assert r.prompt_bytes <= 40


class TestCachePurity:
    def test_cached_path_never_touches_the_store(self):
        counting = CountingStore(STORE)
        cache = build_cache(CORPUS, counting, k=2, created_at=PINNED_TIME)
        assert counting.calls > 0
        counting.calls = 0
        for _ in range(25):
            for image_id in cache.entries:
                infer(Query("What is here?"), image_id, cache, StubClient(), budget=400)
        assert counting.calls == 0

    def test_online_path_does_touch_the_store(self):
        counting = CountingStore(STORE)
        doc = split_corpus(CORPUS)[0]
        infer_online(
            Query("Q?"), "img_001", doc, counting, StubClient(), budget=400, k=2
        )
        assert counting.calls > 0


class TestPathEquivalence:
    def test_cached_and_online_responses_are_identical(self):
        rng = random.Random(11)
        labels = ["person", "dog", "ball", "tree", "car", "handbag"]
        corpus = _random_corpus(rng, 12, labels)
        store = build_store(
            [(label, f"{label} described as {_word(rng, 8)}") for label in labels]
            + [(_word(rng, 6), _word(rng, 10)) for _ in range(20)]
        )
        cache = build_cache(corpus, store, k=3, created_at=PINNED_TIME)
        docs = {parse_scene_graph(d).image_id: d for d in split_corpus(corpus)}
        client = StubClient()
        for _ in range(100):
            image_id = rng.choice(sorted(docs))
            q = Query(f"What about the {rng.choice(labels)}?")
            budget = rng.randint(len(q.text.encode()) + 7, 500)
            cached = infer(q, image_id, cache, client, budget)
            online = infer_online(q, image_id, docs[image_id], store, client, budget, k=3)
            assert cached.text == online.text
            assert cached.prompt_bytes == online.prompt_bytes

    def test_online_rejects_mismatched_record(self):
        docs = split_corpus(CORPUS)
        with pytest.raises(InferenceError, match="img_001"):
            infer_online(
                Query("Q?"), "img_999", docs[0], STORE, StubClient(), budget=400, k=1
            )


class TestRetries:
    def test_recovers_within_retry_budget(self, monkeypatch):
        delays = []
        monkeypatch.setattr(inference, "sleep", delays.append)
        cache = _cache()
        client = FlakyClient(fail_times=2)
        r = infer(Query("Q?"), "img_001", cache, client, budget=400)
        assert r.text == "recovered"
        assert client.calls == 3
        assert delays == [0.5, 1.0]

    def test_surfaces_error_after_exhausting_retries(self, monkeypatch):
        monkeypatch.setattr(inference, "sleep", lambda _: None)
        cache = _cache()
        client = FlakyClient(fail_times=3)
        with pytest.raises(ClientError, match="simulated outage 3"):
            infer(Query("Q?"), "img_001", cache, client, budget=400)
        assert client.calls == 3

    def test_backoff_doubles_from_base(self, monkeypatch):
        delays = []
        monkeypatch.setattr(inference, "sleep", delays.append)
        cache = _cache()
        client = FlakyClient(fail_times=2)
        infer(Query("Q?"), "img_001", cache, client, budget=400, backoff=0.25)
        assert delays == [0.25, 0.5]

    def test_non_client_errors_are_not_retried(self, monkeypatch):
        delays = []
        monkeypatch.setattr(inference, "sleep", delays.append)

        class BrokenClient:
            client_id = "broken"

            def complete(self, prompt, params):
                raise RuntimeError("programming error")

        cache = _cache()
        with pytest.raises(RuntimeError):
            infer(Query("Q?"), "img_001", cache, BrokenClient(), budget=400)
        assert delays == []


class _FakeReply:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("not JSON")
        return self._payload


class TestRemoteClient:
    def _patch_post(self, monkeypatch, reply=None, error=None):
        recorded = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            recorded.update(url=url, json=json, headers=headers, timeout=timeout)
            if error is not None:
                raise error
            return reply

        monkeypatch.setattr(inference.requests, "post", fake_post)
        return recorded

    def test_sends_single_user_message(self, monkeypatch):
        reply = _FakeReply(payload={"choices": [{"message": {"content": "hi"}}]})
        recorded = self._patch_post(monkeypatch, reply)
        monkeypatch.delenv("RAGTAG_API_KEY", raising=False)
        client = RemoteClient(endpoint="https://api.example/v1/chat", model="m1")
        text = client.complete("the prompt", GenerationParams(max_tokens=32))
        assert text == "hi"
        assert recorded["url"] == "https://api.example/v1/chat"
        assert recorded["json"]["messages"] == [{"role": "user", "content": "the prompt"}]
        assert recorded["json"]["temperature"] == 0.0
        assert recorded["json"]["max_tokens"] == 32
        assert recorded["json"]["model"] == "m1"
        assert "Authorization" not in recorded["headers"]

    def test_bearer_token_comes_from_environment(self, monkeypatch):
        reply = _FakeReply(payload={"choices": [{"message": {"content": "ok"}}]})
        recorded = self._patch_post(monkeypatch, reply)
        monkeypatch.setenv("RAGTAG_API_KEY", "sekrit")
        RemoteClient(endpoint="https://api.example/v1/chat").complete(
            "p", GenerationParams()
        )
        assert recorded["headers"]["Authorization"] == "Bearer sekrit"

    def test_http_error_becomes_client_error(self, monkeypatch):
        self._patch_post(monkeypatch, _FakeReply(status_code=500, text="boom"))
        client = RemoteClient(endpoint="https://api.example/v1/chat")
        with pytest.raises(ClientError, match="HTTP 500"):
            client.complete("p", GenerationParams())

    def test_transport_error_becomes_client_error(self, monkeypatch):
        self._patch_post(
            monkeypatch, error=inference.requests.ConnectionError("refused")
        )
        client = RemoteClient(endpoint="https://api.example/v1/chat")
        with pytest.raises(ClientError, match="failed"):
            client.complete("p", GenerationParams())

    def test_unexpected_shape_becomes_client_error(self, monkeypatch):
        self._patch_post(monkeypatch, _FakeReply(payload={"unexpected": True}))
        client = RemoteClient(endpoint="https://api.example/v1/chat")
        with pytest.raises(ClientError, match="shape"):
            client.complete("p", GenerationParams())

    def test_client_id_names_the_model(self):
        assert RemoteClient(endpoint="https://x", model="m2").client_id == "remote:m2"

    def test_empty_endpoint_rejected(self):
        with pytest.raises(InferenceError):
            RemoteClient(endpoint="")


class TestCacheSnapshot:
    def test_round_trip_is_byte_identical(self, tmp_path):
        cache = _cache()
        path = tmp_path / "cache.jsonl"
        save_cache(cache, path)
        loaded = load_cache(path)
        assert loaded == cache
        assert cache_to_bytes(loaded) == path.read_bytes()

    def test_created_at_survives_round_trip(self):
        cache = _cache()
        assert cache_from_bytes(cache_to_bytes(cache)).created_at == PINNED_TIME

    def test_empty_cache_round_trips(self):
        cache = build_cache("", STORE, k=1, created_at=PINNED_TIME)
        assert cache_from_bytes(cache_to_bytes(cache)) == cache

    def test_unicode_content_round_trips(self):
        corpus = "SAF 1\nimage café_01\nobject čaj attr zelený\n"
        store = build_store([("čaj", "nápoj z lístků")])
        cache = build_cache(corpus, store, k=1, created_at=PINNED_TIME)
        assert cache_from_bytes(cache_to_bytes(cache)) == cache

    def test_empty_snapshot_rejected(self):
        with pytest.raises(CacheFormatError):
            cache_from_bytes(b"")

    def test_wrong_format_rejected(self):
        with pytest.raises(CacheFormatError, match="not a tag-cache"):
            cache_from_bytes(b'{"format":"something-else","version":1}\n')

    def test_wrong_version_rejected(self):
        blob = json.dumps({"format": "ragtag-tag-cache", "version": 99}).encode()
        with pytest.raises(CacheFormatError, match="version"):
            cache_from_bytes(blob + b"\n")

    def test_header_count_mismatch_rejected(self):
        lines = cache_to_bytes(_cache()).decode().splitlines()
        del lines[1]
        with pytest.raises(CacheFormatError, match="entries"):
            cache_from_bytes(("\n".join(lines) + "\n").encode())

    def test_tampered_record_rejected(self):
        lines = cache_to_bytes(_cache()).decode().splitlines()
        record = json.loads(lines[1])
        record["tags"] = "not ; valid ( grammar"
        lines[1] = json.dumps(record)
        with pytest.raises(CacheFormatError, match="line 2"):
            cache_from_bytes(("\n".join(lines) + "\n").encode())

    def test_duplicate_record_rejected(self):
        lines = cache_to_bytes(_cache()).decode().splitlines()
        header = json.loads(lines[0])
        header["entries"] += 1
        lines[0] = json.dumps(header, sort_keys=True, separators=(",", ":"))
        lines.append(lines[1])
        with pytest.raises(DuplicateImageIdError):
            cache_from_bytes(("\n".join(lines) + "\n").encode())


class TestStaleness:
    def test_matching_store_loads_without_warning(self, tmp_path, caplog):
        path = tmp_path / "cache.jsonl"
        save_cache(_cache(), path)
        with caplog.at_level(logging.WARNING, logger="ragtag.inference"):
            load_cache(path, store=STORE)
        assert caplog.records == []

    def test_mismatched_store_raises(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        save_cache(_cache(), path)
        other = build_store([("cat", "a small feline")])
        with pytest.raises(StaleCacheError, match="rebuild or pass force"):
            load_cache(path, store=other)

    def test_force_returns_stale_cache_with_warning(self, tmp_path, caplog):
        path = tmp_path / "cache.jsonl"
        cache = _cache()
        save_cache(cache, path)
        other = build_store([("cat", "a small feline")])
        with caplog.at_level(logging.WARNING, logger="ragtag.inference"):
            loaded = load_cache(path, store=other, force=True)
        assert loaded == cache
        assert any("stale" in r.message for r in caplog.records)

    def test_no_store_skips_the_check(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        save_cache(_cache(), path)
        assert load_cache(path) == _cache()
