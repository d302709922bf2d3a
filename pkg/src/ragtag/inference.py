"""Offline tag cache and response generation through a pluggable LLM client.

Tags for a whole corpus are enriched once, up front, and cached by image id
alongside a fingerprint of the knowledge store that produced them. Serving a
query then only assembles a prompt from the cache and calls the client — no
retrieval happens on the hot path. An online variant that enriches at call
time exists as the comparison arm for latency measurements.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from time import sleep
from types import MappingProxyType
from typing import Mapping, Protocol, runtime_checkable

import requests

from .prompting import TAG_SEPARATOR, Query, build_prompt
from .retrieval import EnrichedTagSet, KnowledgeStore, enrich, store_fingerprint
from .scene import (
    SceneError,
    build_tag_set,
    canonicalize,
    deserialize_tags,
    parse_scene_graph,
    serialize_tags,
    split_corpus,
)

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 2
DEFAULT_BACKOFF = 0.5

_CACHE_FORMAT = "ragtag-tag-cache"
_CACHE_VERSION = 1


class InferenceError(ValueError):
    """Base class for cache and client errors."""


class DuplicateImageIdError(InferenceError):
    """Two corpus documents share one image id."""


class UnknownImageIdError(InferenceError):
    """The requested image id is not in the cache."""


class CacheBuildError(InferenceError):
    """A corpus document failed to parse during cache construction."""


class CacheFormatError(InferenceError):
    """A cache snapshot file is not in the expected format."""


class StaleCacheError(InferenceError):
    """The cache was built against a different knowledge store."""


class ClientError(InferenceError):
    """The LLM client failed (transport or remote error)."""


@dataclass(frozen=True)
class GenerationParams:
    """Decoding controls; deterministic (temperature 0) by default."""

    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if self.temperature < 0:
            raise InferenceError("temperature must be non-negative")
        if self.max_tokens <= 0:
            raise InferenceError("max_tokens must be positive")


@dataclass(frozen=True)
class Response:
    """Generated text plus how it was produced."""

    text: str
    latency: float
    client_id: str
    prompt_bytes: int

    def __post_init__(self):
        if self.latency < 0:
            raise InferenceError("latency must be non-negative")


@runtime_checkable
class LLMClient(Protocol):
    """Anything that turns a prompt into response text."""

    client_id: str

    def complete(self, prompt: str, params: GenerationParams) -> str: ...


def _first_tag_items(prompt: str) -> tuple[str | None, tuple[str, str, str] | None]:
    """Best-effort parse of the first object and relation after the separator."""
    _, sep, tag_text = prompt.partition(TAG_SEPARATOR)
    if not sep:
        return None, None
    first_object = None
    first_relation = None
    for item in tag_text.split("; "):
        item = item.split(" [", 1)[0].strip()
        if not item:
            continue
        if item.startswith("(") and item.endswith(")"):
            if first_relation is None:
                parts = item[1:-1].split(", ")
                if len(parts) == 3:
                    first_relation = (parts[0], parts[1], parts[2])
        elif first_object is None:
            first_object = item.partition("(")[0].strip()
        if first_object is not None and first_relation is not None:
            break
    return first_object, first_relation


@dataclass(frozen=True)
class StubClient:
    """Deterministic offline client: a fixed template over the prompt's tags."""

    client_id: str = "stub"

    def complete(self, prompt: str, params: GenerationParams) -> str:
        first_object, first_relation = _first_tag_items(prompt)
        if first_object is None and first_relation is None:
            return "I cannot identify any tagged objects."
        parts = []
        if first_object is not None:
            parts.append(f"The image shows {first_object}.")
        if first_relation is not None:
            s, p, o = first_relation
            parts.append(f"The {s} is {p} {o}.")
        return " ".join(parts)


@dataclass(frozen=True)
class RemoteClient:
    """Minimal chat-completion HTTP client.

    Sends the prompt as a single user message; reads the auth token from the
    environment variable named by ``api_key_env`` (header omitted if unset).
    """

    endpoint: str
    model: str = "default"
    api_key_env: str = "RAGTAG_API_KEY"
    timeout: float = 30.0
    client_id: str = field(init=False)

    def __post_init__(self):
        if not self.endpoint:
            raise InferenceError("endpoint must be non-empty")
        object.__setattr__(self, "client_id", f"remote:{self.model}")

    def complete(self, prompt: str, params: GenerationParams) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.api_key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        try:
            reply = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise ClientError(f"request to {self.endpoint} failed: {exc}") from exc
        if reply.status_code >= 400:
            raise ClientError(
                f"{self.endpoint} returned HTTP {reply.status_code}: {reply.text[:200]}"
            )
        try:
            return reply.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"unexpected response shape from {self.endpoint}") from exc


@dataclass(frozen=True)
class TagCache:
    """Enriched tags for every corpus image, pinned to one store fingerprint."""

    entries: Mapping[str, EnrichedTagSet]
    store_fingerprint: str
    created_at: str

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))
        if not self.store_fingerprint:
            raise InferenceError("store_fingerprint must be non-empty")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.entries

    def __eq__(self, other):
        if not isinstance(other, TagCache):
            return NotImplemented
        return (
            dict(self.entries) == dict(other.entries)
            and self.store_fingerprint == other.store_fingerprint
            and self.created_at == other.created_at
        )


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_cache(
    corpus_text: str,
    store: KnowledgeStore,
    k: int,
    score_floor: float = 0.15,
    include_relations: bool = False,
    reflexive_predicates: tuple[str, ...] = (),
    created_at: str | None = None,
) -> TagCache:
    """Parse, tag, and enrich every corpus document into a cache.

    Entries are keyed and ordered by image id; parse failures are reported
    with the failing document's position and carry the original error as
    their cause.
    """
    entries: dict[str, EnrichedTagSet] = {}
    for doc_no, doc in enumerate(split_corpus(corpus_text), start=1):
        try:
            graph = parse_scene_graph(doc, reflexive_predicates=reflexive_predicates)
        except SceneError as exc:
            raise CacheBuildError(f"corpus document {doc_no}: {exc}") from exc
        if graph.image_id in entries:
            raise DuplicateImageIdError(
                f"corpus document {doc_no}: image id {graph.image_id!r} already seen"
            )
        tags = canonicalize(build_tag_set(graph))
        entries[graph.image_id] = enrich(
            tags, store, k, score_floor=score_floor, include_relations=include_relations
        )
    ordered = {image_id: entries[image_id] for image_id in sorted(entries)}
    return TagCache(
        entries=ordered,
        store_fingerprint=store_fingerprint(store),
        created_at=created_at or _utc_now_iso(),
    )


def _call_with_retries(
    client: LLMClient,
    prompt: str,
    params: GenerationParams,
    retries: int,
    backoff: float,
) -> str:
    attempt = 0
    while True:
        try:
            return client.complete(prompt, params)
        except ClientError:
            if attempt >= retries:
                raise
            delay = backoff * (2**attempt)
            logger.warning(
                "client %s failed (attempt %d/%d); retrying in %.2fs",
                client.client_id,
                attempt + 1,
                retries + 1,
                delay,
            )
            sleep(delay)
            attempt += 1


def infer(
    q: Query,
    image_id: str,
    cache: TagCache,
    client: LLMClient,
    budget: int,
    params: GenerationParams = GenerationParams(),
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
) -> Response:
    """Answer a query from cached tags: one client call, zero retrieval."""
    if image_id not in cache:
        raise UnknownImageIdError(f"image id {image_id!r} is not in the cache")
    prompt = build_prompt(q, cache.entries[image_id], budget)
    start = time.perf_counter()
    text = _call_with_retries(client, prompt.text, params, retries, backoff)
    latency = time.perf_counter() - start
    return Response(
        text=text, latency=latency, client_id=client.client_id, prompt_bytes=prompt.byte_length
    )


def infer_online(
    q: Query,
    image_id: str,
    corpus_record: str,
    store: KnowledgeStore,
    client: LLMClient,
    budget: int,
    k: int,
    score_floor: float = 0.15,
    include_relations: bool = False,
    params: GenerationParams = GenerationParams(),
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
) -> Response:
    """Answer a query with enrichment performed at call time.

    Produces text identical to :func:`infer` over a cache built from the
    same store and corpus; only the timing differs.
    """
    graph = parse_scene_graph(corpus_record)
    if graph.image_id != image_id:
        raise InferenceError(
            f"corpus record is for image {graph.image_id!r}, not {image_id!r}"
        )
    start = time.perf_counter()
    tags = canonicalize(build_tag_set(graph))
    enriched = enrich(
        tags, store, k, score_floor=score_floor, include_relations=include_relations
    )
    prompt = build_prompt(q, enriched, budget)
    text = _call_with_retries(client, prompt.text, params, retries, backoff)
    latency = time.perf_counter() - start
    return Response(
        text=text, latency=latency, client_id=client.client_id, prompt_bytes=prompt.byte_length
    )


def cache_record(image_id: str, enriched: EnrichedTagSet) -> dict:
    """The JSON-ready record shape used for one image in a cache snapshot."""
    return {
        "image_id": image_id,
        "tags": serialize_tags(enriched.base),
        "enrichments": {
            key: [[snippet, score] for snippet, score in items]
            for key, items in enriched.enrichments.items()
        },
    }


def _cache_lines(cache: TagCache):
    header = {
        "format": _CACHE_FORMAT,
        "version": _CACHE_VERSION,
        "fingerprint": cache.store_fingerprint,
        "created_at": cache.created_at,
        "entries": len(cache.entries),
    }
    yield json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    for image_id, enriched in cache.entries.items():
        record = cache_record(image_id, enriched)
        yield json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cache_to_bytes(cache: TagCache) -> bytes:
    return ("\n".join(_cache_lines(cache)) + "\n").encode("utf-8")


def save_cache(cache: TagCache, path: str | Path) -> None:
    Path(path).write_bytes(cache_to_bytes(cache))


def cache_from_bytes(data: bytes) -> TagCache:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise CacheFormatError("cache snapshot is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CacheFormatError(f"cache header is not JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != _CACHE_FORMAT:
        raise CacheFormatError("not a tag-cache snapshot")
    if header.get("version") != _CACHE_VERSION:
        raise CacheFormatError(f"unsupported cache version {header.get('version')!r}")
    entries: dict[str, EnrichedTagSet] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            image_id = record["image_id"]
            base = deserialize_tags(record["tags"])
            enrichments = {
                key: tuple((snippet, float(score)) for snippet, score in items)
                for key, items in record["enrichments"].items()
            }
            enriched = EnrichedTagSet(base=base, enrichments=enrichments)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CacheFormatError(f"line {line_no}: bad cache record ({exc})") from exc
        if image_id in entries:
            raise DuplicateImageIdError(f"line {line_no}: duplicate image id {image_id!r}")
        entries[image_id] = enriched
    declared = int(header.get("entries", -1))
    if declared >= 0 and declared != len(entries):
        raise CacheFormatError(f"header declares {declared} entries, found {len(entries)}")
    return TagCache(
        entries=entries,
        store_fingerprint=str(header.get("fingerprint", "")),
        created_at=str(header.get("created_at", "")),
    )


def load_cache(
    path: str | Path, store: KnowledgeStore | None = None, force: bool = False
) -> TagCache:
    """Load a cache snapshot, verifying it matches ``store`` if given.

    A fingerprint mismatch raises :class:`StaleCacheError` unless ``force``
    is set, in which case the stale cache is returned with a logged warning.
    """
    cache = cache_from_bytes(Path(path).read_bytes())
    if store is not None:
        current = store_fingerprint(store)
        if current != cache.store_fingerprint:
            if not force:
                raise StaleCacheError(
                    f"cache at {path} was built against store {cache.store_fingerprint[:12]}…,"
                    f" current store is {current[:12]}…; rebuild or pass force"
                )
            logger.warning(
                "using stale cache %s (built against %s…, store is %s…)",
                path,
                cache.store_fingerprint[:12],
                current[:12],
            )
    return cache
