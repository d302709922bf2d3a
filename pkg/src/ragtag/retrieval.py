"""Text embedding, the knowledge store, exact top-k search, and tag enrichment.

The default embedder feature-hashes character trigrams into a fixed number of
buckets and L2-normalizes, so equal strings embed identically with no model
weights involved. Search is exhaustive cosine similarity over the store —
exact by construction and cheap at desk scale.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Protocol, runtime_checkable

from ._kernels import Index, hash_embed
from .scene import TagSet, tag_members

DEFAULT_DIMENSION = 64
DEFAULT_SEED = 0
DEFAULT_SCORE_FLOOR = 0.15

_STORE_FORMAT = "ragtag-knowledge-store"
_STORE_VERSION = 1


class RetrievalError(ValueError):
    """Base class for embedding, store, and search errors."""


class EmptyTextError(RetrievalError):
    """Tried to embed an empty string."""


class DimensionMismatchError(RetrievalError):
    """Vector dimensions disagree."""


class ZeroVectorError(RetrievalError):
    """A zero vector has no direction to compare."""


class EmptyStoreError(RetrievalError):
    """Searched a store with no entries."""


class CorpusFormatError(RetrievalError):
    """A knowledge corpus line does not follow ``key<TAB>snippet``."""


class SnapshotFormatError(RetrievalError):
    """A store snapshot file is not in the expected format."""


class StoreIntegrityError(RetrievalError):
    """A loaded snapshot's embeddings do not match recomputation."""


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension real vector; entries are validated finite."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        if not self.values:
            raise RetrievalError("embedding must have at least one dimension")
        for x in self.values:
            if not math.isfinite(x):
                raise RetrievalError("embedding entries must be finite")

    @property
    def dimension(self) -> int:
        return len(self.values)


@runtime_checkable
class Embedder(Protocol):
    """Anything that deterministically maps text to an EmbeddingVector."""

    family_id: str
    seed: int
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...


@dataclass(frozen=True)
class HashEmbedder:
    """Seeded character-trigram feature hashing into ``dimension`` buckets."""

    dimension: int = DEFAULT_DIMENSION
    seed: int = DEFAULT_SEED
    family_id: str = field(default="trigram-fnv1a", init=False)

    def __post_init__(self):
        if self.dimension <= 0:
            raise RetrievalError("dimension must be positive")
        if self.seed < 0:
            raise RetrievalError("seed must be non-negative")

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyTextError("cannot embed empty text")
        return EmbeddingVector(tuple(hash_embed(text, self.dimension, self.seed)))


_EMBEDDER_FAMILIES = {"trigram-fnv1a": HashEmbedder}


def default_embedder(dimension: int = DEFAULT_DIMENSION, seed: int = DEFAULT_SEED) -> HashEmbedder:
    return HashEmbedder(dimension=dimension, seed=seed)


def embed(text: str, embedder: Embedder | None = None) -> EmbeddingVector:
    """Embed ``text`` with ``embedder`` (default: trigram hash, d=64, seed 0)."""
    return (embedder or default_embedder()).embed(text)


def cosine_sim(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine of the angle between ``u`` and ``v``, clamped to [-1, 1]."""
    if u.dimension != v.dimension:
        raise DimensionMismatchError(
            f"dimensions differ: {u.dimension} vs {v.dimension}"
        )
    dot = 0.0
    ssu = 0.0
    ssv = 0.0
    for a, b in zip(u.values, v.values):
        dot += a * b
        ssu += a * a
        ssv += b * b
    if ssu == 0.0 or ssv == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero vectors")
    s = dot / (math.sqrt(ssu) * math.sqrt(ssv))
    if s > 1.0:
        return 1.0
    if s < -1.0:
        return -1.0
    return s


@dataclass(frozen=True)
class KnowledgeEntry:
    """One retrievable snippet, addressed by its embedded key."""

    key: str
    snippet: str
    embedding: EmbeddingVector

    def __post_init__(self):
        if not self.key:
            raise RetrievalError("entry key must be non-empty")
        if not self.snippet:
            raise RetrievalError("entry snippet must be non-empty")


@dataclass(frozen=True)
class KnowledgeStore:
    """An immutable collection of entries plus the embedder that indexed them.

    Duplicate keys are allowed (several snippets per key). Search runs over a
    prebuilt dense index; an empty store is constructible but not searchable.
    """

    entries: tuple[KnowledgeEntry, ...]
    embedder: Embedder = field(compare=False)
    embedder_id: str = field(init=False)
    seed: int = field(init=False)
    dimension: int = field(init=False)
    _index: object = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "embedder_id", self.embedder.family_id)
        object.__setattr__(self, "seed", self.embedder.seed)
        object.__setattr__(self, "dimension", self.embedder.dimension)
        for i, entry in enumerate(self.entries):
            if entry.embedding.dimension != self.dimension:
                raise DimensionMismatchError(
                    f"entry {i} has dimension {entry.embedding.dimension},"
                    f" store expects {self.dimension}"
                )
        if self.entries:
            object.__setattr__(
                self, "_index", Index([list(e.embedding.values) for e in self.entries])
            )

    def __len__(self) -> int:
        return len(self.entries)

    def retrieve(self, query: str, k: int) -> tuple[tuple[KnowledgeEntry, float], ...]:
        """The ``k`` entries most cosine-similar to ``query``, best first.

        Exhaustive and exact; ties broken by entry ordinal ascending. Returns
        fewer than ``k`` pairs only when the store is smaller than ``k``.
        """
        if not self.entries:
            raise EmptyStoreError("store has no entries")
        if k < 1:
            raise RetrievalError(f"k must be >= 1, got {k}")
        vector = self.embedder.embed(query)
        ranked = self._index.top_k(list(vector.values), k)
        return tuple((self.entries[i], score) for i, score in ranked)


def retrieve(
    store: KnowledgeStore, query: str, k: int
) -> tuple[tuple[KnowledgeEntry, float], ...]:
    return store.retrieve(query, k)


def build_store(
    pairs: Iterable[tuple[str, str]], embedder: Embedder | None = None
) -> KnowledgeStore:
    """Embed ``(key, snippet)`` pairs into a searchable store."""
    emb = embedder or default_embedder()
    entries = tuple(
        KnowledgeEntry(key=key, snippet=snippet, embedding=emb.embed(key))
        for key, snippet in pairs
    )
    return KnowledgeStore(entries=entries, embedder=emb)


def parse_corpus_lines(text: str) -> list[tuple[str, str]]:
    """Parse ``key<TAB>snippet`` lines; blank lines are skipped."""
    pairs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, tab, snippet = line.partition("\t")
        if not tab:
            raise CorpusFormatError(f"line {line_no}: expected key<TAB>snippet")
        if not key or not snippet:
            raise CorpusFormatError(f"line {line_no}: key and snippet must be non-empty")
        pairs.append((key, snippet))
    return pairs


def load_corpus(path: str | Path, embedder: Embedder | None = None) -> KnowledgeStore:
    text = Path(path).read_text(encoding="utf-8")
    return build_store(parse_corpus_lines(text), embedder=embedder)


@dataclass(frozen=True)
class EnrichedTagSet:
    """A tag set plus, per queried tag, its retrieved (snippet, score) list."""

    base: TagSet
    enrichments: Mapping[str, tuple[tuple[str, float], ...]]

    def __post_init__(self):
        frozen = {
            key: tuple((str(s), float(score)) for s, score in items)
            for key, items in dict(self.enrichments).items()
        }
        members = set(tag_members(self.base))
        for key, items in frozen.items():
            if key not in members:
                raise RetrievalError(f"enrichment key {key!r} is not a tag member")
            scores = [score for _, score in items]
            if scores != sorted(scores, reverse=True):
                raise RetrievalError(f"enrichment list for {key!r} is not score-sorted")
        object.__setattr__(self, "enrichments", MappingProxyType(frozen))


def enrich(
    tags: TagSet,
    store: KnowledgeStore,
    k: int,
    score_floor: float = DEFAULT_SCORE_FLOOR,
    include_relations: bool = False,
) -> EnrichedTagSet:
    """Attach top-``k`` knowledge snippets to each object and attribute tag.

    Every queried tag appears in the result map; tags whose best matches all
    score below ``score_floor`` map to an empty list. Relation triples are
    skipped unless ``include_relations`` is set.
    """
    queries = list(tags.object_tags)
    queries.extend(f"{label} {attr}" for label, attr in tags.attribute_tags)
    if include_relations:
        queries.extend(f"{s} {p} {o}" for s, p, o in tags.relation_tags)
    enrichments = {}
    for query in queries:
        ranked = store.retrieve(query, k)
        enrichments[query] = tuple(
            (entry.snippet, score) for entry, score in ranked if score >= score_floor
        )
    return EnrichedTagSet(base=tags, enrichments=enrichments)


def _store_lines(store: KnowledgeStore) -> Iterable[str]:
    header = {
        "format": _STORE_FORMAT,
        "version": _STORE_VERSION,
        "embedder": store.embedder_id,
        "seed": store.seed,
        "dimension": store.dimension,
        "entries": len(store.entries),
    }
    yield json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    for entry in store.entries:
        yield json.dumps(
            {
                "key": entry.key,
                "snippet": entry.snippet,
                "embedding": list(entry.embedding.values),
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )


def store_to_bytes(store: KnowledgeStore) -> bytes:
    return ("\n".join(_store_lines(store)) + "\n").encode("utf-8")


def store_fingerprint(store: KnowledgeStore) -> str:
    """Hex digest identifying the store's exact content and embedder."""
    return hashlib.sha256(store_to_bytes(store)).hexdigest()


def save_store(store: KnowledgeStore, path: str | Path) -> None:
    Path(path).write_bytes(store_to_bytes(store))


def store_from_bytes(data: bytes) -> KnowledgeStore:
    """Rebuild a store from snapshot bytes, spot-checking embeddings.

    Roughly one entry per hundred (always including the first and last) is
    re-embedded and compared bitwise against the stored vector, so a snapshot
    produced under a different embedder or seed fails loudly.
    """
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise SnapshotFormatError("snapshot is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SnapshotFormatError(f"snapshot header is not JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != _STORE_FORMAT:
        raise SnapshotFormatError("not a knowledge-store snapshot")
    if header.get("version") != _STORE_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {header.get('version')!r}")
    family = header.get("embedder")
    if family not in _EMBEDDER_FAMILIES:
        raise SnapshotFormatError(f"unknown embedder family {family!r}")
    embedder = _EMBEDDER_FAMILIES[family](
        dimension=int(header["dimension"]), seed=int(header["seed"])
    )
    declared = int(header.get("entries", -1))
    entries = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            entry = KnowledgeEntry(
                key=record["key"],
                snippet=record["snippet"],
                embedding=EmbeddingVector(tuple(record["embedding"])),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SnapshotFormatError(f"line {line_no}: bad entry record ({exc})") from exc
        entries.append(entry)
    if declared >= 0 and declared != len(entries):
        raise SnapshotFormatError(
            f"header declares {declared} entries, found {len(entries)}"
        )
    sample = sorted(set(range(0, len(entries), 100)) | ({len(entries) - 1} if entries else set()))
    for i in sample:
        recomputed = embedder.embed(entries[i].key)
        if recomputed.values != entries[i].embedding.values:
            raise StoreIntegrityError(
                f"entry {i} ({entries[i].key!r}): stored embedding does not match"
                " recomputation under the declared embedder"
            )
    return KnowledgeStore(entries=tuple(entries), embedder=embedder)


def load_store(path: str | Path) -> KnowledgeStore:
    return store_from_bytes(Path(path).read_bytes())
