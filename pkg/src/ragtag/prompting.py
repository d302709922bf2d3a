"""Deterministic, budget-aware prompt construction.

A prompt is the query text, the literal ``" Tags: "`` separator, and the
serialized tag items — one item per object (attributes and knowledge
snippets inline) and one per relation. Items are packed greedily against a
byte budget and never split; if nothing fits, the separator is omitted and
the prompt is the query alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .retrieval import EnrichedTagSet
from .scene import TagSet

TAG_SEPARATOR = " Tags: "
ITEM_SEPARATOR = "; "


class PromptError(ValueError):
    """Base class for prompt construction errors."""


class BudgetTooSmallError(PromptError):
    """The byte budget cannot hold the query plus the tag separator."""


@dataclass(frozen=True)
class Query:
    """A textual question; printable characters and spaces only."""

    text: str
    query_id: str | None = None

    def __post_init__(self):
        if not self.text:
            raise PromptError("query text must be non-empty")
        for ch in self.text:
            if ord(ch) < 32 or ord(ch) == 127:
                raise PromptError(
                    f"query text contains control character {ch!r}; only spaces allowed"
                )


@dataclass(frozen=True)
class Prompt:
    """Built prompt text plus how much tag content made it in."""

    text: str
    tag_count_included: int
    truncated: bool

    @property
    def byte_length(self) -> int:
        return len(self.text.encode("utf-8"))


def without_enrichments(tags: TagSet) -> EnrichedTagSet:
    """Wrap a bare tag set so it can be prompted with no knowledge attached."""
    return EnrichedTagSet(base=tags, enrichments={})


def prompt_items(tags: EnrichedTagSet) -> list[str]:
    """Serialized prompt items in inclusion order: objects, then relations.

    Each object item carries its attribute list plus inline knowledge
    suffixes (`` [key: snippet]``) for the object and each of its attribute
    pairs; relation items likewise carry their own suffixes if present.
    """
    base = tags.base
    enrichments = tags.enrichments
    attrs_by_label: dict[str, list[str]] = {}
    for label, attr in base.attribute_tags:
        attrs_by_label.setdefault(label, []).append(attr)

    items = []
    for label in base.object_tags:
        attrs = attrs_by_label.get(label, [])
        text = f"{label}({', '.join(attrs)})" if attrs else label
        keys = [label] + [f"{label} {attr}" for attr in attrs]
        for key in keys:
            for snippet, _score in enrichments.get(key, ()):
                text += f" [{key}: {snippet}]"
        items.append(text)
    for s, p, o in base.relation_tags:
        text = f"({s}, {p}, {o})"
        for snippet, _score in enrichments.get(f"{s} {p} {o}", ()):
            text += f" [{s} {p} {o}: {snippet}]"
        items.append(text)
    return items


def build_prompt(q: Query, tags: EnrichedTagSet, budget: int) -> Prompt:
    """Pack tag items after the query until the next item would not fit.

    ``budget`` is a UTF-8 byte count and must leave room for the query and
    the separator. Packing stops at the first item that does not fit, so a
    smaller budget always yields a byte-prefix of a larger budget's item
    list. With no items included the separator is omitted entirely.
    """
    query_bytes = len(q.text.encode("utf-8"))
    if budget < query_bytes + len(TAG_SEPARATOR):
        raise BudgetTooSmallError(
            f"budget {budget} cannot hold the {query_bytes}-byte query"
            f" plus the {len(TAG_SEPARATOR)}-byte separator"
        )
    items = prompt_items(tags)
    included: list[str] = []
    used = query_bytes
    for item in items:
        lead = TAG_SEPARATOR if not included else ITEM_SEPARATOR
        cost = len((lead + item).encode("utf-8"))
        if used + cost > budget:
            break
        included.append(item)
        used += cost
    text = q.text
    if included:
        text += TAG_SEPARATOR + ITEM_SEPARATOR.join(included)
    return Prompt(
        text=text,
        tag_count_included=len(included),
        truncated=len(included) < len(items),
    )
