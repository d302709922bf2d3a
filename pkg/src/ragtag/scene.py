"""Scene domain types, annotation parsing, and the structured tag algebra.

A scene is a set of labelled objects with attributes plus directed relations
between them. Scenes arrive as line-oriented annotation documents (``SAF 1``
header), are parsed into :class:`SceneGraph`, and are flattened into a
:class:`TagSet`: the union of object labels, (object, attribute) pairs, and
(subject, predicate, object) triples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

SAF_HEADER = "SAF 1"

# Punctuation reserved by the tag serialization grammar. Excluding it from
# labels, attributes, and predicates keeps deserialization unambiguous.
_RESERVED_CHARS = "();,"


class SceneError(ValueError):
    """Base class for scene and tag errors."""


class MalformedDocumentError(SceneError):
    """Annotation document syntax error, with location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + location)
        self.line = line
        self.column = column


class DanglingReferenceError(SceneError):
    """A relation references an object index that does not exist."""


class EmptyLabelError(SceneError):
    """An object label is empty."""


class TagTextError(SceneError):
    """Tag text contains reserved or control characters."""


class TagSyntaxError(SceneError):
    """Serialized tag text does not follow the tag grammar."""


class ReflexiveRelationError(SceneError):
    """A relation points an object at itself without being marked reflexive."""


def _clean_tag_text(text: str, what: str) -> str:
    cleaned = text.strip()
    if not cleaned:
        if what == "label":
            raise EmptyLabelError("object label is empty")
        raise TagTextError(f"{what} is empty")
    for ch in cleaned:
        if ch in _RESERVED_CHARS:
            raise TagTextError(f"{what} {cleaned!r} contains reserved character {ch!r}")
        if ord(ch) < 32 or ord(ch) == 127:
            raise TagTextError(f"{what} {cleaned!r} contains a control character")
    return cleaned


@dataclass(frozen=True)
class ImageRecord:
    """A corpus image, identified by a unique ``image_id``."""

    image_id: str
    source_uri: str | None = None
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        if not self.image_id:
            raise SceneError("image_id must be non-empty")
        for name in ("width", "height"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise SceneError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class FeatureMap:
    """A dense h x w x d feature grid for one image, stored flat."""

    image_id: str
    grid: tuple[float, ...]
    h: int
    w: int
    d: int

    def __post_init__(self):
        if min(self.h, self.w, self.d) <= 0:
            raise SceneError("feature map dimensions must be positive")
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        if len(self.grid) != self.h * self.w * self.d:
            raise SceneError(
                f"grid has {len(self.grid)} entries, expected {self.h * self.w * self.d}"
            )
        for x in self.grid:
            if x != x or x in (float("inf"), float("-inf")):
                raise SceneError("feature map entries must be finite")


def stub_feature_map(image_id: str, h: int = 2, w: int = 2, d: int = 4, seed: int = 0) -> FeatureMap:
    """Deterministic stand-in feature grid derived from the image id.

    There is no learned encoder here; this exists so downstream code has a
    concrete, reproducible feature object to pass around.
    """
    basis = 0xCBF29CE484222325
    prime = 0x100000001B3
    mask = 0xFFFFFFFFFFFFFFFF
    h0 = basis
    for b in image_id.encode("utf-8"):
        h0 = ((h0 ^ b) * prime) & mask
    h0 = ((h0 ^ (seed & mask)) * prime) & mask
    values = []
    state = h0
    for _ in range(h * w * d):
        state = ((state ^ 0x9E3779B97F4A7C15) * prime) & mask
        values.append((state % (1 << 53)) / float(1 << 53) * 2.0 - 1.0)
    return FeatureMap(image_id=image_id, grid=tuple(values), h=h, w=w, d=d)


@dataclass(frozen=True)
class ObjectNode:
    """A labelled object with zero or more attributes."""

    label: str
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "label", _clean_tag_text(self.label, "label"))
        seen = []
        for attr in self.attributes:
            cleaned = _clean_tag_text(attr, "attribute")
            if cleaned not in seen:
                seen.append(cleaned)
        object.__setattr__(self, "attributes", tuple(seen))


@dataclass(frozen=True)
class RelationEdge:
    """A directed relation between two objects, referenced by index."""

    subject_idx: int
    predicate: str
    object_idx: int

    def __post_init__(self):
        object.__setattr__(self, "predicate", _clean_tag_text(self.predicate, "predicate"))


@dataclass(frozen=True)
class SceneGraph:
    """Objects and relations extracted from one image's annotations.

    Relation endpoints must index into ``objects``; duplicate relation
    triples are dropped (first occurrence kept); self-loops are rejected
    unless their predicate appears in ``reflexive_predicates``.
    """

    image_id: str
    objects: tuple[ObjectNode, ...] = ()
    relations: tuple[RelationEdge, ...] = ()
    reflexive_predicates: frozenset[str] = field(default=frozenset(), compare=False)

    def __post_init__(self):
        if not self.image_id:
            raise SceneError("image_id must be non-empty")
        object.__setattr__(self, "objects", tuple(self.objects))
        n = len(self.objects)
        kept: list[RelationEdge] = []
        seen: set[tuple[int, str, int]] = set()
        for edge in self.relations:
            for idx in (edge.subject_idx, edge.object_idx):
                if not 0 <= idx < n:
                    raise DanglingReferenceError(
                        f"relation references object index {idx}, but only {n} objects exist"
                    )
            if edge.subject_idx == edge.object_idx and edge.predicate not in self.reflexive_predicates:
                raise ReflexiveRelationError(
                    f"relation {edge.predicate!r} points object {edge.subject_idx} at itself"
                )
            key = (edge.subject_idx, edge.predicate, edge.object_idx)
            if key not in seen:
                seen.add(key)
                kept.append(edge)
        object.__setattr__(self, "relations", tuple(kept))


@dataclass(frozen=True)
class TagSet:
    """The flattened tag view of a scene: labels, pairs, and triples.

    ``n_objects`` and ``n_relations`` record the source counts; in canonical
    form they equal the collection lengths.
    """

    object_tags: tuple[str, ...] = ()
    attribute_tags: tuple[tuple[str, str], ...] = ()
    relation_tags: tuple[tuple[str, str, str], ...] = ()
    n_objects: int = 0
    n_relations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "object_tags", tuple(self.object_tags))
        object.__setattr__(
            self, "attribute_tags", tuple((l, a) for l, a in self.attribute_tags)
        )
        object.__setattr__(
            self, "relation_tags", tuple((s, p, o) for s, p, o in self.relation_tags)
        )
        labels = set(self.object_tags)
        for label, _ in self.attribute_tags:
            if label not in labels:
                raise SceneError(f"attribute tag references unknown object {label!r}")
        for s, _, o in self.relation_tags:
            if s not in labels or o not in labels:
                raise SceneError(f"relation tag ({s!r}, ..., {o!r}) references an unknown object")
        if self.n_objects < 0 or self.n_relations < 0:
            raise SceneError("tag counts must be non-negative")

    def is_empty(self) -> bool:
        return not (self.object_tags or self.attribute_tags or self.relation_tags)


@dataclass(frozen=True)
class CompletenessReport:
    """How much of a scene graph's tag content is missing from a tag set."""

    missing_objects: int
    missing_attributes: int
    missing_relations: int
    missing_object_tags: tuple[str, ...] = ()
    missing_attribute_tags: tuple[tuple[str, str], ...] = ()
    missing_relation_tags: tuple[tuple[str, str, str], ...] = ()

    @property
    def is_complete(self) -> bool:
        return self.missing_objects == self.missing_attributes == self.missing_relations == 0


def _split_fields(raw: str, line_no: int) -> tuple[str, str]:
    parts = raw.split(None, 1)
    keyword = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    return keyword, rest


def parse_scene_graph(doc: str, reflexive_predicates: Iterable[str] = ()) -> SceneGraph:
    """Parse one annotation document into a :class:`SceneGraph`.

    Document format (line oriented, UTF-8, ``#`` comments and blank lines
    ignored)::

        SAF 1
        image <image_id>
        object <label tokens> [attr <value tokens>]*
        relation <subject_idx> <predicate tokens> <object_idx>

    Tokens are whitespace separated; multi-token labels, attribute values,
    and predicates are joined with single spaces. ``attr`` is a reserved
    keyword inside ``object`` lines.
    """
    reflexive = frozenset(reflexive_predicates)
    image_id: str | None = None
    header_seen = False
    objects: list[ObjectNode] = []
    raw_relations: list[tuple[int, str, int, int]] = []

    for line_no, raw_line in enumerate(doc.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line == SAF_HEADER:
                header_seen = True
                continue
            if line.startswith("SAF"):
                raise MalformedDocumentError(f"unsupported format version {line!r}", line_no)
            raise MalformedDocumentError(f"expected {SAF_HEADER!r} header, got {line!r}", line_no)

        keyword, rest = _split_fields(line, line_no)
        if keyword == "image":
            if image_id is not None:
                raise MalformedDocumentError("duplicate image line", line_no)
            if not rest.strip():
                raise MalformedDocumentError("image line is missing an id", line_no)
            image_id = rest.strip()
        elif keyword == "object":
            if image_id is None:
                raise MalformedDocumentError("object line before image line", line_no)
            tokens = rest.split()
            groups: list[list[str]] = [[]]
            for token in tokens:
                if token == "attr":
                    groups.append([])
                else:
                    groups[-1].append(token)
            label = " ".join(groups[0])
            if not label:
                raise EmptyLabelError(f"object label is empty (line {line_no})")
            attrs = []
            for group in groups[1:]:
                if not group:
                    raise MalformedDocumentError("attr keyword without a value", line_no)
                attrs.append(" ".join(group))
            try:
                objects.append(ObjectNode(label=label, attributes=tuple(attrs)))
            except TagTextError as exc:
                raise MalformedDocumentError(str(exc), line_no) from exc
        elif keyword == "relation":
            if image_id is None:
                raise MalformedDocumentError("relation line before image line", line_no)
            tokens = rest.split()
            if len(tokens) < 3:
                raise MalformedDocumentError(
                    "relation needs <subject_idx> <predicate> <object_idx>", line_no
                )
            try:
                subject_idx = int(tokens[0])
                object_idx = int(tokens[-1])
            except ValueError as exc:
                raise MalformedDocumentError(
                    f"relation indexes must be integers, got {tokens[0]!r} and {tokens[-1]!r}",
                    line_no,
                ) from exc
            predicate = " ".join(tokens[1:-1])
            raw_relations.append((subject_idx, predicate, object_idx, line_no))
        else:
            raise MalformedDocumentError(f"unknown directive {keyword!r}", line_no)

    if not header_seen:
        raise MalformedDocumentError(f"missing {SAF_HEADER!r} header")
    if image_id is None:
        raise MalformedDocumentError("document has no image line")

    n = len(objects)
    relations = []
    for subject_idx, predicate, object_idx, line_no in raw_relations:
        for idx in (subject_idx, object_idx):
            if not 0 <= idx < n:
                raise DanglingReferenceError(
                    f"relation references object index {idx}, but only {n} objects exist"
                    f" (line {line_no})"
                )
        try:
            edge = RelationEdge(subject_idx=subject_idx, predicate=predicate, object_idx=object_idx)
        except TagTextError as exc:
            raise MalformedDocumentError(str(exc), line_no) from exc
        if subject_idx == object_idx and predicate not in reflexive:
            raise ReflexiveRelationError(
                f"relation {predicate!r} points object {subject_idx} at itself (line {line_no})"
            )
        relations.append(edge)

    return SceneGraph(
        image_id=image_id,
        objects=tuple(objects),
        relations=tuple(relations),
        reflexive_predicates=reflexive,
    )


def split_corpus(text: str) -> list[str]:
    """Split a corpus file into individual documents at each ``SAF 1`` header."""
    docs: list[str] = []
    current: list[str] | None = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        stripped = raw_line.strip()
        if stripped == SAF_HEADER:
            if current is not None:
                docs.append("\n".join(current))
            current = [raw_line]
        elif current is None:
            if stripped and not stripped.startswith("#"):
                raise MalformedDocumentError(
                    f"content before first {SAF_HEADER!r} header", line_no
                )
        else:
            current.append(raw_line)
    if current is not None:
        docs.append("\n".join(current))
    return docs


def parse_corpus(text: str, reflexive_predicates: Iterable[str] = ()) -> Iterator[SceneGraph]:
    for doc in split_corpus(text):
        yield parse_scene_graph(doc, reflexive_predicates=reflexive_predicates)


def _display_labels(graph: SceneGraph) -> list[str]:
    # Repeated labels get "#<n>" ordinals so triples stay unambiguous as text.
    counts: dict[str, int] = {}
    for node in graph.objects:
        counts[node.label] = counts.get(node.label, 0) + 1
    seen: dict[str, int] = {}
    labels = []
    for node in graph.objects:
        if counts[node.label] == 1:
            labels.append(node.label)
        else:
            seen[node.label] = seen.get(node.label, 0) + 1
            labels.append(f"{node.label}#{seen[node.label]}")
    return labels


def build_tag_set(graph: SceneGraph) -> TagSet:
    """Flatten a scene graph into its canonical tag set.

    The result is the union of object labels, (object, attribute) pairs, and
    (subject, predicate, object) triples, each collection sorted; building is
    idempotent and invariant under reordering of the graph's members.
    """
    labels = _display_labels(graph)
    object_tags = tuple(sorted(labels))
    attribute_tags = tuple(
        sorted((labels[i], attr) for i, node in enumerate(graph.objects) for attr in node.attributes)
    )
    relation_tags = tuple(
        sorted(
            (labels[e.subject_idx], e.predicate, labels[e.object_idx]) for e in graph.relations
        )
    )
    return TagSet(
        object_tags=object_tags,
        attribute_tags=attribute_tags,
        relation_tags=relation_tags,
        n_objects=len(graph.objects),
        n_relations=len(relation_tags),
    )


def canonicalize(tags: TagSet) -> TagSet:
    """Normalize a tag set: suffix repeated labels, dedupe, and sort.

    Repeated object labels denote distinct objects and gain ``#<n>``
    ordinals in first-appearance order; attribute and relation references to
    a repeated label are remapped to its first occurrence. The result is a
    fixed point: canonicalizing twice changes nothing.
    """
    counts: dict[str, int] = {}
    for label in tags.object_tags:
        counts[label] = counts.get(label, 0) + 1
    rename: dict[str, str] = {}
    seen: dict[str, int] = {}
    new_labels = []
    for label in tags.object_tags:
        if counts[label] == 1:
            rename.setdefault(label, label)
            new_labels.append(label)
        else:
            seen[label] = seen.get(label, 0) + 1
            suffixed = f"{label}#{seen[label]}"
            rename.setdefault(label, suffixed)
            new_labels.append(suffixed)

    object_tags = tuple(sorted(set(new_labels)))
    attribute_tags = tuple(sorted({(rename[l], a) for l, a in tags.attribute_tags}))
    relation_tags = tuple(sorted({(rename[s], p, rename[o]) for s, p, o in tags.relation_tags}))
    return TagSet(
        object_tags=object_tags,
        attribute_tags=attribute_tags,
        relation_tags=relation_tags,
        n_objects=len(object_tags),
        n_relations=len(relation_tags),
    )


def serialize_tags(tags: TagSet) -> str:
    """Render a canonical tag set in the tag grammar.

    Objects render as ``label`` or ``label(attr1, attr2)``, relations as
    ``(subject, predicate, object)``, all joined by ``"; "``. The empty tag
    set renders as the empty string.
    """
    attrs_by_label: dict[str, list[str]] = {}
    for label, attr in tags.attribute_tags:
        attrs_by_label.setdefault(label, []).append(attr)
    items = []
    for label in tags.object_tags:
        attrs = attrs_by_label.get(label)
        items.append(f"{label}({', '.join(attrs)})" if attrs else label)
    for s, p, o in tags.relation_tags:
        items.append(f"({s}, {p}, {o})")
    return "; ".join(items)


def deserialize_tags(text: str) -> TagSet:
    """Inverse of :func:`serialize_tags`."""
    if not text:
        return TagSet()
    object_tags: list[str] = []
    attribute_tags: list[tuple[str, str]] = []
    relation_tags: list[tuple[str, str, str]] = []
    for item in text.split("; "):
        if item.startswith("("):
            if not item.endswith(")"):
                raise TagSyntaxError(f"unterminated relation tag {item!r}")
            parts = item[1:-1].split(", ")
            if len(parts) != 3 or not all(parts):
                raise TagSyntaxError(f"relation tag {item!r} is not a (subject, predicate, object) triple")
            relation_tags.append((parts[0], parts[1], parts[2]))
        elif "(" in item:
            if not item.endswith(")"):
                raise TagSyntaxError(f"unterminated attribute list in {item!r}")
            label, _, attr_text = item[:-1].partition("(")
            if not label or not attr_text:
                raise TagSyntaxError(f"malformed object tag {item!r}")
            object_tags.append(label)
            for attr in attr_text.split(", "):
                if not attr:
                    raise TagSyntaxError(f"empty attribute in {item!r}")
                attribute_tags.append((label, attr))
        else:
            if not item:
                raise TagSyntaxError("empty tag item")
            object_tags.append(item)
    return TagSet(
        object_tags=tuple(object_tags),
        attribute_tags=tuple(attribute_tags),
        relation_tags=tuple(relation_tags),
        n_objects=len(object_tags),
        n_relations=len(relation_tags),
    )


def tag_members(tags: TagSet) -> tuple[str, ...]:
    """Every tag as a flat text member: labels, ``label attr``, ``s p o``."""
    members = list(tags.object_tags)
    members.extend(f"{label} {attr}" for label, attr in tags.attribute_tags)
    members.extend(f"{s} {p} {o}" for s, p, o in tags.relation_tags)
    return tuple(members)


def validate_completeness(tags: TagSet, graph: SceneGraph) -> CompletenessReport:
    """Report which of the graph's tags are absent from ``tags``."""
    full = build_tag_set(graph)
    missing_objects = tuple(sorted(set(full.object_tags) - set(tags.object_tags)))
    missing_attributes = tuple(sorted(set(full.attribute_tags) - set(tags.attribute_tags)))
    missing_relations = tuple(sorted(set(full.relation_tags) - set(tags.relation_tags)))
    return CompletenessReport(
        missing_objects=len(missing_objects),
        missing_attributes=len(missing_attributes),
        missing_relations=len(missing_relations),
        missing_object_tags=missing_objects,
        missing_attribute_tags=missing_attributes,
        missing_relation_tags=missing_relations,
    )
