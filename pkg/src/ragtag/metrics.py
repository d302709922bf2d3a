"""Evaluation metrics: exact-match accuracy, BLEU-4, and Recall@K.

All metrics are pure functions over plain data. Token boundaries are
whitespace; answer normalization is lowercase + whitespace collapse +
terminal-punctuation strip, applied identically to predictions and
references.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

_TERMINAL_PUNCTUATION = ".,;:!?"


class MetricsError(ValueError):
    """Base class for metric input errors."""


class EmptyEvalSetError(MetricsError):
    """Raised when asked to score an empty evaluation set."""


class EmptyCandidateError(MetricsError):
    """BLEU candidate is empty."""


class EmptyRelevantSetError(MetricsError):
    """Recall requested against an empty relevant set."""


class EvalFormatError(MetricsError):
    """An evaluation records file is malformed."""


@dataclass(frozen=True)
class EvalRecord:
    """One scored example: a prediction and its acceptable references."""

    query_id: str
    prediction: str
    references: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not self.query_id:
            raise MetricsError("query_id must be non-empty")
        if not self.references:
            raise MetricsError(f"record {self.query_id!r}: references must be non-empty")
        if any(not ref for ref in self.references):
            raise MetricsError(f"record {self.query_id!r}: empty reference string")


def normalize_answer(text: str) -> str:
    """Lowercase, collapse whitespace, and strip terminal punctuation."""
    collapsed = " ".join(text.lower().split())
    return collapsed.rstrip(_TERMINAL_PUNCTUATION).rstrip()


def exact_match_accuracy(records: Sequence[EvalRecord]) -> float:
    """Fraction of records whose normalized prediction equals any reference."""
    if not records:
        raise EmptyEvalSetError("cannot score an empty evaluation set")
    hits = 0
    for record in records:
        prediction = normalize_answer(record.prediction)
        if any(prediction == normalize_answer(ref) for ref in record.references):
            hits += 1
    return hits / len(records)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: str, references: Sequence[str]) -> float:
    """BLEU with 1..4-gram modified precisions and a brevity penalty.

    Candidate n-gram counts are clipped against the per-gram maximum over
    all references. The brevity penalty uses the reference length closest
    to the candidate's (ties resolved toward the shorter reference). A zero
    n-gram precision for n >= 2 is smoothed add-one, (m+1)/(t+1); a zero
    unigram precision is never smoothed and yields 0.
    """
    cand_tokens = candidate.split()
    if not cand_tokens:
        raise EmptyCandidateError("BLEU candidate must be non-empty")
    if not references:
        raise MetricsError("BLEU needs at least one reference")
    ref_token_lists = [ref.split() for ref in references]
    if any(not tokens for tokens in ref_token_lists):
        raise MetricsError("BLEU references must be non-empty")

    c = len(cand_tokens)
    r = min((len(tokens) for tokens in ref_token_lists), key=lambda length: (abs(length - c), length))

    log_precision_sum = 0.0
    for n in range(1, 5):
        cand_counts = _ngram_counts(cand_tokens, n)
        total = max(c - n + 1, 0)
        max_ref_counts: Counter = Counter()
        for tokens in ref_token_lists:
            for gram, count in _ngram_counts(tokens, n).items():
                if count > max_ref_counts[gram]:
                    max_ref_counts[gram] = count
        matched = sum(min(count, max_ref_counts[gram]) for gram, count in cand_counts.items())
        if matched == 0:
            if n == 1:
                return 0.0
            precision = (matched + 1) / (total + 1)
        else:
            precision = matched / total
        log_precision_sum += math.log(precision)

    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_precision_sum / 4.0)


def recall_at_k(ranked: Sequence[str], relevant: Iterable[str], k: int) -> float:
    """|top-k of ranked ∩ relevant| / |relevant|."""
    if k < 1:
        raise MetricsError(f"k must be at least 1, got {k}")
    relevant_set = set(relevant)
    if not relevant_set:
        raise EmptyRelevantSetError("relevant set must be non-empty")
    top = set(ranked[:k])
    return len(top & relevant_set) / len(relevant_set)


def parse_eval_records(text: str) -> tuple[EvalRecord, ...]:
    """Parse JSON-lines evaluation records (query_id, prediction, references)."""
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            record = EvalRecord(
                query_id=str(raw["query_id"]),
                prediction=str(raw["prediction"]),
                references=tuple(str(ref) for ref in raw["references"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, MetricsError) as exc:
            raise EvalFormatError(f"line {line_no}: bad eval record ({exc})") from exc
        records.append(record)
    return tuple(records)


def eval_records_to_jsonl(records: Iterable[EvalRecord]) -> str:
    lines = []
    for record in records:
        lines.append(
            json.dumps(
                {
                    "query_id": record.query_id,
                    "prediction": record.prediction,
                    "references": list(record.references),
                },
                sort_keys=True,
                separators=(",", ":"),
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + "\n" if lines else ""


def load_eval_records(path: str | Path) -> tuple[EvalRecord, ...]:
    return parse_eval_records(Path(path).read_text(encoding="utf-8"))
