"""Prompt construction tests: golden bytes, packing, and budget properties."""

from __future__ import annotations

import json
import random
import string
from pathlib import Path

import pytest

from ragtag.prompting import (
    ITEM_SEPARATOR,
    TAG_SEPARATOR,
    BudgetTooSmallError,
    Prompt,
    PromptError,
    Query,
    build_prompt,
    prompt_items,
    without_enrichments,
)
from ragtag.retrieval import EnrichedTagSet, build_store, enrich, parse_corpus_lines
from ragtag.scene import TagSet, build_tag_set, parse_scene_graph

DATA_DIR = Path(__file__).parent / "data"


def load_golden_cases():
    return json.loads((DATA_DIR / "prompt_golden.json").read_text(encoding="utf-8"))


def replay_case(case: dict) -> Prompt:
    """Run one golden case through the full parse → enrich → build pipeline."""
    tags = build_tag_set(parse_scene_graph(case["saf"]))
    if case["corpus"]:
        store = build_store(parse_corpus_lines(case["corpus"]))
        enriched = enrich(
            tags,
            store,
            k=case["k"],
            score_floor=case["score_floor"],
            include_relations=case["include_relations"],
        )
    else:
        enriched = without_enrichments(tags)
    return build_prompt(Query(case["query"]), enriched, case["budget"])


class TestGoldenPrompts:
    @pytest.mark.parametrize("case", load_golden_cases(), ids=lambda c: c["name"])
    def test_reproduces_stored_bytes(self, case):
        prompt = replay_case(case)
        assert prompt.text.encode("utf-8") == case["expected"]["text"].encode("utf-8")
        assert prompt.tag_count_included == case["expected"]["tag_count_included"]
        assert prompt.truncated == case["expected"]["truncated"]

    def test_fixture_coverage(self):
        cases = load_golden_cases()
        assert len(cases) >= 10
        assert any(c["expected"]["text"] == c["query"] for c in cases)  # empty-tag case
        assert any(c["expected"]["truncated"] for c in cases)  # truncation case
        assert any(TAG_SEPARATOR in c["expected"]["text"] for c in cases)

    def test_separator_literal_is_fixed(self):
        assert TAG_SEPARATOR == " Tags: "


def _tags_for(saf: str) -> EnrichedTagSet:
    return without_enrichments(build_tag_set(parse_scene_graph(saf)))


SCENE = (
    "SAF 1\nimage s\nobject dog attr brown\nobject ball\nobject tree attr tall\n"
    "relation 0 chases 1\nrelation 1 near 2\n"
)


class TestQueryValidation:
    def test_plain_text_accepted(self):
        q = Query("What is the person holding?", query_id="q1")
        assert q.query_id == "q1"

    def test_empty_rejected(self):
        with pytest.raises(PromptError):
            Query("")

    @pytest.mark.parametrize("bad", ["line\nbreak", "tab\there", "bell\x07", "del\x7f"])
    def test_control_characters_rejected(self, bad):
        with pytest.raises(PromptError):
            Query(bad)


class TestBudget:
    def test_minimum_budget_is_query_plus_separator(self):
        q = Query("abc")
        tags = _tags_for("SAF 1\nimage x\nobject dog\n")
        floor = len("abc") + len(TAG_SEPARATOR)
        with pytest.raises(BudgetTooSmallError):
            build_prompt(q, tags, floor - 1)
        prompt = build_prompt(q, tags, floor)
        assert prompt.text == "abc"  # separator fits but no item does
        assert prompt.truncated

    def test_budget_counts_bytes_not_characters(self):
        q = Query("é" * 4)  # 8 bytes
        tags = _tags_for("SAF 1\nimage x\nobject dog\n")
        with pytest.raises(BudgetTooSmallError):
            build_prompt(q, tags, 4 + len(TAG_SEPARATOR))
        assert build_prompt(q, tags, 8 + len(TAG_SEPARATOR)).text == q.text

    def test_byte_length_never_exceeds_budget(self):
        rng = random.Random(0)
        q = Query("What is in the scene?")
        tags = _tags_for(SCENE)
        lo = len(q.text) + len(TAG_SEPARATOR)
        for _ in range(200):
            budget = rng.randint(lo, lo + 120)
            assert build_prompt(q, tags, budget).byte_length <= budget

    def test_exact_refit_reproduces_bytes(self):
        rng = random.Random(1)
        q = Query("What is in the scene?")
        tags = _tags_for(SCENE)
        lo = len(q.text) + len(TAG_SEPARATOR)
        for _ in range(100):
            first = build_prompt(q, tags, rng.randint(lo, lo + 120))
            if first.tag_count_included == 0:
                continue  # refit budget would fall below the query+separator floor
            again = build_prompt(q, tags, first.byte_length)
            assert again == first


class TestPacking:
    def test_prefix_stability_across_budgets(self):
        q = Query("What is in the scene?")
        tags = _tags_for(SCENE)
        lo = len(q.text) + len(TAG_SEPARATOR)
        prompts = [build_prompt(q, tags, b) for b in range(lo, lo + 140)]
        for small, large in zip(prompts, prompts[1:]):
            assert large.text.startswith(small.text)
            assert large.tag_count_included >= small.tag_count_included

    def test_truncated_iff_items_dropped(self):
        q = Query("Q?")
        tags = _tags_for(SCENE)
        total = len(prompt_items(tags))
        lo = len(q.text) + len(TAG_SEPARATOR)
        for budget in range(lo, lo + 140):
            prompt = build_prompt(q, tags, budget)
            assert prompt.truncated == (prompt.tag_count_included < total)

    def test_never_splits_an_item(self):
        q = Query("Q?")
        tags = _tags_for(SCENE)
        items = prompt_items(tags)
        lo = len(q.text) + len(TAG_SEPARATOR)
        for budget in range(lo, lo + 140):
            prompt = build_prompt(q, tags, budget)
            count = prompt.tag_count_included
            if count == 0:
                assert prompt.text == q.text
            else:
                expected = q.text + TAG_SEPARATOR + ITEM_SEPARATOR.join(items[:count])
                assert prompt.text == expected

    def test_separator_emitted_once_iff_items_included(self):
        q = Query("Does the phrase Tags: appear twice?")
        tags = _tags_for(SCENE)
        lo = len(q.text) + len(TAG_SEPARATOR)
        for budget in (lo, lo + 15, 4096):
            prompt = build_prompt(q, tags, budget)
            introduced = prompt.text.count(TAG_SEPARATOR) - q.text.count(TAG_SEPARATOR)
            assert introduced == min(1, prompt.tag_count_included)

    def test_empty_tags_produce_query_verbatim(self):
        q = Query("What is shown?")
        prompt = build_prompt(q, without_enrichments(TagSet()), 4096)
        assert prompt.text == q.text
        assert prompt.tag_count_included == 0
        assert not prompt.truncated

    def test_determinism(self):
        q = Query("What is in the scene?")
        tags = _tags_for(SCENE)
        assert build_prompt(q, tags, 100) == build_prompt(q, tags, 100)


class TestPromptItems:
    def test_objects_precede_relations(self):
        items = prompt_items(_tags_for(SCENE))
        assert items == [
            "ball",
            "dog(brown)",
            "tree(tall)",
            "(ball, near, tree)",
            "(dog, chases, ball)",
        ]

    def test_enrichment_suffix_order(self):
        tags = build_tag_set(
            parse_scene_graph("SAF 1\nimage x\nobject dog attr brown attr small\n")
        )
        enriched = EnrichedTagSet(
            base=tags,
            enrichments={
                "dog": (("canine", 0.9),),
                "dog brown": (("earth tone", 0.8),),
                "dog small": (("compact breed", 0.7),),
            },
        )
        assert prompt_items(enriched) == [
            "dog(brown, small) [dog: canine] [dog brown: earth tone]"
            " [dog small: compact breed]"
        ]

    def test_relation_enrichment_suffix(self):
        tags = build_tag_set(
            parse_scene_graph("SAF 1\nimage x\nobject dog\nobject ball\nrelation 0 chases 1\n")
        )
        enriched = EnrichedTagSet(
            base=tags, enrichments={"dog chases ball": (("play behavior", 0.5),)}
        )
        assert prompt_items(enriched)[-1] == "(dog, chases, ball) [dog chases ball: play behavior]"

    def test_without_enrichments_has_no_suffixes(self):
        items = prompt_items(_tags_for(SCENE))
        assert not any("[" in item for item in items)


class TestRandomizedPacking:
    def test_greedy_prefix_sum_oracle(self):
        # Independent check: the included count equals the largest c whose
        # cumulative byte cost fits the budget.
        rng = random.Random(2)
        for _ in range(100):
            n_obj = rng.randint(0, 6)
            labels = sorted(
                {"".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 10)))
                 for _ in range(n_obj)}
            )
            tags = TagSet(object_tags=tuple(labels), n_objects=len(labels))
            enriched = without_enrichments(tags)
            q = Query("Q" * rng.randint(1, 30))
            items = prompt_items(enriched)
            costs = []
            for i, item in enumerate(items):
                lead = TAG_SEPARATOR if i == 0 else ITEM_SEPARATOR
                costs.append(len((lead + item).encode("utf-8")))
            lo = len(q.text) + len(TAG_SEPARATOR)
            budget = rng.randint(lo, lo + 80)
            remaining = budget - len(q.text.encode("utf-8"))
            expected_count = 0
            for cost in costs:
                if cost > remaining:
                    break
                remaining -= cost
                expected_count += 1
            prompt = build_prompt(q, enriched, budget)
            assert prompt.tag_count_included == expected_count
