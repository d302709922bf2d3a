"""Tests for the paired cached-vs-online latency benchmark."""

from __future__ import annotations

import statistics

import pytest

from ragtag.bench import (
    REFERENCE_SPEEDUP_RATIO,
    BenchError,
    BenchReport,
    LatencySample,
    format_report,
    report_to_json,
    run_latency_bench,
    samples_to_csv,
    synthetic_workload,
)
from ragtag.inference import StubClient
from ragtag.retrieval import store_fingerprint
from ragtag.scene import parse_corpus


class RecordingClient:
    """Stub-backed client that logs every prompt it answers."""

    client_id = "stub"

    def __init__(self):
        self.inner = StubClient()
        self.prompts = []

    def complete(self, prompt, params):
        self.prompts.append(prompt)
        return self.inner.complete(prompt, params)


@pytest.fixture(scope="module")
def workload():
    return synthetic_workload(n_images=8, store_size=120, seed=7)


class TestPairedMeasurement:
    def test_both_arms_see_the_identical_query_sequence(self, workload):
        corpus, store = workload
        client = RecordingClient()
        run_latency_bench(corpus, store, client, n_queries=12, seed=3, warmup=2)
        # Arms alternate within each pair, so the prompt log interleaves
        # online and cached calls over the same prompt text.
        assert len(client.prompts) == 2 * (12 + 2)
        assert client.prompts[0::2] == client.prompts[1::2]

    def test_report_statistics_match_samples(self, workload):
        corpus, store = workload
        report, samples = run_latency_bench(
            corpus, store, StubClient(), n_queries=15, seed=9, warmup=2
        )
        online = [s.online_seconds for s in samples]
        cached = [s.cached_seconds for s in samples]
        assert len(samples) == 15
        assert report.n_queries == 15
        assert report.store_size == 120
        assert report.seed == 9
        assert report.mean_online == statistics.fmean(online)
        assert report.mean_cached == statistics.fmean(cached)
        assert report.median_online == statistics.median(online)
        assert report.median_cached == statistics.median(cached)
        # Nearest-rank p95: ceil(0.95 * 15) = 15 -> the maximum.
        assert report.p95_online == max(online)
        assert report.p95_cached == max(cached)
        assert report.speedup_ratio == report.mean_online / report.mean_cached
        assert all(value >= 0 for value in online + cached)

    def test_sample_indices_are_contiguous_after_warmup(self, workload):
        corpus, store = workload
        _, samples = run_latency_bench(
            corpus, store, StubClient(), n_queries=5, seed=1, warmup=3
        )
        assert [s.index for s in samples] == [0, 1, 2, 3, 4]

    def test_warmup_pairs_are_executed_but_discarded(self, workload):
        corpus, store = workload
        client = RecordingClient()
        _, samples = run_latency_bench(
            corpus, store, client, n_queries=4, seed=2, warmup=3
        )
        assert len(samples) == 4
        assert len(client.prompts) == 2 * (4 + 3)


class TestDeterminism:
    def test_same_seed_replays_the_same_queries(self, workload):
        corpus, store = workload
        first = RecordingClient()
        second = RecordingClient()
        _, samples_a = run_latency_bench(corpus, store, first, n_queries=10, seed=5, warmup=1)
        _, samples_b = run_latency_bench(corpus, store, second, n_queries=10, seed=5, warmup=1)
        assert [s.image_id for s in samples_a] == [s.image_id for s in samples_b]
        assert first.prompts == second.prompts

    def test_different_seeds_sample_differently(self, workload):
        corpus, store = workload
        _, samples_a = run_latency_bench(
            corpus, store, StubClient(), n_queries=20, seed=0, warmup=0
        )
        _, samples_b = run_latency_bench(
            corpus, store, StubClient(), n_queries=20, seed=1, warmup=0
        )
        assert [s.image_id for s in samples_a] != [s.image_id for s in samples_b]


class TestSmallStore:
    def test_single_entry_store_reports_without_assertion(self):
        corpus, store = synthetic_workload(n_images=2, store_size=1, seed=0)
        report, samples = run_latency_bench(
            corpus, store, StubClient(), n_queries=5, seed=0, warmup=1
        )
        assert report.store_size == 1
        assert report.speedup_ratio > 0
        assert len(samples) == 5


class TestSyntheticWorkload:
    def test_deterministic_given_seed(self):
        corpus_a, store_a = synthetic_workload(n_images=6, store_size=50, seed=13)
        corpus_b, store_b = synthetic_workload(n_images=6, store_size=50, seed=13)
        assert corpus_a == corpus_b
        assert store_fingerprint(store_a) == store_fingerprint(store_b)

    def test_sizes_respected(self):
        corpus, store = synthetic_workload(n_images=9, store_size=37, seed=2)
        assert len(store) == 37
        assert len(list(parse_corpus(corpus))) == 9

    def test_corpus_labels_hit_the_store(self):
        # At least some enrichment lookups must land, or the benchmark's
        # online arm would not exercise snippet attachment.
        corpus, store = synthetic_workload(n_images=6, store_size=60, seed=4)
        store_keys = {entry.key for entry in store.entries}
        labels = {
            node.label for graph in parse_corpus(corpus) for node in graph.objects
        }
        assert labels & store_keys

    def test_invalid_sizes_rejected(self):
        with pytest.raises(BenchError):
            synthetic_workload(n_images=0, store_size=5, seed=0)
        with pytest.raises(BenchError):
            synthetic_workload(n_images=5, store_size=0, seed=0)


class TestValidation:
    def test_nonpositive_query_count_rejected(self, workload):
        corpus, store = workload
        with pytest.raises(BenchError):
            run_latency_bench(corpus, store, StubClient(), n_queries=0, seed=0)

    def test_negative_warmup_rejected(self, workload):
        corpus, store = workload
        with pytest.raises(BenchError):
            run_latency_bench(corpus, store, StubClient(), n_queries=1, seed=0, warmup=-1)

    def test_empty_corpus_rejected(self, workload):
        _, store = workload
        with pytest.raises(BenchError, match="empty"):
            run_latency_bench("", store, StubClient(), n_queries=1, seed=0)

    def test_report_invariants_enforced(self):
        good = dict(
            n_queries=1,
            store_size=1,
            seed=0,
            mean_cached=1.0,
            median_cached=1.0,
            p95_cached=1.0,
            mean_online=2.0,
            median_online=2.0,
            p95_online=2.0,
            speedup_ratio=2.0,
        )
        BenchReport(**good)
        with pytest.raises(BenchError):
            BenchReport(**dict(good, mean_cached=-1.0))
        with pytest.raises(BenchError):
            BenchReport(**dict(good, speedup_ratio=0.0))
        with pytest.raises(BenchError):
            BenchReport(**dict(good, n_queries=0))

    def test_negative_sample_latency_rejected(self):
        with pytest.raises(BenchError):
            LatencySample(index=0, image_id="a", online_seconds=-0.1, cached_seconds=0.1)


class TestSerialization:
    def test_json_report_carries_reference_ratio(self, workload):
        corpus, store = workload
        report, _ = run_latency_bench(corpus, store, StubClient(), n_queries=3, seed=0, warmup=0)
        payload = report_to_json(report)
        assert '"speedup_ratio"' in payload
        assert '"reference_speedup_ratio"' in payload
        assert str(report.store_size) in payload

    def test_csv_layout(self, workload):
        corpus, store = workload
        _, samples = run_latency_bench(corpus, store, StubClient(), n_queries=4, seed=0, warmup=0)
        lines = samples_to_csv(samples).splitlines()
        assert lines[0] == "index,image_id,online_seconds,cached_seconds"
        assert len(lines) == 5

    def test_human_summary_mentions_reference_point(self, workload):
        corpus, store = workload
        report, _ = run_latency_bench(corpus, store, StubClient(), n_queries=3, seed=0, warmup=0)
        text = format_report(report)
        assert "speedup ratio" in text
        assert f"{REFERENCE_SPEEDUP_RATIO:.3f}" in text
