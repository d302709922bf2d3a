"""Command-line entry point wiring the whole pipeline.

One binary with subcommands for each stage: parse → enrich → prompt →
cache → infer, plus training utilities (train-toy, gradcheck) and the
evaluation/benchmark harnesses. Data goes to standard output or
``--output``; diagnostics go to standard error. Exit codes: 0 success,
1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from .bench import (
    BenchError,
    format_report,
    report_to_json,
    run_latency_bench,
    samples_to_csv,
    synthetic_workload,
)
from .config import DEFAULT_CONFIG, ConfigInvalidError, PipelineConfig, load_config
from .inference import (
    InferenceError,
    RemoteClient,
    StubClient,
    build_cache,
    cache_record,
    cache_to_bytes,
    infer,
    load_cache,
)
from .losses import (
    LossError,
    LossWeights,
    ToyModel,
    grad_check,
    load_training_corpus,
    loss_term_function,
    synthetic_training_examples,
    train_toy,
    trajectory_to_csv,
)
from .metrics import (
    MetricsError,
    bleu4,
    exact_match_accuracy,
    load_eval_records,
)
from .prompting import PromptError, Query, build_prompt, without_enrichments
from .retrieval import (
    HashEmbedder,
    RetrievalError,
    build_store,
    enrich,
    parse_corpus_lines,
    store_fingerprint,
    store_from_bytes,
)
from .scene import SceneError, build_tag_set, canonicalize, parse_corpus, serialize_tags


class CliError(ValueError):
    """A usage problem detected by the CLI itself (missing input, etc.)."""


_INPUT_ERRORS = (
    CliError,
    ConfigInvalidError,
    SceneError,
    RetrievalError,
    PromptError,
    LossError,
    InferenceError,
    MetricsError,
    BenchError,
    OSError,
)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _effective_config(args) -> PipelineConfig:
    return load_config(args.config) if args.config else DEFAULT_CONFIG


def _effective_seed(cfg: PipelineConfig, args) -> int:
    return args.seed if args.seed is not None else cfg.embedder.seed


def _embedder(cfg: PipelineConfig, args) -> HashEmbedder:
    return HashEmbedder(
        dimension=cfg.embedder.dimension, seed=_effective_seed(cfg, args)
    )


def _emit(text: str, args) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_store_auto(path: str, cfg: PipelineConfig, args):
    """Load a store snapshot, or build one from a key<TAB>snippet corpus."""
    data = Path(path).read_bytes()
    if data.lstrip()[:1] == b"{":
        return store_from_bytes(data)
    pairs = parse_corpus_lines(data.decode("utf-8"))
    return build_store(pairs, _embedder(cfg, args))


def _maybe_store(cfg: PipelineConfig, args):
    path = getattr(args, "store", None) or cfg.paths.store
    return _load_store_auto(path, cfg, args) if path else None


def _require_store(cfg: PipelineConfig, args):
    store = _maybe_store(cfg, args)
    if store is None:
        raise CliError("no knowledge store given (use --store or paths.store in the config)")
    return store


def _client(cfg: PipelineConfig):
    if cfg.client.kind == "remote":
        return RemoteClient(endpoint=cfg.client.endpoint, timeout=cfg.client.timeout)
    return StubClient()


def _pinned_created_at() -> str | None:
    """Honor SOURCE_DATE_EPOCH so cache builds can be byte-reproducible."""
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    if not raw:
        return None
    try:
        epoch = int(raw)
    except ValueError as exc:
        raise CliError(f"SOURCE_DATE_EPOCH must be an integer, got {raw!r}") from exc
    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat(timespec="seconds")


def _json_line_dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _cmd_parse(args) -> int:
    _effective_config(args)
    lines = [
        serialize_tags(canonicalize(build_tag_set(graph)))
        for graph in parse_corpus(_read_text(args.saf_file))
    ]
    _emit("\n".join(lines) + "\n" if lines else "", args)
    return 0


def _cmd_enrich(args) -> int:
    cfg = _effective_config(args)
    store = _require_store(cfg, args)
    lines = []
    for graph in parse_corpus(_read_text(args.saf_file)):
        tags = canonicalize(build_tag_set(graph))
        enriched = enrich(
            tags,
            store,
            cfg.retrieval.k,
            score_floor=cfg.retrieval.score_floor,
            include_relations=args.relations,
        )
        lines.append(_json_line_dump(cache_record(graph.image_id, enriched)))
    _emit("\n".join(lines) + "\n" if lines else "", args)
    return 0


def _cmd_prompt(args) -> int:
    cfg = _effective_config(args)
    graphs = list(parse_corpus(_read_text(args.saf_file)))
    if len(graphs) != 1:
        raise CliError(f"prompt expects a single-scene file, found {len(graphs)} scenes")
    tags = canonicalize(build_tag_set(graphs[0]))
    store = _maybe_store(cfg, args)
    if store is None:
        enriched = without_enrichments(tags)
    else:
        enriched = enrich(
            tags,
            store,
            cfg.retrieval.k,
            score_floor=cfg.retrieval.score_floor,
            include_relations=args.relations,
        )
    budget = args.budget if args.budget is not None else cfg.prompt.budget
    prompt = build_prompt(Query(args.query), enriched, budget)
    print(
        f"prompt: {prompt.byte_length}/{budget} bytes,"
        f" {prompt.tag_count_included} tag items, truncated={prompt.truncated}",
        file=sys.stderr,
    )
    _emit(prompt.text + "\n", args)
    return 0


def _cmd_cache_build(args) -> int:
    cfg = _effective_config(args)
    store = _require_store(cfg, args)
    corpus_path = args.corpus_file or cfg.paths.corpus
    if not corpus_path:
        raise CliError("no corpus given (pass a file or set paths.corpus in the config)")
    cache = build_cache(
        _read_text(corpus_path),
        store,
        cfg.retrieval.k,
        score_floor=cfg.retrieval.score_floor,
        include_relations=args.relations,
        created_at=_pinned_created_at(),
    )
    data = cache_to_bytes(cache).decode("utf-8")
    destination = args.output or cfg.paths.cache
    if destination:
        Path(destination).write_text(data, encoding="utf-8")
    else:
        sys.stdout.write(data)
    print(
        f"cache: {len(cache)} images, store fingerprint {cache.store_fingerprint[:12]}",
        file=sys.stderr,
    )
    return 0


def _cmd_cache_inspect(args) -> int:
    cfg = _effective_config(args)
    cache_path = args.cache_file or cfg.paths.cache
    if not cache_path:
        raise CliError("no cache given (pass a file or set paths.cache in the config)")
    cache = load_cache(cache_path)
    store = _maybe_store(cfg, args)
    stale = None
    if store is not None:
        stale = store_fingerprint(store) != cache.store_fingerprint
    summary = {
        "entries": len(cache),
        "created_at": cache.created_at,
        "store_fingerprint": cache.store_fingerprint,
        "stale": stale,
        "images": [
            {
                "image_id": image_id,
                "n_tags": len(enriched.base.object_tags)
                + len(enriched.base.attribute_tags)
                + len(enriched.base.relation_tags),
                "n_enriched": sum(
                    1 for items in enriched.enrichments.values() if items
                ),
            }
            for image_id, enriched in cache.entries.items()
        ],
    }
    _emit(json.dumps(summary, sort_keys=True, indent=2) + "\n", args)
    return 0


def _cmd_infer(args) -> int:
    cfg = _effective_config(args)
    cache_path = args.cache or cfg.paths.cache
    if not cache_path:
        raise CliError("no cache given (use --cache or paths.cache in the config)")
    store = _maybe_store(cfg, args)
    cache = load_cache(cache_path, store=store, force=args.force)
    client = _client(cfg)
    budget = args.budget if args.budget is not None else cfg.prompt.budget
    response = infer(Query(args.query), args.image_id, cache, client, budget)
    print(
        f"client {response.client_id}: {response.latency * 1e3:.2f} ms,"
        f" prompt {response.prompt_bytes} bytes",
        file=sys.stderr,
    )
    _emit(response.text + "\n", args)
    return 0


def _weights(cfg: PipelineConfig) -> LossWeights:
    return LossWeights(cfg.loss_weights.gen, cfg.loss_weights.contrast, cfg.loss_weights.tag)


def _cmd_train_toy(args) -> int:
    cfg = _effective_config(args)
    examples = load_training_corpus(args.records_file)
    if not examples:
        raise CliError(f"{args.records_file}: no training records")
    vocab_size = max(16, max(ex.max_token_id() for ex in examples) + 1)
    model, trajectory = train_toy(
        examples,
        _weights(cfg),
        steps=args.steps,
        lr=args.lr,
        seed=_effective_seed(cfg, args),
        vocab_size=vocab_size,
    )
    initial, final = trajectory[0].total, trajectory[-1].total
    ratio = final / initial if initial != 0 else float("nan")
    print(
        f"train-toy: {len(examples)} examples, {args.steps} steps,"
        f" total {initial:.6f} -> {final:.6f} (ratio {ratio:.4f})",
        file=sys.stderr,
    )
    _emit(trajectory_to_csv(trajectory), args)
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = _effective_config(args)
    seed = _effective_seed(cfg, args)
    if args.records_file:
        examples = load_training_corpus(args.records_file)
        if not examples:
            raise CliError(f"{args.records_file}: no training records")
    else:
        examples = synthetic_training_examples(4, seed=seed)
    vocab_size = max(16, max(ex.max_token_id() for ex in examples) + 1)
    template = ToyModel.initialize(vocab_size, embed_dim=6, seed=seed)
    f = loss_term_function(template, examples, _weights(cfg), term=args.term)
    report = grad_check(f, template.params_vector(), eps=args.eps, tol=args.tol)
    payload = dict(asdict(report), passed=report.passed)
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args)
    print(
        f"gradcheck[{args.term}]: max relative error {report.max_rel_err:.3e}"
        f" over {report.n_params} parameters -> {'PASS' if report.passed else 'FAIL'}"
        f" (tol {report.tol:g})",
        file=sys.stderr,
    )
    return 0 if report.passed else 1


def _cmd_eval(args) -> int:
    _effective_config(args)
    records = load_eval_records(args.records_file)
    if not records:
        raise CliError(f"{args.records_file}: no evaluation records")
    # Empty predictions cannot form n-grams; they score zero by convention.
    bleu_scores = [
        bleu4(record.prediction, record.references) if record.prediction.split() else 0.0
        for record in records
    ]
    payload = {
        "n_records": len(records),
        "exact_match_accuracy": exact_match_accuracy(records),
        "mean_bleu4": statistics.fmean(bleu_scores),
    }
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args)
    return 0


def _cmd_bench(args) -> int:
    cfg = _effective_config(args)
    seed = _effective_seed(cfg, args)
    corpus_text, store = synthetic_workload(args.images, args.store_size, seed)
    report, samples = run_latency_bench(
        corpus_text,
        store,
        StubClient(),
        args.queries,
        seed,
        k=cfg.retrieval.k,
        score_floor=cfg.retrieval.score_floor,
    )
    print(format_report(report), file=sys.stderr)
    if args.latencies:
        Path(args.latencies).write_text(samples_to_csv(samples), encoding="utf-8")
    _emit(report_to_json(report), args)
    return 0


def build_parser() -> _ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="pipeline configuration file")
    common.add_argument(
        "--seed", type=int, metavar="N", help="override the configured seed"
    )
    common.add_argument(
        "--output", metavar="FILE", help="write data here instead of standard output"
    )

    parser = _ArgumentParser(
        prog="ragtag",
        description="Scene-tag prompting pipeline: parse, enrich, prompt, cache, infer.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("parse", parents=[common], help="SAF file to canonical tag lines")
    p.add_argument("saf_file", help="scene annotation file (may hold several scenes)")
    p.set_defaults(handler=_cmd_parse)

    p = sub.add_parser(
        "enrich", parents=[common], help="attach retrieved snippets to scene tags"
    )
    p.add_argument("saf_file", help="scene annotation file")
    p.add_argument("--store", metavar="FILE", help="knowledge store snapshot or TSV corpus")
    p.add_argument(
        "--relations", action="store_true", help="also enrich relation tags"
    )
    p.set_defaults(handler=_cmd_enrich)

    p = sub.add_parser("prompt", parents=[common], help="build the augmented prompt")
    p.add_argument("saf_file", help="single-scene annotation file")
    p.add_argument("--query", required=True, help="the question to augment")
    p.add_argument("--store", metavar="FILE", help="knowledge store snapshot or TSV corpus")
    p.add_argument("--budget", type=int, metavar="BYTES", help="prompt byte budget")
    p.add_argument(
        "--relations", action="store_true", help="also enrich relation tags"
    )
    p.set_defaults(handler=_cmd_prompt)

    cache = sub.add_parser("cache", help="build or inspect tag caches")
    cache_sub = cache.add_subparsers(dest="cache_command", required=True, metavar="ACTION")

    p = cache_sub.add_parser("build", parents=[common], help="enrich a whole corpus")
    p.add_argument(
        "corpus_file", nargs="?", help="scene corpus (defaults to paths.corpus)"
    )
    p.add_argument("--store", metavar="FILE", help="knowledge store snapshot or TSV corpus")
    p.add_argument(
        "--relations", action="store_true", help="also enrich relation tags"
    )
    p.set_defaults(handler=_cmd_cache_build)

    p = cache_sub.add_parser("inspect", parents=[common], help="summarize a cache file")
    p.add_argument("cache_file", nargs="?", help="cache snapshot (defaults to paths.cache)")
    p.add_argument(
        "--store", metavar="FILE", help="store to check the cache fingerprint against"
    )
    p.set_defaults(handler=_cmd_cache_inspect)

    p = sub.add_parser("infer", parents=[common], help="answer a query from cached tags")
    p.add_argument("--image-id", required=True, help="which cached image to ask about")
    p.add_argument("--query", required=True, help="the question to answer")
    p.add_argument("--cache", metavar="FILE", help="cache snapshot (defaults to paths.cache)")
    p.add_argument("--store", metavar="FILE", help="store to check the cache fingerprint against")
    p.add_argument("--budget", type=int, metavar="BYTES", help="prompt byte budget")
    p.add_argument(
        "--force", action="store_true", help="use the cache even if its store is stale"
    )
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser(
        "train-toy", parents=[common], help="gradient-descend the toy objective"
    )
    p.add_argument("records_file", help="JSON-lines training records")
    p.add_argument("--steps", type=int, default=200, help="gradient steps (default 200)")
    p.add_argument("--lr", type=float, default=0.1, help="learning rate (default 0.1)")
    p.set_defaults(handler=_cmd_train_toy)

    p = sub.add_parser(
        "gradcheck", parents=[common], help="verify analytic gradients numerically"
    )
    p.add_argument(
        "records_file",
        nargs="?",
        help="JSON-lines training records (default: built-in demo batch)",
    )
    p.add_argument(
        "--term",
        choices=("total", "gen", "contrast", "tag"),
        default="total",
        help="which loss term to check",
    )
    p.add_argument("--eps", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="pass threshold")
    p.set_defaults(handler=_cmd_gradcheck)

    p = sub.add_parser("eval", parents=[common], help="score predictions against references")
    p.add_argument("records_file", help="JSON-lines eval records")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser(
        "bench", parents=[common], help="paired cached-vs-online latency benchmark"
    )
    p.add_argument(
        "--store-size", type=int, default=1000, help="synthetic store entries (default 1000)"
    )
    p.add_argument(
        "--queries", type=int, default=100, help="paired queries to measure (default 100)"
    )
    p.add_argument(
        "--images", type=int, default=50, help="synthetic corpus images (default 50)"
    )
    p.add_argument(
        "--latencies", metavar="FILE", help="also write per-query latencies as CSV"
    )
    p.set_defaults(handler=_cmd_bench)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.handler(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # final guard: anything else is an internal fault
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
