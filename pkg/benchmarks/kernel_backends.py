#!/usr/bin/env python3
"""Compare the compiled kernel backend against the pure-Python fallback.

Times the two hot primitives — trigram hash embedding and exhaustive top-k
cosine scan — on identical inputs, verifies the outputs agree bitwise, and
prints per-backend throughput with the native-over-python speedup.

Usage:
    python benchmarks/kernel_backends.py [--entries N] [--dim D] [--queries Q]
"""

from __future__ import annotations

import argparse
import random
import time

from ragtag._kernels import backend_modules


def _words(rng: random.Random, count: int) -> list[str]:
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    return [
        "".join(rng.choice(alphabet) for _ in range(rng.randint(3, 12)))
        for _ in range(count)
    ]


def _time(fn, repeats: int = 5) -> float:
    """Best-of-N wall time in seconds."""
    laps = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        laps.append(time.perf_counter() - start)
    return min(laps)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--entries", type=int, default=5000, help="store rows to index")
    parser.add_argument("--dim", type=int, default=64, help="embedding dimension")
    parser.add_argument("--queries", type=int, default=200, help="top-k queries to run")
    parser.add_argument("--k", type=int, default=8, help="results per query")
    parser.add_argument("--seed", type=int, default=0, help="workload seed")
    args = parser.parse_args()

    backends = backend_modules()
    if "native" not in backends:
        print("note: compiled backend not importable; timing python only")

    rng = random.Random(args.seed)
    texts = _words(rng, args.entries)
    queries = _words(rng, args.queries)

    results: dict[str, dict[str, float]] = {}
    reference: dict[str, object] = {}
    for name, module in backends.items():
        embed_time = _time(
            lambda m=module: [m.hash_embed(t, args.dim, args.seed) for t in texts]
        )
        vectors = [module.hash_embed(t, args.dim, args.seed) for t in texts]
        index = module.Index(vectors)
        query_vectors = [module.hash_embed(q, args.dim, args.seed) for q in queries]
        scan_time = _time(
            lambda ix=index, qs=query_vectors: [ix.top_k(q, args.k) for q in qs]
        )
        results[name] = {"embed": embed_time, "scan": scan_time}
        outputs = (vectors, [index.top_k(q, args.k) for q in query_vectors])
        if reference:
            assert outputs == reference["outputs"], "backends disagree bitwise"
        reference["outputs"] = outputs

    print(
        f"workload: {args.entries} rows x d={args.dim}, "
        f"{args.queries} queries, k={args.k}, seed={args.seed}"
    )
    header = f"{'backend':<8} {'embed (ms)':>12} {'scan (ms)':>12}"
    print(header)
    print("-" * len(header))
    for name, timings in results.items():
        print(
            f"{name:<8} {timings['embed'] * 1e3:>12.2f} {timings['scan'] * 1e3:>12.2f}"
        )
    if len(results) == 2:
        embed_speedup = results["python"]["embed"] / results["native"]["embed"]
        scan_speedup = results["python"]["scan"] / results["native"]["scan"]
        print(
            f"native speedup: {embed_speedup:.1f}x embedding, {scan_speedup:.1f}x scan"
        )
        print("outputs agree bitwise across backends")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
