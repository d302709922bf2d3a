"""Multitask training objective on a toy autoregressive model.

Three terms: a generative next-token loss over answer tokens, a contrastive
term separating positive from negative tag sets, and a tag-generation loss
over tag tokens — combined as a weighted sum. The model is a single-layer
scorer (next-token logits = mean of prefix embeddings times an output
matrix), small enough that every analytic gradient is checked against
central finite differences.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .retrieval import Embedder, cosine_sim, default_embedder, EmbeddingVector
from .scene import TagSet, deserialize_tags, serialize_tags, tag_members

DEFAULT_LAMBDA_GEN = 1.0
DEFAULT_LAMBDA_CONTRAST = 0.1
DEFAULT_LAMBDA_TAG = 0.5

_DIVERGENCE_CEILING = 1e6

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class LossError(ValueError):
    """Base class for loss and training errors."""


class EmptyTargetError(LossError):
    """A target token sequence is empty."""


class EmptyTagSetError(LossError):
    """Tag-set similarity needs at least one member on each side."""


class NonFiniteLossError(LossError):
    """A loss evaluation produced NaN or infinity."""


class DivergenceDetectedError(LossError):
    """Training loss exceeded the divergence ceiling or went non-finite."""


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable log of the softmax of ``logits``."""
    x = np.asarray(logits, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise LossError("logits must be a non-empty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise LossError("logits must be finite")
    shifted = x - np.max(x)
    return shifted - math.log(np.sum(np.exp(shifted)))


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow on either tail.
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def contrastive_loss(sim_pos: float, sim_neg: float) -> float:
    """Two-way softmax loss pushing ``sim_pos`` above ``sim_neg``.

    Equals softplus(sim_neg − sim_pos): ln 2 at equality, near zero when the
    positive similarity dominates, and always non-negative and finite.
    """
    sim_pos = float(sim_pos)
    sim_neg = float(sim_neg)
    if not (math.isfinite(sim_pos) and math.isfinite(sim_neg)):
        raise LossError("similarities must be finite")
    return _softplus(sim_neg - sim_pos)


def tag_token_id(text: str, vocab_size: int) -> int:
    """Deterministic token id for a tag member, by 64-bit FNV-1a mod V."""
    if vocab_size <= 0:
        raise LossError("vocab_size must be positive")
    h = _FNV_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h % vocab_size


def tag_set_similarity(a: TagSet, b: TagSet, embedder: Embedder | None = None) -> float:
    """Cosine between the mean member embeddings of two tag sets."""
    members_a = tag_members(a)
    members_b = tag_members(b)
    if not members_a or not members_b:
        raise EmptyTagSetError("tag-set similarity requires non-empty tag sets")
    emb = embedder or default_embedder()
    mean_a = np.mean([emb.embed(m).values for m in members_a], axis=0)
    mean_b = np.mean([emb.embed(m).values for m in members_b], axis=0)
    return cosine_sim(
        EmbeddingVector(tuple(mean_a)), EmbeddingVector(tuple(mean_b))
    )


def _check_tokens(tokens: Sequence[int], what: str) -> tuple[int, ...]:
    out = []
    for tok in tokens:
        if not isinstance(tok, (int, np.integer)) or isinstance(tok, bool):
            raise LossError(f"{what} must contain integers, got {tok!r}")
        if tok < 0:
            raise LossError(f"{what} must contain non-negative ids, got {tok}")
        out.append(int(tok))
    return tuple(out)


@dataclass(eq=False)
class ToyModel:
    """Single-layer autoregressive scorer over a V-token vocabulary.

    ``token_embeddings`` is V×d, ``output_weights`` is d×V; the next-token
    logits for a prefix are the mean of the prefix's embeddings multiplied
    by ``output_weights`` (an empty prefix scores as the zero vector, i.e. a
    uniform distribution).
    """

    vocab_size: int
    embed_dim: int
    token_embeddings: np.ndarray
    output_weights: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size <= 0 or self.embed_dim <= 0:
            raise LossError("vocab_size and embed_dim must be positive")
        self.token_embeddings = np.asarray(self.token_embeddings, dtype=float)
        self.output_weights = np.asarray(self.output_weights, dtype=float)
        if self.token_embeddings.shape != (self.vocab_size, self.embed_dim):
            raise LossError(
                f"token_embeddings shape {self.token_embeddings.shape} != "
                f"({self.vocab_size}, {self.embed_dim})"
            )
        if self.output_weights.shape != (self.embed_dim, self.vocab_size):
            raise LossError(
                f"output_weights shape {self.output_weights.shape} != "
                f"({self.embed_dim}, {self.vocab_size})"
            )
        if not (
            np.all(np.isfinite(self.token_embeddings))
            and np.all(np.isfinite(self.output_weights))
        ):
            raise LossError("model parameters must be finite")

    @classmethod
    def initialize(
        cls, vocab_size: int, embed_dim: int, seed: int = 0, scale: float = 0.1
    ) -> "ToyModel":
        rng = np.random.default_rng(seed)
        return cls(
            vocab_size=vocab_size,
            embed_dim=embed_dim,
            token_embeddings=rng.normal(0.0, scale, (vocab_size, embed_dim)),
            output_weights=rng.normal(0.0, scale, (embed_dim, vocab_size)),
            seed=seed,
        )

    @classmethod
    def zeros(cls, vocab_size: int, embed_dim: int) -> "ToyModel":
        return cls(
            vocab_size=vocab_size,
            embed_dim=embed_dim,
            token_embeddings=np.zeros((vocab_size, embed_dim)),
            output_weights=np.zeros((embed_dim, vocab_size)),
        )

    @property
    def n_params(self) -> int:
        return self.token_embeddings.size + self.output_weights.size

    def params_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.token_embeddings.ravel(), self.output_weights.ravel()]
        )

    def set_params_vector(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise LossError(f"expected {self.n_params} parameters, got {theta.shape}")
        split = self.token_embeddings.size
        self.token_embeddings = theta[:split].reshape(self.vocab_size, self.embed_dim)
        self.output_weights = theta[split:].reshape(self.embed_dim, self.vocab_size)

    def copy(self) -> "ToyModel":
        return ToyModel(
            vocab_size=self.vocab_size,
            embed_dim=self.embed_dim,
            token_embeddings=self.token_embeddings.copy(),
            output_weights=self.output_weights.copy(),
            seed=self.seed,
        )


@dataclass(frozen=True)
class TrainingExample:
    """One supervised example: prompt, answer tokens, tag tokens, tag sets."""

    prompt_tokens: tuple[int, ...]
    target_tokens: tuple[int, ...]
    tag_target: tuple[int, ...]
    positive_tags: TagSet
    negative_tags: TagSet

    def __post_init__(self):
        object.__setattr__(
            self, "prompt_tokens", _check_tokens(self.prompt_tokens, "prompt_tokens")
        )
        object.__setattr__(
            self, "target_tokens", _check_tokens(self.target_tokens, "target_tokens")
        )
        object.__setattr__(self, "tag_target", _check_tokens(self.tag_target, "tag_target"))
        if not self.target_tokens:
            raise EmptyTargetError("target_tokens must be non-empty")
        if not self.tag_target:
            raise EmptyTargetError("tag_target must be non-empty")

    def max_token_id(self) -> int:
        return max(self.prompt_tokens + self.target_tokens + self.tag_target, default=0)


@dataclass(frozen=True)
class LossWeights:
    """Balancing coefficients for the three loss terms."""

    lambda_gen: float = DEFAULT_LAMBDA_GEN
    lambda_contrast: float = DEFAULT_LAMBDA_CONTRAST
    lambda_tag: float = DEFAULT_LAMBDA_TAG

    def __post_init__(self):
        values = (self.lambda_gen, self.lambda_contrast, self.lambda_tag)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise LossError("loss weights must be finite and non-negative")
        if all(v == 0 for v in values):
            raise LossError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossReport:
    """Per-term loss values and their weighted total."""

    gen: float
    contrast: float
    tag: float
    total: float

    def __post_init__(self):
        for name in ("gen", "contrast", "tag"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise NonFiniteLossError(f"{name} loss is not finite: {value}")
            if value < 0:
                raise LossError(f"{name} loss must be non-negative, got {value}")
        if not math.isfinite(self.total):
            raise NonFiniteLossError(f"total loss is not finite: {self.total}")


def _validate_ids(tokens: Sequence[int], vocab_size: int, what: str) -> None:
    for tok in tokens:
        if not 0 <= tok < vocab_size:
            raise LossError(f"{what} id {tok} out of range for vocab size {vocab_size}")


def _sequence_nll(
    model: ToyModel,
    context: Sequence[int],
    target: Sequence[int],
    want_grad: bool,
) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """Teacher-forced summed negative log-likelihood of ``target``.

    At each step the prediction conditions on the running prefix (context
    plus already-revealed target tokens), pooled by mean. Returns the loss
    and, when requested, gradients for the embedding and output matrices.
    """
    context = _check_tokens(context, "context tokens")
    target = _check_tokens(target, "target tokens")
    if not target:
        raise EmptyTargetError("target must be non-empty")
    _validate_ids(context, model.vocab_size, "context token")
    _validate_ids(target, model.vocab_size, "target token")

    E = model.token_embeddings
    W = model.output_weights
    d = model.embed_dim

    prefix: list[int] = list(context)
    s = E[prefix].sum(axis=0) if prefix else np.zeros(d)
    loss = 0.0
    steps = []  # (h, probs, target id, prefix length) per step, for backward
    for y in target:
        count = len(prefix)
        h = s / count if count else np.zeros(d)
        ls = log_softmax(h @ W)
        loss -= ls[y]
        if want_grad:
            steps.append((h, np.exp(ls), y, count))
        prefix.append(y)
        s = s + E[y]

    if not want_grad:
        return float(loss), None, None

    dE = np.zeros_like(E)
    dW = np.zeros_like(W)
    full = list(context) + list(target)
    # pending[i] accumulates d loss / d s for every step whose prefix covers
    # position i; one reverse pass turns it into per-token contributions.
    pending = np.zeros((len(full) + 1, d))
    for t, (h, probs, y, count) in enumerate(steps):
        dlogits = probs.copy()
        dlogits[y] -= 1.0
        dW += np.outer(h, dlogits)
        if count:
            pending[count] += (W @ dlogits) / count
    carry = np.zeros(d)
    for i in range(len(full), 0, -1):
        carry = carry + pending[i]
        dE[full[i - 1]] += carry
    return float(loss), dE, dW


def gen_loss(model: ToyModel, prompt_tokens: Sequence[int], target_tokens: Sequence[int]) -> float:
    """Summed next-token NLL of the answer, conditioned on the prompt."""
    loss, _, _ = _sequence_nll(model, prompt_tokens, target_tokens, want_grad=False)
    return loss


def tag_loss(model: ToyModel, feature_tokens: Sequence[int], tag_target: Sequence[int]) -> float:
    """Summed next-token NLL of the tag sequence, conditioned on features.

    Same autoregressive kernel as :func:`gen_loss`; only the conditioning
    sequence differs.
    """
    loss, _, _ = _sequence_nll(model, feature_tokens, tag_target, want_grad=False)
    return loss


def _tag_set_token_ids(tags: TagSet, vocab_size: int) -> list[int]:
    return [tag_token_id(member, vocab_size) for member in tag_members(tags)]


def _mean_rows(E: np.ndarray, rows: Sequence[int]) -> np.ndarray:
    if not rows:
        return np.zeros(E.shape[1])
    return E[list(rows)].mean(axis=0)


def _cosine_with_grads(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """cos(a, b) and its gradients; zero vectors get sim 0 and zero grads."""
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    sim = float(a @ b) / (na * nb)
    da = b / (na * nb) - sim * a / (na * na)
    db = a / (na * nb) - sim * b / (nb * nb)
    return sim, da, db


def model_tag_similarities(model: ToyModel, example: TrainingExample) -> tuple[float, float]:
    """(sim to positive set, sim to negative set) under the model's embeddings.

    The anchor is the mean embedding of the example's tag tokens; each tag
    set is represented by the mean embedding of its hash-assigned token ids.
    This couples the contrastive term to trainable parameters.
    """
    E = model.token_embeddings
    _validate_ids(example.tag_target, model.vocab_size, "tag token")
    anchor = _mean_rows(E, example.tag_target)
    pos = _mean_rows(E, _tag_set_token_ids(example.positive_tags, model.vocab_size))
    neg = _mean_rows(E, _tag_set_token_ids(example.negative_tags, model.vocab_size))
    sim_pos, _, _ = _cosine_with_grads(anchor, pos)
    sim_neg, _, _ = _cosine_with_grads(anchor, neg)
    return sim_pos, sim_neg


def _contrast_with_grad(
    model: ToyModel, example: TrainingExample
) -> tuple[float, np.ndarray]:
    E = model.token_embeddings
    anchor_rows = list(example.tag_target)
    pos_rows = _tag_set_token_ids(example.positive_tags, model.vocab_size)
    neg_rows = _tag_set_token_ids(example.negative_tags, model.vocab_size)
    anchor = _mean_rows(E, anchor_rows)
    pos = _mean_rows(E, pos_rows)
    neg = _mean_rows(E, neg_rows)

    sim_pos, dpos_da, dpos_db = _cosine_with_grads(anchor, pos)
    sim_neg, dneg_da, dneg_dn = _cosine_with_grads(anchor, neg)
    loss = _softplus(sim_neg - sim_pos)
    g = _sigmoid(sim_neg - sim_pos)  # d loss / d (sim_neg − sim_pos)

    dE = np.zeros_like(E)
    d_anchor = g * (dneg_da - dpos_da)
    if anchor_rows:
        share = d_anchor / len(anchor_rows)
        for row in anchor_rows:
            dE[row] += share
    if pos_rows:
        share = (-g) * dpos_db / len(pos_rows)
        for row in pos_rows:
            dE[row] += share
    if neg_rows:
        share = g * dneg_dn / len(neg_rows)
        for row in neg_rows:
            dE[row] += share
    return loss, dE


def contrast_loss_for_example(model: ToyModel, example: TrainingExample) -> float:
    sim_pos, sim_neg = model_tag_similarities(model, example)
    return contrastive_loss(sim_pos, sim_neg)


def total_loss(gen: float, contrast: float, tag: float, weights: LossWeights) -> LossReport:
    """Combine the three terms into their λ-weighted total."""
    total = (
        weights.lambda_gen * gen
        + weights.lambda_contrast * contrast
        + weights.lambda_tag * tag
    )
    return LossReport(gen=float(gen), contrast=float(contrast), tag=float(tag), total=float(total))


def batch_loss(
    model: ToyModel, examples: Sequence[TrainingExample], weights: LossWeights
) -> LossReport:
    """Loss terms summed over ``examples`` (matching the summed objectives)."""
    report, _ = _batch_loss_impl(model, examples, weights, want_grad=False)
    return report


def batch_loss_and_grad(
    model: ToyModel, examples: Sequence[TrainingExample], weights: LossWeights
) -> tuple[LossReport, np.ndarray]:
    """Batch loss plus the flat gradient of the weighted total."""
    report, grad = _batch_loss_impl(model, examples, weights, want_grad=True)
    return report, grad


def _batch_loss_impl(
    model: ToyModel,
    examples: Sequence[TrainingExample],
    weights: LossWeights,
    want_grad: bool,
) -> tuple[LossReport, np.ndarray | None]:
    if not examples:
        raise LossError("examples must be non-empty")
    gen_total = 0.0
    contrast_total = 0.0
    tag_total = 0.0
    dE = np.zeros_like(model.token_embeddings) if want_grad else None
    dW = np.zeros_like(model.output_weights) if want_grad else None
    for ex in examples:
        g, gE, gW = _sequence_nll(model, ex.prompt_tokens, ex.target_tokens, want_grad)
        t, tE, tW = _sequence_nll(model, ex.prompt_tokens, ex.tag_target, want_grad)
        if want_grad:
            c, cE = _contrast_with_grad(model, ex)
            dE += weights.lambda_gen * gE + weights.lambda_tag * tE + weights.lambda_contrast * cE
            dW += weights.lambda_gen * gW + weights.lambda_tag * tW
        else:
            c = contrast_loss_for_example(model, ex)
        gen_total += g
        contrast_total += c
        tag_total += t
    report = total_loss(gen_total, contrast_total, tag_total, weights)
    if not want_grad:
        return report, None
    return report, np.concatenate([dE.ravel(), dW.ravel()])


LossFunction = Callable[[np.ndarray], tuple[float, np.ndarray]]


def loss_term_function(
    template: ToyModel,
    examples: Sequence[TrainingExample],
    weights: LossWeights,
    term: str = "total",
) -> LossFunction:
    """A θ → (loss, gradient) view of one loss term, for gradient checking.

    ``term`` selects "gen", "contrast", "tag", or "total"; the single-term
    views zero out the other weights so the returned gradient is exactly
    that term's.
    """
    if term == "gen":
        w = LossWeights(1.0, 0.0, 0.0)
    elif term == "contrast":
        w = LossWeights(0.0, 1.0, 0.0)
    elif term == "tag":
        w = LossWeights(0.0, 0.0, 1.0)
    elif term == "total":
        w = weights
    else:
        raise LossError(f"unknown loss term {term!r}")
    probe = template.copy()

    def f(theta: np.ndarray) -> tuple[float, np.ndarray]:
        probe.set_params_vector(theta)
        report, grad = batch_loss_and_grad(probe, examples, w)
        if term == "gen":
            value = report.gen
        elif term == "contrast":
            value = report.contrast
        elif term == "tag":
            value = report.tag
        else:
            value = report.total
        return value, grad

    return f


@dataclass(frozen=True)
class GradCheckReport:
    """Worst-case agreement between analytic and numerical gradients."""

    max_rel_err: float
    worst_index: int
    n_params: int
    eps: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def grad_check(
    f: LossFunction,
    theta0: np.ndarray,
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_params: int = 2000,
) -> GradCheckReport:
    """Compare ``f``'s analytic gradient to central finite differences.

    Relative error per coordinate is |analytic − numeric| divided by
    max(|analytic|, |numeric|, 1e-6); the floor keeps jointly-vanishing
    coordinates from dividing zero by zero.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise LossError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    theta0 = np.asarray(theta0, dtype=float)
    n = theta0.size
    if n > max_params:
        raise LossError(f"{n} parameters exceeds the {max_params}-parameter limit")
    value, analytic = f(theta0)
    if not math.isfinite(value) or not np.all(np.isfinite(analytic)):
        raise NonFiniteLossError("loss or gradient is not finite at the base point")
    if analytic.shape != theta0.shape:
        raise LossError("gradient shape does not match parameter shape")

    max_rel_err = 0.0
    worst = 0
    for i in range(n):
        probe = theta0.copy()
        probe[i] = theta0[i] + eps
        up, _ = f(probe)
        probe[i] = theta0[i] - eps
        down, _ = f(probe)
        if not (math.isfinite(up) and math.isfinite(down)):
            raise NonFiniteLossError(f"loss is not finite at probe {i}")
        numeric = (up - down) / (2.0 * eps)
        denom = max(abs(analytic[i]), abs(numeric), 1e-6)
        rel = abs(analytic[i] - numeric) / denom
        if rel > max_rel_err:
            max_rel_err = rel
            worst = i
    return GradCheckReport(
        max_rel_err=float(max_rel_err), worst_index=int(worst), n_params=int(n), eps=eps, tol=tol
    )


def train_toy(
    examples: Sequence[TrainingExample],
    weights: LossWeights,
    steps: int,
    lr: float,
    seed: int,
    vocab_size: int = 16,
    embed_dim: int = 8,
) -> tuple[ToyModel, list[LossReport]]:
    """Plain full-batch gradient descent on the weighted total loss.

    Deterministic given ``seed``. The trajectory has ``steps + 1`` reports:
    the loss at initialization, then after each update.
    """
    examples = list(examples)
    if not examples:
        raise LossError("training corpus must be non-empty")
    if lr < 0:
        raise LossError("learning rate must be non-negative")
    if steps < 0:
        raise LossError("steps must be non-negative")
    needed = max(ex.max_token_id() for ex in examples) + 1
    if vocab_size < needed:
        raise LossError(
            f"vocab_size {vocab_size} too small for corpus token ids (need {needed})"
        )
    model = ToyModel.initialize(vocab_size, embed_dim, seed=seed)
    trajectory = []
    report, grad = batch_loss_and_grad(model, examples, weights)
    trajectory.append(report)
    for _ in range(steps):
        _check_divergence(report)
        model.set_params_vector(model.params_vector() - lr * grad)
        report, grad = batch_loss_and_grad(model, examples, weights)
        trajectory.append(report)
    _check_divergence(report)
    return model, trajectory


def _check_divergence(report: LossReport) -> None:
    if not math.isfinite(report.total) or abs(report.total) > _DIVERGENCE_CEILING:
        raise DivergenceDetectedError(f"training diverged: total loss {report.total}")


def parse_training_records(text: str) -> list[TrainingExample]:
    """Parse a JSON-lines training corpus.

    Each line holds ``prompt_tokens``, ``target_tokens``, ``tag_target``
    (integer arrays) and ``positive_tags`` / ``negative_tags`` in the tag
    serialization grammar.
    """
    examples = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            examples.append(
                TrainingExample(
                    prompt_tokens=tuple(record["prompt_tokens"]),
                    target_tokens=tuple(record["target_tokens"]),
                    tag_target=tuple(record["tag_target"]),
                    positive_tags=deserialize_tags(record["positive_tags"]),
                    negative_tags=deserialize_tags(record["negative_tags"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise LossError(f"line {line_no}: bad training record ({exc})") from exc
    return examples


def load_training_corpus(path: str | Path) -> list[TrainingExample]:
    return parse_training_records(Path(path).read_text(encoding="utf-8"))


def training_records_to_jsonl(examples: Iterable[TrainingExample]) -> str:
    lines = []
    for ex in examples:
        lines.append(
            json.dumps(
                {
                    "prompt_tokens": list(ex.prompt_tokens),
                    "target_tokens": list(ex.target_tokens),
                    "tag_target": list(ex.tag_target),
                    "positive_tags": serialize_tags(ex.positive_tags),
                    "negative_tags": serialize_tags(ex.negative_tags),
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + "\n" if lines else ""


def trajectory_to_csv(trajectory: Sequence[LossReport]) -> str:
    """Loss trajectory as ``step,gen,contrast,tag,total`` CSV text."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["step", "gen", "contrast", "tag", "total"])
    for step, report in enumerate(trajectory):
        writer.writerow(
            [step, repr(report.gen), repr(report.contrast), repr(report.tag), repr(report.total)]
        )
    return buffer.getvalue()


_DEMO_WORDS = ("dog", "person", "ball", "tree", "car", "handbag", "bench", "kite")


def synthetic_training_examples(
    n: int, seed: int, vocab_size: int = 16
) -> list[TrainingExample]:
    """Deterministic demo batch for gradient checks and smoke training runs."""
    if n < 1:
        raise LossError("n must be at least 1")
    if vocab_size < 2:
        raise LossError("vocab_size must be at least 2")
    rng = random.Random(seed)

    def seq(lo: int, hi: int) -> tuple[int, ...]:
        return tuple(rng.randrange(vocab_size) for _ in range(rng.randint(lo, hi)))

    examples = []
    for _ in range(n):
        positive_word, negative_word = rng.sample(_DEMO_WORDS, 2)
        examples.append(
            TrainingExample(
                prompt_tokens=seq(0, 4),
                target_tokens=seq(1, 5),
                tag_target=seq(1, 4),
                positive_tags=TagSet(object_tags=(positive_word,), n_objects=1),
                negative_tags=TagSet(object_tags=(negative_word,), n_objects=1),
            )
        )
    return examples
