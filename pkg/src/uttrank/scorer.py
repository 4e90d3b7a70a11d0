"""Differentiable query-relevance scoring.

A small feed-forward model over hand-built (query, utterance) features stands
in for a pretrained cross-encoder: the ranking losses are agnostic to the
scorer, so every trainable objective stays exercisable at desk scale. Hidden
layers use tanh (smooth everywhere, so finite-difference gradient checks are
clean); the output layer is linear and always one-dimensional.

forward/featurize are read-only and safe to call concurrently; parameter
updates are single-writer and bump the model version so stale activation
traces are rejected.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import QueryInstance, Utterance
from .errors import ValidationError
from .rouge import rouge_n, tokenize

FEATURE_NAMES = (
    "query_unigram_f1",
    "query_bigram_f1",
    "tfidf_cosine",
    "length_ratio",
    "relative_position",
    "query_content_coverage",
    "speaker_in_query",
)
FEATURE_DIM = len(FEATURE_NAMES)
FEATURE_SCHEMA_VERSION = 1

# Small frozen function-word list for the content-coverage feature. Kept
# deliberately short; when a query is entirely stopwords the coverage feature
# falls back to all query tokens.
STOPWORDS = frozenset(
    """a an the and or but if then than as of at by for with about into over
    after before between to from in on off out up down is are was were be been
    being am do does did doing have has had having not no nor it its this that
    these those he she they them his her their i you we us our your my me what
    which who whom when where why how will would can could should may might
    must there here all any both each few more most other some such only own
    same so too very just don now""".split()
)

__all__ = [
    "FEATURE_NAMES",
    "FEATURE_DIM",
    "InstanceStats",
    "featurize",
    "instance_features",
    "ScoringModel",
    "ActivationTrace",
    "ParameterGradient",
    "init_model",
    "forward",
    "backward",
    "score_utterances",
    "num_params",
    "flat_params",
    "set_flat_params",
    "apply_gradient",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class InstanceStats:
    """Per-instance corpus statistics consumed by featurize."""

    n_utterances: int
    doc_freq: Counter

    @staticmethod
    def from_instance(instance: QueryInstance) -> "InstanceStats":
        df: Counter = Counter()
        for u in instance.utterances:
            df.update(set(tokenize(u.text)))
        return InstanceStats(n_utterances=len(instance.utterances), doc_freq=df)

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_utterances) / (1 + self.doc_freq[token])) + 1.0


def _tfidf_cosine(query_tokens: list[str], utt_tokens: list[str], stats: InstanceStats) -> float:
    qc = Counter(query_tokens)
    uc = Counter(utt_tokens)
    dot = 0.0
    for token, q_count in qc.items():
        if token in uc:
            w = stats.idf(token)
            dot += (q_count * w) * (uc[token] * w)
    if dot == 0.0:
        return 0.0
    qn = math.sqrt(sum((c * stats.idf(t)) ** 2 for t, c in qc.items()))
    un = math.sqrt(sum((c * stats.idf(t)) ** 2 for t, c in uc.items()))
    return dot / (qn * un)


def featurize(query: str, utterance: Utterance, stats: InstanceStats) -> np.ndarray:
    """Fixed-order feature vector for one (query, utterance) pair.

    Features, in order: unigram-overlap F1 vs the query, bigram-overlap F1,
    tf-idf cosine similarity, utterance token count / 100 capped at 1,
    relative transcript position, fraction of query content words present,
    and a speaker-mentioned-in-query indicator.
    """
    query_tokens = tokenize(query)
    utt_tokens = tokenize(utterance.text)
    utt_token_set = set(utt_tokens)

    content = [t for t in dict.fromkeys(query_tokens) if t not in STOPWORDS]
    if not content:
        content = list(dict.fromkeys(query_tokens))
    coverage = (
        sum(1 for t in content if t in utt_token_set) / len(content) if content else 0.0
    )

    n = stats.n_utterances
    position = utterance.index / (n - 1) if n > 1 else 0.0

    speaker_tokens = tokenize(utterance.speaker)
    query_token_set = set(query_tokens)
    speaker_hit = 1.0 if any(t in query_token_set for t in speaker_tokens) else 0.0

    return np.array(
        [
            rouge_n(utterance.text, query, 1).f1,
            rouge_n(utterance.text, query, 2).f1,
            _tfidf_cosine(query_tokens, utt_tokens, stats),
            min(len(utt_tokens) / 100.0, 1.0),
            position,
            coverage,
            speaker_hit,
        ],
        dtype=np.float64,
    )


def instance_features(instance: QueryInstance, stats: InstanceStats | None = None) -> np.ndarray:
    """Feature matrix (n_utterances, FEATURE_DIM) for one instance."""
    if stats is None:
        stats = InstanceStats.from_instance(instance)
    return np.stack([featurize(instance.query, u, stats) for u in instance.utterances])


@dataclass
class ScoringModel:
    """Feed-forward scorer; weights[l] has shape (fan_out, fan_in)."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int
    version: int = 0  # bumped on every parameter update

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


@dataclass(frozen=True)
class ActivationTrace:
    """Per-layer activations retained by forward for the backward pass."""

    activations: tuple[np.ndarray, ...]  # activations[0] is the input
    model_version: int


@dataclass
class ParameterGradient:
    """Gradient congruent with ScoringModel parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @staticmethod
    def zeros_like(model: ScoringModel) -> "ParameterGradient":
        return ParameterGradient(
            weights=[np.zeros_like(w) for w in model.weights],
            biases=[np.zeros_like(b) for b in model.biases],
        )

    def add_(self, other: "ParameterGradient") -> None:
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob


def init_model(layer_dims, seed: int) -> ScoringModel:
    """Glorot-uniform weights, zero biases, reproducible from the seed."""
    dims = tuple(int(d) for d in layer_dims)
    if not dims or any(d < 1 for d in dims):
        raise ValidationError(f"layer dims must be positive, got {dims}")
    if dims[-1] != 1:
        raise ValidationError(f"output dimension must be 1, got {dims[-1]}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        scale = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ScoringModel(layer_dims=dims, weights=weights, biases=biases, seed=int(seed))


def forward(model: ScoringModel, x: np.ndarray) -> tuple[float, ActivationTrace]:
    """Score one feature vector; the trace feeds backward()."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ValidationError(f"input shape {x.shape} != ({model.input_dim},)")
    activations = [x]
    a = x
    n_layers = len(model.weights)
    for l in range(n_layers):
        z = model.weights[l] @ a + model.biases[l]
        a = np.tanh(z) if l < n_layers - 1 else z
        activations.append(a)
    score = float(activations[-1][0]) if n_layers else float(x[0])
    return score, ActivationTrace(activations=tuple(activations), model_version=model.version)


def backward(model: ScoringModel, trace: ActivationTrace, upstream: float) -> ParameterGradient:
    """Exact gradient of (upstream * score) with respect to the parameters."""
    if trace.model_version != model.version:
        raise ValidationError("stale activation trace: model parameters changed since forward")
    grad = ParameterGradient.zeros_like(model)
    n_layers = len(model.weights)
    if n_layers == 0:
        return grad
    g = np.array([float(upstream)])
    for l in reversed(range(n_layers)):
        grad.weights[l] = np.outer(g, trace.activations[l])
        grad.biases[l] = g
        if l > 0:
            # activations[l] = tanh(z_{l-1}) for hidden layers
            g = (model.weights[l].T @ g) * (1.0 - trace.activations[l] ** 2)
    return grad


def score_utterances(
    model: ScoringModel,
    instance: QueryInstance,
    stats: InstanceStats | None = None,
    features: np.ndarray | None = None,
) -> np.ndarray:
    """Model score per utterance, aligned with transcript indices."""
    if features is None:
        features = instance_features(instance, stats)
    return np.array([forward(model, x)[0] for x in features])


def num_params(model: ScoringModel) -> int:
    return sum(w.size for w in model.weights) + sum(b.size for b in model.biases)


def flat_params(model: ScoringModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def set_flat_params(model: ScoringModel, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (num_params(model),):
        raise ValidationError(f"parameter vector shape {vector.shape} != ({num_params(model)},)")
    pos = 0
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        model.weights[l] = vector[pos : pos + w.size].reshape(w.shape).copy()
        pos += w.size
        model.biases[l] = vector[pos : pos + b.size].copy()
        pos += b.size
    model.version += 1


def flat_gradient(grad: ParameterGradient) -> np.ndarray:
    parts = []
    for w, b in zip(grad.weights, grad.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def apply_gradient(model: ScoringModel, grad: ParameterGradient, learning_rate: float) -> None:
    """Plain gradient-descent step; invalidates outstanding traces."""
    for l in range(len(model.weights)):
        model.weights[l] = model.weights[l] - learning_rate * grad.weights[l]
        model.biases[l] = model.biases[l] - learning_rate * grad.biases[l]
    model.version += 1


def save_model(model: ScoringModel, path: str | Path) -> None:
    """Checkpoint: layer dims, flattened per-layer parameters, seed, schema tag."""
    payload = {
        "layer_dims": list(model.layer_dims),
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "seed": model.seed,
        "feature_schema_version": FEATURE_SCHEMA_VERSION,
        "feature_names": list(FEATURE_NAMES),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ScoringModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    schema = payload.get("feature_schema_version")
    if schema != FEATURE_SCHEMA_VERSION:
        raise ValidationError(f"unsupported feature schema version: {schema}")
    dims = tuple(int(d) for d in payload["layer_dims"])
    weights = []
    biases = []
    for l, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        weights.append(np.array(payload["weights"][l], dtype=np.float64).reshape(fan_out, fan_in))
        biases.append(np.array(payload["biases"][l], dtype=np.float64))
    return ScoringModel(layer_dims=dims, weights=weights, biases=biases, seed=int(payload["seed"]))
