"""Session-pair scorers: a statistical-distance baseline and a triplet-loss
embedding model with hand-written gradients, plus the deterministic batch
comparison runner.

Scores live in [0, 1] (1: same identity). Both scorers map a distance d to
1 / (1 + d), which is bounded, strictly decreasing, and parameter-free, so
rank-based metrics are unaffected by the choice.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import Corpus, Session
from .errors import KvbenchError, ParseError, ValidationError
from .features import (
    FEATURE_NAMES,
    SequenceNormalizer,
    StatVector,
    extract_features,
    fix_length,
    session_stats,
)
from .protocol import ComparisonList

_SCORE_CHUNK = 8192  # fixed partitioning so results never depend on worker count


def distance_to_score(distance) -> np.ndarray | float:
    return 1.0 / (1.0 + distance)


# ---------------------------------------------------------------------------
# Statistical baseline
# ---------------------------------------------------------------------------


def stat_distance_score(enroll: StatVector, verify: StatVector, weights) -> float:
    """Weighted L1 distance between session aggregates, mapped to [0, 1]."""
    a, b = enroll.as_vector(), verify.as_vector()
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != a.shape or a.shape != b.shape:
        raise ValidationError(f"weight/vector widths differ: {w.shape} vs {a.shape} vs {b.shape}")
    return float(distance_to_score(np.abs(a - b) @ w))


class StatDistanceScorer(BaseEstimator):
    """Training-free verifier on session-aggregate vectors.

    Components are weighted by the inverse of their development-set
    standard deviation; components constant on the development set get
    weight zero (they carry no calibrated scale).
    """

    def __init__(self, weights: Sequence[float] | None = None):
        self.weights = weights

    def fit(self, development: Corpus, y=None) -> "StatDistanceScorer":
        if self.weights is not None:
            self.weights_ = np.asarray(self.weights, dtype=np.float64)
            return self
        vectors = np.stack(
            [session_stats(extract_features(s)).as_vector() for s in development.sessions.values()]
        )
        stds = vectors.std(axis=0)
        with np.errstate(divide="ignore"):
            self.weights_ = np.where(stds > 0.0, 1.0 / stds, 0.0)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "weights_"):
            raise NotFittedError("StatDistanceScorer is not fitted")

    def score_pair(self, enroll: StatVector, verify: StatVector) -> float:
        self._check_fitted()
        return stat_distance_score(enroll, verify, self.weights_)

    # batch scoring interface used by run_comparisons
    def prepare(self, sessions: Mapping[str, Session]) -> dict[str, int]:
        self._check_fitted()
        index = {sid: i for i, sid in enumerate(sessions)}
        self._matrix = np.stack(
            [session_stats(extract_features(sessions[sid])).as_vector() for sid in index]
        )
        return index

    def score_rows(self, enroll_rows: np.ndarray, verify_rows: np.ndarray) -> np.ndarray:
        diff = np.abs(self._matrix[enroll_rows] - self._matrix[verify_rows])
        return distance_to_score(diff @ self.weights_)


# ---------------------------------------------------------------------------
# Triplet loss
# ---------------------------------------------------------------------------


def triplet_loss(
    anchor, positive, negative, margin: float = 1.5
) -> tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Hinge triplet loss and its exact subgradients.

    loss = max(0, ||a-p|| - ||a-n|| + margin). At loss 0, and for the
    norm terms at zero distance, the zero subgradient is returned.
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    n = np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape):
        raise ValidationError("triplet embeddings must share one dimension")
    d_ap = float(np.linalg.norm(a - p))
    d_an = float(np.linalg.norm(a - n))
    loss = d_ap - d_an + margin
    if loss <= 0.0:
        zero = np.zeros_like(a)
        return 0.0, (zero, zero.copy(), zero.copy())
    u_ap = (a - p) / d_ap if d_ap > 0.0 else np.zeros_like(a)
    u_an = (a - n) / d_an if d_an > 0.0 else np.zeros_like(a)
    return loss, (u_ap - u_an, -u_ap, u_an)


# ---------------------------------------------------------------------------
# Embedding model
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingModel:
    """Plain feed-forward stack: hidden layers are rectified, output is linear."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def initialized(cls, layer_sizes: Sequence[int], seed: int) -> "EmbeddingModel":
        # uniform in +-1/sqrt(fan_in), drawn from the run seed
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(self.weights[-1].shape[1])

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.input_dim:
            raise ValidationError(f"input width {h.shape[1]} does not match model input {self.input_dim}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def _forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        activations = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
            activations.append(h)
        return h @ self.weights[-1] + self.biases[-1], activations

    def _backward(
        self, activations: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        grad_w = [np.empty(0)] * len(self.weights)
        grad_b = [np.empty(0)] * len(self.biases)
        delta = grad_out
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = activations[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0.0)
        return grad_w, grad_b

    def check_finite(self) -> None:
        for arr in (*self.weights, *self.biases):
            if not np.all(np.isfinite(arr)):
                raise KvbenchError("embedding model weights became non-finite")

    def save(self, path, header: Mapping[str, object] | None = None) -> None:
        sizes = [self.input_dim] + [w.shape[1] for w in self.weights]
        lines = [f"# layer_sizes={','.join(map(str, sizes))}"]
        if header:
            lines.extend(f"# {k}={v}" for k, v in header.items())
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            lines.append(f"layer {idx} weight {w.shape[0]} {w.shape[1]}")
            lines.extend(" ".join(f"{x:.17g}" for x in row) for row in w)
            lines.append(f"layer {idx} bias {b.shape[0]}")
            lines.append(" ".join(f"{x:.17g}" for x in b))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> tuple["EmbeddingModel", dict[str, str]]:
        header: dict[str, str] = {}
        weights: list[np.ndarray] = []
        biases: list[np.ndarray] = []
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        pos = 0
        while pos < len(lines):
            line = lines[pos].strip()
            pos += 1
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition("=")
                header[key] = value
                continue
            parts = line.split()
            if len(parts) < 4 or parts[0] != "layer":
                raise ParseError(f"unexpected model line {line!r}", pos)
            kind = parts[2]
            if kind == "weight":
                rows, cols = int(parts[3]), int(parts[4])
                block = [np.array(lines[pos + r].split(), dtype=np.float64) for r in range(rows)]
                pos += rows
                w = np.stack(block)
                if w.shape != (rows, cols):
                    raise ParseError(f"weight block shape mismatch for {line!r}", pos)
                weights.append(w)
            elif kind == "bias":
                cols = int(parts[3])
                b = np.array(lines[pos].split(), dtype=np.float64)
                pos += 1
                if b.shape != (cols,):
                    raise ParseError(f"bias block shape mismatch for {line!r}", pos)
                biases.append(b)
            else:
                raise ParseError(f"unknown model block {kind!r}", pos)
        if not weights or len(weights) != len(biases):
            raise ValidationError("model file has no complete layer blocks")
        return cls(weights, biases), header


def embed(matrix, model: EmbeddingModel) -> np.ndarray:
    """Deterministic forward pass; accepts one flattened sample or a batch."""
    x = np.asarray(matrix, dtype=np.float64)
    single = x.ndim == 1
    out = model.forward(x)
    return out[0] if single else out


def embedding_score(e1, e2) -> float:
    a = np.asarray(e1, dtype=np.float64)
    b = np.asarray(e2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    return float(distance_to_score(np.linalg.norm(a - b)))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 1.5
    distance_p: float = 2.0
    learning_rate: float = 0.05
    epochs: int = 30
    subjects_per_batch: int = 16
    sessions_per_subject: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.margin <= 0.0:
            raise ValidationError("margin must be positive")
        if self.distance_p != 2.0:
            raise ValidationError("only the Euclidean (p=2) distance is supported")
        if self.learning_rate < 0.0:
            raise ValidationError("learning_rate must be non-negative")
        if self.epochs < 0 or self.subjects_per_batch < 2 or self.sessions_per_subject < 2:
            raise ValidationError("need epochs >= 0, >= 2 subjects per batch, >= 2 sessions per subject")


def _pairwise_distances(emb: np.ndarray) -> np.ndarray:
    diff = emb[:, None, :] - emb[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _batch_step(
    model: EmbeddingModel, x: np.ndarray, subject_ids: np.ndarray, margin: float, lr: float
) -> float:
    """One mini-batch update: all anchor-positive pairs, hardest in-batch negative."""
    out, activations = model._forward_cached(x)
    dist = _pairwise_distances(out)
    same = subject_ids[:, None] == subject_ids[None, :]
    neg_dist = np.where(same, np.inf, dist)
    hardest = np.argmin(neg_dist, axis=1)

    anchors, positives = np.nonzero(same & ~np.eye(len(x), dtype=bool))
    if anchors.size == 0:
        return 0.0
    negatives = hardest[anchors]
    d_ap = dist[anchors, positives]
    d_an = dist[anchors, negatives]
    losses = d_ap - d_an + margin
    active = losses > 0.0
    loss = float(np.maximum(losses, 0.0).mean())
    if not math.isfinite(loss):
        raise KvbenchError("triplet loss became non-finite")
    if lr == 0.0 or not np.any(active):
        return loss

    a, p, n = anchors[active], positives[active], negatives[active]
    ea, ep, en = out[a], out[p], out[n]
    with np.errstate(invalid="ignore", divide="ignore"):
        u_ap = np.where(d_ap[active, None] > 0.0, (ea - ep) / d_ap[active, None], 0.0)
        u_an = np.where(d_an[active, None] > 0.0, (ea - en) / d_an[active, None], 0.0)
    grad_out = np.zeros_like(out)
    scale = 1.0 / losses.size
    np.add.at(grad_out, a, (u_ap - u_an) * scale)
    np.add.at(grad_out, p, -u_ap * scale)
    np.add.at(grad_out, n, u_an * scale)

    grad_w, grad_b = model._backward(activations, grad_out)
    for w, gw in zip(model.weights, grad_w):
        w -= lr * gw
    for b, gb in zip(model.biases, grad_b):
        b -= lr * gb
    model.check_finite()
    return loss


def train_embedding(
    samples_by_subject: Mapping[str, np.ndarray],
    layer_sizes: Sequence[int],
    config: TrainConfig,
) -> tuple[EmbeddingModel, list[float]]:
    """Mini-batch triplet training over flattened fixed-length samples.

    `samples_by_subject` maps subject id to an (n_sessions, input_dim)
    matrix. Deterministic given the config seed; returns the model and the
    per-batch loss trace. Raises if the loss or weights go non-finite.
    """
    config.validate()
    subjects = sorted(samples_by_subject)
    usable = [s for s in subjects if samples_by_subject[s].shape[0] >= 2]
    if len(usable) < 2:
        raise ValidationError("training needs >= 2 subjects with >= 2 sessions each")
    input_dim = samples_by_subject[usable[0]].shape[1]
    if list(layer_sizes)[0] != input_dim:
        raise ValidationError(f"layer_sizes[0]={layer_sizes[0]} does not match input width {input_dim}")
    model = EmbeddingModel.initialized(layer_sizes, config.seed)
    rng = np.random.default_rng((config.seed, 1))  # batch-sampling stream, distinct from init
    trace: list[float] = []
    per_batch = min(config.subjects_per_batch, len(usable))
    try:
        for _ in range(config.epochs):
            order = rng.permutation(len(usable))
            for start in range(0, len(order) - per_batch + 1, per_batch):
                chosen = [usable[i] for i in order[start : start + per_batch]]
                xs, ids = [], []
                for subj_idx, subj in enumerate(chosen):
                    samples = samples_by_subject[subj]
                    take = min(config.sessions_per_subject, samples.shape[0])
                    rows = rng.choice(samples.shape[0], size=take, replace=False)
                    xs.append(samples[rows])
                    ids.extend([subj_idx] * take)
                trace.append(
                    _batch_step(
                        model,
                        np.concatenate(xs, axis=0),
                        np.asarray(ids),
                        config.margin,
                        config.learning_rate,
                    )
                )
    except KvbenchError as exc:
        exc.trace = trace  # type: ignore[attr-defined]
        raise
    return model, trace


class TripletEmbedder(BaseEstimator):
    """Embedding verifier: feature pipeline + triplet-trained dense network.

    fit() learns the feature normalizer and the embedding weights on a
    development corpus; transform() maps sessions to embeddings; session
    pairs are scored by 1 / (1 + Euclidean distance).
    """

    def __init__(
        self,
        seq_len: int = 70,
        embedding_dim: int = 64,
        hidden_sizes: tuple[int, ...] = (128,),
        margin: float = 1.5,
        distance_p: float = 2.0,
        learning_rate: float = 0.05,
        epochs: int = 30,
        subjects_per_batch: int = 16,
        sessions_per_subject: int = 4,
        clip_quantiles: tuple[float, float] = (0.001, 0.999),
        seed: int = 0,
    ):
        self.seq_len = seq_len
        self.embedding_dim = embedding_dim
        self.hidden_sizes = hidden_sizes
        self.margin = margin
        self.distance_p = distance_p
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.subjects_per_batch = subjects_per_batch
        self.sessions_per_subject = sessions_per_subject
        self.clip_quantiles = clip_quantiles
        self.seed = seed

    @property
    def input_dim(self) -> int:
        return self.seq_len * len(FEATURE_NAMES)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            margin=self.margin,
            distance_p=self.distance_p,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            subjects_per_batch=self.subjects_per_batch,
            sessions_per_subject=self.sessions_per_subject,
            seed=self.seed,
        )

    def _flatten(self, session: Session) -> np.ndarray:
        seq = self.normalizer_.transform(extract_features(session))
        matrix, _ = fix_length(seq, self.seq_len)
        return matrix.ravel()

    def fit(self, development: Corpus, y=None, normalizer: SequenceNormalizer | None = None) -> "TripletEmbedder":
        if development.subjects is None:
            raise ValidationError("TripletEmbedder.fit needs a development corpus")
        if normalizer is not None:
            self.normalizer_ = normalizer
        else:
            sequences = [extract_features(s) for s in development.sessions.values()]
            self.normalizer_ = SequenceNormalizer(clip_quantiles=self.clip_quantiles).fit(sequences)
        samples = {
            subj.subject_id: np.stack([self._flatten(s) for s in subj.sessions])
            for subj in development.subjects
        }
        layer_sizes = [self.input_dim, *self.hidden_sizes, self.embedding_dim]
        self.model_, self.loss_trace_ = train_embedding(samples, layer_sizes, self.train_config())
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("TripletEmbedder is not fitted")

    def transform(self, sessions: Sequence[Session]) -> np.ndarray:
        self._check_fitted()
        batch = np.stack([self._flatten(s) for s in sessions])
        return self.model_.forward(batch)

    def score_pair(self, enroll: Session, verify: Session) -> float:
        emb = self.transform([enroll, verify])
        return embedding_score(emb[0], emb[1])

    def prepare(self, sessions: Mapping[str, Session]) -> dict[str, int]:
        self._check_fitted()
        index = {sid: i for i, sid in enumerate(sessions)}
        batch = np.stack([self._flatten(sessions[sid]) for sid in index])
        self._embeddings = self.model_.forward(batch)
        return index

    def score_rows(self, enroll_rows: np.ndarray, verify_rows: np.ndarray) -> np.ndarray:
        diff = self._embeddings[enroll_rows] - self._embeddings[verify_rows]
        return distance_to_score(np.sqrt(np.sum(diff * diff, axis=1)))

    def save(self, path) -> None:
        self._check_fitted()
        self.model_.save(
            path,
            header={
                "seq_len": self.seq_len,
                "embedding_dim": self.embedding_dim,
                "hidden_sizes": ",".join(map(str, self.hidden_sizes)),
                "margin": self.margin,
                "distance_p": self.distance_p,
                "learning_rate": self.learning_rate,
                "epochs": self.epochs,
                "subjects_per_batch": self.subjects_per_batch,
                "sessions_per_subject": self.sessions_per_subject,
                "seed": self.seed,
            },
        )

    @classmethod
    def load(cls, model_path, normalizer_path) -> "TripletEmbedder":
        model, header = EmbeddingModel.load(model_path)
        kwargs: dict[str, object] = {}
        for name, conv in (
            ("seq_len", int),
            ("embedding_dim", int),
            ("margin", float),
            ("distance_p", float),
            ("learning_rate", float),
            ("epochs", int),
            ("subjects_per_batch", int),
            ("sessions_per_subject", int),
            ("seed", int),
        ):
            if name in header:
                kwargs[name] = conv(header[name])
        if "hidden_sizes" in header and header["hidden_sizes"]:
            kwargs["hidden_sizes"] = tuple(int(x) for x in header["hidden_sizes"].split(","))
        est = cls(**kwargs)  # type: ignore[arg-type]
        est.model_ = model
        est.normalizer_ = SequenceNormalizer.load(normalizer_path)
        est.loss_trace_ = []
        if model.input_dim != est.input_dim:
            raise ValidationError(
                f"model input width {model.input_dim} does not match seq_len {est.seq_len}"
            )
        return est


# ---------------------------------------------------------------------------
# Batch comparison runner
# ---------------------------------------------------------------------------


def run_comparisons(
    comparison_list: ComparisonList,
    corpus: Corpus,
    scorer,
    workers: int = 1,
    out_path=None,
) -> np.ndarray:
    """Score every comparison, in list order, independent of worker count.

    All session ids are resolved before any scoring starts. Work is split
    into fixed-size index chunks and results are written positionally, so
    the output is byte-identical for any `workers`.
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    missing = [sid for sid in comparison_list.session_ids() if sid not in corpus.sessions]
    if missing:
        raise ValidationError(
            f"{len(missing)} comparison session ids missing from corpus (first: {sorted(missing)[:5]})"
        )
    index = scorer.prepare(corpus.sessions)
    enroll_rows = np.fromiter(
        (index[c.enroll_session] for c in comparison_list), dtype=np.int64, count=len(comparison_list)
    )
    verify_rows = np.fromiter(
        (index[c.verify_session] for c in comparison_list), dtype=np.int64, count=len(comparison_list)
    )
    scores = np.empty(len(comparison_list), dtype=np.float64)
    chunks = range(0, len(comparison_list), _SCORE_CHUNK)

    def run_chunk(start: int) -> None:
        stop = min(start + _SCORE_CHUNK, len(comparison_list))
        scores[start:stop] = scorer.score_rows(enroll_rows[start:stop], verify_rows[start:stop])

    if workers == 1:
        for start in chunks:
            run_chunk(start)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, chunks))
    if np.any(~np.isfinite(scores)) or np.any((scores < 0.0) | (scores > 1.0)):
        raise KvbenchError("scorer produced scores outside [0, 1]")
    if out_path is not None:
        write_score_file(scores, out_path)
    return scores


def write_score_file(scores, path) -> None:
    """One decimal score per line, in comparison order."""
    arr = np.asarray(scores, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(f"{s:.17g}" for s in arr) + "\n")


def read_score_file(source: str | bytes | IO) -> np.ndarray:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if not isinstance(source, str):
        source = source.read()
        if isinstance(source, bytes):
            source = source.decode("utf-8")
    values = []
    for lineno, line in enumerate(source.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ParseError(f"non-numeric score {line!r}", lineno) from None
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and (np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0))):
        raise ValidationError("scores must be finite and within [0, 1]")
    return arr
