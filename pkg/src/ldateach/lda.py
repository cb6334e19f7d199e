"""Core LDA probability kernel.

Dirichlet-Categorical log probabilities, the generative sampler, the
collapsed Gibbs conditional and full sweeps, and word likelihoods under a
fixed topic matrix.  Everything here is pure computation on in-memory
values; all randomness enters through explicitly passed integer seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ParameterError",
    "Hyperparams",
    "Vocabulary",
    "Document",
    "Corpus",
    "TopicModel",
    "ThetaSet",
    "AssignmentState",
    "log_dircat",
    "log_dirichlet_density",
    "log_model_prior_density",
    "sample_generative",
    "sample_documents",
    "gibbs_conditional",
    "gibbs_fit",
    "log_word_likelihood",
    "topics_from_counts",
]


class ParameterError(ValueError):
    """Raised when an argument is outside the parameter domain."""


def _positive_vector(x, size: int, name: str) -> np.ndarray:
    """Coerce scalar-or-vector concentration input to a positive float vector."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise ParameterError(f"{name} must be a scalar or length-{size} vector, got shape {arr.shape}")
    if not np.all(arr > 0.0) or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} entries must be positive and finite")
    return arr


@dataclass(frozen=True)
class Hyperparams:
    """LDA prior: T topics over a W-word vocabulary with Dirichlet concentrations.

    ``alpha`` (length T) governs document-topic mixtures, ``beta`` (length W)
    governs topic-word distributions.  Scalars are expanded to symmetric
    vectors.
    """

    num_topics: int
    vocab_size: int
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if self.num_topics < 1:
            raise ParameterError("num_topics must be >= 1")
        if self.vocab_size < 1:
            raise ParameterError("vocab_size must be >= 1")
        alpha = _positive_vector(self.alpha, self.num_topics, "alpha")
        beta = _positive_vector(self.beta, self.vocab_size, "beta")
        alpha.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def symmetric(cls, num_topics: int, vocab_size: int, alpha: float, beta: float) -> "Hyperparams":
        """Build with constant concentration vectors from two scalars."""
        return cls(num_topics, vocab_size, np.full(num_topics, float(alpha)), np.full(vocab_size, float(beta)))

    @property
    def alpha_sum(self) -> float:
        return float(self.alpha.sum())

    @property
    def beta_sum(self) -> float:
        return float(self.beta.sum())


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token-string <-> index mapping."""

    words: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise ParameterError("vocabulary words must be unique")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.words)

    def index_of(self, word: str) -> int:
        return self._index[word]

    def word_of(self, index: int) -> str:
        return self.words[index]

    @classmethod
    def default(cls, vocab_size: int) -> "Vocabulary":
        """Placeholder vocabulary (``w000``, ``w001``, ...) for synthetic corpora."""
        width = max(3, len(str(vocab_size - 1)))
        return cls(tuple(f"w{i:0{width}d}" for i in range(vocab_size)))


@dataclass
class Document:
    """A document as its sequence of word indices, with optional identity."""

    tokens: np.ndarray
    doc_id: str | None = None
    title: str | None = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.tokens.ndim != 1:
            raise ParameterError("tokens must be a 1-d index sequence")

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    def word_counts(self, vocab_size: int) -> np.ndarray:
        return np.bincount(self.tokens, minlength=vocab_size)


@dataclass
class Corpus:
    """An ordered set of documents over a shared vocabulary."""

    documents: list[Document]
    vocabulary: Vocabulary

    def __post_init__(self):
        w = len(self.vocabulary)
        for doc in self.documents:
            if len(doc) and (doc.tokens.min() < 0 or doc.tokens.max() >= w):
                raise ParameterError(f"document {doc.doc_id!r} has token indices outside [0, {w})")

    @property
    def num_docs(self) -> int:
        return len(self.documents)

    @property
    def total_words(self) -> int:
        return sum(len(d) for d in self.documents)


def _row_stochastic(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2:
        raise ParameterError(f"{name} must be a 2-d matrix")
    if np.any(mat < 0.0):
        raise ParameterError(f"{name} rows must be nonnegative")
    if np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-9):
        raise ParameterError(f"{name} rows must sum to 1 within 1e-9")
    return mat


@dataclass
class TopicModel:
    """Row-stochastic T x W topic-word matrix: the teaching target."""

    phi: np.ndarray

    def __post_init__(self):
        self.phi = _row_stochastic(self.phi, "phi")

    @property
    def num_topics(self) -> int:
        return self.phi.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.phi.shape[1]


@dataclass
class ThetaSet:
    """Row-stochastic D x T document-topic mixture weights."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = _row_stochastic(self.theta, "theta")


@dataclass
class AssignmentState:
    """Token-to-topic labels with the two count tables the collapsed sampler needs.

    ``z`` holds one int array per document; ``doc_topic`` is D x T and
    ``topic_word`` is T x W.  The tables are always exactly recomputable
    from ``z`` and the corpus (see :meth:`from_assignments`).
    """

    z: list[np.ndarray]
    doc_topic: np.ndarray
    topic_word: np.ndarray

    @property
    def topic_totals(self) -> np.ndarray:
        return self.topic_word.sum(axis=1)

    @classmethod
    def from_assignments(cls, corpus: Corpus, z: Sequence[np.ndarray], num_topics: int) -> "AssignmentState":
        vocab_size = len(corpus.vocabulary)
        doc_topic = np.zeros((corpus.num_docs, num_topics), dtype=np.int64)
        topic_word = np.zeros((num_topics, vocab_size), dtype=np.int64)
        z_arrays = []
        for d, (doc, zd) in enumerate(zip(corpus.documents, z)):
            zd = np.asarray(zd, dtype=np.int64)
            if zd.shape != doc.tokens.shape:
                raise ParameterError(f"assignment length mismatch for document {d}")
            if len(zd) and (zd.min() < 0 or zd.max() >= num_topics):
                raise ParameterError(f"topic labels outside [0, {num_topics}) in document {d}")
            np.add.at(doc_topic[d], zd, 1)
            np.add.at(topic_word, (zd, doc.tokens), 1)
            z_arrays.append(zd)
        return cls(z_arrays, doc_topic, topic_word)

    def validate(self, corpus: Corpus) -> None:
        """Recompute both count tables from z and raise if either disagrees."""
        rebuilt = AssignmentState.from_assignments(corpus, self.z, self.doc_topic.shape[1])
        if not np.array_equal(rebuilt.doc_topic, self.doc_topic):
            raise ParameterError("doc_topic counts inconsistent with assignments")
        if not np.array_equal(rebuilt.topic_word, self.topic_word):
            raise ParameterError("topic_word counts inconsistent with assignments")


def log_dircat(counts, alpha) -> float:
    """Log Dirichlet-Categorical probability of a particular sequence with these counts.

    ``log Gamma(sum a) - log Gamma(n + sum a) + sum_i [log Gamma(x_i + a_i) - log Gamma(a_i)]``,
    evaluated entirely in log-Gamma space so counts up to ~1e6 are safe.
    """
    counts = np.asarray(counts)
    alpha = np.asarray(alpha, dtype=float)
    if counts.shape != alpha.shape or counts.ndim != 1:
        raise ParameterError(f"counts {counts.shape} and alpha {alpha.shape} must be equal-length vectors")
    if np.any(counts < 0):
        raise ParameterError("counts must be nonnegative")
    if not np.all(alpha > 0.0):
        raise ParameterError("alpha entries must be positive")
    a_sum = alpha.sum()
    n = counts.sum()
    return float(gammaln(a_sum) - gammaln(n + a_sum) + np.sum(gammaln(counts + alpha) - gammaln(alpha)))


def log_dirichlet_density(x, concentration) -> float:
    """Log Dirichlet density of a simplex point.

    A zero coordinate is a boundary point: the density is +inf when the
    matching concentration is below 1 (rejected as a domain error), 0 there
    when it equals 1, and the term vanishes into -inf when it exceeds 1.
    """
    x = np.asarray(x, dtype=float)
    conc = np.asarray(concentration, dtype=float)
    if x.shape != conc.shape or x.ndim != 1:
        raise ParameterError("point and concentration must be equal-length vectors")
    if not np.all(conc > 0.0):
        raise ParameterError("concentration entries must be positive")
    if np.any(x < 0.0) or abs(x.sum() - 1.0) > 1e-9:
        raise ParameterError("density point must lie on the probability simplex")
    zero = x == 0.0
    if np.any(zero & (conc < 1.0)):
        raise ParameterError("zero coordinate with concentration < 1 gives an infinite density")
    const = float(gammaln(conc.sum()) - gammaln(conc).sum())
    live = ~zero
    terms = float(np.sum((conc[live] - 1.0) * np.log(x[live])))
    if np.any(zero & (conc > 1.0)):
        return -math.inf
    return const + terms


def log_model_prior_density(model: TopicModel, hyper: Hyperparams, topics: Sequence[int] | None = None) -> float:
    """Sum of log Dirichlet densities of the given topic rows (default: all rows)."""
    if topics is None:
        topics = range(model.num_topics)
    return sum(log_dirichlet_density(model.phi[t], hyper.beta) for t in topics)


def _sample_rows_categorical(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row: prob_rows is (n, k), u is (n,) uniforms."""
    cum = np.cumsum(prob_rows, axis=1)
    idx = (cum < (u * cum[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)


def sample_generative(
    hyper: Hyperparams, doc_lengths: Sequence[int], seed: int
) -> tuple[TopicModel, ThetaSet, Corpus, AssignmentState]:
    """Draw (topics, mixtures, documents, assignments) from the full generative process.

    Topic rows come from Dirichlet(beta), per-document mixtures from
    Dirichlet(alpha); each token draws a topic from its document mixture and
    a word from that topic.  Deterministic given ``seed``.
    """
    doc_lengths = list(doc_lengths)
    if not doc_lengths:
        raise ParameterError("doc_lengths must be nonempty")
    if any(n < 1 for n in doc_lengths):
        raise ParameterError("doc_lengths must be positive")
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(hyper.beta, size=hyper.num_topics)
    theta = rng.dirichlet(hyper.alpha, size=len(doc_lengths))
    docs: list[Document] = []
    assignments: list[np.ndarray] = []
    for d, length in enumerate(doc_lengths):
        z = _sample_rows_categorical(np.broadcast_to(theta[d], (length, hyper.num_topics)), rng.random(length))
        w = _sample_rows_categorical(phi[z], rng.random(length))
        docs.append(Document(w, doc_id=f"d{d}"))
        assignments.append(z)
    corpus = Corpus(docs, Vocabulary.default(hyper.vocab_size))
    state = AssignmentState.from_assignments(corpus, assignments, hyper.num_topics)
    return TopicModel(phi), ThetaSet(theta), corpus, state


def sample_documents(
    model: TopicModel, hyper: Hyperparams, doc_lengths: Sequence[int], seed: int
) -> list[Document]:
    """Sample documents from the generative process conditioned on a fixed topic matrix."""
    doc_lengths = list(doc_lengths)
    if not doc_lengths or any(n < 1 for n in doc_lengths):
        raise ParameterError("doc_lengths must be nonempty and positive")
    rng = np.random.default_rng(seed)
    theta = rng.dirichlet(hyper.alpha, size=len(doc_lengths))
    docs = []
    for d, length in enumerate(doc_lengths):
        z = _sample_rows_categorical(np.broadcast_to(theta[d], (length, hyper.num_topics)), rng.random(length))
        w = _sample_rows_categorical(model.phi[z], rng.random(length))
        docs.append(Document(w, doc_id=f"d{d}"))
    return docs


def gibbs_conditional(
    state: AssignmentState, hyper: Hyperparams, corpus: Corpus, token: tuple[int, int]
) -> np.ndarray:
    """Collapsed Gibbs conditional for one token, with that token's counts removed.

    Returns the normalized length-T probability vector
    ``(n_dt + alpha_t) * (n_tw + beta_w) / (sum_w' n_tw' + beta_w')``.
    """
    d, i = token
    if not (0 <= d < corpus.num_docs):
        raise ParameterError(f"document index {d} out of range")
    doc = corpus.documents[d]
    if not (0 <= i < len(doc)):
        raise ParameterError(f"token position {i} out of range for document {d}")
    w = int(doc.tokens[i])
    t_cur = int(state.z[d][i])
    removed = np.zeros(hyper.num_topics)
    removed[t_cur] = 1.0
    doc_part = state.doc_topic[d] - removed + hyper.alpha
    word_part = (state.topic_word[:, w] - removed + hyper.beta[w]) / (
        state.topic_totals - removed + hyper.beta_sum
    )
    scores = doc_part * word_part
    return scores / scores.sum()


def topics_from_counts(topic_word: np.ndarray, beta: np.ndarray) -> TopicModel:
    """Posterior-mean topic estimate from topic-word counts: (n_tw + beta_w) / row sum."""
    smoothed = topic_word + beta
    return TopicModel(smoothed / smoothed.sum(axis=1, keepdims=True))


def gibbs_fit(
    corpus: Corpus, hyper: Hyperparams, iterations: int, seed: int
) -> tuple[AssignmentState, TopicModel]:
    """Collapsed Gibbs sampling over token-topic labels, full sweeps in corpus order.

    Labels start uniformly at random.  Returns the final state together with
    the posterior-mean topic estimate derived from the final counts.
    """
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    if corpus.num_docs == 0 or corpus.total_words == 0:
        raise ParameterError("cannot fit an empty corpus")
    T = hyper.num_topics
    rng = np.random.default_rng(seed)

    tokens = [doc.tokens.tolist() for doc in corpus.documents]
    z = [rng.integers(0, T, size=len(doc)).tolist() for doc in corpus.documents]
    ndt = [[0] * T for _ in range(corpus.num_docs)]
    ntw = [[0] * len(corpus.vocabulary) for _ in range(T)]
    mt = [0] * T
    for d, (ws, zs) in enumerate(zip(tokens, z)):
        for w, t in zip(ws, zs):
            ndt[d][t] += 1
            ntw[t][w] += 1
            mt[t] += 1

    alpha = hyper.alpha.tolist()
    beta = hyper.beta.tolist()
    b_sum = hyper.beta_sum
    n = corpus.total_words
    scores = [0.0] * T
    topic_range = range(T)

    for _ in range(iterations):
        u = rng.random(n)
        k = 0
        for d, ws in enumerate(tokens):
            ndt_d = ndt[d]
            z_d = z[d]
            for j, w in enumerate(ws):
                t = z_d[j]
                ndt_d[t] -= 1
                ntw[t][w] -= 1
                mt[t] -= 1
                total = 0.0
                for t2 in topic_range:
                    s = (ndt_d[t2] + alpha[t2]) * (ntw[t2][w] + beta[w]) / (mt[t2] + b_sum)
                    scores[t2] = s
                    total += s
                r = u[k] * total
                k += 1
                acc = 0.0
                for t2 in topic_range:
                    acc += scores[t2]
                    if r < acc:
                        break
                z_d[j] = t2
                ndt_d[t2] += 1
                ntw[t2][w] += 1
                mt[t2] += 1

    state = AssignmentState.from_assignments(corpus, [np.array(zd, dtype=np.int64) for zd in z], T)
    return state, topics_from_counts(state.topic_word, hyper.beta)


def log_word_likelihood(docs: Sequence[Document], z: Sequence[np.ndarray], model: TopicModel) -> float:
    """``sum_i log phi[z_i, w_i]`` over every token; -inf if any assigned entry is 0."""
    if len(docs) != len(z):
        raise ParameterError("one assignment array per document required")
    total = 0.0
    with np.errstate(divide="ignore"):
        log_phi = np.log(model.phi)
    for doc, zd in zip(docs, z):
        zd = np.asarray(zd, dtype=np.int64)
        if zd.shape != doc.tokens.shape:
            raise ParameterError("assignment must cover every token")
        if len(zd):
            total += float(log_phi[zd, doc.tokens].sum())
    return total
