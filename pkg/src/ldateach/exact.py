"""Brute-force ground truth.

Exact sums over the full token-topic assignment space and exact normalized
teaching distributions over small document spaces.  Deliberately kept as a
plain enumeration (no dynamic-programming collapse) so it can serve as an
independent oracle for every estimator in the package.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .lda import (
    Document,
    Hyperparams,
    ParameterError,
    TopicModel,
    log_model_prior_density,
)

__all__ = [
    "EnumerationGuardError",
    "MAX_ASSIGNMENT_SPACE",
    "MAX_DOCUMENT_SPACE",
    "DocSpaceSpec",
    "ExactTeachingTable",
    "exact_marginal_likelihood",
    "exact_log_likelihood",
    "exact_teaching_numerator",
    "exact_subset_numerator",
    "exact_teaching_distribution",
    "write_teaching_table_csv",
]

MAX_ASSIGNMENT_SPACE = 10**8
MAX_DOCUMENT_SPACE = 10**7


class EnumerationGuardError(RuntimeError):
    """Raised when an enumeration would exceed the brute-force budget."""


def _check_assignment_guard(num_topics: int, total_tokens: int) -> None:
    space = num_topics**total_tokens
    if space > MAX_ASSIGNMENT_SPACE:
        raise EnumerationGuardError(
            f"assignment space {num_topics}^{total_tokens} = {space} exceeds "
            f"the enumeration budget of {MAX_ASSIGNMENT_SPACE}"
        )


class _LogSumAccumulator:
    """Streaming log-sum-exp: max-shifted running sum, merge-safe."""

    __slots__ = ("shift", "total")

    def __init__(self):
        self.shift = -math.inf
        self.total = 0.0

    def add(self, value: float) -> None:
        if value == -math.inf:
            return
        if value > self.shift:
            self.total = self.total * math.exp(self.shift - value) + 1.0
            self.shift = value
        else:
            self.total += math.exp(value - self.shift)

    def result(self) -> float:
        if self.total == 0.0:
            return -math.inf
        return self.shift + math.log(self.total)


def _assignment_log_sums(
    docs: Sequence[Document],
    hyper: Hyperparams,
    phi: np.ndarray | None = None,
    target_topics: Sequence[int] | None = None,
) -> tuple[float, float]:
    """One odometer pass over all T^n assignments.

    Returns ``(log_denominator_sum, log_numerator_sum)`` where the
    denominator sum is the collapsed joint summed over assignments and the
    numerator sum (when ``phi`` is given) replaces the per-topic word term
    with the fixed topic-word probabilities.  With ``target_topics``, only
    those topics take the fixed-topic word factor; the rest keep their
    collapsed Dirichlet-Categorical word term.  Incremental count updates
    keep the per-assignment cost O(1).
    """
    T = hyper.num_topics
    words = [int(w) for doc in docs for w in doc.tokens]
    doc_of = [d for d, doc in enumerate(docs) for _ in range(len(doc))]
    n = len(words)
    D = len(docs)
    _check_assignment_guard(T, n)

    is_target = [False] * T
    if phi is not None:
        targets = range(T) if target_topics is None else target_topics
        for t in targets:
            is_target[t] = True

    alpha = hyper.alpha.tolist()
    b_sum = hyper.beta_sum
    lgamma = math.lgamma
    atab = [[lgamma(k + alpha[t]) for k in range(n + 2)] for t in range(T)]
    present = sorted(set(words))
    btab = {w: [lgamma(k + hyper.beta[w]) for k in range(n + 2)] for w in present}
    bstab = [lgamma(k + b_sum) for k in range(n + 2)]
    log_phi = None
    if phi is not None:
        with np.errstate(divide="ignore"):
            log_phi = [[float(v) for v in row] for row in np.log(phi)]

    # constants outside the assignment sum; the running word term only tracks
    # words that occur in the documents (absent words cancel exactly), so the
    # lgamma(beta_w) subtraction is restricted to the same set
    doc_const = sum(
        lgamma(hyper.alpha_sum) - lgamma(len(doc) + hyper.alpha_sum) - sum(lgamma(a) for a in alpha)
        for doc in docs
    )
    present_beta_lgamma = sum(lgamma(hyper.beta[w]) for w in present)
    word_const_all = T * (lgamma(b_sum) - present_beta_lgamma)
    if phi is None:
        word_const_num = 0.0
    else:
        num_collapsed = sum(1 for t in range(T) if not is_target[t])
        word_const_num = num_collapsed * (lgamma(b_sum) - present_beta_lgamma)

    den_acc = _LogSumAccumulator()
    num_acc = _LogSumAccumulator()

    z = [0] * n
    ndt = [[0] * T for _ in range(D)]
    ntw = {w: [0] * T for w in present}
    mt = [0] * T
    for i in range(n):
        ndt[doc_of[i]][0] += 1
        ntw[words[i]][0] += 1
        mt[0] += 1

    A = sum(atab[t][ndt[d][t]] for d in range(D) for t in range(T))
    B = (
        sum(btab[w][ntw[w][t]] for w in present for t in range(T))
        - sum(bstab[mt[t]] for t in range(T))
    )
    # fixed-topic word term, split so zero entries never hit float arithmetic:
    # C sums finite log phi values, impossible counts tokens placed on a
    # zero-probability entry (any such token zeroes the whole term)
    C = 0.0
    impossible = 0
    Bn = 0.0  # collapsed word term restricted to non-target topics
    if phi is not None:
        for i in range(n):
            if is_target[0]:
                if log_phi[0][words[i]] == -math.inf:
                    impossible += 1
                else:
                    C += log_phi[0][words[i]]
        for t in range(T):
            if not is_target[t]:
                Bn += sum(btab[w][ntw[w][t]] for w in present) - bstab[mt[t]]

    while True:
        den_acc.add(A + B)
        if phi is not None and impossible == 0:
            num_acc.add(A + C + Bn)
        i = 0
        while i < n:
            d = doc_of[i]
            w = words[i]
            wtab = btab[w]
            cnt_w = ntw[w]
            t = z[i]
            # remove token i from topic t
            A += atab[t][ndt[d][t] - 1] - atab[t][ndt[d][t]]
            delta_b = wtab[cnt_w[t] - 1] - wtab[cnt_w[t]] - bstab[mt[t] - 1] + bstab[mt[t]]
            B += delta_b
            ndt[d][t] -= 1
            cnt_w[t] -= 1
            mt[t] -= 1
            if phi is not None:
                if is_target[t]:
                    if log_phi[t][w] == -math.inf:
                        impossible -= 1
                    else:
                        C -= log_phi[t][w]
                else:
                    Bn += delta_b
            t2 = t + 1
            if t2 == T:
                t2 = 0
            z[i] = t2
            A += atab[t2][ndt[d][t2] + 1] - atab[t2][ndt[d][t2]]
            delta_b = wtab[cnt_w[t2] + 1] - wtab[cnt_w[t2]] - bstab[mt[t2] + 1] + bstab[mt[t2]]
            B += delta_b
            ndt[d][t2] += 1
            cnt_w[t2] += 1
            mt[t2] += 1
            if phi is not None:
                if is_target[t2]:
                    if log_phi[t2][w] == -math.inf:
                        impossible += 1
                    else:
                        C += log_phi[t2][w]
                else:
                    Bn += delta_b
            if t2 != 0:
                break
            i += 1
        else:
            break

    log_den = den_acc.result() + doc_const + word_const_all
    log_num = num_acc.result() + doc_const + word_const_num
    return log_den, log_num


def exact_marginal_likelihood(docs: Sequence[Document], hyper: Hyperparams) -> float:
    """Exact log marginal likelihood of the documents under the LDA prior.

    Sums the collapsed joint over every one of the T^n token-topic
    assignments; refuses beyond the enumeration budget.
    """
    log_den, _ = _assignment_log_sums(docs, hyper)
    return log_den


def exact_log_likelihood(docs: Sequence[Document], model: TopicModel, hyper: Hyperparams) -> float:
    """Exact log likelihood of the documents given fixed topics, assignments summed out."""
    _, log_num = _assignment_log_sums(docs, hyper, phi=model.phi)
    return log_num


def exact_teaching_numerator(docs: Sequence[Document], model: TopicModel, hyper: Hyperparams) -> float:
    """Exact log teaching numerator: topic prior density plus the fixed-topic likelihood sum."""
    return log_model_prior_density(model, hyper) + exact_log_likelihood(docs, model, hyper)


def exact_subset_numerator(
    docs: Sequence[Document], model: TopicModel, target_topics: Sequence[int], hyper: Hyperparams
) -> float:
    """Exact log teaching numerator for a topic subset.

    Words assigned to target topics contribute fixed-topic probabilities;
    words assigned to the remaining topics keep their collapsed
    Dirichlet-Categorical terms.  The prior density covers target rows only.
    """
    targets = sorted(set(int(t) for t in target_topics))
    if not targets or targets[0] < 0 or targets[-1] >= hyper.num_topics:
        raise ParameterError("target topics must be a nonempty subset of the model's topics")
    _, log_num = _assignment_log_sums(docs, hyper, phi=model.phi, target_topics=targets)
    return log_model_prior_density(model, hyper, topics=targets) + log_num


@dataclass(frozen=True)
class DocSpaceSpec:
    """A small space of count-vector documents: ``num_docs`` documents of
    ``doc_length`` words over a ``vocab_size``-word vocabulary, order within
    a document ignored."""

    num_docs: int
    doc_length: int
    vocab_size: int

    def __post_init__(self):
        if self.num_docs < 1 or self.doc_length < 1 or self.vocab_size < 1:
            raise ParameterError("num_docs, doc_length, and vocab_size must be positive")

    @property
    def per_doc_size(self) -> int:
        return math.comb(self.doc_length + self.vocab_size - 1, self.vocab_size - 1)

    @property
    def size(self) -> int:
        return self.per_doc_size**self.num_docs


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All nonnegative integer vectors of the given length summing to total."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _representative_tokens(counts: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(counts), dtype=np.int64), counts)


def _log_multinomial_coeff(counts: Sequence[int]) -> float:
    return math.lgamma(sum(counts) + 1) - sum(math.lgamma(c + 1) for c in counts)


@dataclass
class ExactTeachingTable:
    """Normalized teaching and likelihood probabilities over a document space.

    Keys are count tuples for single-document spaces and tuples of count
    tuples otherwise.  ``sequence_multiplicity`` records whether each entry
    was weighted by the number of distinct token sequences sharing its
    counts before normalizing.
    """

    space: DocSpaceSpec
    keys: tuple
    teaching_probs: np.ndarray
    likelihood_probs: np.ndarray
    log_normalizer: float
    log_likelihood_normalizer: float
    sequence_multiplicity: bool

    @property
    def entries(self) -> dict:
        return dict(zip(self.keys, self.teaching_probs))

    @property
    def likelihood_entries(self) -> dict:
        return dict(zip(self.keys, self.likelihood_probs))


def exact_teaching_distribution(
    space: DocSpaceSpec,
    model: TopicModel,
    hyper: Hyperparams,
    sequence_multiplicity: bool = False,
) -> ExactTeachingTable:
    """Exact normalized teaching distribution over a small document space.

    For every count-vector document set in the space, scores one
    representative token sequence per count vector (the sequence probability
    depends only on the counts), normalizes the teaching ratio over the
    space, and does the same for the plain fixed-topic likelihood.  With
    ``sequence_multiplicity`` each entry is additionally weighted by its
    multinomial coefficient, which turns the table into the aggregate of the
    uniform sequence-space density by count vector.
    """
    if space.vocab_size != hyper.vocab_size or model.vocab_size != hyper.vocab_size:
        raise ParameterError("document space, model, and hyperparameters disagree on vocabulary size")
    if space.size > MAX_DOCUMENT_SPACE:
        raise EnumerationGuardError(
            f"document space of size {space.size} exceeds the budget of {MAX_DOCUMENT_SPACE}"
        )
    _check_assignment_guard(hyper.num_topics, space.num_docs * space.doc_length)

    per_doc = list(_compositions(space.doc_length, space.vocab_size))
    keys = []
    log_teach = np.empty(len(per_doc) ** space.num_docs)
    log_like = np.empty_like(log_teach)
    for k, combo in enumerate(itertools.product(per_doc, repeat=space.num_docs)):
        docs = [Document(_representative_tokens(c)) for c in combo]
        log_den, log_num = _assignment_log_sums(docs, hyper, phi=model.phi)
        log_num += log_model_prior_density(model, hyper)
        weight = sum(_log_multinomial_coeff(c) for c in combo) if sequence_multiplicity else 0.0
        log_teach[k] = log_num - log_den + weight
        log_like[k] = log_num + weight
        keys.append(combo[0] if space.num_docs == 1 else combo)

    def _normalize(values: np.ndarray) -> tuple[np.ndarray, float]:
        shift = values.max()
        raw = np.exp(values - shift)
        total = raw.sum()
        return raw / total, float(shift + math.log(total))

    teaching, log_z = _normalize(log_teach)
    likelihood, log_zl = _normalize(log_like)
    return ExactTeachingTable(
        space=space,
        keys=tuple(keys),
        teaching_probs=teaching,
        likelihood_probs=likelihood,
        log_normalizer=log_z,
        log_likelihood_normalizer=log_zl,
        sequence_multiplicity=sequence_multiplicity,
    )


def write_teaching_table_csv(table: ExactTeachingTable, path) -> None:
    """One row per count vector: counts, barycenter coordinates, teaching
    probability, likelihood, and their difference.  Single-document spaces only."""
    if table.space.num_docs != 1:
        raise ParameterError("CSV emission is defined for single-document spaces")
    w = table.space.vocab_size
    length = table.space.doc_length
    header = (
        [f"count_{j}" for j in range(w)]
        + [f"barycenter_{j}" for j in range(w)]
        + ["teaching_probability", "likelihood", "difference"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for key, teach, like in zip(table.keys, table.teaching_probs, table.likelihood_probs):
            bary = [c / length for c in key]
            writer.writerow(
                [*key, *(repr(b) for b in bary), repr(float(teach)), repr(float(like)), repr(float(teach - like))]
            )
