"""Teaching scores and teaching-document generation.

A document set's teaching score is the log ratio of the fixed-topic
likelihood (times the topic prior density) to the marginal likelihood.  Both
halves can be computed exactly by enumeration on small problems or estimated
by importance sampling.  Document sets are generated from the teaching
distribution with pseudo-marginal Metropolis-Hastings: proposals flip a few
words uniformly, each proposal is scored with a fresh noisy estimate, and
the incumbent's estimate is retained untouched across rejections -- the
property that keeps the noisy chain exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exact import _assignment_log_sums
from .importance import (
    EstimatorConfig,
    WeightedEstimate,
    estimate_marginal,
    estimate_numerator,
    estimate_subset_numerator,
)
from .lda import Document, Hyperparams, ParameterError, TopicModel, log_model_prior_density

__all__ = [
    "SubsetSpec",
    "TeachingScore",
    "ProposalConfig",
    "ChainState",
    "derive_seed",
    "teaching_score",
    "subset_teaching_score",
    "pmmh_generate",
    "write_chain_trace",
]


def derive_seed(seed: int, *tags: int) -> int:
    """Stable child seed for (master seed, lineage tags); independent streams."""
    return int(np.random.SeedSequence((seed, *tags)).generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True)
class SubsetSpec:
    """The topic indices a teaching score should target."""

    target_topics: tuple[int, ...]

    def __post_init__(self):
        topics = tuple(sorted(set(int(t) for t in self.target_topics)))
        if not topics:
            raise ParameterError("target_topics must be nonempty")
        object.__setattr__(self, "target_topics", topics)

    def validate_against(self, num_topics: int) -> None:
        if self.target_topics[0] < 0 or self.target_topics[-1] >= num_topics:
            raise ParameterError(f"target_topics outside [0, {num_topics})")


@dataclass
class TeachingScore:
    """Log numerator and denominator of the teaching ratio, with estimator
    diagnostics when the parts were estimated rather than enumerated."""

    log_numerator: float
    log_denominator: float
    numerator_diag: WeightedEstimate | None = None
    denominator_diag: WeightedEstimate | None = None

    @property
    def log_score(self) -> float:
        return self.log_numerator - self.log_denominator


@dataclass(frozen=True)
class ProposalConfig:
    """Word-flip proposal: each of ``flips_per_step`` flips picks a uniformly
    random token position and resamples its word uniformly over the
    vocabulary (a symmetric kernel).  ``None`` means 5% of the tokens,
    at least one."""

    flips_per_step: int | None = None

    def resolve(self, total_tokens: int) -> int:
        k = self.flips_per_step
        if k is None:
            k = max(1, math.ceil(0.05 * total_tokens))
        if not (1 <= k <= total_tokens):
            raise ParameterError(f"flips_per_step must be in [1, {total_tokens}]")
        return k


@dataclass
class ChainState:
    """One chain step: the incumbent documents, the retained (never
    refreshed) score estimate attached to them, and the step's outcome."""

    docs: list[Document]
    log_score: float
    step: int
    accepted: bool
    estimator_seed: int


def _score_parts(
    docs: Sequence[Document],
    model: TopicModel,
    hyper: Hyperparams,
    subset: SubsetSpec | None,
    config: EstimatorConfig,
    seed: int,
    exact: bool,
) -> TeachingScore:
    if exact:
        targets = None if subset is None else subset.target_topics
        log_den, log_num = _assignment_log_sums(docs, hyper, phi=model.phi, target_topics=targets)
        log_num += log_model_prior_density(model, hyper, topics=targets)
        return TeachingScore(log_numerator=log_num, log_denominator=log_den)
    if subset is None:
        num = estimate_numerator(docs, model, hyper, config, seed=derive_seed(seed, 0))
    else:
        num = estimate_subset_numerator(
            docs, model, subset.target_topics, hyper, config, seed=derive_seed(seed, 0)
        )
    den = estimate_marginal(docs, hyper, config, seed=derive_seed(seed, 1))
    return TeachingScore(
        log_numerator=num.log_estimate,
        log_denominator=den.log_estimate,
        numerator_diag=num,
        denominator_diag=den,
    )


def teaching_score(
    docs: Sequence[Document],
    model: TopicModel,
    hyper: Hyperparams,
    config: EstimatorConfig | None = None,
    seed: int = 0,
    exact: bool = False,
) -> TeachingScore:
    """Teaching score of a document set against the full topic model.

    With ``exact`` both halves are enumerated (subject to the enumeration
    budget); otherwise both are importance-sampled under ``config`` with
    seeds derived from ``seed``.
    """
    return _score_parts(docs, model, hyper, None, config or EstimatorConfig(), seed, exact)


def subset_teaching_score(
    docs: Sequence[Document],
    model: TopicModel,
    subset: SubsetSpec,
    hyper: Hyperparams,
    config: EstimatorConfig | None = None,
    seed: int = 0,
    exact: bool = False,
) -> TeachingScore:
    """Teaching score targeting a subset of topics.

    The numerator's prior density covers the target rows only and words
    assigned to non-target topics keep their collapsed word terms; the
    denominator is the same marginal likelihood as the full-model score.
    An improper subset (all topics) reduces to :func:`teaching_score`.
    """
    subset.validate_against(model.num_topics)
    return _score_parts(docs, model, hyper, subset, config or EstimatorConfig(), seed, exact)


def pmmh_generate(
    initial_docs: Sequence[Document],
    model: TopicModel,
    hyper: Hyperparams,
    *,
    iterations: int,
    subset: SubsetSpec | None = None,
    proposal: ProposalConfig | None = None,
    config: EstimatorConfig | None = None,
    seed: int = 0,
    exact: bool = False,
    recompute_incumbent: bool = False,
) -> list[ChainState]:
    """Generate document sets from the teaching distribution.

    Metropolis-Hastings over token sequences with the symmetric word-flip
    proposal, so a proposal is accepted with probability
    ``min(1, exp(proposed - retained))``.  Scores may be exact or noisy
    estimates; in the latter case a fresh estimator seed is derived per
    proposal and the incumbent keeps the estimate it was accepted with.
    Document lengths are fixed along the chain.

    ``recompute_incumbent`` deliberately re-estimates the incumbent's score
    before every proposal.  That breaks the retained-estimate rule and
    measurably biases the chain; it exists only so tests can demonstrate the
    failure mode.  Returns ``iterations + 1`` states, the initial state first.
    """
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    docs = [Document(d.tokens.copy(), doc_id=d.doc_id, title=d.title) for d in initial_docs]
    total = sum(len(d) for d in docs)
    if total == 0:
        raise ParameterError("initial documents must contain at least one token")
    if subset is not None:
        subset.validate_against(model.num_topics)
    proposal = proposal or ProposalConfig()
    flips = proposal.resolve(total)
    config = config or EstimatorConfig()
    vocab_size = hyper.vocab_size
    offsets = np.cumsum([0] + [len(d) for d in docs])

    chain_ss, score_ss = np.random.SeedSequence(seed).spawn(2)
    chain_rng = np.random.default_rng(chain_ss)
    est_seeds = np.random.default_rng(score_ss).integers(0, 2**62, size=2 * iterations + 1)

    score = _score_parts(docs, model, hyper, subset, config, int(est_seeds[0]), exact).log_score
    states = [ChainState(docs, score, step=0, accepted=True, estimator_seed=int(est_seeds[0]))]

    for step in range(1, iterations + 1):
        if recompute_incumbent and not exact:
            score = _score_parts(
                docs, model, hyper, subset, config, int(est_seeds[2 * step]), exact
            ).log_score
        positions = chain_rng.integers(0, total, size=flips)
        new_words = chain_rng.integers(0, vocab_size, size=flips)
        accept_u = chain_rng.random()

        proposed = [d.tokens.copy() for d in docs]
        for pos, w in zip(positions, new_words):
            d = int(np.searchsorted(offsets, pos, side="right") - 1)
            proposed[d][pos - offsets[d]] = w
        proposed_docs = [
            Document(tok, doc_id=d.doc_id, title=d.title) for tok, d in zip(proposed, docs)
        ]
        est_seed = int(est_seeds[2 * step - 1])
        proposed_score = _score_parts(
            proposed_docs, model, hyper, subset, config, est_seed, exact
        ).log_score

        accepted = math.log(accept_u) < proposed_score - score
        if accepted:
            docs = proposed_docs
            score = proposed_score
        states.append(
            ChainState(docs, score, step=step, accepted=accepted, estimator_seed=est_seed)
        )
    return states


def write_chain_trace(states: Sequence[ChainState], vocab_size: int, path) -> None:
    """Line-delimited trace: step, accepted flag, retained log score, and the
    per-document word-count vectors of the incumbent state."""
    with open(path, "w") as fh:
        for state in states:
            record = {
                "step": state.step,
                "accepted": bool(state.accepted),
                "log_score": state.log_score,
                "doc_counts": [d.word_counts(vocab_size).tolist() for d in state.docs],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
