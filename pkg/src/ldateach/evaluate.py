"""Learner-error experiment: teaching-generated vs randomly generated documents.

For each document-set size and replication, a random set is drawn from the
generative process conditioned on the true topics, a teaching set is the end
state of a pseudo-marginal chain started at that random set, a collapsed
Gibbs learner is fit on each, and the inferred topics are compared with the
truth by sum squared error minimized over topic-label permutations.
"""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .importance import EstimatorConfig
from .lda import (
    Corpus,
    Hyperparams,
    ParameterError,
    TopicModel,
    Vocabulary,
    gibbs_fit,
    sample_documents,
)
from .teach import ProposalConfig, derive_seed, pmmh_generate

__all__ = [
    "ExperimentConfig",
    "ErrorRecord",
    "min_sse_over_permutations",
    "run_learning_experiment",
    "write_error_records_csv",
]

logger = logging.getLogger(__name__)

_MAX_PERMUTATION_TOPICS = 8


def min_sse_over_permutations(inferred: TopicModel, truth: TopicModel) -> float:
    """Sum squared error between topic matrices, minimized over all row
    permutations of the inferred model (label switching is free)."""
    if inferred.phi.shape != truth.phi.shape:
        raise ParameterError("models must share topic count and vocabulary size")
    t = truth.num_topics
    if t > _MAX_PERMUTATION_TOPICS:
        raise ParameterError(
            f"brute-force permutation search is limited to {_MAX_PERMUTATION_TOPICS} topics, got {t}"
        )
    # pairwise[i, j] = squared distance between truth row i and inferred row j
    diff = truth.phi[:, None, :] - inferred.phi[None, :, :]
    pairwise = np.einsum("ijk,ijk->ij", diff, diff)
    best = np.inf
    for perm in itertools.permutations(range(t)):
        sse = pairwise[range(t), perm].sum()
        if sse < best:
            best = sse
    return float(best)


@dataclass(frozen=True)
class ExperimentConfig:
    true_model: TopicModel
    hyper: Hyperparams
    doc_counts: tuple[int, ...] = (1, 2, 3, 4)
    doc_length: int = 20
    replications: int = 64
    gibbs_iterations: int = 1000
    pmmh_steps: int = 500
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    seed: int = 0

    def __post_init__(self):
        if self.replications < 1 or self.doc_length < 1:
            raise ParameterError("replications and doc_length must be >= 1")
        if not self.doc_counts or any(c < 1 for c in self.doc_counts):
            raise ParameterError("doc_counts must be a nonempty sequence of positive counts")


@dataclass(frozen=True)
class ErrorRecord:
    condition: str  # "teaching" or "random"
    num_docs: int
    replication: int
    sse: float


def _fit_and_score(docs, config: ExperimentConfig, fit_seed: int) -> float:
    corpus = Corpus(list(docs), Vocabulary.default(config.hyper.vocab_size))
    _, inferred = gibbs_fit(corpus, config.hyper, config.gibbs_iterations, seed=fit_seed)
    return min_sse_over_permutations(inferred, config.true_model)


def _one_replication(args) -> tuple[ErrorRecord, ErrorRecord]:
    config, num_docs, rep = args
    base = derive_seed(config.seed, num_docs, rep)
    random_docs = sample_documents(
        config.true_model, config.hyper, [config.doc_length] * num_docs, seed=derive_seed(base, 0)
    )
    chain = pmmh_generate(
        random_docs,
        config.true_model,
        config.hyper,
        iterations=config.pmmh_steps,
        proposal=config.proposal,
        config=config.estimator,
        seed=derive_seed(base, 1),
    )
    teaching_docs = chain[-1].docs
    random_sse = _fit_and_score(random_docs, config, fit_seed=derive_seed(base, 2))
    teaching_sse = _fit_and_score(teaching_docs, config, fit_seed=derive_seed(base, 3))
    return (
        ErrorRecord("teaching", num_docs, rep, teaching_sse),
        ErrorRecord("random", num_docs, rep, random_sse),
    )


def run_learning_experiment(config: ExperimentConfig, workers: int = 1) -> list[ErrorRecord]:
    """Run every (document count, replication) cell and return one record per
    condition per cell, ordered by (condition, num_docs, replication)."""
    tasks = [
        (config, num_docs, rep)
        for num_docs in config.doc_counts
        for rep in range(config.replications)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = []
            for k, pair in enumerate(pool.map(_one_replication, tasks, chunksize=1)):
                pairs.append(pair)
                if (k + 1) % 16 == 0:
                    logger.info("learning experiment: %d/%d replications", k + 1, len(tasks))
    else:
        pairs = []
        for k, task in enumerate(tasks):
            pairs.append(_one_replication(task))
            if (k + 1) % 16 == 0:
                logger.info("learning experiment: %d/%d replications", k + 1, len(tasks))
    records = [rec for pair in pairs for rec in pair]
    records.sort(key=lambda r: (r.condition, r.num_docs, r.replication))
    return records


def write_error_records_csv(records: Sequence[ErrorRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "num_docs", "replication", "sse"])
        for r in records:
            writer.writerow([r.condition, r.num_docs, r.replication, repr(r.sse)])
