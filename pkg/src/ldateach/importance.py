"""Importance-sampling estimators for the teaching ratio's two halves.

Both the marginal likelihood (the ratio's denominator) and the fixed-topic
likelihood sum (its numerator) are estimated with either a uniform proposal
over token-topic assignments or a sequential proposal that extends the
assignment one token at a time from the collapsed conditional.  Samples are
mutually independent: sample ``i`` always consumes the same slice of a
counter-based random stream, so batched, serial, and fan-out execution give
identical results for one master seed.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .exact import exact_marginal_likelihood, exact_teaching_numerator
from .lda import (
    Document,
    Hyperparams,
    ParameterError,
    TopicModel,
    log_model_prior_density,
    sample_generative,
)

__all__ = [
    "ErrorTarget",
    "EstimatorConfig",
    "WeightedEstimate",
    "ess",
    "log_dispersion_ess",
    "relative_error",
    "estimate_marginal",
    "estimate_numerator",
    "estimate_subset_numerator",
    "run_to_target",
    "EstimatorComparison",
    "compare_estimators",
    "write_comparison_csv",
    "ScalingRecord",
    "scaling_benchmark",
    "write_scaling_csv",
]

logger = logging.getLogger(__name__)

_BATCH_CAP = 8192  # vectorization width; never affects results, only memory


@dataclass(frozen=True)
class ErrorTarget:
    """Adaptive sampling target: draw batches until the relative error drops
    below ``relative_error`` or ``max_samples`` is reached."""

    relative_error: float = 0.05
    batch_size: int = 256
    max_samples: int = 100_000

    def __post_init__(self):
        if self.relative_error <= 0.0:
            raise ParameterError("relative_error target must be positive")
        if self.batch_size < 2:
            raise ParameterError("batch_size must be >= 2")
        if self.max_samples < self.batch_size:
            raise ParameterError("max_samples must be at least one batch")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "sequential"
    num_samples: int = 1000
    target: ErrorTarget | None = None

    def __post_init__(self):
        if self.kind not in ("sequential", "uniform"):
            raise ParameterError(f"unknown estimator kind {self.kind!r}")
        if self.num_samples < 1:
            raise ParameterError("num_samples must be >= 1")


@dataclass
class WeightedEstimate:
    """A log estimate together with its importance weights and diagnostics.

    ``log_estimate`` is the log mean of the weights; ``ess`` and
    ``relative_error`` are computed from the same weight vector (the latter
    is NaN for fewer than two samples).
    """

    log_estimate: float
    log_weights: np.ndarray
    num_samples: int
    ess: float
    relative_error: float
    seed: int
    converged: bool = True


def _log_mean_exp(log_weights: np.ndarray) -> float:
    return float(logsumexp(log_weights) - math.log(len(log_weights)))


def ess(log_weights) -> float:
    """Effective sample size: M / (1 + variance of the mean-one scaled weights).

    Evaluated from log weights as ``exp(2 lse(lw) - lse(2 lw))``, which is
    the same quantity without leaving log space.  Equals M exactly when all
    weights are equal and drops toward 1 as the weight mass concentrates.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size < 1:
        raise ParameterError("need at least one weight")
    if np.all(np.isneginf(lw)):
        raise ParameterError("all weights are zero; the estimate is undefined")
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def log_dispersion_ess(log_weights) -> float:
    """ESS variant that measures weight dispersion on the log scale:
    ``M / (1 + sample variance of log weights)``.

    Agrees with :func:`ess` when the weights are nearly flat but is far more
    forgiving of heavy-tailed weight distributions; reference values for the
    estimator-comparison benchmark follow this convention.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size < 2:
        raise ParameterError("need at least two weights")
    if not np.all(np.isfinite(lw)):
        raise ParameterError("log-scale dispersion requires finite log weights")
    return float(lw.size / (1.0 + lw.var(ddof=1)))


def relative_error(log_weights) -> float:
    """Relative Monte Carlo error of the importance-weight mean:
    ``sqrt((mean(w^2) / mean(w)^2 - 1) / M)``, scale-invariant in w."""
    lw = np.asarray(log_weights, dtype=float)
    m = lw.size
    if m < 2:
        raise ParameterError("relative error needs at least two weights")
    if np.all(np.isneginf(lw)):
        raise ParameterError("all weights are zero; relative error undefined")
    log_ratio = logsumexp(2.0 * lw) - 2.0 * logsumexp(lw) + math.log(m)
    return math.sqrt(max(math.expm1(log_ratio), 0.0) / m)


class _TokenStream:
    """Flattened token view of a document set, with the distinct-word
    compression that keeps per-sample count tables small."""

    def __init__(self, docs: Sequence[Document]):
        if len(docs) == 0:
            raise ParameterError("need at least one document")
        self.words = np.concatenate([d.tokens for d in docs]) if docs else np.empty(0, np.int64)
        if self.words.size == 0:
            raise ParameterError("documents must contain at least one token")
        self.doc_of = np.concatenate([np.full(len(d), j) for j, d in enumerate(docs)])
        self.pos_in_doc = np.concatenate([np.arange(len(d)) for d in docs])
        self.uniq, self.compressed = np.unique(self.words, return_inverse=True)
        self.n = int(self.words.size)


def _uniform_block(seed: int, first_sample: int, num_samples: int, num_tokens: int) -> np.ndarray:
    """Uniforms for samples [first_sample, first_sample + num_samples), one per token.

    Each sample owns a fixed-width slice of a single Philox stream, so the
    block split never changes which numbers a sample sees.
    """
    pad = 4 * math.ceil(num_tokens / 4)
    bits = np.random.Philox(seed)
    bits.advance(first_sample * pad // 4)
    return np.random.Generator(bits).random((num_samples, pad))[:, :num_tokens]


def _sample_log_weights(
    stream: _TokenStream,
    hyper: Hyperparams,
    *,
    kind: str,
    mode: str,
    phi: np.ndarray | None,
    target_mask: np.ndarray | None,
    num_samples: int,
    seed: int,
    first_sample: int = 0,
    return_details: bool = False,
):
    """Draw assignment samples and their log importance weights.

    ``mode`` selects the integrand: "marginal" keeps the collapsed word term,
    "numerator" replaces it with fixed-topic probabilities, and "subset" does
    so for target topics only.  ``kind`` selects the proposal.  The weight of
    a sequential sample is accumulated as the product of per-token proposal
    normalizers, which equals integrand/proposal exactly.
    """
    T = hyper.num_topics
    alpha = hyper.alpha
    a_sum = hyper.alpha_sum
    b_sum = hyper.beta_sum
    n = stream.n
    log_T = math.log(T)

    all_weights = np.empty(num_samples)
    details_z = np.empty((num_samples, n), dtype=np.int64) if return_details else None
    details_q = np.zeros(num_samples) if return_details else None

    track_counts = mode in ("marginal", "subset")
    phi_cols = None
    if mode in ("numerator", "subset"):
        with np.errstate(divide="ignore"):
            phi_cols = np.asarray(phi, dtype=float)[:, stream.words].T  # (n, T)

    for start in range(0, num_samples, _BATCH_CAP):
        B = min(_BATCH_CAP, num_samples - start)
        U = _uniform_block(seed, first_sample + start, B, n)
        rows = np.arange(B)
        doc_topic = np.zeros((B, T))
        log_w = np.zeros(B)
        if track_counts:
            topic_word = np.zeros((B, T, stream.uniq.size))
            topic_tot = np.zeros((B, T))
        if return_details:
            log_q = np.zeros(B)

        for i in range(n):
            if i > 0 and stream.doc_of[i] != stream.doc_of[i - 1]:
                doc_topic[:] = 0.0
            if mode == "marginal":
                wf = (topic_word[:, :, stream.compressed[i]] + hyper.beta[stream.words[i]]) / (
                    topic_tot + b_sum
                )
            elif mode == "numerator":
                wf = phi_cols[i]
            else:  # subset
                collapsed = (topic_word[:, :, stream.compressed[i]] + hyper.beta[stream.words[i]]) / (
                    topic_tot + b_sum
                )
                wf = np.where(target_mask, phi_cols[i], collapsed)
            scores = (doc_topic + alpha) * wf
            log_denom = math.log(stream.pos_in_doc[i] + a_sum)
            uniform_step = kind == "uniform" or (mode == "marginal" and i == 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                if uniform_step:
                    t = np.minimum((U[:, i] * T).astype(np.int64), T - 1)
                    log_w += np.log(scores[rows, t]) - log_denom + log_T
                    if return_details:
                        log_q -= log_T
                else:
                    totals = scores.sum(axis=1)
                    cum = np.cumsum(scores, axis=1)
                    t = (cum < (U[:, i] * totals)[:, None]).sum(axis=1)
                    log_w += np.log(totals) - log_denom
                    if return_details:
                        log_q += np.log(scores[rows, t]) - np.log(totals)
            doc_topic[rows, t] += 1.0
            if track_counts:
                topic_word[rows, t, stream.compressed[i]] += 1.0
                topic_tot[rows, t] += 1.0
            if return_details:
                details_z[start : start + B, i] = t

        all_weights[start : start + B] = log_w
        if return_details:
            details_q[start : start + B] = log_q

    if return_details:
        return all_weights, details_z, details_q
    return all_weights


def _finish_estimate(log_weights: np.ndarray, seed: int, converged: bool = True) -> WeightedEstimate:
    m = len(log_weights)
    degenerate = bool(np.all(np.isneginf(log_weights)))
    return WeightedEstimate(
        log_estimate=-math.inf if degenerate else _log_mean_exp(log_weights),
        log_weights=log_weights,
        num_samples=m,
        ess=math.nan if degenerate else ess(log_weights),
        relative_error=math.nan if (m < 2 or degenerate) else relative_error(log_weights),
        seed=seed,
        converged=converged,
    )


def estimate_marginal(
    docs: Sequence[Document], hyper: Hyperparams, config: EstimatorConfig, seed: int
) -> WeightedEstimate:
    """Importance-sampled log marginal likelihood of the documents.

    The sequential proposal draws the first token's topic uniformly and each
    later topic from the collapsed conditional restricted to the tokens
    already placed; the uniform proposal draws every topic independently.
    """
    stream = _TokenStream(docs)
    lw = _sample_log_weights(
        stream, hyper, kind=config.kind, mode="marginal", phi=None, target_mask=None,
        num_samples=config.num_samples, seed=seed,
    )
    return _finish_estimate(lw, seed)


def estimate_numerator(
    docs: Sequence[Document], model: TopicModel, hyper: Hyperparams, config: EstimatorConfig, seed: int
) -> WeightedEstimate:
    """Importance-sampled log teaching numerator under fixed topics.

    The sequential proposal scores each topic by (doc count + alpha) times
    the fixed topic-word probability.  The topic-prior density constant is
    folded into every weight, so the log estimate is directly comparable to
    the exact numerator.
    """
    const = log_model_prior_density(model, hyper)
    stream = _TokenStream(docs)
    lw = _sample_log_weights(
        stream, hyper, kind=config.kind, mode="numerator", phi=model.phi, target_mask=None,
        num_samples=config.num_samples, seed=seed,
    )
    return _finish_estimate(lw + const, seed)


def estimate_subset_numerator(
    docs: Sequence[Document],
    model: TopicModel,
    target_topics: Sequence[int],
    hyper: Hyperparams,
    config: EstimatorConfig,
    seed: int,
) -> WeightedEstimate:
    """Teaching-numerator estimate for a topic subset: target topics take the
    fixed-topic word factor, the rest keep the collapsed predictive."""
    targets = sorted(set(int(t) for t in target_topics))
    if not targets or targets[0] < 0 or targets[-1] >= hyper.num_topics:
        raise ParameterError("target topics must be a nonempty subset of the model's topics")
    mask = np.zeros(hyper.num_topics, dtype=bool)
    mask[targets] = True
    const = log_model_prior_density(model, hyper, topics=targets)
    stream = _TokenStream(docs)
    lw = _sample_log_weights(
        stream, hyper, kind=config.kind, mode="subset", phi=model.phi, target_mask=mask,
        num_samples=config.num_samples, seed=seed,
    )
    return _finish_estimate(lw + const, seed)


def run_to_target(
    docs: Sequence[Document],
    model: TopicModel | None,
    hyper: Hyperparams,
    target: ErrorTarget,
    seed: int,
    kind: str = "sequential",
) -> WeightedEstimate:
    """Draw weight batches until the relative error falls below the target.

    Estimates the marginal likelihood when ``model`` is None, the teaching
    numerator otherwise.  The error is recomputed over all accumulated
    weights after every batch; if ``max_samples`` is exhausted first, the
    returned estimate is flagged ``converged=False``.
    """
    stream = _TokenStream(docs)
    if model is None:
        mode, phi, const = "marginal", None, 0.0
    else:
        mode, phi, const = "numerator", model.phi, log_model_prior_density(model, hyper)
    chunks = []
    drawn = 0
    converged = False
    while drawn < target.max_samples:
        batch = min(target.batch_size, target.max_samples - drawn)
        chunks.append(
            _sample_log_weights(
                stream, hyper, kind=kind, mode=mode, phi=phi, target_mask=None,
                num_samples=batch, seed=seed, first_sample=drawn,
            )
        )
        drawn += batch
        lw = np.concatenate(chunks)
        if not np.all(np.isneginf(lw)) and relative_error(lw) <= target.relative_error:
            converged = True
            break
    else:
        lw = np.concatenate(chunks)
    if not converged:
        logger.warning("relative-error target %.3g not reached after %d samples", target.relative_error, drawn)
    return _finish_estimate(lw + const, seed, converged=converged)


# ---------------------------------------------------------------------------
# estimator-comparison benchmark


@dataclass
class EstimatorComparison:
    """Exact vs estimated log teaching score for one sampled document set,
    with ESS diagnostics of the marginal estimator under both proposals."""

    index: int
    exact_log_score: float
    sequential_log_score: float
    uniform_log_score: float
    sequential_marginal_ess: float
    uniform_marginal_ess: float
    sequential_marginal_log_dispersion_ess: float
    uniform_marginal_log_dispersion_ess: float


def _compare_one(args) -> EstimatorComparison:
    index, docs_per_set, doc_length, hyper, num_samples, set_seed = args
    model, _, corpus, _ = sample_generative(hyper, [doc_length] * docs_per_set, set_seed)
    docs = corpus.documents
    exact_num = exact_teaching_numerator(docs, model, hyper)
    exact_den = exact_marginal_likelihood(docs, hyper)
    out = {}
    for j, kind in enumerate(("sequential", "uniform")):
        config = EstimatorConfig(kind=kind, num_samples=num_samples)
        num = estimate_numerator(docs, model, hyper, config, seed=set_seed * 4 + 2 * j)
        den = estimate_marginal(docs, hyper, config, seed=set_seed * 4 + 2 * j + 1)
        out[kind] = (
            num.log_estimate - den.log_estimate,
            den.ess,
            log_dispersion_ess(den.log_weights) if np.all(np.isfinite(den.log_weights)) else math.nan,
        )
    return EstimatorComparison(
        index=index,
        exact_log_score=exact_num - exact_den,
        sequential_log_score=out["sequential"][0],
        uniform_log_score=out["uniform"][0],
        sequential_marginal_ess=out["sequential"][1],
        uniform_marginal_ess=out["uniform"][1],
        sequential_marginal_log_dispersion_ess=out["sequential"][2],
        uniform_marginal_log_dispersion_ess=out["uniform"][2],
    )


def compare_estimators(
    hyper: Hyperparams,
    num_sets: int = 512,
    docs_per_set: int = 2,
    doc_length: int = 5,
    num_samples: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> list[EstimatorComparison]:
    """Sample document sets from the generative process and score each with
    the exact oracle, the sequential sampler, and the uniform sampler."""
    base = int(np.random.SeedSequence(seed).generate_state(1, np.uint32)[0])
    tasks = [
        (k, docs_per_set, doc_length, hyper, num_samples, base + 7919 * k) for k in range(num_sets)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_one, tasks, chunksize=8))
    else:
        results = []
        for task in tasks:
            results.append(_compare_one(task))
            if (task[0] + 1) % 64 == 0:
                logger.info("estimator comparison: %d/%d sets", task[0] + 1, num_sets)
    return results


_COMPARISON_COLUMNS = [
    "index",
    "exact_log_score",
    "sequential_log_score",
    "uniform_log_score",
    "sequential_marginal_ess",
    "uniform_marginal_ess",
    "sequential_marginal_log_dispersion_ess",
    "uniform_marginal_log_dispersion_ess",
]


def write_comparison_csv(records: Sequence[EstimatorComparison], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COMPARISON_COLUMNS)
        for r in records:
            writer.writerow([repr(getattr(r, c)) if c != "index" else r.index for c in _COMPARISON_COLUMNS])


# ---------------------------------------------------------------------------
# sample-budget scaling benchmark


@dataclass
class ScalingRecord:
    """Mean samples required to hit a relative-error target for one
    (document length, hyperparameter) configuration."""

    num_words: int
    num_topics: int
    alpha: float
    beta: float
    m_required: int
    mean: float
    ci95_low: float
    ci95_high: float
    runs: int
    converged_runs: int


def _scaling_one(args) -> tuple[int, bool]:
    num_words, hyper, target, run_seed = args
    _, _, corpus, _ = sample_generative(hyper, [num_words], run_seed)
    est = run_to_target(corpus.documents, None, hyper, target, seed=run_seed)
    return est.num_samples, est.converged


def scaling_benchmark(
    doc_lengths: Sequence[int],
    concentrations: Sequence[tuple[float, float]],
    num_topics: int,
    vocab_size: int,
    runs: int = 128,
    target: ErrorTarget | None = None,
    seed: int = 0,
    workers: int = 1,
) -> list[ScalingRecord]:
    """Required-sample curves: documents are drawn fresh from the generative
    process per run and the marginal is estimated to the error target."""
    target = target or ErrorTarget()
    base = int(np.random.SeedSequence(seed).generate_state(1, np.uint32)[0])
    records = []
    for alpha, beta in concentrations:
        hyper = Hyperparams.symmetric(num_topics, vocab_size, alpha, beta)
        for n in doc_lengths:
            tasks = [
                (n, hyper, target, base + 104729 * len(records) + 13 * r) for r in range(runs)
            ]
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_scaling_one, tasks, chunksize=4))
            else:
                results = [_scaling_one(t) for t in tasks]
            ms = np.array([m for m, _ in results], dtype=float)
            half = 1.96 * ms.std(ddof=1) / math.sqrt(runs) if runs > 1 else 0.0
            records.append(
                ScalingRecord(
                    num_words=n,
                    num_topics=num_topics,
                    alpha=alpha,
                    beta=beta,
                    m_required=int(round(ms.mean())),
                    mean=float(ms.mean()),
                    ci95_low=float(ms.mean() - half),
                    ci95_high=float(ms.mean() + half),
                    runs=runs,
                    converged_runs=sum(1 for _, ok in results if ok),
                )
            )
            logger.info(
                "scaling: alpha=beta=%.3g n=%d mean M=%.0f", alpha, n, ms.mean()
            )
    return records


def write_scaling_csv(records: Sequence[ScalingRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "T", "alpha", "beta", "M_required", "mean", "ci95_low", "ci95_high"])
        for r in records:
            writer.writerow(
                [r.num_words, r.num_topics, repr(r.alpha), repr(r.beta), r.m_required,
                 repr(r.mean), repr(r.ci95_low), repr(r.ci95_high)]
            )
