"""Corpus ingestion and document ranking.

Raw text goes through a plain pipeline -- tokenize on non-alphanumeric
boundaries, drop stopwords, drop rare words -- into an indexed corpus, which
can then be ranked by repeated teaching-score estimates against a target
model (whole model or a topic subset), with a per-word likelihood column and
the cosine heuristic for comparison.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .importance import (
    EstimatorConfig,
    estimate_marginal,
    estimate_numerator,
    estimate_subset_numerator,
)
from .lda import (
    Corpus,
    Document,
    Hyperparams,
    ParameterError,
    TopicModel,
    Vocabulary,
    log_model_prior_density,
)
from .teach import SubsetSpec, derive_seed

__all__ = [
    "PreprocessConfig",
    "RankingRecord",
    "preprocess",
    "load_raw_corpus",
    "load_stopwords",
    "save_corpus",
    "load_corpus",
    "save_model",
    "load_model",
    "subset_target_vector",
    "cosine_teaching_heuristic",
    "rank_documents",
    "write_ranking_csv",
]

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class PreprocessConfig:
    stopwords: frozenset[str] = frozenset()
    min_count: int = 1
    lowercase: bool = True
    strip_punctuation: bool = True

    def __post_init__(self):
        if self.min_count < 1:
            raise ParameterError("min_count must be >= 1")


def _tokenize(text: str, config: PreprocessConfig) -> list[str]:
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        return _TOKEN_RE.findall(text)
    return text.split()


def preprocess(raw_docs: Sequence[tuple], config: PreprocessConfig) -> Corpus:
    """Tokenize raw ``(id, text)`` or ``(id, title, text)`` records into a corpus.

    Stopwords are removed first; then any word whose corpus-wide count falls
    below ``min_count`` is dropped.  Documents reduced to zero tokens are
    retained (with length zero) so identifiers stay aligned, and a summary of
    the surviving vocabulary is logged.
    """
    if not raw_docs:
        raise ParameterError("raw_docs must be nonempty")
    parsed = []
    for record in raw_docs:
        if len(record) == 2:
            doc_id, text = record
            title = None
        elif len(record) == 3:
            doc_id, title, text = record
        else:
            raise ParameterError("raw documents must be (id, text) or (id, title, text)")
        tokens = [t for t in _tokenize(text, config) if t not in config.stopwords]
        parsed.append((str(doc_id), title, tokens))

    counts: dict[str, int] = {}
    for _, _, tokens in parsed:
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
    kept = sorted(w for w, c in counts.items() if c >= config.min_count)
    vocab = Vocabulary(tuple(kept))
    index = {w: i for i, w in enumerate(kept)}

    documents = []
    empty = 0
    for doc_id, title, tokens in parsed:
        idx = [index[t] for t in tokens if t in index]
        if not idx:
            empty += 1
        documents.append(Document(np.array(idx, dtype=np.int64), doc_id=doc_id, title=title))
    corpus = Corpus(documents, vocab)
    logger.info(
        "preprocessed corpus: W=%d vocabulary words, n=%d total words, D=%d documents (%d empty)",
        len(vocab), corpus.total_words, corpus.num_docs, empty,
    )
    return corpus


def load_raw_corpus(path) -> list[tuple[str, str, str]]:
    """Line-delimited JSON records with ``id``, ``title``, and ``text`` fields."""
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                records.append((str(obj["id"]), str(obj.get("title", "")), str(obj["text"])))
            except KeyError as err:
                raise ParameterError(f"{path}:{line_no}: missing corpus field {err}") from err
    if not records:
        raise ParameterError(f"no records found in {path}")
    return records


def load_stopwords(path) -> frozenset[str]:
    """One token per line; blank lines ignored."""
    with open(path) as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def save_corpus(corpus: Corpus, path) -> None:
    payload = {
        "format_version": CORPUS_FORMAT_VERSION,
        "vocabulary": list(corpus.vocabulary.words),
        "documents": [
            {"id": d.doc_id, "title": d.title, "tokens": d.tokens.tolist()}
            for d in corpus.documents
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_corpus(path) -> Corpus:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CORPUS_FORMAT_VERSION:
        raise ParameterError(f"unsupported corpus format version {version!r}")
    vocab = Vocabulary(tuple(payload["vocabulary"]))
    documents = [
        Document(np.array(d["tokens"], dtype=np.int64), doc_id=d.get("id"), title=d.get("title"))
        for d in payload["documents"]
    ]
    return Corpus(documents, vocab)


MODEL_FORMAT_VERSION = 1


def save_model(model: TopicModel, hyper: Hyperparams, path) -> None:
    """Topic matrix plus its prior, as versioned JSON."""
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "num_topics": hyper.num_topics,
        "vocab_size": hyper.vocab_size,
        "alpha": hyper.alpha.tolist(),
        "beta": hyper.beta.tolist(),
        "phi": model.phi.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_model(path) -> tuple[TopicModel, Hyperparams]:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ParameterError(f"unsupported model format version {version!r}")
    hyper = Hyperparams(
        payload["num_topics"],
        payload["vocab_size"],
        np.array(payload["alpha"], dtype=float),
        np.array(payload["beta"], dtype=float),
    )
    return TopicModel(np.array(payload["phi"], dtype=float)), hyper


def subset_target_vector(model: TopicModel, subset: SubsetSpec | None = None) -> np.ndarray:
    """Normalized sum of the targeted topic rows (all rows when no subset)."""
    rows = model.phi if subset is None else model.phi[list(subset.target_topics)]
    total = rows.sum(axis=0)
    return total / total.sum()


def cosine_teaching_heuristic(doc: Document, target: np.ndarray) -> float:
    """One minus the cosine similarity between the document's word-count
    vector and a target word distribution; 0 for proportional vectors."""
    target = np.asarray(target, dtype=float)
    if len(doc) == 0:
        raise ParameterError("document has no tokens")
    norm_t = np.linalg.norm(target)
    if norm_t == 0.0 or np.any(target < 0.0):
        raise ParameterError("target must be a nonzero nonnegative vector")
    counts = doc.word_counts(target.shape[0]).astype(float)
    return float(1.0 - counts @ target / (np.linalg.norm(counts) * norm_t))


def _doc_seed(seed: int, doc: Document, position: int) -> int:
    """Estimator seed keyed on the document id so presentation order is moot."""
    if doc.doc_id is None:
        return derive_seed(seed, position)
    digest = hashlib.sha256(doc.doc_id.encode()).digest()
    return derive_seed(seed, int.from_bytes(digest[:8], "little"))


@dataclass
class RankingRecord:
    doc_id: str
    title: str | None
    mean_log_teaching: float
    stderr: float
    reps: int
    per_word_log_likelihood: float
    cosine_score: float


def _rank_one(args) -> RankingRecord:
    doc, model, subset, hyper, reps, config, doc_seed, target = args
    const = log_model_prior_density(
        model, hyper, topics=None if subset is None else subset.target_topics
    )
    scores = np.empty(reps)
    log_likes = np.empty(reps)
    for rep in range(reps):
        if subset is None:
            num = estimate_numerator(
                [doc], model, hyper, config, seed=derive_seed(doc_seed, rep, 0)
            )
        else:
            num = estimate_subset_numerator(
                [doc], model, subset.target_topics, hyper, config, seed=derive_seed(doc_seed, rep, 0)
            )
        den = estimate_marginal([doc], hyper, config, seed=derive_seed(doc_seed, rep, 1))
        scores[rep] = num.log_estimate - den.log_estimate
        log_likes[rep] = num.log_estimate - const
    stderr = float(scores.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return RankingRecord(
        doc_id=doc.doc_id or "",
        title=doc.title,
        mean_log_teaching=float(scores.mean()),
        stderr=stderr,
        reps=reps,
        per_word_log_likelihood=float(log_likes.mean() / len(doc)),
        cosine_score=cosine_teaching_heuristic(doc, target),
    )


def rank_documents(
    corpus: Corpus,
    model: TopicModel,
    hyper: Hyperparams,
    *,
    subset: SubsetSpec | None = None,
    reps: int = 16,
    config: EstimatorConfig | None = None,
    seed: int = 0,
    cosine_quantile: float | None = None,
    workers: int = 1,
) -> list[RankingRecord]:
    """Score every document independently and sort by mean log teaching score.

    Each document gets ``reps`` independent numerator/denominator estimate
    pairs (seeds derived per document id and rep, so presentation order and
    worker count never change the result), a per-word log likelihood from the
    same numerator estimates, and the cosine heuristic against the target
    vector.  ``cosine_quantile`` optionally restricts scoring to the
    documents in the lowest quantile of cosine distance.  Zero-length
    documents are skipped with a notice.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    if subset is not None:
        subset.validate_against(model.num_topics)
    config = config or EstimatorConfig()
    target = subset_target_vector(model, subset)

    docs = []
    for doc in corpus.documents:
        if len(doc) == 0:
            logger.warning("skipping zero-length document %r", doc.doc_id)
            continue
        docs.append(doc)
    if cosine_quantile is not None:
        if not (0.0 < cosine_quantile <= 1.0):
            raise ParameterError("cosine_quantile must be in (0, 1]")
        cos = np.array([cosine_teaching_heuristic(d, target) for d in docs])
        cutoff = np.quantile(cos, cosine_quantile)
        docs = [d for d, c in zip(docs, cos) if c <= cutoff]
        logger.info("cosine prefilter kept %d documents (cutoff %.4f)", len(docs), cutoff)

    tasks = [
        (doc, model, subset, hyper, reps, config, _doc_seed(seed, doc, k), target)
        for k, doc in enumerate(docs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_rank_one, tasks, chunksize=4))
    else:
        records = []
        for k, task in enumerate(tasks):
            records.append(_rank_one(task))
            if (k + 1) % 25 == 0:
                logger.info("ranking: %d/%d documents scored", k + 1, len(tasks))
    records.sort(key=lambda r: (-r.mean_log_teaching, r.doc_id))
    return records


def write_ranking_csv(records: Sequence[RankingRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["rank", "id", "title", "mean_log_teaching", "stderr",
             "per_word_log_likelihood", "cosine_score"]
        )
        for rank, r in enumerate(records, 1):
            writer.writerow(
                [rank, r.doc_id, r.title or "", repr(r.mean_log_teaching), repr(r.stderr),
                 repr(r.per_word_log_likelihood), repr(r.cosine_score)]
            )
