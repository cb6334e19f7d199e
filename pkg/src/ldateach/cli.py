"""Command-line surface.

Each subcommand writes one structured result file plus a manifest
(`<output>.manifest.json`) capturing every parameter and the master seed
before computation begins, so any output can be reproduced byte-for-byte
from its manifest.  Progress goes to standard error; standard output stays
machine-clean.

Exit codes: 0 success, 2 configuration error, 3 enumeration-guard violation,
4 a requested error target was not reached.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import corpus as corpus_io
from .evaluate import ExperimentConfig, run_learning_experiment, write_error_records_csv
from .exact import (
    DocSpaceSpec,
    EnumerationGuardError,
    exact_teaching_distribution,
    write_teaching_table_csv,
)
from .importance import (
    ErrorTarget,
    EstimatorConfig,
    compare_estimators,
    scaling_benchmark,
    write_comparison_csv,
    write_scaling_csv,
)
from .lda import Hyperparams, ParameterError, TopicModel, gibbs_fit, sample_documents
from .teach import ProposalConfig, SubsetSpec, pmmh_generate, write_chain_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_NOT_CONVERGED = 4

MANIFEST_SCHEMA_VERSION = 1

logger = logging.getLogger("ldateach.cli")


class NotConvergedError(RuntimeError):
    pass


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def _write_manifest(args: argparse.Namespace) -> None:
    params = {k: v for k, v in vars(args).items() if k != "func" and not k.startswith("_")}
    manifest = {"schema_version": MANIFEST_SCHEMA_VERSION, "parameters": params}
    with open(args.output + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)


def _load_model(args) -> tuple[TopicModel, Hyperparams]:
    model, hyper = corpus_io.load_model(args.topics_file)
    alpha = getattr(args, "alpha", None)
    beta = getattr(args, "beta", None)
    if alpha is not None or beta is not None:
        hyper = Hyperparams(
            hyper.num_topics,
            hyper.vocab_size,
            hyper.alpha if alpha is None else np.full(hyper.num_topics, alpha),
            hyper.beta if beta is None else np.full(hyper.vocab_size, beta),
        )
    return model, hyper


def _load_input_corpus(args):
    if args.corpus:
        return corpus_io.load_corpus(args.corpus)
    stopwords = corpus_io.load_stopwords(args.stopwords) if args.stopwords else frozenset()
    config = corpus_io.PreprocessConfig(stopwords=stopwords, min_count=args.min_count)
    return corpus_io.preprocess(corpus_io.load_raw_corpus(args.raw), config)


def _cmd_fit(args) -> int:
    corpus = _load_input_corpus(args)
    hyper = Hyperparams.symmetric(args.topics, len(corpus.vocabulary), args.alpha, args.beta)
    logger.info("fitting %d topics on %d documents (%d words)", args.topics, corpus.num_docs, corpus.total_words)
    _, model = gibbs_fit(corpus, hyper, args.iterations, seed=args.seed)
    corpus_io.save_model(model, hyper, args.output)
    return EXIT_OK


def _cmd_estimator_compare(args) -> int:
    hyper = Hyperparams.symmetric(args.topics, args.vocab, args.alpha, args.beta)
    records = compare_estimators(
        hyper,
        num_sets=args.pairs,
        docs_per_set=args.docs_per_set,
        doc_length=args.doc_len,
        num_samples=args.samples,
        seed=args.seed,
        workers=args.workers,
    )
    write_comparison_csv(records, args.output)
    return EXIT_OK


def _cmd_scaling_bench(args) -> int:
    target = ErrorTarget(
        relative_error=args.target, batch_size=args.batch, max_samples=args.max_samples
    )
    records = scaling_benchmark(
        args.lengths,
        [(c, c) for c in args.concentrations],
        num_topics=args.topics,
        vocab_size=args.vocab,
        runs=args.runs,
        target=target,
        seed=args.seed,
        workers=args.workers,
    )
    write_scaling_csv(records, args.output)
    if any(r.converged_runs < r.runs for r in records):
        raise NotConvergedError("some runs exhausted max-samples before reaching the error target")
    return EXIT_OK


def _cmd_simplex_density(args) -> int:
    model, hyper = _load_model(args)
    space = DocSpaceSpec(args.num_docs, args.doc_len, hyper.vocab_size)
    table = exact_teaching_distribution(
        space, model, hyper, sequence_multiplicity=args.sequence_multiplicity
    )
    write_teaching_table_csv(table, args.output)
    return EXIT_OK


def _cmd_learner_error(args) -> int:
    model, hyper = _load_model(args)
    config = ExperimentConfig(
        true_model=model,
        hyper=hyper,
        doc_counts=tuple(args.doc_counts),
        doc_length=args.doc_length,
        replications=args.replications,
        gibbs_iterations=args.gibbs_iterations,
        pmmh_steps=args.pmmh_steps,
        estimator=EstimatorConfig(num_samples=args.samples),
        proposal=ProposalConfig(flips_per_step=args.flips),
        seed=args.seed,
    )
    records = run_learning_experiment(config, workers=args.workers)
    write_error_records_csv(records, args.output)
    return EXIT_OK


def _cmd_teach(args) -> int:
    model, hyper = _load_model(args)
    initial = sample_documents(
        model, hyper, [args.doc_length] * args.num_docs, seed=args.seed + 1
    )
    subset = SubsetSpec(tuple(args.topic_subset)) if args.topic_subset else None
    states = pmmh_generate(
        initial,
        model,
        hyper,
        iterations=args.iterations,
        subset=subset,
        proposal=ProposalConfig(flips_per_step=args.flips),
        config=EstimatorConfig(num_samples=args.samples),
        seed=args.seed,
        exact=args.exact,
    )
    accepted = sum(1 for s in states[1:] if s.accepted)
    logger.info("chain finished: %d/%d proposals accepted", accepted, args.iterations)
    write_chain_trace(states, hyper.vocab_size, args.output)
    return EXIT_OK


def _cmd_rank(args) -> int:
    corpus = _load_input_corpus(args)
    model, hyper = _load_model(args)
    if len(corpus.vocabulary) != hyper.vocab_size:
        raise ParameterError(
            f"corpus vocabulary ({len(corpus.vocabulary)}) does not match the model ({hyper.vocab_size})"
        )
    subset = SubsetSpec(tuple(args.topic_subset)) if args.topic_subset else None
    records = corpus_io.rank_documents(
        corpus,
        model,
        hyper,
        subset=subset,
        reps=args.reps,
        config=EstimatorConfig(num_samples=args.samples),
        seed=args.seed,
        cosine_quantile=args.cosine_quantile,
        workers=args.workers,
    )
    corpus_io.write_ranking_csv(records, args.output)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed (full reproducibility)")
    parser.add_argument("--output", required=True, help="result file; a .manifest.json sits beside it")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="parallelism cap; results are identical for any value")


def _add_corpus_input(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--corpus", help="preprocessed corpus JSON")
    group.add_argument("--raw", help="raw corpus JSONL with id/title/text records")
    parser.add_argument("--stopwords", help="stopword file, one token per line (with --raw)")
    parser.add_argument("--min-count", type=int, default=1, help="drop words rarer than this (with --raw)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="ldateach",
        description="Teaching-document scoring, generation, and ranking for LDA topic models.",
    )
    parser.add_argument("--config", help="JSON file of flag defaults (flags given explicitly win)")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("fit", help="collapsed Gibbs fit; writes a model file")
    _add_corpus_input(p)
    p.add_argument("--topics", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=1000)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("estimator-compare", help="exact vs uniform vs sequential estimates per sampled set")
    p.add_argument("--pairs", type=int, default=512)
    p.add_argument("--docs-per-set", type=int, default=2)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--topics", type=int, default=3)
    p.add_argument("--vocab", type=int, default=5)
    p.add_argument("--doc-len", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(func=_cmd_estimator_compare)

    p = sub.add_parser("scaling-bench", help="samples required to reach a relative-error target")
    p.add_argument("--lengths", type=_int_list, default=[10, 20, 40, 60])
    p.add_argument("--concentrations", type=_float_list, default=[0.1, 1.0],
                   help="symmetric alpha=beta values, comma separated")
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--vocab", type=int, default=100)
    p.add_argument("--runs", type=int, default=128)
    p.add_argument("--target", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--max-samples", type=int, default=100_000)
    _add_common(p)
    p.set_defaults(func=_cmd_scaling_bench)

    p = sub.add_parser("simplex-density", help="exact teaching/likelihood tables over a document space")
    p.add_argument("--topics-file", required=True, help="model JSON (from fit or hand-built)")
    p.add_argument("--doc-len", type=int, default=10)
    p.add_argument("--num-docs", type=int, default=1)
    p.add_argument("--alpha", type=float, default=None, help="override the model file's alpha")
    p.add_argument("--beta", type=float, default=None, help="override the model file's beta")
    p.add_argument("--sequence-multiplicity", action="store_true",
                   help="weight each count vector by its number of token sequences")
    _add_common(p)
    p.set_defaults(func=_cmd_simplex_density)

    p = sub.add_parser("learner-error", help="teaching vs random documents, learner error records")
    p.add_argument("--topics-file", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--doc-counts", type=_int_list, default=[1, 2, 3, 4])
    p.add_argument("--doc-length", type=int, default=20)
    p.add_argument("--replications", type=int, default=64)
    p.add_argument("--gibbs-iterations", type=int, default=1000)
    p.add_argument("--pmmh-steps", type=int, default=500)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--flips", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_learner_error)

    p = sub.add_parser("teach", help="pseudo-marginal chain over document sets; writes the trace")
    p.add_argument("--topics-file", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--num-docs", type=int, default=1)
    p.add_argument("--doc-length", type=int, default=20)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--flips", type=int, default=None)
    p.add_argument("--topic-subset", type=_int_list, default=None,
                   help="teach only these topic indices, comma separated")
    p.add_argument("--exact", action="store_true", help="enumerate scores instead of estimating")
    _add_common(p)
    p.set_defaults(func=_cmd_teach)

    p = sub.add_parser("rank", help="rank corpus documents by estimated teaching score")
    _add_corpus_input(p)
    p.add_argument("--topics-file", required=True)
    p.add_argument("--reps", type=int, default=16)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--topic-subset", type=_int_list, default=None)
    p.add_argument("--cosine-quantile", type=float, default=None,
                   help="score only the lowest-quantile cosine-distance documents")
    _add_common(p)
    p.set_defaults(func=_cmd_rank)

    for name, action in sub.choices.items():
        subparsers[name] = action
    return parser, subparsers


def _apply_config_file(subparsers: dict[str, argparse.ArgumentParser], argv: list[str]) -> None:
    """Pull --config out of argv and install its values as subcommand defaults."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config) as fh:
        defaults = json.load(fh)
    if not isinstance(defaults, dict):
        raise ParameterError("config file must hold a JSON object of flag defaults")
    mapped = {k.replace("-", "_"): v for k, v in defaults.items()}
    for sp in subparsers.values():
        known_dests = {action.dest for action in sp._actions}
        sp.set_defaults(**{k: v for k, v in mapped.items() if k in known_dests})


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser, subparsers = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _apply_config_file(subparsers, argv)
        args = parser.parse_args(argv)
        _write_manifest(args)
        return args.func(args)
    except EnumerationGuardError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_GUARD
    except NotConvergedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ParameterError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
