"""Bayesian teaching for LDA topic models.

Score candidate document sets by how strongly they pull a collapsed-Gibbs
learner toward a target topic model, generate teaching documents with
pseudo-marginal Metropolis-Hastings, rank corpora, and check every
estimator against exact enumeration at small scale.
"""

from .corpus import (
    PreprocessConfig,
    RankingRecord,
    cosine_teaching_heuristic,
    load_corpus,
    load_model,
    load_raw_corpus,
    load_stopwords,
    preprocess,
    rank_documents,
    save_corpus,
    save_model,
    subset_target_vector,
)
from .evaluate import (
    ErrorRecord,
    ExperimentConfig,
    min_sse_over_permutations,
    run_learning_experiment,
)
from .exact import (
    DocSpaceSpec,
    EnumerationGuardError,
    ExactTeachingTable,
    exact_log_likelihood,
    exact_marginal_likelihood,
    exact_subset_numerator,
    exact_teaching_distribution,
    exact_teaching_numerator,
)
from .importance import (
    ErrorTarget,
    EstimatorConfig,
    WeightedEstimate,
    compare_estimators,
    ess,
    estimate_marginal,
    estimate_numerator,
    estimate_subset_numerator,
    log_dispersion_ess,
    relative_error,
    run_to_target,
    scaling_benchmark,
)
from .lda import (
    AssignmentState,
    Corpus,
    Document,
    Hyperparams,
    ParameterError,
    ThetaSet,
    TopicModel,
    Vocabulary,
    gibbs_conditional,
    gibbs_fit,
    log_dircat,
    log_dirichlet_density,
    log_model_prior_density,
    log_word_likelihood,
    sample_documents,
    sample_generative,
    topics_from_counts,
)
from .teach import (
    ChainState,
    ProposalConfig,
    SubsetSpec,
    TeachingScore,
    derive_seed,
    pmmh_generate,
    subset_teaching_score,
    teaching_score,
    write_chain_trace,
)

__version__ = "0.1.0"
