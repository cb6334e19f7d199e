import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldateach.evaluate import min_sse_over_permutations
from ldateach.lda import (
    AssignmentState,
    Corpus,
    Document,
    Hyperparams,
    ParameterError,
    TopicModel,
    Vocabulary,
    gibbs_conditional,
    gibbs_fit,
    log_dircat,
    log_dirichlet_density,
    sample_documents,
    sample_generative,
    log_word_likelihood,
)


def polya_log_prob(items, alpha):
    """Independent oracle: sequential Polya-urn product for a draw sequence."""
    alpha = np.asarray(alpha, dtype=float)
    counts = np.zeros_like(alpha)
    total = 0.0
    for x in items:
        total += math.log((counts[x] + alpha[x]) / (counts.sum() + alpha.sum()))
        counts[x] += 1
    return total


class TestLogDircat:
    def test_empty_counts(self):
        assert log_dircat([0, 0, 0], [0.5, 0.5, 0.5]) == pytest.approx(0.0, abs=1e-12)

    def test_single_symmetric_draw(self):
        assert log_dircat([1, 0], [1.0, 1.0]) == pytest.approx(math.log(0.5), abs=1e-12)

    def test_two_one_uniform(self):
        # Polya product 1/2 * 2/3 * 1/4 = 1/12
        assert log_dircat([2, 1], [1.0, 1.0]) == pytest.approx(-math.log(12.0), abs=1e-9)
        assert log_dircat([2, 1], [1.0, 1.0]) == pytest.approx(-2.484907, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            log_dircat([1, 2], [1.0, 1.0, 1.0])

    def test_nonpositive_alpha(self):
        with pytest.raises(ParameterError):
            log_dircat([1, 2], [1.0, 0.0])

    def test_large_counts_no_overflow(self):
        value = log_dircat([10**6, 2 * 10**6], [0.3, 0.7])
        assert np.isfinite(value)

    @given(
        items=st.lists(st.integers(0, 3), min_size=0, max_size=30),
        alpha=st.lists(st.floats(0.05, 20.0), min_size=4, max_size=4),
    )
    @settings(max_examples=200, deadline=None)
    def test_chain_rule_matches_batch(self, items, alpha):
        counts = np.bincount(items, minlength=4)
        batch = log_dircat(counts, alpha)
        sequential = polya_log_prob(items, alpha)
        assert batch == pytest.approx(sequential, abs=1e-10)

    @given(
        items=st.lists(st.integers(0, 3), min_size=1, max_size=30),
        seed=st.integers(0, 100),
    )
    @settings(max_examples=100, deadline=None)
    def test_order_invariance(self, items, seed):
        alpha = [0.4, 1.0, 2.5, 0.1]
        shuffled = list(items)
        np.random.default_rng(seed).shuffle(shuffled)
        a = log_dircat(np.bincount(items, minlength=4), alpha)
        b = log_dircat(np.bincount(shuffled, minlength=4), alpha)
        assert a == pytest.approx(b, abs=1e-12)


class TestHyperparams:
    def test_symmetric_expansion(self):
        h = Hyperparams.symmetric(3, 5, 0.5, 2.0)
        assert np.array_equal(h.alpha, np.full(3, 0.5))
        assert np.array_equal(h.beta, np.full(5, 2.0))

    @pytest.mark.parametrize("kwargs", [
        dict(num_topics=0, vocab_size=5, alpha=1.0, beta=1.0),
        dict(num_topics=3, vocab_size=0, alpha=1.0, beta=1.0),
        dict(num_topics=3, vocab_size=5, alpha=-1.0, beta=1.0),
        dict(num_topics=3, vocab_size=5, alpha=1.0, beta=0.0),
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ParameterError):
            Hyperparams(
                kwargs["num_topics"], kwargs["vocab_size"],
                np.full(max(kwargs["num_topics"], 1), kwargs["alpha"]),
                np.full(max(kwargs["vocab_size"], 1), kwargs["beta"]),
            )

    def test_vector_length_mismatch(self):
        with pytest.raises(ParameterError):
            Hyperparams(3, 5, np.ones(2), np.ones(5))


class TestVocabulary:
    def test_round_trip(self):
        vocab = Vocabulary(("alpha", "beta", "gamma"))
        for i, word in enumerate(vocab.words):
            assert vocab.index_of(word) == i
            assert vocab.word_of(i) == word

    def test_duplicate_words_rejected(self):
        with pytest.raises(ParameterError):
            Vocabulary(("a", "a"))


class TestDocumentCorpus:
    def test_token_range_checked(self):
        with pytest.raises(ParameterError):
            Corpus([Document(np.array([0, 5]))], Vocabulary.default(5))

    def test_totals(self):
        corpus = Corpus(
            [Document(np.array([0, 1])), Document(np.array([2, 3, 4]))],
            Vocabulary.default(5),
        )
        assert corpus.total_words == 5
        assert corpus.num_docs == 2


class TestTopicModel:
    def test_rejects_non_stochastic(self):
        with pytest.raises(ParameterError):
            TopicModel(np.array([[0.5, 0.6], [0.5, 0.5]]))

    def test_rejects_negative(self):
        with pytest.raises(ParameterError):
            TopicModel(np.array([[1.2, -0.2]]))


class TestDirichletDensity:
    def test_uniform_point_symmetric(self):
        # Dirichlet(1,1,1) is the uniform density on the 2-simplex: value 2!
        assert log_dirichlet_density([1 / 3] * 3, [1.0] * 3) == pytest.approx(math.log(2.0))

    def test_zero_with_small_concentration_rejected(self):
        with pytest.raises(ParameterError):
            log_dirichlet_density([1.0, 0.0], [0.5, 0.5])

    def test_zero_with_large_concentration_is_minus_inf(self):
        assert log_dirichlet_density([1.0, 0.0], [2.0, 2.0]) == -math.inf

    def test_zero_with_unit_concentration_finite(self):
        assert np.isfinite(log_dirichlet_density([1.0, 0.0], [1.0, 1.0]))


class TestSampleGenerative:
    def test_shapes_and_ranges(self):
        h = Hyperparams.symmetric(3, 5, 1.0, 1.0)
        model, theta, corpus, state = sample_generative(h, [5, 5], seed=0)
        assert model.phi.shape == (3, 5)
        assert theta.theta.shape == (2, 3)
        assert corpus.num_docs == 2
        assert all(len(d) == 5 for d in corpus.documents)
        assert all(d.tokens.max() < 5 for d in corpus.documents)
        state.validate(corpus)

    def test_deterministic(self):
        h = Hyperparams.symmetric(3, 5, 1.0, 1.0)
        a = sample_generative(h, [4, 6], seed=123)
        b = sample_generative(h, [4, 6], seed=123)
        assert np.array_equal(a[0].phi, b[0].phi)
        for da, db in zip(a[2].documents, b[2].documents):
            assert np.array_equal(da.tokens, db.tokens)
        for za, zb in zip(a[3].z, b[3].z):
            assert np.array_equal(za, zb)

    def test_empty_lengths_rejected(self):
        with pytest.raises(ParameterError):
            sample_generative(Hyperparams.symmetric(2, 2, 1, 1), [], seed=0)

    def test_high_concentration_topics_near_uniform(self):
        h = Hyperparams.symmetric(3, 5, 1.0, 100.0)
        rows = []
        for seed in range(1000):
            model, _, _, _ = sample_generative(h, [1], seed=seed)
            rows.append(model.phi)
        mean = np.mean(rows, axis=0)
        assert np.all(np.abs(mean - 0.2) < 0.01)


def enumerate_joint(corpus, hyper, z_flat):
    """Collapsed joint of one full assignment, built from scratch (oracle)."""
    ndt = np.zeros((corpus.num_docs, hyper.num_topics))
    ntw = np.zeros((hyper.num_topics, len(corpus.vocabulary)))
    pos = 0
    for d, doc in enumerate(corpus.documents):
        for w in doc.tokens:
            t = z_flat[pos]
            ndt[d, t] += 1
            ntw[t, w] += 1
            pos += 1
    total = sum(log_dircat(ndt[d], hyper.alpha) for d in range(corpus.num_docs))
    total += sum(log_dircat(ntw[t], hyper.beta) for t in range(hyper.num_topics))
    return total


class TestGibbsConditional:
    def test_single_token_corpus_is_uniform(self):
        h = Hyperparams.symmetric(4, 3, 0.7, 0.7)
        corpus = Corpus([Document(np.array([1]))], Vocabulary.default(3))
        state = AssignmentState.from_assignments(corpus, [np.array([2])], 4)
        probs = gibbs_conditional(state, h, corpus, (0, 0))
        assert np.allclose(probs, 0.25, atol=1e-12)

    def test_hand_worked_example(self):
        # tokens [0,0,1] over W=2; other tokens assigned topic0, topic1
        h = Hyperparams(2, 2, np.ones(2), np.ones(2))
        corpus = Corpus([Document(np.array([0, 0, 1]))], Vocabulary.default(2))
        state = AssignmentState.from_assignments(corpus, [np.array([0, 0, 1])], 2)
        probs = gibbs_conditional(state, h, corpus, (0, 0))
        assert probs == pytest.approx([2 / 3, 1 / 3], abs=1e-12)

    def test_normalization_random_states(self):
        rng = np.random.default_rng(5)
        h = Hyperparams.symmetric(3, 4, 0.3, 0.8)
        for _ in range(100):
            lengths = rng.integers(1, 5, size=rng.integers(1, 3))
            _, _, corpus, state = sample_generative(h, lengths.tolist(), seed=int(rng.integers(1e6)))
            d = int(rng.integers(corpus.num_docs))
            i = int(rng.integers(len(corpus.documents[d])))
            probs = gibbs_conditional(state, h, corpus, (d, i))
            assert abs(probs.sum() - 1.0) < 1e-12

    @pytest.mark.parametrize("seed", range(4))
    def test_proportional_to_joint_enumeration(self, seed):
        """Conditional must match the renormalized joint with z_i varied."""
        import itertools

        rng = np.random.default_rng(seed)
        T, W = 3, 3
        h = Hyperparams(T, W, rng.uniform(0.2, 1.5, T), rng.uniform(0.2, 1.5, W))
        lengths = [3, 2]
        _, _, corpus, _ = sample_generative(h, lengths, seed=seed + 50)
        n = corpus.total_words
        z_flat = rng.integers(0, T, size=n)
        flat_index = 0
        for d, doc in enumerate(corpus.documents):
            for i in range(len(doc)):
                joint = np.array([
                    enumerate_joint(corpus, h, np.concatenate([
                        z_flat[:flat_index], [t], z_flat[flat_index + 1:]
                    ]))
                    for t in range(T)
                ])
                expected = np.exp(joint - joint.max())
                expected /= expected.sum()
                z_per_doc = np.split(z_flat, np.cumsum(lengths)[:-1])
                state = AssignmentState.from_assignments(corpus, z_per_doc, T)
                probs = gibbs_conditional(state, h, corpus, (d, i))
                assert np.max(np.abs(probs - expected)) < 1e-10
                flat_index += 1

    def test_out_of_range_token(self):
        h = Hyperparams.symmetric(2, 2, 1, 1)
        corpus = Corpus([Document(np.array([0]))], Vocabulary.default(2))
        state = AssignmentState.from_assignments(corpus, [np.array([0])], 2)
        with pytest.raises(ParameterError):
            gibbs_conditional(state, h, corpus, (0, 1))
        with pytest.raises(ParameterError):
            gibbs_conditional(state, h, corpus, (1, 0))


def separated_topics():
    """Three topics over ten words with nearly disjoint support."""
    phi = np.full((3, 10), 0.004)
    for t in range(3):
        phi[t, 3 * t: 3 * t + 3] = (1.0 - 0.004 * 7) / 3
    phi /= phi.sum(axis=1, keepdims=True)
    model = TopicModel(phi)
    sims = [
        phi[i] @ phi[j] / (np.linalg.norm(phi[i]) * np.linalg.norm(phi[j]))
        for i in range(3) for j in range(i + 1, 3)
    ]
    assert max(sims) < 0.1
    return model


class TestGibbsFit:
    def test_single_topic_degenerate(self):
        h = Hyperparams.symmetric(1, 4, 1.0, 0.5)
        corpus = Corpus(
            [Document(np.array([0, 1, 1])), Document(np.array([3]))],
            Vocabulary.default(4),
        )
        state, model = gibbs_fit(corpus, h, iterations=3, seed=0)
        assert all(np.all(zd == 0) for zd in state.z)
        counts = np.bincount([0, 1, 1, 3], minlength=4) + 0.5
        assert np.allclose(model.phi[0], counts / counts.sum())

    @pytest.mark.parametrize("iterations", [1, 2, 5])
    def test_count_conservation(self, iterations):
        h = Hyperparams.symmetric(3, 6, 0.4, 0.4)
        _, _, corpus, _ = sample_generative(h, [4, 7, 2], seed=9)
        state, _ = gibbs_fit(corpus, h, iterations=iterations, seed=11)
        state.validate(corpus)
        for d, doc in enumerate(corpus.documents):
            assert state.doc_topic[d].sum() == len(doc)
        assert state.doc_topic.sum() == corpus.total_words

    def test_empty_corpus_rejected(self):
        h = Hyperparams.symmetric(2, 3, 1, 1)
        with pytest.raises(ParameterError):
            gibbs_fit(Corpus([], Vocabulary.default(3)), h, 1, 0)

    def test_recovers_separated_topics(self):
        model = separated_topics()
        h = Hyperparams.symmetric(3, 10, 0.1, 0.1)
        docs = sample_documents(model, h, [16] * 64, seed=3)
        corpus = Corpus(docs, Vocabulary.default(10))
        _, inferred = gibbs_fit(corpus, h, iterations=300, seed=4)
        uniform = TopicModel(np.full((3, 10), 0.1))
        fitted_sse = min_sse_over_permutations(inferred, model)
        uniform_sse = min_sse_over_permutations(uniform, model)
        assert fitted_sse < uniform_sse

    def test_deterministic(self):
        h = Hyperparams.symmetric(2, 5, 0.6, 0.6)
        _, _, corpus, _ = sample_generative(h, [5, 5], seed=21)
        a_state, a_model = gibbs_fit(corpus, h, iterations=10, seed=77)
        b_state, b_model = gibbs_fit(corpus, h, iterations=10, seed=77)
        assert np.array_equal(a_model.phi, b_model.phi)
        for za, zb in zip(a_state.z, b_state.z):
            assert np.array_equal(za, zb)


class TestLogWordLikelihood:
    def test_uniform_model(self):
        model = TopicModel(np.full((2, 4), 0.25))
        docs = [Document(np.array([0, 1, 2])), Document(np.array([3, 3]))]
        z = [np.array([0, 1, 0]), np.array([1, 1])]
        assert log_word_likelihood(docs, z, model) == pytest.approx(5 * math.log(0.25))

    def test_empty_documents(self):
        model = TopicModel(np.full((2, 4), 0.25))
        assert log_word_likelihood([], [], model) == 0.0

    def test_single_token(self):
        phi = np.array([[0.7, 0.3], [0.2, 0.8]])
        model = TopicModel(phi)
        value = log_word_likelihood([Document(np.array([1]))], [np.array([1])], model)
        assert value == pytest.approx(math.log(0.8))

    def test_zero_probability_gives_minus_inf(self):
        model = TopicModel(np.array([[1.0, 0.0], [0.5, 0.5]]))
        value = log_word_likelihood([Document(np.array([1]))], [np.array([0])], model)
        assert value == -math.inf


class TestAssignmentState:
    def test_tampered_counts_detected(self):
        h = Hyperparams.symmetric(2, 3, 1, 1)
        _, _, corpus, state = sample_generative(h, [4, 3], seed=2)
        state.doc_topic[0, 0] += 1
        with pytest.raises(ParameterError):
            state.validate(corpus)

    def test_counts_rebuilt_from_z(self):
        h = Hyperparams.symmetric(3, 4, 0.5, 0.5)
        _, _, corpus, state = sample_generative(h, [6, 2, 3], seed=8)
        rebuilt = AssignmentState.from_assignments(corpus, state.z, 3)
        assert np.array_equal(rebuilt.doc_topic, state.doc_topic)
        assert np.array_equal(rebuilt.topic_word, state.topic_word)
