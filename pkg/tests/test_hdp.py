"""Checks for the stick-breaking prior machinery.

The table-count estimator has no simple closed form, so it is pinned down
from several directions: exact one-customer cases, analytic bounds
(tables never exceed customers, at least one table whenever anyone shows
up), shape properties in the replicate count, Monte-Carlo restaurant
simulation, and a full batch trajectory against an independent
implementation.
"""

import numpy as np
import pytest

from oracles import batch_hdp_scvi, crp_expected_tables_mc
from scvihmm.corpus import Corpus, Vocabulary
from scvihmm.emissions import EmissionPrior
from scvihmm.engine import (
    HdpAccumulator,
    HdpMode,
    Schedule,
    initialize_stats,
    process_minibatch,
)
from scvihmm.hdp import (
    HdpPosterior,
    TableStats,
    absence_log_probs,
    compute_geo_alpha_pi,
    expected_tables,
    tables_from_aggregates,
    update_hdp,
)
from scvihmm.messages import SurrogateParams, forward_backward, local_stats
from scvihmm.special import BetaParams, GammaParams


def make_posterior(num_states, geo, alpha=(1.0, 0.1), gamma=(1.0, 0.1)):
    return HdpPosterior(
        BetaParams(np.ones(num_states), np.full(num_states, 10.0)),
        GammaParams(*alpha),
        GammaParams(*gamma),
        np.asarray(geo, float),
    )


def random_posterior_case(seed, num_states=None, seq_len=None, vocab_size=None):
    rng = np.random.default_rng(seed)
    K = num_states or int(rng.integers(1, 5))
    T = seq_len or int(rng.integers(2, 16))
    V = vocab_size or int(rng.integers(2, 9))
    trans = rng.dirichlet(np.ones(K), size=K + 1)
    emit = rng.dirichlet(np.ones(V), size=K)
    seq = rng.integers(0, V, T)
    params = SurrogateParams(trans, emit)
    post = forward_backward(params, seq)
    localC, _ = local_stats(post, seq, V)
    geo = rng.uniform(1e-3, 2.0, size=K)
    return post, localC, make_posterior(K, geo), rng


class TestGeoWeights:
    def test_unit_sticks_unit_concentration(self):
        # Beta(1,1) sticks contribute e^{psi(1)-psi(2)} = e^{-1} per factor
        # and the concentration is tuned so its geometric weight is 1
        K = 5
        sticks = BetaParams(np.ones(K), np.ones(K))
        alpha = GammaParams(1.0, float(np.exp(-np.euler_gamma)))
        geo = compute_geo_alpha_pi(sticks, alpha)
        np.testing.assert_allclose(geo, np.exp(-(np.arange(K) + 1.0)), rtol=1e-12)

    def test_single_state_composition(self):
        from scipy.special import digamma as ref

        sticks = BetaParams(np.array([2.0]), np.array([3.0]))
        alpha = GammaParams(1.5, 0.4)
        geo = compute_geo_alpha_pi(sticks, alpha)
        expected = np.exp(ref(1.5) - np.log(0.4) + ref(2.0) - ref(5.0))
        np.testing.assert_allclose(geo, [expected], rtol=1e-12)

    def test_symmetric_sticks_decay(self):
        sticks = BetaParams(np.full(6, 2.0), np.full(6, 5.0))
        geo = compute_geo_alpha_pi(sticks, GammaParams(1.0, 0.1))
        assert np.all(np.diff(geo) < 0)
        assert np.all(geo > 0)

    def test_deep_truncation_stays_positive(self):
        K = 500
        sticks = BetaParams(np.ones(K), np.full(K, 50.0))
        geo = compute_geo_alpha_pi(sticks, GammaParams(1.0, 0.1))
        assert np.all(geo > 0) and np.all(np.isfinite(geo))

    def test_startup_cache_is_pinned_flat(self):
        post = HdpPosterior.initial(7)
        np.testing.assert_array_equal(post.geo_alpha_pi, np.full(7, 0.1))


class TestAbsenceLogProbs:
    def test_single_state_deterministic(self):
        params = SurrogateParams(np.ones((2, 1)), np.full((1, 3), 1 / 3))
        post = forward_backward(params, np.array([0, 2, 1]))
        pair, row = absence_log_probs(post.unary, post.pairwise)
        # every transition into the only state is certain at every step
        assert pair[0, 0] == -np.inf and pair[1, 0] == -np.inf
        assert row[0] == -np.inf and row[1] == -np.inf

    def test_start_row_always_forced(self):
        post, _, _, _ = random_posterior_case(1)
        _, row = absence_log_probs(post.unary, post.pairwise)
        assert row[0] == -np.inf

    def test_hand_computed_two_state(self):
        post, _, _, _ = random_posterior_case(2, num_states=2, seq_len=3)
        pair, row = absence_log_probs(post.unary, post.pairwise)
        expected = np.log1p(-post.pairwise[0, 1, 0]) + sum(
            np.log1p(-post.pairwise[t, 1, 0]) for t in (1, 2)
        )
        assert abs(pair[1, 0] - expected) < 1e-12
        expected_row = np.log1p(-post.unary[0, 0]) + np.log1p(-post.unary[1, 0])
        assert abs(row[1] - expected_row) < 1e-12

    def test_nonpositive(self):
        for seed in range(5):
            post, _, _, _ = random_posterior_case(100 + seed)
            pair, row = absence_log_probs(post.unary, post.pairwise)
            assert np.all(pair <= 0) and np.all(row <= 0)


class TestExpectedTables:
    def test_one_certain_customer_is_one_table(self):
        # a single replicate with a guaranteed transition seats exactly one
        # customer, hence exactly one table whatever the concentration
        post = make_posterior(2, [0.37, 1.8])
        mean_counts = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        mlqp = np.zeros((3, 2))
        mlqp[0, 0] = -np.inf
        mlqr = np.array([-np.inf, 0.0, 0.0])
        tables = tables_from_aggregates(mean_counts, mlqp, mlqr, 1, post)
        assert abs(tables.es[0, 0] - 1.0) < 1e-9
        # one certain customer at the restaurant level: E[log eta] = -1/E[alpha]
        assert abs(tables.elogeta[0] - (-1.0 / 10.0)) < 1e-9
        assert tables.es[0, 1] == 0.0 and tables.elogeta[1] == 0.0

    def test_zero_cells_short_circuit(self):
        post = make_posterior(2, [0.5, 0.5])
        mean_counts = np.array([[0.5, 0.0], [0.3, 0.0], [0.0, 0.0]])
        mlqp = np.where(mean_counts > 0, -0.7, 0.0)
        mlqr = np.array([-0.7, -0.4, 0.0])
        tables = tables_from_aggregates(mean_counts, mlqp, mlqr, 10, post)
        assert np.all(tables.es[:, 1] == 0.0)
        assert tables.es[2, 0] == 0.0
        assert tables.elogeta[2] == 0.0
        assert tables.es[0, 0] > 0 and tables.es[1, 0] > 0

    def test_tables_bounded_by_customers_and_presence(self):
        for seed in range(120):
            post, localC, hdp_post, rng = random_posterior_case(200 + seed)
            n = int(rng.integers(1, 1000))
            tables = expected_tables(localC, post.unary, post.pairwise, n, hdp_post)
            assert np.all(tables.es >= 0) and np.all(np.isfinite(tables.es))
            assert np.all(tables.elogeta <= 0) and np.all(np.isfinite(tables.elogeta))
            # never more tables than expected customers
            assert np.all(tables.es <= n * localC * (1 + 1e-10) + 1e-12)
            # at least one table whenever anyone shows up at all
            lqp, _ = absence_log_probs(post.unary, post.pairwise)
            q_pos = -np.expm1(n * lqp)
            active = localC > 0
            assert np.all(tables.es[active] >= q_pos[active] - 1e-12)

    def test_growth_in_replicates_concave_and_monotone(self):
        post, localC, hdp_post, _ = random_posterior_case(7, num_states=3, seq_len=10)
        grid = [2**i for i in range(11)]
        curves = np.array([
            expected_tables(localC, post.unary, post.pairwise, n, hdp_post).es
            for n in grid
        ])
        etas = np.array([
            expected_tables(localC, post.unary, post.pairwise, n, hdp_post).elogeta
            for n in grid
        ])
        diffs = np.diff(curves, axis=0)
        assert np.all(diffs >= -1e-12)
        slopes = diffs / np.diff(grid)[:, None, None]
        assert np.all(np.diff(slopes, axis=0) <= 1e-10)
        assert np.all(np.diff(etas, axis=0) <= 1e-12)

    def test_sublinear_replication(self):
        post, localC, hdp_post, _ = random_posterior_case(8, num_states=2, seq_len=4)
        es = {
            n: expected_tables(localC, post.unary, post.pairwise, n, hdp_post).es
            for n in (1, 10, 100)
        }
        active = localC > 1e-3
        assert np.all(es[10][active] < 10 * es[1][active])
        assert np.all(es[100][active] < 10 * es[10][active])

    def test_matches_restaurant_simulation(self):
        rng = np.random.default_rng(77)
        trans = rng.dirichlet(np.ones(2), size=3)
        emit = rng.dirichlet(np.ones(4), size=2)
        seq = rng.integers(0, 4, 4)
        params = SurrogateParams(trans, emit)
        post = forward_backward(params, seq)
        localC, _ = local_stats(post, seq, 4)
        geo = np.array([0.3, 0.2])
        hdp_post = make_posterior(2, geo)
        seed = 1000
        for n in (1, 10, 100):
            tables = expected_tables(localC, post.unary, post.pairwise, n, hdp_post)
            for row in range(3):
                for col in range(2):
                    if localC[row, col] < 0.05:
                        continue
                    if row == 0:
                        probs = [post.pairwise[0, 0, col]]
                    else:
                        probs = list(post.pairwise[1:, row, col])
                    seed += 1
                    mc = crp_expected_tables_mc(probs, n, geo[col], 10_000, seed)
                    assert abs(tables.es[row, col] - mc) <= 0.15 * mc


class TestValidation:
    def test_table_stats_shapes_and_signs(self):
        with pytest.raises(ValueError):
            TableStats(np.zeros((3, 3)), np.zeros(4))
        with pytest.raises(ValueError):
            TableStats(np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            TableStats(-np.ones((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            TableStats(np.zeros((3, 2)), np.ones(3))

    def test_posterior_geo_validation(self):
        sticks = BetaParams(np.ones(2), np.ones(2))
        with pytest.raises(ValueError):
            HdpPosterior(sticks, GammaParams(1, 1), GammaParams(1, 1), np.zeros(2))
        with pytest.raises(ValueError):
            HdpPosterior(sticks, GammaParams(1, 1), GammaParams(1, 1), np.ones(3))

    def test_update_rho_and_shape_domain(self):
        post = HdpPosterior.initial(3)
        tables = TableStats.zeros(3)
        for rho in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                update_hdp(post, tables, rho)
        with pytest.raises(ValueError):
            update_hdp(post, TableStats.zeros(4), 1.0)


class TestUpdate:
    def test_full_step_zero_tables_closed_form(self):
        # with no observed tables the coupled solve has the exact solution
        # E[gamma] = 10: v = 10, b_gamma = (1 + K) / 10 * prior rate shape
        K = 5
        post = update_hdp(HdpPosterior.initial(K), TableStats.zeros(K), 1.0)
        np.testing.assert_array_equal(post.sticks.u, np.ones(K))
        np.testing.assert_allclose(post.sticks.v, np.full(K, 10.0), atol=1e-9)
        assert post.gamma.a == 1.0 + K
        assert abs(post.gamma.b - 0.1 * (1.0 + K)) < 1e-10
        assert post.alpha.a == 1.0
        assert abs(post.alpha.b - 0.1) < 1e-15

    def test_cache_refreshed(self):
        post = update_hdp(HdpPosterior.initial(4), TableStats.zeros(4), 1.0)
        np.testing.assert_array_equal(
            post.geo_alpha_pi, compute_geo_alpha_pi(post.sticks, post.alpha)
        )

    def _random_tables(self, seed, num_states):
        rng = np.random.default_rng(seed)
        es = rng.uniform(0.0, 3.0, size=(num_states + 1, num_states))
        elogeta = -rng.uniform(0.0, 0.5, size=num_states + 1)
        return TableStats(es, elogeta)

    def test_vanishing_step_changes_nothing(self):
        post = update_hdp(HdpPosterior.initial(3), self._random_tables(1, 3), 1.0)
        after = update_hdp(post, self._random_tables(2, 3), 1e-12)
        np.testing.assert_allclose(after.sticks.u, post.sticks.u, rtol=1e-9)
        np.testing.assert_allclose(after.sticks.v, post.sticks.v, rtol=1e-9)
        assert abs(after.alpha.a - post.alpha.a) < 1e-9
        assert abs(after.gamma.b - post.gamma.b) < 1e-6

    def test_full_step_idempotent(self):
        tables = self._random_tables(3, 4)
        once = update_hdp(HdpPosterior.initial(4), tables, 1.0)
        twice = update_hdp(once, tables, 1.0)
        np.testing.assert_array_equal(once.sticks.u, twice.sticks.u)
        np.testing.assert_array_equal(once.sticks.v, twice.sticks.v)
        assert (once.alpha.a, once.alpha.b) == (twice.alpha.a, twice.alpha.b)
        assert (once.gamma.a, once.gamma.b) == (twice.gamma.a, twice.gamma.b)
        np.testing.assert_array_equal(once.geo_alpha_pi, twice.geo_alpha_pi)

    def test_stick_means_follow_table_mass(self):
        # a state receiving most tables should claim a larger stick share
        K = 3
        es = np.zeros((K + 1, K))
        es[:, 0] = 5.0
        es[:, 1] = 0.5
        tables = TableStats(es, -0.1 * np.ones(K + 1))
        post = update_hdp(HdpPosterior.initial(K), tables, 1.0)
        means = np.asarray(post.sticks.u) / (
            np.asarray(post.sticks.u) + np.asarray(post.sticks.v)
        )
        assert means[0] > means[1] > means[2]


class TestBatchTrajectory:
    def test_matches_independent_implementation(self):
        # full-batch co-evolution of statistics and stick posterior, step
        # size pinned to 1, against a from-scratch implementation
        rng = np.random.default_rng(90)
        K, V = 3, 5
        vocab = Vocabulary(f"w{i}" for i in range(V - 1))
        seqs = [rng.integers(0, V, rng.integers(8, 15)) for _ in range(5)]
        corpus = Corpus.from_sequences(seqs, vocab)
        stats = initialize_stats(K, V, corpus.counts, seed=17)
        prior = EmissionPrior.symmetric(0.1, V)
        snaps = batch_hdp_scvi(
            seqs, K, V, 0.1,
            stats.trans_counts, stats.emissions.token_stats, 20,
        )
        post = HdpPosterior.initial(K)
        current = stats
        for i in range(20):
            acc = HdpAccumulator(K)
            current = process_minibatch(
                current, seqs, Schedule(1.0), HdpMode(post), prior,
                len(seqs), hdp_acc=acc,
            )
            tables = tables_from_aggregates(*acc.means(), len(seqs), post)
            post = update_hdp(post, tables, 1.0)
            ref = snaps[i]
            np.testing.assert_allclose(
                current.trans_counts, ref["counts"], rtol=1e-8, atol=1e-10
            )
            np.testing.assert_allclose(
                current.emissions.token_stats, ref["tokens"], rtol=1e-8, atol=1e-10
            )
            np.testing.assert_allclose(post.sticks.u, ref["u"], rtol=1e-8)
            np.testing.assert_allclose(post.sticks.v, ref["v"], rtol=1e-8)
            np.testing.assert_allclose(
                [post.alpha.a, post.alpha.b], ref["alpha"], rtol=1e-8
            )
            np.testing.assert_allclose(
                [post.gamma.a, post.gamma.b], ref["gamma"], rtol=1e-8
            )
            np.testing.assert_allclose(post.geo_alpha_pi, ref["geo"], rtol=1e-7)
