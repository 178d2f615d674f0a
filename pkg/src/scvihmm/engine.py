"""Stochastic training loop over expected collapsed statistics.

One minibatch step freezes the surrogate transition and emission matrices,
sweeps every sequence in the batch with forward-backward against that
frozen snapshot, and blends the corpus-scaled batch statistics into the
running expectations with step size rho_n = (1+n)^(-kappa).  In
hierarchical mode the stick posterior is refreshed once per large batch
from per-sequence table-count estimates accumulated along the way; the
finite mode simply has no large-batch level.

Sequences within a minibatch are independent given the frozen snapshot, so
they may be swept by a thread pool; results are reduced in submission
order, which keeps multi-threaded runs bit-identical to serial ones.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .corpus import Corpus, minibatches
from .emissions import EmissionPrior, EmissionStats, surrogate_emission_matrix
from .hdp import (
    HdpPosterior,
    absence_log_probs,
    tables_from_aggregates,
    update_hdp,
)
from .messages import (
    SurrogateParams,
    forward_backward,
    local_stats,
    sequence_log_likelihood,
)
from .special import GammaParams

# a state counts as "used" if its incoming expected-transition mass
# exceeds this fraction of the total
K_EFFECTIVE_THRESHOLD = 1e-3

__all__ = [
    "NumericalError",
    "GlobalStats",
    "Schedule",
    "FiniteMode",
    "HdpMode",
    "MetricRecord",
    "TrainedModel",
    "step_size",
    "initialize_stats",
    "build_surrogate",
    "process_minibatch",
    "batch_stream",
    "train",
    "predictive_log_likelihood",
    "k_effective",
]


class NumericalError(RuntimeError):
    """Local statistics stopped being finite; message identifies where."""


@dataclass
class GlobalStats:
    """Running expected transition counts and emission statistics.

    ``trans_counts`` is (K+1) x K with row 0 holding start transitions.
    """

    trans_counts: np.ndarray
    emissions: EmissionStats

    def __post_init__(self):
        c = np.asarray(self.trans_counts, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] + 1:
            raise ValueError("trans_counts must be (K+1) x K")
        if not np.all(np.isfinite(c)) or np.any(c < 0.0):
            raise ValueError("trans_counts entries must be finite and >= 0")
        if self.emissions.token_stats.shape[0] != c.shape[1]:
            raise ValueError("emission stats state count does not match trans_counts")
        self.trans_counts = c


@dataclass
class Schedule:
    """Step-size schedule state.

    kappa in [0.5, 1]; strictly above 0.5 gives the summability guarantee
    (sum of rho diverges, sum of rho^2 converges), 0.5 itself is the
    customary boundary setting and is accepted.
    """

    kappa: float
    step_counter: int = 0
    minibatch_size: int = 1
    large_batch_size: int = 1

    def __post_init__(self):
        if not 0.5 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0.5, 1]")
        if self.step_counter < 0:
            raise ValueError("step_counter must be >= 0")
        if self.minibatch_size < 1 or self.large_batch_size < self.minibatch_size:
            raise ValueError("need large_batch_size >= minibatch_size >= 1")


def step_size(sched: Schedule) -> float:
    """rho_n = (1+n)^(-kappa) for the schedule's current counter."""
    return float((1.0 + sched.step_counter) ** -sched.kappa)


@dataclass(frozen=True)
class FiniteMode:
    """Flat symmetric prior over transition targets."""

    prior_count: float

    def __post_init__(self):
        if not self.prior_count > 0:
            raise ValueError("prior_count must be positive")


@dataclass(frozen=True)
class HdpMode:
    """Hierarchical prior; the posterior is replaced wholesale on update."""

    hdp: HdpPosterior


def initialize_stats(num_states: int, vocab_size: int, token_count: float, seed: int) -> GlobalStats:
    """Exponential random statistics scaled to the corpus token mass.

    Scaling both totals to the token count makes the first sub-unity step
    sizes blend comparably sized quantities.
    """
    rng = np.random.default_rng(seed)
    trans = rng.exponential(1.0, size=(num_states + 1, num_states))
    trans *= token_count / trans.sum()
    emit = rng.exponential(1.0, size=(num_states, vocab_size))
    emit *= token_count / emit.sum()
    return GlobalStats(trans, EmissionStats(emit, emit.sum(axis=1)))


def build_surrogate(stats: GlobalStats, mode, prior: EmissionPrior) -> SurrogateParams:
    """Point transition/emission matrices from the current statistics.

    Each transition row k is proportional to prior_term + counts, where
    the prior term is the flat count in finite mode and the per-target
    geometric weight in hierarchical mode (the start row included).
    """
    if isinstance(mode, FiniteMode):
        prior_term = np.full(stats.trans_counts.shape[1], mode.prior_count)
    elif isinstance(mode, HdpMode):
        prior_term = mode.hdp.geo_alpha_pi
    else:
        raise TypeError(f"unknown model mode {type(mode).__name__}")
    unnorm = prior_term[None, :] + stats.trans_counts
    trans = unnorm / unnorm.sum(axis=1, keepdims=True)
    emit = surrogate_emission_matrix(prior, stats.emissions)
    return SurrogateParams(trans, emit)


class HdpAccumulator:
    """Per-sequence table-statistic inputs summed over a large batch."""

    def __init__(self, num_states: int):
        self.sum_counts = np.zeros((num_states + 1, num_states))
        self.sum_logq0_pair = np.zeros((num_states + 1, num_states))
        self.sum_logq0_row = np.zeros(num_states + 1)
        self.count = 0

    def add(self, localC, logq0_pair, logq0_row):
        self.sum_counts += localC
        self.sum_logq0_pair += logq0_pair
        self.sum_logq0_row += logq0_row
        self.count += 1

    def means(self):
        if self.count == 0:
            raise ValueError("no sequences accumulated")
        return (
            self.sum_counts / self.count,
            self.sum_logq0_pair / self.count,
            self.sum_logq0_row / self.count,
        )


def _sequence_stats(params, seq, vocab_size, want_absence):
    post = forward_backward(params, seq)
    localC, localT = local_stats(post, seq, vocab_size)
    if want_absence:
        pair, row = absence_log_probs(post.unary, post.pairwise)
        return localC, localT, pair, row
    return localC, localT, None, None


def process_minibatch(
    stats: GlobalStats,
    batch,
    sched: Schedule,
    mode,
    prior: EmissionPrior,
    corpus_size: int,
    hdp_acc: HdpAccumulator = None,
    pool: ThreadPoolExecutor = None,
) -> GlobalStats:
    """One stochastic update of the global statistics.

    Freezes the surrogate, sweeps the batch, then blends
    (1-rho) * old + rho * (N/M) * batch sums, where N is the corpus
    sequence count and M the batch's actual size.  Increments the step
    counter.  When ``hdp_acc`` is given, per-sequence table inputs are
    accumulated into it along the way.
    """
    if len(batch) == 0:
        raise ValueError("minibatch must not be empty")
    params = build_surrogate(stats, mode, prior)
    rho = step_size(sched)
    vocab_size = params.vocab_size
    want_absence = hdp_acc is not None

    def work(seq):
        return _sequence_stats(params, seq, vocab_size, want_absence)

    results = pool.map(work, batch) if pool is not None else map(work, batch)
    sum_counts = np.zeros_like(stats.trans_counts)
    sum_tokens = np.zeros_like(stats.emissions.token_stats)
    for pos, (localC, localT, pair, row) in enumerate(results):
        if not (np.all(np.isfinite(localC)) and np.all(np.isfinite(localT))):
            raise NumericalError(
                f"non-finite local statistics for sequence at batch position {pos}"
                f" (step {sched.step_counter})"
            )
        sum_counts += localC
        sum_tokens += localT
        if want_absence:
            hdp_acc.add(localC, pair, row)

    scale = corpus_size / len(batch)
    new_counts = (1.0 - rho) * stats.trans_counts + rho * scale * sum_counts
    new_tokens = (1.0 - rho) * stats.emissions.token_stats + rho * scale * sum_tokens
    sched.step_counter += 1
    return GlobalStats(new_counts, EmissionStats(new_tokens, new_tokens.sum(axis=1)))


@dataclass
class MetricRecord:
    """One evaluation point along a training run."""

    step: int
    pass_index: int
    seconds: float
    heldout_ll: float
    k_effective: int


@dataclass
class TrainedModel:
    """Everything needed to rebuild surrogates and evaluate."""

    algorithm: str
    num_states: int
    vocab_size: int
    config: RunConfig
    stats: GlobalStats = None
    mode: object = None
    rows: object = None
    vocab: object = None

    def surrogate(self) -> SurrogateParams:
        if self.algorithm == "svi-hmm":
            from .svi import svi_surrogate

            return svi_surrogate(self.rows)
        prior = EmissionPrior.symmetric(self.config.emit_prior, self.vocab_size)
        return build_surrogate(self.stats, self.mode, prior)

    def expected_transitions(self) -> np.ndarray:
        if self.algorithm == "svi-hmm":
            return np.maximum(self.rows.trans_posterior - self.config.trans_prior, 0.0)
        return self.stats.trans_counts


def k_effective(model: TrainedModel) -> int:
    """States whose incoming expected-transition mass is non-negligible."""
    counts = model.expected_transitions()
    column_mass = counts.sum(axis=0)
    return int(np.sum(column_mass > K_EFFECTIVE_THRESHOLD * column_mass.sum()))


def predictive_log_likelihood(model, heldout: Corpus) -> float:
    """Average per-time-step log likelihood over a held-out corpus."""
    if len(heldout.sequences) == 0:
        raise ValueError("held-out corpus is empty")
    params = model.surrogate() if isinstance(model, TrainedModel) else model
    total_ll = 0.0
    total_steps = 0
    for seq in heldout.sequences:
        total_ll += sequence_log_likelihood(params, seq)
        total_steps += seq.size
    return total_ll / total_steps


def batch_stream(corpus: Corpus, config: RunConfig):
    """The minibatch index stream a training run will consume.

    All algorithms draw from this same stream construction, so runs with
    identical seed, batch size, and mode see identical data order.
    """
    return minibatches(corpus, config.minibatch_size, config.seed, config.batch_mode)


def train(corpus: Corpus, config: RunConfig, heldout: Corpus = None):
    """Run the training loop; returns (model, metric records).

    Metrics are recorded at initialization, at every pass boundary, every
    ``eval_every_steps`` if configured, and at the final step.  Training
    length is ``passes`` sweeps, or ``budget_seconds`` of wall clock when
    set.
    """
    config.validate()
    num_states = config.num_states
    vocab_size = len(corpus.vocab)
    corpus_size = len(corpus)
    emit_prior = EmissionPrior.symmetric(config.emit_prior, vocab_size)
    alpha_prior = GammaParams(config.alpha_prior_shape, config.alpha_prior_rate)
    gamma_prior = GammaParams(config.gamma_prior_shape, config.gamma_prior_rate)
    sched = Schedule(config.kappa, 0, config.minibatch_size, config.large_batch_size)

    stats = rows = None
    mode = None
    if config.algorithm == "svi-hmm":
        from .svi import svi_initialize, svi_step

        rows = svi_initialize(
            num_states, vocab_size, config.trans_prior, config.emit_prior,
            corpus.counts, config.seed + 1,
        )
    else:
        stats = initialize_stats(num_states, vocab_size, corpus.counts, config.seed + 1)
        if config.algorithm == "scvi-hdphmm":
            mode = HdpMode(HdpPosterior.initial(num_states, alpha_prior, gamma_prior))
        else:
            mode = FiniteMode(config.trans_prior)

    is_hdp = config.algorithm == "scvi-hdphmm"
    hdp_sched = Schedule(config.kappa, 0, config.minibatch_size, config.large_batch_size)
    steps_per_large = max(1, math.ceil(config.large_batch_size / config.minibatch_size))
    acc = HdpAccumulator(num_states) if is_hdp else None

    stream = batch_stream(corpus, config)
    batches_per_pass = max(1, math.ceil(corpus_size / config.minibatch_size))
    total_steps = None if config.budget_seconds is not None else config.passes * batches_per_pass

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    metrics = []
    start = time.perf_counter()

    def current_model():
        return TrainedModel(
            config.algorithm, num_states, vocab_size, config, stats, mode, rows,
            corpus.vocab,
        )

    def record():
        model = current_model()
        ll = predictive_log_likelihood(model, heldout) if heldout is not None else float("nan")
        metrics.append(
            MetricRecord(
                sched.step_counter,
                sched.step_counter // batches_per_pass,
                time.perf_counter() - start,
                ll,
                k_effective(model),
            )
        )

    try:
        record()
        step = 0
        while True:
            if total_steps is not None and step >= total_steps:
                break
            if config.budget_seconds is not None and time.perf_counter() - start >= config.budget_seconds:
                break
            batch = [corpus.sequences[i] for i in next(stream)]
            if config.algorithm == "svi-hmm":
                rows = svi_step(
                    rows, batch, sched, config.trans_prior, config.emit_prior,
                    corpus_size, pool,
                )
            else:
                stats = process_minibatch(
                    stats, batch, sched, mode, emit_prior, corpus_size, acc, pool
                )
            step += 1
            if is_hdp and step % steps_per_large == 0 and acc.count > 0:
                tables = tables_from_aggregates(*acc.means(), corpus_size, mode.hdp)
                rho = step_size(hdp_sched)
                hdp_sched.step_counter += 1
                mode = HdpMode(update_hdp(mode.hdp, tables, rho, alpha_prior, gamma_prior))
                acc = HdpAccumulator(num_states)
            due_pass = step % batches_per_pass == 0
            due_interval = (
                config.eval_every_steps is not None
                and step % config.eval_every_steps == 0
            )
            if due_pass or due_interval:
                record()
        if metrics[-1].step != sched.step_counter:
            record()
    finally:
        if pool is not None:
            pool.shutdown()
    return current_model(), metrics
