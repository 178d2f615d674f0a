"""Forward-backward message passing over surrogate-parametrized chains.

Uses the scaled (normalized-alpha) recursion: each forward vector is
renormalized and the scale factors are accumulated into the sequence log
likelihood, which keeps everything in ordinary floating point regardless of
sequence length.  State 0 is the start state; it emits nothing, nothing
transitions back into it, and its outgoing row is used only for the first
step of a sequence.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SurrogateParams",
    "SequencePosterior",
    "forward_backward",
    "local_stats",
    "sequence_log_likelihood",
]


@dataclass(frozen=True)
class SurrogateParams:
    """Point parameters for one inference sweep.

    ``trans`` has K+1 rows over K states: row 0 is the start-state row and
    rows 1..K are the per-state transition distributions.  ``emit`` is
    K x V.  All rows must be strictly positive and sum to 1 within 1e-10.
    """

    trans: np.ndarray
    emit: np.ndarray

    def __post_init__(self):
        trans = np.asarray(self.trans, dtype=float)
        emit = np.asarray(self.emit, dtype=float)
        if trans.ndim != 2 or trans.shape[0] != trans.shape[1] + 1:
            raise ValueError("trans must be (K+1) x K")
        if emit.ndim != 2 or emit.shape[0] != trans.shape[1]:
            raise ValueError("emit must be K x V")
        for name, mat in (("trans", trans), ("emit", emit)):
            if not np.all(np.isfinite(mat)) or np.any(mat <= 0.0):
                raise ValueError(f"{name} entries must be finite and > 0")
            if np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-10):
                raise ValueError(f"{name} rows must sum to 1 within 1e-10")
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "emit", emit)

    @property
    def num_states(self) -> int:
        return self.trans.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.emit.shape[1]


@dataclass(frozen=True)
class SequencePosterior:
    """Posterior marginals of one sequence under fixed surrogate parameters.

    ``unary[t][k]`` is q(z_t = k) for the T emitting positions.
    ``pairwise[t]`` is a (K+1) x K slice holding the joint of the previous
    and current state at position t; slice 0 uses the start row (only row 0
    is nonzero there).  Marginalizing a slice over its first axis gives the
    unary row at the same position.  ``loglik`` is the log normalization
    constant of the chain.
    """

    unary: np.ndarray
    pairwise: np.ndarray
    loglik: float


def _check_sequence(seq: np.ndarray, vocab_size: int) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("sequence must be a nonempty 1-d array of token indices")
    if np.any(seq < 0) or np.any(seq >= vocab_size):
        raise ValueError("sequence contains token indices outside the vocabulary")
    return seq


def forward_backward(params: SurrogateParams, seq) -> SequencePosterior:
    """Exact unary/pairwise posteriors and log likelihood for one sequence."""
    seq = _check_sequence(seq, params.vocab_size)
    T = seq.size
    K = params.num_states
    inner = params.trans[1:]
    obs = params.emit[:, seq].T  # T x K likelihood of each position under each state

    alpha = np.empty((T, K))
    scales = np.empty(T)
    vec = params.trans[0] * obs[0]
    scales[0] = vec.sum()
    alpha[0] = vec / scales[0]
    for t in range(1, T):
        vec = (alpha[t - 1] @ inner) * obs[t]
        scales[t] = vec.sum()
        alpha[t] = vec / scales[t]

    beta = np.empty((T, K))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (inner @ (obs[t + 1] * beta[t + 1])) / scales[t + 1]

    unary = alpha * beta
    pairwise = np.zeros((T, K + 1, K))
    pairwise[0, 0] = unary[0]
    if T > 1:
        # joint of adjacent states: alpha-hat from the left, transition,
        # observation and beta-hat from the right, rescaled by that step's
        # normalizer
        pairwise[1:, 1:, :] = (
            alpha[:-1, :, None]
            * inner[None, :, :]
            * (obs[1:] * beta[1:] / scales[1:, None])[:, None, :]
        )
    return SequencePosterior(unary, pairwise, float(np.log(scales).sum()))


def local_stats(post: SequencePosterior, seq, vocab_size: int):
    """Expected transition counts and emission statistics of one sequence.

    Returns ``(localC, localT)`` where localC is (K+1) x K (position sums
    of the pairwise slices) and localT is K x V (unary-weighted token
    indicators).  Both have total mass T.
    """
    seq = np.asarray(seq)
    if seq.size != post.unary.shape[0]:
        raise ValueError("posterior and sequence lengths disagree")
    localC = post.pairwise.sum(axis=0)
    scatter = np.zeros((vocab_size, post.unary.shape[1]))
    np.add.at(scatter, seq, post.unary)
    return localC, scatter.T.copy()


def sequence_log_likelihood(params: SurrogateParams, seq) -> float:
    """Log likelihood of a sequence via the forward recursion alone."""
    seq = _check_sequence(seq, params.vocab_size)
    inner = params.trans[1:]
    obs = params.emit[:, seq].T
    vec = params.trans[0] * obs[0]
    total = 0.0
    for t in range(1, seq.size):
        s = vec.sum()
        total += np.log(s)
        vec = ((vec / s) @ inner) * obs[t]
    return float(total + np.log(vec.sum()))
