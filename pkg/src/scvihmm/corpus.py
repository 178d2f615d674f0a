"""Corpus ingestion, vocabulary handling, splits, batching, synthesis.

Text corpora are UTF-8, one sequence per line, whitespace-delimited.
Index 0 of every vocabulary is reserved for the unknown token so held-out
evaluation never fails on unseen words; vocabulary files list one real word
per line (line number = index - 1).
"""

from dataclasses import dataclass, field

import numpy as np

UNK = "<unk>"

__all__ = [
    "UNK",
    "Vocabulary",
    "Corpus",
    "SyntheticSpec",
    "GroundTruth",
    "load_corpus",
    "save_corpus",
    "split",
    "generate_synthetic",
    "minibatches",
]


class Vocabulary:
    """Bidirectional word/index map with the unknown token pinned at 0."""

    def __init__(self, words=()):
        self._words = [UNK]
        self._index = {UNK: 0}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        idx = self._index.get(word)
        if idx is None:
            idx = len(self._words)
            self._words.append(word)
            self._index[word] = idx
        return idx

    def index(self, word: str):
        return self._index.get(word)

    def word(self, idx: int) -> str:
        return self._words[idx]

    def __len__(self):
        return len(self._words)

    @property
    def words(self):
        """Real words in index order, the unknown token excluded."""
        return tuple(self._words[1:])

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._words == other._words

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for w in self._words[1:]:
                fh.write(w + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.strip())


@dataclass
class Corpus:
    """Immutable token-index sequences over a shared vocabulary."""

    sequences: list
    vocab: Vocabulary
    counts: int
    skipped_lines: int = 0

    def __post_init__(self):
        if any(len(s) == 0 for s in self.sequences):
            raise ValueError("corpus must not contain empty sequences")
        vocab_size = len(self.vocab)
        for s in self.sequences:
            if np.any(s < 0) or np.any(s >= vocab_size):
                raise ValueError("sequence token index outside vocabulary")

    def __len__(self):
        return len(self.sequences)

    @classmethod
    def from_sequences(cls, sequences, vocab) -> "Corpus":
        seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
        return cls(seqs, vocab, sum(int(s.size) for s in seqs))


def load_corpus(path, vocab: Vocabulary = None, oov: str = "unk") -> Corpus:
    """Parse a text corpus; build the vocabulary unless one is supplied.

    With a frozen vocabulary, unknown words are mapped to index 0 when
    ``oov="unk"`` and rejected (naming the line and token) when
    ``oov="error"``.
    """
    if oov not in ("unk", "error"):
        raise ValueError(f"unknown oov policy {oov!r}")
    frozen = vocab is not None
    if not frozen:
        vocab = Vocabulary()
    sequences = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                skipped += 1
                continue
            seq = np.empty(len(tokens), dtype=np.int64)
            for j, tok in enumerate(tokens):
                if frozen:
                    idx = vocab.index(tok)
                    if idx is None:
                        if oov == "error":
                            raise ValueError(
                                f"line {lineno}: token {tok!r} not in vocabulary"
                            )
                        idx = 0
                else:
                    idx = vocab.add(tok)
                seq[j] = idx
            sequences.append(seq)
    if not sequences:
        raise ValueError(f"no sequences in corpus file {path}")
    counts = sum(int(s.size) for s in sequences)
    return Corpus(sequences, vocab, counts, skipped_lines=skipped)


def save_corpus(corpus: Corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for seq in corpus.sequences:
            fh.write(" ".join(corpus.vocab.word(int(i)) for i in seq) + "\n")


def split(corpus: Corpus, train_fraction: float, seed: int):
    """Deterministic shuffled split into (train, test) sharing the vocabulary."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    n = len(corpus)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(
            f"train_fraction {train_fraction} leaves an empty side for {n} sequences"
        )
    order = np.random.default_rng(seed).permutation(n)
    train = [corpus.sequences[i] for i in order[:n_train]]
    test = [corpus.sequences[i] for i in order[n_train:]]
    return (
        Corpus.from_sequences(train, corpus.vocab),
        Corpus.from_sequences(test, corpus.vocab),
    )


@dataclass
class SyntheticSpec:
    """Generating chain for synthetic corpora.

    ``trans`` is (K+1) x K with row 0 the start distribution; ``emit`` is
    K x V over raw symbol ids 0..V-1.  Corpus token index = raw id + 1
    (index 0 stays reserved for the unknown token).
    """

    num_states: int
    vocab_size: int
    trans: np.ndarray
    emit: np.ndarray
    seq_count: int
    min_length: int
    max_length: int
    seed: int = 0

    def __post_init__(self):
        self.trans = np.asarray(self.trans, dtype=float)
        self.emit = np.asarray(self.emit, dtype=float)
        if self.trans.shape != (self.num_states + 1, self.num_states):
            raise ValueError("trans must be (K+1) x K")
        if self.emit.shape != (self.num_states, self.vocab_size):
            raise ValueError("emit must be K x V")
        for name, mat in (("trans", self.trans), ("emit", self.emit)):
            if np.any(mat < 0.0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-10):
                raise ValueError(f"{name} rows must be stochastic")
        if self.seq_count < 1 or self.min_length < 1 or self.max_length < self.min_length:
            raise ValueError("invalid sequence count or length range")

    @classmethod
    def random(
        cls,
        num_states: int,
        vocab_size: int,
        seq_count: int,
        min_length: int,
        max_length: int,
        seed: int = 0,
        self_persistence: float = 0.0,
    ) -> "SyntheticSpec":
        """Random Dirichlet rows; ``self_persistence`` adds extra mass on
        self-transitions to make states sticky."""
        rng = np.random.default_rng(seed)
        trans = rng.dirichlet(np.ones(num_states), size=num_states + 1)
        if self_persistence > 0.0:
            trans[1:] = (1.0 - self_persistence) * trans[1:]
            trans[1:] += self_persistence * np.eye(num_states)
        emit = rng.dirichlet(np.ones(vocab_size), size=num_states)
        return cls(num_states, vocab_size, trans, emit, seq_count, min_length, max_length, seed)


@dataclass
class GroundTruth:
    """The generating parameters, for oracle evaluation of synthetic runs."""

    trans: np.ndarray
    emit: np.ndarray


def _sample_rows(cum_rows: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # inverse-CDF draw per row: count how many cumulative cells each uniform exceeds
    return (u[:, None] > cum_rows[rows]).sum(axis=1)


def generate_synthetic(spec: SyntheticSpec):
    """Sample a corpus from the spec's chain; also returns the generator.

    Sequences are drawn in lockstep across the corpus (vectorized over the
    position axis), with per-sequence lengths uniform on
    [min_length, max_length].
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.seq_count
    lengths = rng.integers(spec.min_length, spec.max_length + 1, size=n)
    t_max = int(lengths.max())
    cum_trans = np.cumsum(spec.trans, axis=1)
    cum_emit = np.cumsum(spec.emit, axis=1)

    states = np.empty((n, t_max), dtype=np.int64)
    tokens = np.empty((n, t_max), dtype=np.int64)
    states[:, 0] = (rng.random(n)[:, None] > cum_trans[0]).sum(axis=1)
    tokens[:, 0] = _sample_rows(cum_emit, states[:, 0], rng.random(n))
    for t in range(1, t_max):
        states[:, t] = _sample_rows(cum_trans, states[:, t - 1] + 1, rng.random(n))
        tokens[:, t] = _sample_rows(cum_emit, states[:, t], rng.random(n))

    vocab = Vocabulary(f"w{i}" for i in range(spec.vocab_size))
    sequences = [tokens[i, : lengths[i]] + 1 for i in range(n)]
    corpus = Corpus.from_sequences(sequences, vocab)
    return corpus, GroundTruth(spec.trans.copy(), spec.emit.copy())


def minibatches(corpus: Corpus, batch_size: int, seed: int, mode: str = "shuffle"):
    """Infinite stream of index batches.

    ``shuffle`` chunks a fresh permutation each pass (final batch may be
    short); ``iid`` draws ``batch_size`` uniform indices with replacement.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if mode not in ("shuffle", "iid"):
        raise ValueError(f"unknown batch mode {mode!r}")
    rng = np.random.default_rng(seed)
    n = len(corpus)
    if mode == "iid":
        while True:
            yield rng.integers(0, n, size=batch_size)
    else:
        while True:
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                yield order[start : start + batch_size]
