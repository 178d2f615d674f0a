#!/usr/bin/env python3
"""Train all three algorithms on one synthetic corpus and compare them.

Seeds and batch order are matched across algorithms, so differences in the
table below come from the update rules alone.  Writes per-run metric CSVs
next to the chosen output prefix.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from scvihmm.cli import append_metrics
from scvihmm.config import ALGORITHMS, RunConfig
from scvihmm.corpus import SyntheticSpec, generate_synthetic
from scvihmm.engine import predictive_log_likelihood, train
from scvihmm.messages import SurrogateParams


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--true-states", type=int, default=3)
    p.add_argument("--vocab-size", type=int, default=20)
    p.add_argument("--sequences", type=int, default=2000)
    p.add_argument("--heldout-sequences", type=int, default=400)
    p.add_argument("--states", type=int, default=10,
                   help="truncation level the models train at")
    p.add_argument("--passes", type=int, default=10)
    p.add_argument("--minibatch", type=int, default=50)
    p.add_argument("--large-batch", type=int, default=100)
    p.add_argument("--kappa", type=float, default=0.7)
    p.add_argument("--seeds", type=int, default=3, help="number of training seeds")
    p.add_argument("--corpus-seed", type=int, default=21)
    p.add_argument("--self-persistence", type=float, default=0.6)
    p.add_argument("--out-prefix", default=None,
                   help="write <prefix>.<algo>.seed<k>.csv metric files")
    return p.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    spec = SyntheticSpec.random(
        args.true_states, args.vocab_size, args.sequences, 10, 30,
        seed=args.corpus_seed, self_persistence=args.self_persistence,
    )
    corpus, _ = generate_synthetic(spec)
    heldout, _ = generate_synthetic(SyntheticSpec(
        args.true_states, args.vocab_size, spec.trans, spec.emit,
        args.heldout_sequences, 10, 30, seed=args.corpus_seed + 1,
    ))

    emit = np.full((args.true_states, args.vocab_size + 1), 1e-300)
    emit[:, 1:] = spec.emit
    truth = predictive_log_likelihood(SurrogateParams(spec.trans, emit), heldout)
    print(f"corpus: {len(corpus)} train / {len(heldout)} heldout sequences, "
          f"{corpus.counts} train tokens")
    print(f"generating model heldout LL/token: {truth:.4f}\n")

    print(f"{'algorithm':<14} {'seed':>4} {'heldout':>9} {'K_eff':>5} {'secs':>7}")
    for algo in ALGORITHMS:
        for seed in range(args.seeds):
            config = RunConfig(
                algorithm=algo, num_states=args.states, kappa=args.kappa,
                minibatch_size=args.minibatch, large_batch_size=args.large_batch,
                passes=args.passes, seed=seed,
            )
            t0 = time.perf_counter()
            _, metrics = train(corpus, config, heldout)
            elapsed = time.perf_counter() - t0
            final = metrics[-1]
            print(f"{algo:<14} {seed:>4} {final.heldout_ll:>9.4f} "
                  f"{final.k_effective:>5} {elapsed:>7.1f}")
            if args.out_prefix:
                path = Path(f"{args.out_prefix}.{algo}.seed{seed}.csv")
                path.parent.mkdir(parents=True, exist_ok=True)
                append_metrics(path, metrics)
    return 0


if __name__ == "__main__":
    sys.exit(main())
