"""Time one skip-gram epoch with the compiled kernel and the numpy fallback.

    python benchmarks/bench_sgns.py [--dim 300] [--negatives 64] [--repeat 3]
"""
import argparse
import time

import numpy as np

from reportminer import corpus, embedding, kernels, synthetic
from reportminer.seeding import rng_stream


def run(sweep, model, centers, outers, negatives, lr, batch):
    center, outer = model.center.copy(), model.outer.copy()
    losses = np.empty(len(centers))
    t0 = time.perf_counter()
    sweep(center, outer, centers, outers, negatives, lr, batch, losses)
    return time.perf_counter() - t0, center, outer


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dim", type=int, default=300)
    ap.add_argument("--negatives", type=int, default=64)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--sentences", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    reports = synthetic.reports(synthetic.CorpusShape(sentences=args.sentences), seed=0)
    sentences = corpus.corpus_sentences(reports)
    vocab = corpus.build_vocabulary(sentences)
    cfg = embedding.EmbeddingConfig(dim=args.dim, negatives=args.negatives, batch=args.batch)
    model = embedding.init_model(vocab, cfg)
    centers, outers = embedding.generate_pairs(sentences, vocab, cfg.window, rng_stream(0, "bench"))
    negatives = embedding.sample_negatives(corpus.unigram_distribution(vocab),
                                           (len(centers), cfg.negatives), rng_stream(0, "bench-neg"))
    print(f"pairs={len(centers)} V={vocab.size} d={args.dim} k={args.negatives} b={args.batch}")

    backends = [("python", kernels.python_sgns_sweep)]
    if kernels.compiled_sgns_sweep is not None:
        backends.insert(0, ("cython", kernels.compiled_sgns_sweep))
    else:
        print("compiled kernel not built; timing the numpy fallback only")
    results = {}
    for name, sweep in backends:
        times = []
        for _ in range(args.repeat):
            t, center, outer = run(sweep, model, centers, outers, negatives, cfg.lr, cfg.batch)
            times.append(t)
        results[name] = (min(times), center, outer)
        print(f"{name:>7}: best {min(times) * 1e3:9.1f} ms   {len(centers) / min(times):12.0f} pairs/s")
    if len(results) == 2:
        (tc, cc, oc), (tp, cp, op) = results["cython"], results["python"]
        diff = max(np.abs(cc - cp).max(), np.abs(oc - op).max())
        print(f"speedup {tp / tc:.2f}x, max parameter difference {diff:.2e}")


if __name__ == "__main__":
    main()
