#!/usr/bin/env python3
"""Train on a synthetic log and report suffix similarity and remaining-time MAE.

    python scripts/desk_experiment.py --model branching --epochs 100 --k 1 3
    python scripts/desk_experiment.py --model chain --epochs 60 --out chain.json
"""
import argparse
import json
import logging
import time

import numpy as np

from suffixgan.decode import beam_search
from suffixgan.encoding import build_vocabulary, fit_normalizer, make_dataset
from suffixgan.eventlog import split_log
from suffixgan.gumbel import TemperatureSchedule
from suffixgan.metrics import ScoredPrefix, evaluate, similarity
from suffixgan.seq2seq import ModelConfig, build_models
from suffixgan.synthetic import branching_model, chain_model, generate_synthetic_log, load_model
from suffixgan.training import TrainConfig, convergence_report, train

log = logging.getLogger("desk_experiment")


def uniform_baseline(event_log, vocab, pairs, seed, draws=50):
    rng = np.random.default_rng(seed)
    acts = sorted(event_log.activity_universe)
    sims = [similarity(list(rng.choice(acts, len(p.suffix_labels(vocab)))), p.suffix_labels(vocab))
            for p in pairs for _ in range(draws)]
    return float(np.mean(sims))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", default="branching", help="'chain', 'branching' or a model JSON file")
    ap.add_argument("--n-traces", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--layers", type=int, default=2)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--adversarial-weight", type=float, default=1.0)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 3])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", help="write the results as JSON")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    presets = {"chain": chain_model, "branching": branching_model}
    process = presets[args.model]() if args.model in presets else load_model(args.model)
    event_log = generate_synthetic_log(process, args.n_traces, args.seed)
    train_log, test_log, val_log = split_log(event_log, (0.8, 0.15, 0.05), 0)
    vocab, norm = build_vocabulary(event_log), fit_normalizer(train_log)
    train_pairs, test_pairs, val_pairs = (make_dataset(p, vocab, norm) for p in (train_log, test_log, val_log))
    print(f"{len(event_log)} traces, {len(vocab) - 1} activities; "
          f"{len(train_pairs)}/{len(test_pairs)}/{len(val_pairs)} train/test/validation pairs")

    g, d = build_models(ModelConfig(len(vocab), args.hidden, args.layers), seed=0)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
                      adversarial_weight=args.adversarial_weight,
                      schedule=TemperatureSchedule(0.9, 0.05, args.epochs))
    start = time.perf_counter()
    g, d, history = train(g, d, train_pairs, val_pairs, cfg)
    train_s = time.perf_counter() - start
    conv = convergence_report(history)
    print(f"trained {args.epochs} epochs in {train_s:.1f} s; validation loss {history[0].validation_loss:.3f} -> "
          f"{min(r.validation_loss for r in history):.3f}; final D(fake) {conv.mean_d_fake_last:.3f}")

    max_len = max(len(t) for t in train_log)
    results = {"baseline_similarity": uniform_baseline(event_log, vocab, test_pairs, args.seed), "by_k": {}}
    for k in args.k:
        items = []
        for p in test_pairs:
            preds = beam_search(g, p.prefix, k, max_len, vocab, norm)
            items.append(ScoredPrefix(p.case_id, p.k, [r.suffix_labels for r in preds],
                                      [r.remaining_time for r in preds], p.suffix_labels(vocab), p.remaining_time))
        rep = evaluate(items)
        results["by_k"][k] = rep.summary()
        best = rep.mean_best_of_k_similarity
        print(f"k={k}: similarity {rep.mean_similarity:.3f}"
              + (f", best-of-k {best:.3f}" if best is not None else "")
              + f", MAE {rep.mae_days:.2f} days")
    print(f"uniform-random suffix baseline: {results['baseline_similarity']:.3f}")
    results.update(args=vars(args), train_seconds=train_s, slopes=conv.slopes)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
