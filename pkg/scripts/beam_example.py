#!/usr/bin/env python3
"""Beam search, greedy and sampled decoding over three fixed step distributions."""
import numpy as np

from suffixgan.decode import TableStepper, beam_search_core, greedy_core, hallucinate_decode
from suffixgan.encoding import TimeNormalizer, Vocabulary

STEPS = [[0.3, 0.35, 0.3, 0.05], [0.35, 0.3, 0.3, 0.05], [0.05, 0.3, 0.35, 0.3]]
VOCAB = Vocabulary(("a", "b", "c", "d", "<EOS>"))


def spell(labels):
    return "".join(VOCAB.label_of(i) for i in labels)


def main():
    for k in (1, 2, 3, 5):
        beam = beam_search_core(TableStepper(STEPS), k, len(STEPS))
        print(f"k={k}: " + ", ".join(f"{spell(h.labels)} {h.score:.4f}" for h in beam))
    h = greedy_core(TableStepper(STEPS), len(STEPS))
    print(f"greedy: {spell(h.labels)} {h.score:.4f}")
    runs = hallucinate_decode(TableStepper(STEPS), None, len(STEPS), np.random.default_rng(0), 8, VOCAB,
                              TimeNormalizer())
    print("sampled:", ", ".join("".join(r.suffix_labels) for r in runs))


if __name__ == "__main__":
    main()
