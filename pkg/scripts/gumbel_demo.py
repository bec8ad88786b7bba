#!/usr/bin/env python3
"""How the temperature shapes Gumbel-Softmax samples.

Prints, per temperature, the mean sample, the share of near one-hot draws
and how often the relaxed argmax agrees with a hard Gumbel-Max draw.
"""
import argparse
import math

import torch

from suffixgan.gumbel import TemperatureSchedule, gumbel_max_sample, gumbel_softmax_sample, sample_gumbel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--probs", type=float, nargs="+", default=[0.1, 0.15, 0.05, 0.70])
    ap.add_argument("--draws", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pi = torch.tensor(args.probs, dtype=torch.float64)
    pi = (pi / pi.sum()).expand(args.draws, len(args.probs))
    gen = torch.Generator().manual_seed(args.seed)
    print(f"pi = {[round(v, 3) for v in pi[0].tolist()]}, {args.draws} draws")
    print(f"{'tau':>8} {'mean sample':>36} {'max>0.99':>9} {'argmax=hard':>11}")
    for tau in (0.001, 0.01, 0.1, 0.5, 1.0, 10.0, 100.0):
        noise = sample_gumbel(pi.shape, gen)
        y = gumbel_softmax_sample(pi, tau, noise=noise)
        hard = gumbel_max_sample(pi, noise=noise)
        peaked = (y.max(-1).values > 0.99).double().mean().item()
        agree = (y.argmax(-1) == hard.argmax(-1)).double().mean().item()
        mean = "[" + ", ".join(f"{v:.3f}" for v in y.mean(0).tolist()) + "]"
        print(f"{tau:>8g} {mean:>36} {peaked:>9.4f} {agree:>11.4f}")
    # two equal classes: the noise difference is logistic
    delta = 0.01 * math.log(99)
    print(f"two equal classes, tau=0.01: expected share with max>0.99 = {2 - 2 / (1 + math.exp(-delta)):.4f}")

    sched = TemperatureSchedule(0.9, 0.05, 500)
    print("annealing:", ", ".join(f"epoch {e}: {sched.tau_at(e):.3f}" for e in (0, 100, 250, 400, 500)))


if __name__ == "__main__":
    main()
