"""Sieve-only training vs. the same run followed by the consistency phase on the dropped samples."""
import numpy as np

from coresieve import RunConfig
from coresieve.cli import train_arm

deltas = []
for seed in range(3):
    seeds = {"data": seed, "noise": seed, "train": seed}
    plain = RunConfig.from_dict({"seeds": seeds}).resolved()
    star = RunConfig.from_dict({"seeds": seeds, "consistency": {"enabled": True}}).resolved()
    acc = []
    for cfg in (plain, star):
        _, rows, _ = train_arm(cfg)
        acc.append(rows[-1]["test_acc"])
    deltas.append(acc[1] - acc[0])
    print(f"seed {seed}: sieve only {acc[0]:.4f}  with consistency {acc[1]:.4f}  delta {deltas[-1]:+.4f}")
print(f"mean delta {np.mean(deltas):+.4f}")
