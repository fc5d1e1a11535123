"""Exact risk decomposition and the beta interval on small enumerable worlds."""
import json

import numpy as np

from coresieve import theory as th
from coresieve.datagen import DiscreteWorld

with open("configs/reference_world.json") as fh:
    world = DiscreteWorld.from_dict(json.load(fh))
print(th.dumps_report(th.oracle_report(world, beta=1.0)))

# a world where the beta interval is non-empty but a beta inside it still
# moves the confident minimizer off the Bayes labels
T = np.array([[0.9, 0.1], [0.2, 0.8]])
offset = DiscreteWorld(np.array([[0.0], [1.0]]), np.array([0.2, 0.8]), np.eye(2), np.stack([T, T]))
iv = th.beta_interval(offset)
print(f"\ninterval [{iv.lower:.4f}, {iv.upper:.4f}], per-atom bound {iv.upper_per_atom:.4f}")
for beta in (1.0, 1.8, 2.0):
    labels, risk = th.brute_force_minimizer(offset, beta)
    print(f"beta {beta}: minimizer {labels.tolist()} (Bayes {offset.bayes_labels().tolist()}), risk {risk:.4f}")

rng = np.random.default_rng(3)
w = th.random_world(rng, 4, 3)
terms = th.decouple(w, rng.dirichlet(np.ones(3), size=4), beta=0.7)
print(f"\nrandom world: lhs {terms.lhs:.6f} = {terms.term1:.6f} + {terms.term2:.6f} + {terms.term3:.6f}"
      f"  (residual {terms.residual:.1e})")
