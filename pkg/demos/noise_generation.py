"""Generate Gaussian blobs and corrupt them three ways; print the empirical transitions."""
import numpy as np

from coresieve.datagen import corrupt, empirical_transition, make_blobs

np.set_printoptions(precision=3, suppress=True)

data = make_blobs(20000, 4, 20, 4.0, seed=0)
print("clean set:", len(data), "samples,", data.num_classes, "classes, dim", data.dim)

for kind in ("symmetric", "asymmetric", "instance"):
    noisy, spec = corrupt(data, kind, 0.4, seed=1)
    print(f"\n{kind} noise, eps=0.4 -> corruption rate {noisy.corruption_rate():.4f}")
    print(empirical_transition(noisy))

# instance noise keeps a per-sample flip rate; its mean tracks eps
noisy, spec = corrupt(data, "instance", 0.4, seed=1)
print("\nper-sample flip rates: mean %.4f, min %.4f, max %.4f" % (spec.flip_rates.mean(), spec.flip_rates.min(),
                                                                  spec.flip_rates.max()))
