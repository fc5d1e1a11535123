"""Loss variance of the clean-optimal classifier, closed form vs. simulation."""
import math

import numpy as np

from coresieve import theory as th

l_max, l_min = -math.log(1e-12), 0.0
rng = np.random.default_rng(0)
print(" eps   closed form   monte carlo   (SE)")
for eps in (0.1, 0.2, 0.4, 0.6):
    _, var = th.variance_example(eps, l_max, l_min)
    mc, se = th.variance_monte_carlo(eps, l_max, l_min, 4, 1_000_000, rng)
    print(f"{eps:4.1f}  {var:11.3f}  {mc:12.3f}  ({se:.3f})")
