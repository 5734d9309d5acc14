"""Print the averaging constants of both collision rules and the order k* they imply.

    python demos/povzner_table.py
"""

import numpy as np

from polykin.kernels import AngularModel, poly_kernel
from polykin.povzner import default_k_grid, k_star_from, povzner_constants_frozen, povzner_constants_poly

grid = default_k_grid()
rng = np.random.default_rng(1)
frozen = povzner_constants_frozen(AngularModel.isotropic(), grid, n_pairs=3000, rng=rng)
print(f"{'k':>5} {'C_k frozen':>12}")
for k, c in zip(frozen.ks, frozen.C_k):
    print(f"{k:5.1f} {c:12.6f}")

for lb in (1.0, 0.1):
    spec = poly_kernel(lb_factor=lb)
    poly = povzner_constants_poly(spec, grid, n_pairs=1500, rng=np.random.default_rng(2))
    print(f"\nenergy-exchanging rule, lower kernel = {lb:g} x upper kernel")
    print(f"  threshold (lower-kernel mass) = {poly.lb_integral:.6f}")
    print(f"  C_k at k = 2.5, 6, 12, 20: "
          + ", ".join(f"{c:.5f}" for c in poly.C_k[[0, 7, 19, 35]]))
    print(f"  k* = {k_star_from(poly):g}")
