"""Flat-top partition of unity on a square and on an L-shaped domain.

Each window is 1 on its flat top and blends into its neighbours over a
strip of width 2*gamma.  The windows sum to one everywhere in the domain,
and their derivatives sum to zero.
"""

import numpy as np

from plategfem import FlatTopParams, LShape, Rectangle, build_patch_grid, pu_eval
from plategfem.pu_grid import window_1d

delta = 1.0 / 3.0
xs = np.linspace(-1.5, 1.5, 13)
print("psi_delta on [-1.5, 1.5]:")
print(np.round(window_1d(xs, delta), 4))

for dom in (Rectangle(-0.5, 0.5, -0.5, 0.5), LShape(0.5)):
    grid = build_patch_grid(dom, 3, FlatTopParams(delta, delta))
    a, b, c, d = dom.bbox
    rng = np.random.default_rng(0)
    p = rng.uniform([a, c], [b, d], size=(4000, 2))
    p = p[dom.contains(p)][:1000]
    total = sum(pu_eval(grid, j, p) for j in grid.alive_ids)
    slope = sum(pu_eval(grid, j, p, (1, 0)) for j in grid.alive_ids)
    print(f"{dom.describe()['kind']:9s} level 3: {grid.n_alive} patches, h = {grid.h:.4f}, "
          f"max |sum - 1| = {np.abs(total - 1).max():.1e}, max |sum of d/dx| = {np.abs(slope).max():.1e}")
