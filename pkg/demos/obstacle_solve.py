"""One obstacle solve with the primal-dual active set method.

The plate is clamped with zero data and pushed up by a quartic obstacle.
Each iteration fixes the predicted contact nodes at the obstacle and solves
the remaining SPD system; the multiplier K u - F is nonnegative on contact.
"""

import numpy as np

from plategfem import (
    GfemSpace,
    assemble_load,
    assemble_stiffness,
    build_constraints,
    check_kkt,
    pdas,
)
from plategfem.experiments import get_example

ex = get_example(2)
sp = GfemSpace.build(ex.domain, 4)
K = assemble_stiffness(sp)
F = assemble_load(sp, ex.f)
box = build_constraints(sp, ex.psi, None, ex.g)
res = pdas(K, F, box)

for h in res.history:
    print(f"iteration {h['iteration']:3d}: {h['lower_active']:4d} contact nodes, KKT residual {h['kkt_residual']:.2e}")
rep = check_kkt(K, F, box, res)
print("converged:", res.converged, " KKT passed:", rep.passed)
print("smallest contact multiplier:", res.lam[res.lower_active].min())
print("largest gap at contact nodes:", np.abs(res.u - box.lower)[res.lower_active].max())
