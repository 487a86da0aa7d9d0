"""Patch classes, local elements and the interpolation operator.

Patches touching the boundary carry one-sided Hermite factors, the patch at
the reentrant corner of the L-shape carries its own element.  The global
interpolant reproduces biquadratics exactly, and for a smooth function the
error decays like h^3 in L2 and like h in the energy norm.
"""

from collections import Counter

import numpy as np

from plategfem import GfemSpace, LShape, Rectangle, SmoothFunction, evaluate_field, interpolate, seminorm

for dom in (Rectangle(-0.5, 0.5, -0.5, 0.5), LShape(0.5)):
    sp = GfemSpace.build(dom, 3)
    census = Counter(pc.kind for pc in sp.classes)
    print(dom.describe()["kind"], "level 3:", sp.ndof, "dofs,", dict(census))

sp = GfemSpace.build(Rectangle(-0.5, 0.5, -0.5, 0.5), 2)
p = SmoothFunction.polynomial(np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0], [-2.0, 1.0, 0.25]]))
x = np.random.default_rng(1).uniform(-0.5, 0.5, size=(500, 2))
print("biquadratic reproduction error:", np.abs(evaluate_field(sp, interpolate(sp, p), x) - p(x)).max())


def sin_sin(q, d):
    f = [np.sin, np.cos, lambda t: -np.sin(t)]
    return f[d[0]](np.pi * q[:, 0]) * np.pi ** d[0] * f[d[1]](np.pi * q[:, 1]) * np.pi ** d[1]


zeta = SmoothFunction(sin_sin)
print(" level       h      L2 error      H2 error")
for level in range(2, 6):
    sp = GfemSpace.build(Rectangle(0.0, 1.0, 0.0, 1.0), level)
    c = interpolate(sp, zeta)
    print(f"{level:6d}  {sp.grid.h:.4f}  {seminorm(sp, 0, c=c, zeta=zeta):.4e}  {seminorm(sp, 2, c=c, zeta=zeta):.4e}")
