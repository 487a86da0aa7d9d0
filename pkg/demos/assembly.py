"""Stiffness matrix of the plate form int grad^2 v : grad^2 w.

Integration runs over subcells on which every basis function is a
polynomial, so Gauss rules of moderate order are exact: doubling the order
changes nothing, and x^2 has energy exactly 4 |Omega|.
"""

import numpy as np

from plategfem import GfemSpace, Rectangle, SmoothFunction, assemble_stiffness, interpolate

sp = GfemSpace.build(Rectangle(-0.5, 0.5, -0.5, 0.5), 3)
K = assemble_stiffness(sp)
K12 = assemble_stiffness(sp, order=12)
print(f"{sp.ndof} dofs, {K.nnz} nonzeros")
print("max change under rule doubling:", abs(K - K12).max() / abs(K).max())

c = interpolate(sp, SmoothFunction.polynomial(np.array([[0.0], [0.0], [1.0]])))
print("energy of x^2:", c @ K @ c)
lin = interpolate(sp, SmoothFunction.polynomial(np.array([[1.0, -2.0], [3.0, 0.0]])))
print("K applied to a linear field:", np.abs(K @ lin).max())
