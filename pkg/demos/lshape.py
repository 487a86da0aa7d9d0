"""Elliptic obstacle under a plate on an L-shaped domain.

Without an exact solution, errors compare each level with the interpolant
of the previous one.  The corner singularity limits the asymptotic rate;
on the levels shown the rate is still in its preasymptotic range.
"""

from plategfem import run_convergence

rep = run_convergence(4, [3, 4, 5])
for r in rep.records:
    bh = "" if r.beta_h is None else f"{r.beta_h:.4f}"
    print(f"level {r.level}: {r.dofs:5d} dofs, relative error {r.rel_energy_error:.4e}, rate {bh}, "
          f"{len(r.coincidence)} coincidence nodes")
