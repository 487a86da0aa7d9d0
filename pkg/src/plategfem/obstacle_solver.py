"""Box-constrained plate energy minimisation by a primal-dual active set method.

Boundary DOFs are eliminated; obstacle constraints act on interior
point-evaluation DOFs only, where they are plain bounds on coefficients.

Sign convention: the multiplier is the residual ``lam = K u - F``.  It is
nonnegative where the lower obstacle is active and nonpositive where the
upper one is.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DataError, SingularityError
from .gfem_space import boundary_coefficients

__all__ = [
    "BoxConstraints",
    "PdasOptions",
    "PdasResult",
    "KktReport",
    "build_constraints",
    "solve_fixed",
    "pdas",
    "check_kkt",
    "write_iteration_log",
    "ReducedSystem",
    "default_backend",
]


@dataclass
class BoxConstraints:
    """Per-DOF bounds (``-inf``/``inf`` when absent) and fixed boundary values."""

    lower: np.ndarray
    upper: np.ndarray
    fixed_ids: np.ndarray
    fixed_values: np.ndarray
    nodes: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.fixed_ids = np.asarray(self.fixed_ids, dtype=int)
        self.fixed_values = np.asarray(self.fixed_values, dtype=float)
        if np.any(np.isfinite(self.lower[self.fixed_ids]) | np.isfinite(self.upper[self.fixed_ids])):
            raise DataError("fixed boundary DOFs must not carry bounds")

    @property
    def n(self):
        return self.lower.size

    @property
    def constrained_ids(self):
        return np.flatnonzero(np.isfinite(self.lower) | np.isfinite(self.upper))

    @property
    def fixed(self):
        return dict(zip(self.fixed_ids.tolist(), self.fixed_values.tolist()))

    @classmethod
    def free(cls, n, fixed=None):
        fixed = fixed or {}
        ids = np.array(sorted(fixed), dtype=int)
        return cls(np.full(n, -np.inf), np.full(n, np.inf), ids, np.array([fixed[i] for i in ids], dtype=float))

    def check(self):
        bad = np.flatnonzero(self.lower >= self.upper)
        if bad.size:
            i = bad[0]
            where = f" at node {tuple(self.nodes[i])}" if self.nodes is not None else ""
            raise DataError(f"DOF {i}{where}: lower bound {self.lower[i]} >= upper bound {self.upper[i]}")


def build_constraints(space, psi1=None, psi2=None, g=None):
    """Obstacle bounds at interior value nodes plus boundary values of ``Pi_h g``."""
    n = space.ndof
    lower, upper = np.full(n, -np.inf), np.full(n, np.inf)
    ids = space.dofs.constrained
    nodes = space.dofs.node
    if psi1 is not None:
        lower[ids] = psi1(nodes[ids])
    if psi2 is not None:
        upper[ids] = psi2(nodes[ids])
    fixed = boundary_coefficients(space, g)
    fids = np.array(sorted(fixed), dtype=int)
    box = BoxConstraints(lower, upper, fids, np.array([fixed[i] for i in fids]), nodes)
    box.check()
    return box


try:  # CHOLMOD through cvxopt; SuperLU is the fallback
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover
    _cholmod = None

BACKENDS = ("cholmod", "superlu")


def default_backend():
    return "cholmod" if _cholmod is not None else "superlu"


class ReducedSystem:
    """SPD solves with ``K`` restricted to the index set ``idx``.

    A subset of ``idx`` may be held at prescribed values; held rows and
    columns are replaced by identity rows, so the sparsity pattern (and the
    symbolic analysis of the Cholesky backend) is shared by every subset.
    """

    def __init__(self, K, idx, backend=None):
        self.backend = backend or default_backend()
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "cholmod" and _cholmod is None:
            raise ValueError("cholmod backend needs cvxopt")
        self.idx = np.asarray(idx, dtype=int)
        self.n = self.idx.size
        self.A = sp.csr_matrix(K)[self.idx][:, self.idx]
        low = sp.tril(self.A, format="csc")
        low.sort_indices()
        self.rows = low.indices.astype(np.int64)
        self.cols = np.repeat(np.arange(self.n), np.diff(low.indptr))
        self.vals = low.data.copy()
        self.diag = np.flatnonzero(self.rows == self.cols)
        self._symbolic = None
        if self.backend == "cholmod":
            self._I = _cvx_matrix(self.rows.tolist(), tc="i")
            self._J = _cvx_matrix(self.cols.tolist(), tc="i")

    def _cholmod_factor(self, vals):
        M = _cvx_spmatrix(_cvx_matrix(vals), self._I, self._J, (self.n, self.n))
        if self._symbolic is None:
            _cholmod.options["supernodal"] = 2
            self._symbolic = _cholmod.symbolic(M)
        F = self._symbolic
        try:
            _cholmod.numeric(M, F)
        except ArithmeticError as exc:
            self._symbolic = None
            raise SingularityError("reduced stiffness matrix is not positive definite") from exc

        def solve(b):
            x = _cvx_matrix(np.array(b, dtype=float))
            _cholmod.solve(F, x)
            return np.array(x).ravel()

        return solve

    def _superlu_factor(self, vals):
        M = sp.coo_matrix((vals, (self.rows, self.cols)), shape=(self.n, self.n))
        M = (M + sp.triu(M.T, k=1)).tocsc()
        try:
            lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularityError(f"factorization failed: {exc}") from exc
        piv = lu.U.diagonal()
        if np.any(piv <= 0) or not np.all(np.isfinite(piv)):
            raise SingularityError("reduced stiffness matrix is not positive definite")
        return lu.solve

    def solve(self, rhs, held=None, held_values=None):
        """Solve with ``held`` (boolean over ``idx``) fixed at ``held_values``.

        ``rhs`` is the right-hand side over ``idx``, already corrected for
        DOFs outside ``idx``.
        """
        b = np.array(rhs, dtype=float)
        vals = self.vals.copy()
        if held is None:
            held = np.zeros(self.n, dtype=bool)
        if held.any():
            hv = np.zeros(self.n)
            hv[held] = held_values
            b = b - self.A @ hv
            b[held] = hv[held]
            vals[held[self.rows] | held[self.cols]] = 0.0
            vals[self.diag[held[self.rows[self.diag]]]] = 1.0
        fac = self._cholmod_factor(vals) if self.backend == "cholmod" else self._superlu_factor(vals)
        x = fac(b)
        free = ~held

        xf = np.where(free, x, 0.0)
        res = b - np.where(free, self.A @ xf, x)
        scale = np.abs(b).max(initial=0.0) + float((abs(self.A) @ np.abs(xf)).max(initial=0.0)) + 1e-300
        if np.abs(res).max(initial=0.0) > 1e-10 * scale:
            x = x + fac(res)
        return x


def _normalise_fixed(n, fixed):
    if isinstance(fixed, dict):
        ids = np.array(sorted(fixed), dtype=int)
        vals = np.array([fixed[i] for i in ids], dtype=float)
    else:
        ids, vals = fixed
        ids, vals = np.asarray(ids, dtype=int), np.asarray(vals, dtype=float)
    mask = np.zeros(n, dtype=bool)
    mask[ids] = True
    return ids, vals, mask


def _free_rhs(K, F, ids, vals, free):
    ufix = np.zeros(F.size)
    ufix[ids] = vals
    return (F - K @ ufix)[free]


def solve_fixed(K, F, fixed, backend=None):
    """Minimise the energy with the given DOFs held at prescribed values.

    ``fixed`` is a dict ``{dof: value}`` or a pair of arrays ``(ids, values)``.
    """
    K = sp.csr_matrix(K)
    F = np.asarray(F, dtype=float)
    ids, vals, mask = _normalise_fixed(F.size, fixed)
    u = np.zeros(F.size)
    u[ids] = vals
    free = np.flatnonzero(~mask)
    if free.size:
        u[free] = ReducedSystem(K, free, backend).solve(_free_rhs(K, F, ids, vals, free))
    return u


@dataclass
class PdasOptions:
    c: float = 1.0
    max_iter: int = 500
    tol: float = 1e-10
    scale_c: bool = True  # measure c in units of the mean constrained diagonal of K
    backend: str | None = None  # "cholmod" or "superlu"; None picks the best available
    fallback: bool = True  # monotone projected Newton once PDAS cycles

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("complementarity parameter must be positive")


@dataclass
class KktReport:
    feasibility: float
    stationarity: float
    sign: float
    complementarity: float
    fixed: float
    scale: float
    tol: float
    passed: bool

    @property
    def residual(self):
        return max(
            self.feasibility,
            self.fixed,
            self.stationarity / self.scale,
            self.sign / self.scale,
            self.complementarity / self.scale,
        )


@dataclass
class PdasResult:
    u: np.ndarray
    lam: np.ndarray
    lower_active: np.ndarray
    upper_active: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    c: float = 1.0
    kkt: KktReport | None = None
    method: str = "pdas"


def _kkt(K, F, box, u, lower_active, upper_active, tol):
    r = K @ u - F
    cons = np.zeros(box.n, dtype=bool)
    cons[box.constrained_ids] = True
    fixed = np.zeros(box.n, dtype=bool)
    fixed[box.fixed_ids] = True
    # natural magnitude of the terms that make up the residual
    scale = max(1.0, float(np.abs(F).max(initial=0.0)), float((abs(K) @ np.abs(u)).max(initial=0.0)))
    ustar = max(1.0, float(np.abs(u).max(initial=0.0)))
    free = ~fixed & ~lower_active & ~upper_active
    stat = float(np.abs(r[free]).max(initial=0.0))
    with np.errstate(invalid="ignore"):
        feas = np.concatenate([(box.lower - u)[cons], (u - box.upper)[cons]])
    feas = float(np.nan_to_num(feas, nan=0.0, neginf=0.0).max(initial=0.0)) / ustar
    sign = float(max(np.max(-r[lower_active], initial=0.0), np.max(r[upper_active], initial=0.0)))
    gap = np.minimum(u - box.lower, box.upper - u)[cons]
    comp = float(np.abs(r[cons] * np.where(np.isfinite(gap), gap, 0.0)).max(initial=0.0)) / ustar
    fixed_err = float(np.abs(u[box.fixed_ids] - box.fixed_values).max(initial=0.0)) / ustar
    passed = feas <= tol and fixed_err <= tol and stat <= tol * scale and sign <= tol * scale and comp <= tol * scale
    return KktReport(feas, stat, sign, comp, fixed_err, scale, tol, bool(passed))


def check_kkt(K, F, constraints, result, tol=1e-8):
    """KKT residuals of a candidate solution.

    ``result`` is a :class:`PdasResult` or a bare coefficient vector, in
    which case DOFs within ``tol`` of a bound count as active.
    """
    K = sp.csr_matrix(K)
    F = np.asarray(F, dtype=float)
    if isinstance(result, PdasResult):
        u, lo_act, up_act = result.u, result.lower_active, result.upper_active
    else:
        u = np.asarray(result, dtype=float)
        ustar = max(1.0, np.abs(u).max())
        lo_act = np.isfinite(constraints.lower) & (u - constraints.lower <= tol * ustar)
        up_act = np.isfinite(constraints.upper) & (constraints.upper - u <= tol * ustar)
    return _kkt(K, F, constraints, u, lo_act, up_act, tol)


def pdas(K, F, constraints, opts=None, initial=None):
    """Primal-dual active set iteration for the box-constrained energy.

    Each step fixes the active DOFs at their bounds, solves the reduced SPD
    system, takes the residual as multiplier, and predicts new active sets

        lower: lam - c (u - lower) > 0,    upper: lam - c (u - upper) < 0.

    Iteration stops when the sets repeat and the KKT check passes.  If a
    pair of sets recurs without passing, ``c`` is raised tenfold once.
    ``initial`` optionally gives starting (lower, upper) boolean masks.
    """
    opts = opts or PdasOptions()
    K = sp.csr_matrix(K)
    F = np.asarray(F, dtype=float)
    box = constraints
    box.check()
    n = box.n
    cons = box.constrained_ids
    lo, up = box.lower, box.upper
    c = opts.c
    if opts.scale_c and cons.size:
        c *= float(K.diagonal()[cons].mean())
    if initial is None:
        lo_act = np.zeros(n, dtype=bool)
        up_act = np.zeros(n, dtype=bool)
    else:
        lo_act = np.asarray(initial[0], dtype=bool).copy() & np.isfinite(lo)
        up_act = np.asarray(initial[1], dtype=bool).copy() & np.isfinite(up) & ~lo_act
    free = np.flatnonzero(~np.isin(np.arange(n), box.fixed_ids))
    system = ReducedSystem(K, free, opts.backend)
    rhs = _free_rhs(K, F, box.fixed_ids, box.fixed_values, free)
    history = []
    seen = set()
    bumped = False
    u = lam = None
    report = None
    for it in range(1, opts.max_iter + 1):
        held = (lo_act | up_act)[free]
        target = np.where(lo_act, lo, up)[free][held]
        u = np.zeros(n)
        u[box.fixed_ids] = box.fixed_values
        u[free] = system.solve(rhs, held, target)
        r = K @ u - F
        lam = np.zeros(n)
        lam[lo_act | up_act] = r[lo_act | up_act]
        new_lo = np.zeros(n, dtype=bool)
        new_up = np.zeros(n, dtype=bool)
        with np.errstate(invalid="ignore"):
            new_lo[cons] = (lam - c * (u - lo))[cons] > 0
            new_up[cons] = (lam - c * (u - up))[cons] < 0
        report = _kkt(K, F, box, u, lo_act, up_act, opts.tol)
        history.append(
            {
                "iteration": it,
                "lower_active": int(lo_act.sum()),
                "upper_active": int(up_act.sum()),
                "kkt_residual": report.residual,
            }
        )
        if np.array_equal(new_lo, lo_act) and np.array_equal(new_up, up_act) and report.passed:
            return PdasResult(u, lam, lo_act, up_act, it, True, history, c, report)
        key = (np.flatnonzero(new_lo).tobytes(), np.flatnonzero(new_up).tobytes())
        if key in seen:
            if bumped:
                cycling = True
                break
            c *= 10.0
            bumped = True
            seen.clear()
        seen.add((np.flatnonzero(lo_act).tobytes(), np.flatnonzero(up_act).tobytes()))
        lo_act, up_act = new_lo, new_up
    else:
        cycling = False
    if not (cycling and opts.fallback):
        return PdasResult(u, lam, lo_act, up_act, len(history), False, history, c, report)

    # The active-set guess is c-independent here, so a cycle survives the
    # c increase; finish with a method that decreases the energy monotonically.
    def record(x, lo_mask, up_mask, res):
        history.append(
            {
                "iteration": len(history) + 1,
                "lower_active": int(lo_mask.sum()),
                "upper_active": int(up_mask.sum()),
                "kkt_residual": res,
            }
        )

    x, ok = _projected_newton(system, rhs, lo[free], up[free], u[free], opts.tol, opts.max_iter, record)
    u = np.zeros(n)
    u[box.fixed_ids] = box.fixed_values
    u[free] = x
    lo_act = np.zeros(n, dtype=bool)
    up_act = np.zeros(n, dtype=bool)
    lo_act[free] = x <= lo[free]
    up_act[free] = x >= up[free]
    r = K @ u - F
    lam = np.where(lo_act | up_act, r, 0.0)
    report = _kkt(K, F, box, u, lo_act, up_act, opts.tol)
    return PdasResult(u, lam, lo_act, up_act, len(history), ok and report.passed, history, c, report,
                      "pdas+projected-newton")


def _projected_newton(system, b, lo, up, x, tol, max_iter, record):
    """Bound-constrained minimisation of ``0.5 x.A.x - b.x``.

    Each step takes a projected gradient (Cauchy) step, which may change
    many bounds at once, then solves exactly on the resulting face and
    searches along the projected Newton path.  The energy never increases.
    """
    A = system.A
    absA = abs(A)
    x = np.clip(x, lo, up)

    def energy(v):
        return 0.5 * v @ (A @ v) - b @ v

    for _ in range(max_iter):
        g = A @ x - b
        at_lo, at_up = x <= lo, x >= up
        pg = np.where(at_lo, np.minimum(g, 0.0), np.where(at_up, np.maximum(g, 0.0), g))
        scale = max(1.0, float(np.abs(b).max(initial=0.0)), float((absA @ np.abs(x)).max(initial=0.0)))
        res = float(np.abs(pg).max(initial=0.0)) / scale
        record(x, at_lo, at_up, res)
        if res <= tol:
            return x, True
        q0 = energy(x)
        gAg = g @ (A @ g)
        t = (g @ g) / gAg if gAg > 0 else 1.0
        xc = x
        for _ in range(60):
            trial = np.clip(x - t * g, lo, up)
            if energy(trial) <= q0 + 1e-4 * (g @ (trial - x)):
                xc = trial
                break
            t *= 0.5
        held = (xc <= lo) | (xc >= up)
        xn = system.solve(b, held, xc[held])
        d = xn - xc
        qc = energy(xc)
        step = 1.0
        x_new = xc
        for _ in range(60):
            trial = np.clip(xc + step * d, lo, up)
            if energy(trial) <= qc:
                x_new = trial
                break
            step *= 0.5
        if np.array_equal(x_new, x):
            return x, False
        x = x_new
    return x, False


def write_iteration_log(result, path):
    """CSV with one row per PDAS iteration."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lower_active", "upper_active", "kkt_residual"])
        for row in result.history:
            w.writerow([row["iteration"], row["lower_active"], row["upper_active"], f"{row['kkt_residual']:.17g}"])
    return path
