"""Benchmark obstacle problems, convergence studies and report output."""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .assembly import (
    assemble_load,
    assemble_stiffness,
    build_subcell_mesh,
    energy_norm,
    export_triplets,
    laplacian_norm,
)
from .errors import NonconvergenceError
from .gfem_space import GfemSpace, SmoothFunction, evaluate_field, interpolate
from .obstacle_solver import PdasOptions, build_constraints, pdas, write_iteration_log
from .pu_grid import LShape, Rectangle

__all__ = [
    "R0",
    "C1",
    "C2",
    "C3",
    "C4",
    "exact_example1",
    "ExampleSpec",
    "EXAMPLES",
    "get_example",
    "LevelRecord",
    "ConvergenceReport",
    "run_convergence",
    "rates",
    "coincidence_set",
    "emit_report",
]

R0 = 0.18134452
C1 = 0.52504063
C2 = -0.62860904
C3 = 0.01726640
C4 = 1.04674630


def _radial(r):
    lr = np.log(r)
    u = C1 * r**2 * lr + C2 * r**2 + C3 * lr + C4
    up = C1 * (2 * r * lr + r) + 2 * C2 * r + C3 / r
    upp = C1 * (2 * lr + 3) + 2 * C2 - C3 / r**2
    return u, up, upp


def exact_example1(x, dorder=(0, 0)):
    """Radially symmetric exact solution of the first benchmark and its derivatives."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.ndim(x) == 1
    d = tuple(dorder)
    if sum(d) > 2:
        raise ValueError(f"derivative order {d} not available")
    X, Y = pts[:, 0], pts[:, 1]
    r = np.hypot(X, Y)
    inner = r <= R0
    out = np.empty(r.size)
    # inner branch 1 - |x|^2
    inner_val = {
        (0, 0): 1.0 - r**2,
        (1, 0): -2.0 * X,
        (0, 1): -2.0 * Y,
        (2, 0): np.full(r.size, -2.0),
        (1, 1): np.zeros(r.size),
        (0, 2): np.full(r.size, -2.0),
    }[d]
    out[inner] = inner_val[inner]
    o = ~inner
    if np.any(o):
        ro, xo, yo = r[o], X[o], Y[o]
        u, up, upp = _radial(ro)
        nx, ny = xo / ro, yo / ro
        if d == (0, 0):
            v = u
        elif d == (1, 0):
            v = up * nx
        elif d == (0, 1):
            v = up * ny
        elif d == (2, 0):
            v = upp * nx * nx + up / ro * (1 - nx * nx)
        elif d == (0, 2):
            v = upp * ny * ny + up / ro * (1 - ny * ny)
        else:
            v = (upp - up / ro) * nx * ny
        out[o] = v
    return float(out[0]) if single else out


def _poly(terms):
    """SmoothFunction from ``{(a, b): coefficient}``."""
    deg = max(a for a, _ in terms) + 1, max(b for _, b in terms) + 1
    coef = np.zeros(deg)
    for (a, b), v in terms.items():
        coef[a, b] = v
    return SmoothFunction.polynomial(coef)


@dataclass
class ExampleSpec:
    id: int
    name: str
    domain: object
    psi: SmoothFunction
    f: object = None
    g: SmoothFunction | None = None
    exact: SmoothFunction | None = None
    space: str = "q2"

    @property
    def error_kind(self):
        return "exact" if self.exact is not None else "successive"


_EXACT1 = SmoothFunction(exact_example1, "u1")
_SQUARE = Rectangle(-0.5, 0.5, -0.5, 0.5)

# ellipse obstacle: 1 - (x + 0.25)^2 / 0.2^2 - y^2 / 0.35^2
_A, _B = 0.2**2, 0.35**2

EXAMPLES = {
    1: ExampleSpec(1, "radial obstacle, exact solution", _SQUARE, _poly({(0, 0): 1.0, (2, 0): -1.0, (0, 2): -1.0}),
                   g=_EXACT1, exact=_EXACT1),
    2: ExampleSpec(2, "square, quartic obstacle (+)", _SQUARE,
                   _poly({(0, 0): 1.0, (2, 0): -5.0, (0, 2): -5.0, (4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0})),
    3: ExampleSpec(3, "square, quartic obstacle (-)", _SQUARE,
                   _poly({(0, 0): 1.0, (2, 0): -5.0, (0, 2): -5.0, (4, 0): -1.0, (2, 2): -2.0, (0, 4): -1.0})),
    4: ExampleSpec(4, "L-shaped domain, elliptic obstacle", LShape(0.5),
                   _poly({(0, 0): 1.0 - 0.0625 / _A, (1, 0): -0.5 / _A, (2, 0): -1.0 / _A, (0, 2): -1.0 / _B})),
}


def get_example(i):
    try:
        return EXAMPLES[int(i)]
    except KeyError:
        raise ValueError(f"unknown example {i!r}; choose from {sorted(EXAMPLES)}") from None


def rates(errors, h):
    """Log-ratio slopes between consecutive levels; ``None`` where undefined."""
    errors = [float(e) for e in errors]
    h = [float(v) for v in h]
    if len(errors) != len(h):
        raise ValueError("errors and h must have equal length")
    out = []
    for j in range(1, len(errors)):
        e0, e1 = errors[j - 1], errors[j]
        if e0 <= 0 or e1 <= 0 or not np.isfinite(e0) or not np.isfinite(e1):
            out.append(None)
        else:
            out.append(float(np.log(e0 / e1) / np.log(h[j - 1] / h[j])))
    return out


def coincidence_set(space, u, psi, threshold):
    """Interior value nodes ``p`` with ``u(p) - psi(p) <= threshold``.

    At these nodes the coefficient equals the field value.
    """
    ids = space.dofs.constrained
    nodes = space.dofs.node[ids]
    gap = np.asarray(u)[ids] - psi(nodes)
    return nodes[gap <= threshold]


@dataclass
class LevelRecord:
    level: int
    h: float
    dofs: int
    energy_error: float
    linf_error: float
    pdas_iterations: int
    seconds: float
    energy_u: float
    laplacian_u: float
    coincidence: np.ndarray
    rel_energy_error: float = float("nan")
    beta_h: float | None = None
    beta_inf: float | None = None
    grid: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    example: int
    domain: str
    delta: float
    space: str
    error_kind: str
    records: list = field(default_factory=list)
    normalization_form: str = "laplacian"
    normalization_level: int | None = None
    normalization: float | None = None
    solver: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)

    @property
    def levels(self):
        return [r.level for r in self.records]

    def record(self, level):
        for r in self.records:
            if r.level == level:
                return r
        raise KeyError(level)

    def finalize(self):
        """Normalise energy errors by the finest level and compute rates.

        ``normalization_form`` picks the size of ``u_J``: ``"laplacian"``
        uses ``||Delta u_J||``, ``"hessian"`` uses ``(u_J.K.u_J)^(1/2)``.
        """
        if not self.records:
            return self
        fin = self.records[-1]
        norm = {"laplacian": fin.laplacian_u, "hessian": fin.energy_u}[self.normalization_form]
        self.normalization_level, self.normalization = fin.level, norm
        for r in self.records:
            r.rel_energy_error = r.energy_error / norm if norm > 0 else float("nan")
        hs = [r.h for r in self.records]
        bh = rates([r.energy_error for r in self.records], hs)
        bi = rates([r.linf_error for r in self.records], hs)
        self.records[0].beta_h = self.records[0].beta_inf = None
        for r, a, b in zip(self.records[1:], bh, bi):
            r.beta_h, r.beta_inf = a, b
        return self


@dataclass
class _Solved:
    space: GfemSpace
    K: object
    F: np.ndarray
    constraints: object
    result: object


def _solve_level(ex, level, delta, space_kind, opts, initial_from=None, log=None):
    space = GfemSpace.build(ex.domain, level, delta, space_kind)
    mesh = build_subcell_mesh(space.grid)
    K = assemble_stiffness(space, mesh=mesh)
    F = assemble_load(space, ex.f, mesh=mesh)
    box = build_constraints(space, ex.psi, None, ex.g)
    initial = None
    if initial_from is not None:
        # predicted contact: constrained nodes where the coarse solution touches
        ids = space.dofs.constrained
        nodes = space.dofs.node[ids]
        gap = evaluate_field(initial_from.space, initial_from.result.u, nodes) - ex.psi(nodes)
        lo = np.zeros(space.ndof, dtype=bool)
        lo[ids[gap <= 1e-10]] = True
        initial = (lo, np.zeros(space.ndof, dtype=bool))
    res = pdas(K, F, box, opts, initial=initial)
    if not res.converged:
        raise NonconvergenceError(
            f"PDAS did not converge at level {level} after {res.iterations} iterations",
            res.lower_active,
            res.upper_active,
            level,
        )
    return _Solved(space, K, F, box, res)


def run_convergence(
    example,
    levels,
    delta=1.0 / 3.0,
    space=None,
    warm_start=False,
    opts=None,
    keep_solutions=False,
    matrix_dir=None,
    log_dir=None,
    progress=None,
    normalization="laplacian",
):
    """Solve ``example`` on each level and tabulate errors and rates.

    With an exact solution the error is ``Pi_j u - u_j``; otherwise it is
    ``Pi_j u_{j-1} - u_j``, so the level below the first one is solved too.
    """
    ex = example if isinstance(example, ExampleSpec) else get_example(example)
    levels = [int(v) for v in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly ascending")
    if normalization not in ("laplacian", "hessian"):
        raise ValueError(f"unknown normalization {normalization!r}")
    space_kind = (space or ex.space).lower()
    opts = opts or PdasOptions()
    report = ConvergenceReport(
        ex.id, ex.domain.describe(), float(delta), space_kind, ex.error_kind,
        normalization_form=normalization,
        solver={"c": opts.c, "c_scaled_by_diag_mean": opts.scale_c, "max_iter": opts.max_iter, "tol": opts.tol,
                "warm_start": bool(warm_start)},
    )
    prev = None
    if ex.exact is None:
        first = levels[0] - 1
        if first < 1:
            raise ValueError("successive-error studies need levels >= 2")
        prev = _solve_level(ex, first, delta, space_kind, opts)
    for j in levels:
        t0 = time.perf_counter()
        try:
            cur = _solve_level(ex, j, delta, space_kind, opts, initial_from=prev if warm_start else None)
        except NonconvergenceError as exc:
            exc.level = j
            raise
        if ex.exact is not None:
            ref = interpolate(cur.space, ex.exact)
        else:
            if prev is None or prev.space.grid.level != j - 1:
                prev = _solve_level(ex, j - 1, delta, space_kind, opts)
            ref = interpolate(cur.space, SmoothFunction.from_field(prev.space, prev.result.u))
        seconds = time.perf_counter() - t0
        e = ref - cur.result.u
        vid = np.flatnonzero(cur.space.dofs.kind == "value")
        linf = float(np.abs(e[vid]).max())
        rec = LevelRecord(
            level=j,
            h=float(cur.space.grid.h),
            dofs=int(cur.space.ndof),
            energy_error=energy_norm(cur.K, e),
            linf_error=linf,
            pdas_iterations=int(cur.result.iterations),
            seconds=seconds,
            energy_u=energy_norm(cur.K, cur.result.u),
            laplacian_u=laplacian_norm(cur.space, cur.result.u),
            coincidence=coincidence_set(cur.space, cur.result.u, ex.psi, linf),
            grid=cur.space.grid.summary(),
        )
        report.records.append(rec)
        if matrix_dir is not None:
            Path(matrix_dir).mkdir(parents=True, exist_ok=True)
            export_triplets(cur.K, Path(matrix_dir) / f"stiffness_level{j}.txt")
        if log_dir is not None:
            Path(log_dir).mkdir(parents=True, exist_ok=True)
            write_iteration_log(cur.result, Path(log_dir) / f"pdas_level{j}.csv")
        if keep_solutions:
            report.solutions[j] = cur
        if progress is not None:
            progress(rec)
        prev = cur
    return report.finalize()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


CSV_COLUMNS = ["level", "h", "dofs", "rel_energy_error", "beta_h", "linf_error", "beta_inf", "pdas_iters", "seconds"]


def emit_report(report, out_dir, formats=("csv", "json", "points")):
    """Write the table, run manifest and coincidence point files; returns paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    stem = f"example{report.example}_{report.space}"
    written = []
    if "csv" in formats:
        p = out / f"{stem}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in report.records:
                w.writerow(
                    [_fmt(r.level), _fmt(r.h), _fmt(r.dofs), _fmt(r.rel_energy_error), _fmt(r.beta_h),
                     _fmt(r.linf_error), _fmt(r.beta_inf), _fmt(r.pdas_iterations), _fmt(r.seconds)]
                )
        written.append(p)
    if "points" in formats:
        for r in report.records:
            p = out / f"{stem}_coincidence_level{r.level}.txt"
            with open(p, "w") as fh:
                for x, y in r.coincidence:
                    fh.write(f"{x:.17g},{y:.17g}\n")
            written.append(p)
    if "json" in formats:
        p = out / f"{stem}.json"
        manifest = {
            "example": report.example,
            "domain": report.domain,
            "delta": report.delta,
            "space": report.space,
            "error": report.error_kind,
            "normalization_form": report.normalization_form,
            "normalization_level": report.normalization_level,
            "normalization_energy": report.normalization,
            "solver": report.solver,
            "levels": [
                {
                    "level": r.level,
                    "h": r.h,
                    "dofs": r.dofs,
                    "energy_error": r.energy_error,
                    "rel_energy_error": r.rel_energy_error,
                    "beta_h": r.beta_h,
                    "linf_error": r.linf_error,
                    "beta_inf": r.beta_inf,
                    "energy_u": r.energy_u,
                    "laplacian_u": r.laplacian_u,
                    "pdas_iterations": r.pdas_iterations,
                    "seconds": r.seconds,
                    "coincidence_points": int(len(r.coincidence)),
                    "grid": r.grid,
                }
                for r in report.records
            ],
            "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        }
        with open(p, "w") as fh:
            json.dump(manifest, fh, indent=2, default=float)
        written.append(p)
    return written
