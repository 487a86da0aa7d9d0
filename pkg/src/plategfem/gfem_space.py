"""The global GFEM space, field evaluation and the interpolation operator.

A global basis function is ``Psi_j * (f_ji o T_j^{-1})``.  All evaluation
routines are vectorised over points; derivative blocks are returned in
the fixed order of :data:`DERIVS`.
"""

from __future__ import annotations

from math import comb

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from .errors import CapabilityError
from .local_bases import build_reference_element, classify_patches, enumerate_dofs, monomials
from .pu_grid import FlatTopParams, build_patch_grid, covering_patches_array, window_1d
from .quadrature import gauss_rule

__all__ = [
    "DERIVS",
    "GfemSpace",
    "SmoothFunction",
    "global_basis_eval",
    "evaluate_field",
    "field_derivatives",
    "edge_projection",
    "edge_projection_quadratic",
    "interpolate",
    "boundary_coefficients",
]

DERIVS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
_DIDX = {d: i for i, d in enumerate(DERIVS)}
EDGE_GAUSS_POINTS = 10


class GfemSpace:
    """Patch grid + per-patch elements and maps + DOF table."""

    def __init__(self, grid, space="q2"):
        self.grid = grid
        self.space = space.lower()
        self.degree = {"q2": 2, "q3": 3}[self.space]
        self.classes = classify_patches(grid)
        self.dofs = enumerate_dofs(grid, self.classes, self.space)
        self.nloc = self.dofs.nloc
        keys = []
        self.elements = []
        elem_index = []
        for pc in self.classes:
            key = pc.element_key
            if key not in keys:
                keys.append(key)
                self.elements.append(build_reference_element(pc, self.space))
            elem_index.append(keys.index(key))
        self.elem_index = np.array(elem_index)
        self.map_center = np.array([pc.map.center for pc in self.classes])
        self.map_scale = np.array([pc.map.scale for pc in self.classes])
        self.patch_center = grid.centers(grid.alive_ids)

    @classmethod
    def build(cls, domain, level, delta=1.0 / 3.0, space="q2"):
        grid = build_patch_grid(domain, level, FlatTopParams(delta, delta))
        return cls(grid, space)

    @property
    def ndof(self):
        return self.dofs.size

    @property
    def domain(self):
        return self.grid.domain

    def element_of_rank(self, rank):
        return self.elements[self.elem_index[rank]]

    def local_basis(self, ranks, pts, max_order=2):
        """Derivatives of all local basis functions of patches ``ranks`` at ``pts``.

        ``ranks`` has shape (n,) and ``pts`` shape (n, 2).  Returns an array
        of shape (len(DERIVS[:k]), n, nloc) where k covers ``max_order``.
        """
        ranks = np.asarray(ranks, dtype=int)
        pts = np.asarray(pts, dtype=float)
        n = ranks.size
        nder = {0: 1, 1: 3, 2: 6}[max_order]
        g = self.grid
        deltas = (g.params.delta1, g.params.delta2)
        half = g.half
        rel = pts - self.patch_center[ranks]
        win = np.empty((2, max_order + 1, n))
        for ax in range(2):
            for o in range(max_order + 1):
                win[ax, o] = window_1d(rel[:, ax] / half[ax], deltas[ax], o) / half[ax] ** o
        scale = self.map_scale[ranks]
        xi = (pts - self.map_center[ranks]) / scale
        shp = np.zeros((nder, n, self.nloc))
        deg = self.degree
        for e, el in enumerate(self.elements):
            sel = np.flatnonzero(self.elem_index[ranks] == e)
            if sel.size == 0:
                continue
            cmat = el.coeffs.reshape(el.size, -1).T
            p1 = [monomials(xi[sel, 0], deg, o) / scale[sel, 0:1] ** o for o in range(max_order + 1)]
            p2 = [monomials(xi[sel, 1], deg, o) / scale[sel, 1:2] ** o for o in range(max_order + 1)]
            for k, (d1, d2) in enumerate(DERIVS[:nder]):
                prod = (p1[d1][:, :, None] * p2[d2][:, None, :]).reshape(sel.size, -1)
                shp[k, sel] = prod @ cmat
        out = np.empty_like(shp)
        for k, (d1, d2) in enumerate(DERIVS[:nder]):
            acc = 0.0
            for i in range(d1 + 1):
                for j in range(d2 + 1):
                    w = win[0, i] * win[1, j]
                    acc = acc + comb(d1, i) * comb(d2, j) * w[:, None] * shp[_DIDX[(d1 - i, d2 - j)]]
            out[k] = acc
        return out

    def field_derivatives(self, c, pts, max_order=2):
        return field_derivatives(self, c, pts, max_order)


def _as_points(x):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def global_basis_eval(space, dof, x, dorder=(0, 0)):
    """Derivative of global basis function ``dof`` at one or many points."""
    pts, single = _as_points(x)
    rank, i = divmod(int(dof), space.nloc)
    order = sum(dorder)
    vals = space.local_basis(np.full(pts.shape[0], rank), pts, max_order=order)[_DIDX[tuple(dorder)], :, i]
    return float(vals[0]) if single else vals


def field_derivatives(space, c, pts, max_order=2):
    """All derivatives up to ``max_order`` of the field with coefficients ``c``.

    Returns an array (nder, n) in :data:`DERIVS` order.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1, space.nloc)
    cov = covering_patches_array(space.grid, pts)
    rows, slots = np.nonzero(cov >= 0)
    ranks = space.grid.rank[cov[rows, slots]]
    nder = {0: 1, 1: 3, 2: 6}[max_order]
    out = np.zeros((nder, pts.shape[0]))
    chunk = 200_000
    for s in range(0, rows.size, chunk):
        r, rk = rows[s : s + chunk], ranks[s : s + chunk]
        basis = space.local_basis(rk, pts[r], max_order)
        contrib = np.einsum("kns,ns->kn", basis, c[rk])
        for k in range(nder):
            out[k] += np.bincount(r, weights=contrib[k], minlength=pts.shape[0])
    return out


def evaluate_field(space, c, x, dorder=(0, 0)):
    """Derivative ``dorder`` of a GFEM field at one point or an (n, 2) array."""
    pts, single = _as_points(x)
    order = sum(dorder)
    vals = field_derivatives(space, c, pts, order)[_DIDX[tuple(dorder)]]
    return float(vals[0]) if single else vals


class SmoothFunction:
    """A function with derivatives up to second order.

    ``fn(pts, dorder)`` must accept an (n, 2) array and return (n,) values of
    the ``dorder = (d1, d2)`` derivative.
    """

    def __init__(self, fn, name=""):
        self._fn = fn
        self.name = name

    def __call__(self, pts, dorder=(0, 0)):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.asarray(self._fn(pts, tuple(dorder)), dtype=float) * np.ones(pts.shape[0])

    def grad(self, pts):
        return np.stack([self(pts, (1, 0)), self(pts, (0, 1))], axis=-1)

    @classmethod
    def zero(cls):
        return cls(lambda p, d: np.zeros(p.shape[0]), "0")

    @classmethod
    def polynomial(cls, coef, name="poly"):
        """``sum coef[a, b] * x**a * y**b``."""
        coef = np.asarray(coef, dtype=float)
        ders = {}
        for d1 in range(3):
            for d2 in range(3 - d1):
                cd = nppoly.polyder(coef, d1, axis=0) if d1 else coef
                cd = nppoly.polyder(cd, d2, axis=1) if d2 else cd
                ders[(d1, d2)] = cd

        def fn(p, d):
            return nppoly.polyval2d(p[:, 0], p[:, 1], ders[d])

        return cls(fn, name)

    @classmethod
    def from_field(cls, space, c, name="field"):
        c = np.asarray(c, dtype=float)
        return cls(lambda p, d: evaluate_field(space, c, p, d), name)

    def __mul__(self, other):
        f, g = self, other

        def fn(p, d):
            acc = np.zeros(p.shape[0])
            for i in range(d[0] + 1):
                for j in range(d[1] + 1):
                    acc += comb(d[0], i) * comb(d[1], j) * f(p, (i, j)) * g(p, (d[0] - i, d[1] - j))
            return acc

        return SmoothFunction(fn, f"({f.name})*({g.name})")

    def __add__(self, other):
        return SmoothFunction(lambda p, d: self(p, d) + other(p, d), f"{self.name}+{other.name}")

    def __sub__(self, other):
        return SmoothFunction(lambda p, d: self(p, d) - other(p, d), f"{self.name}-{other.name}")


def _legendre_coefficients(samples, degree):
    """L2([-1,1]) projection onto degree-``degree`` polynomials.

    ``samples`` holds values at the edge Gauss points along its last axis.
    Returns Legendre coefficients along the last axis.
    """
    rule = gauss_rule(samples.shape[-1])
    vander = npleg.legvander(rule.nodes, degree)  # (nq, degree+1)
    norms = (2.0 * np.arange(degree + 1) + 1.0) / 2.0
    return (samples * rule.weights) @ vander * norms


def _legendre_eval(coef, t, order=0):
    """Evaluate d^order of Legendre series ``coef`` (..., degree+1) at ``t``."""
    degree = coef.shape[-1] - 1
    mat = np.zeros(degree + 1)
    for k in range(degree + 1):
        e = np.zeros(degree + 1)
        e[k] = 1.0
        mat[k] = npleg.legval(t, npleg.legder(e, order) if order else e)
    return coef @ mat


def edge_projection(fn, degree=2, npts=EDGE_GAUSS_POINTS):
    """Monomial coefficients of the L2([-1,1]) projection of ``fn``."""
    rule = gauss_rule(npts)
    vals = np.asarray(fn(rule.nodes), dtype=float) * np.ones(npts)
    leg = _legendre_coefficients(vals, degree)
    out = np.zeros(degree + 1)
    coef = npleg.leg2poly(leg)[: degree + 1]
    out[: coef.size] = coef
    return out


def edge_projection_quadratic(fn):
    """Coefficients ``(c0, c1, c2)`` of the best L2 quadratic on [-1, 1]."""
    return edge_projection(fn, 2)


def _pointwise(zeta, centers, scales, xi, dorder):
    """``d^dorder (zeta o T)(xi)`` for a batch of maps."""
    pts = centers + scales * xi
    d1, d2 = dorder
    return zeta(pts, dorder) * scales[:, 0] ** d1 * scales[:, 1] ** d2


def _edge_projection_batch(zeta, centers, scales, axis, degree):
    """Legendre coefficients of the projected normal derivative on xi_axis = -1."""
    rule = gauss_rule(EDGE_GAUSS_POINTS)
    nq = rule.nodes.size
    xi = np.empty((centers.shape[0], nq, 2))
    xi[:, :, axis] = -1.0
    xi[:, :, 1 - axis] = rule.nodes[None, :]
    pts = centers[:, None, :] + scales[:, None, :] * xi
    d = (1, 0) if axis == 0 else (0, 1)
    vals = zeta(pts.reshape(-1, 2), d).reshape(-1, nq) * scales[:, axis : axis + 1]
    return _legendre_coefficients(vals, degree)


def _lcorner_local(space, zeta, ranks, tol):
    el = space.elements[space.elem_index[ranks[0]]]
    out = np.zeros((ranks.size, el.size))
    cen, sc = space.map_center[ranks], space.map_scale[ranks]
    for i, (p, o) in enumerate(zip(el.points, el.orders)):
        out[:, i] = _pointwise(zeta, cen, sc, np.broadcast_to(p, cen.shape), o)
    nodes = cen[:, None, :] + sc[:, None, :] * el.points[None, :, :]
    bdry = space.domain.on_boundary(nodes.reshape(-1, 2), 1e-9 * space.grid.h).reshape(ranks.size, -1)
    if np.any(np.abs(out[bdry]) > tol):
        raise CapabilityError(
            "interpolation on the L-corner patch is only defined for data with vanishing boundary traces"
        )
    out[bdry] = 0.0
    return out


def interpolate(space, zeta, lcorner_tol=1e-10):
    """Coefficients of the patchwise interpolant of ``zeta``.

    Value functionals take point values.  A derivative across a boundary
    line ``xi_a = -1`` is read off the L2 projection of the normal
    derivative of ``zeta o T`` along that line; the mixed derivative at a
    boundary corner averages the tangential slopes of the two projections.
    Every other functional is applied pointwise.
    """
    if zeta is None:
        return np.zeros(space.ndof)
    coef = np.zeros((space.grid.n_alive, space.nloc))
    keys = {}
    for r, pc in enumerate(space.classes):
        keys.setdefault((pc.element_key, pc.kind == "lcorner"), []).append(r)
    deg = space.degree
    for (key, is_lc), ranks in keys.items():
        ranks = np.array(ranks)
        if is_lc:
            coef[ranks] = _lcorner_local(space, zeta, ranks, lcorner_tol)
            continue
        el = space.elements[space.elem_index[ranks[0]]]
        cen, sc = space.map_center[ranks], space.map_scale[ranks]
        baxes = [a for a in range(2) if key[a] == "H"]
        proj = {a: _edge_projection_batch(zeta, cen, sc, a, deg) for a in baxes}
        for i, (p, (d1, d2)) in enumerate(zip(el.points, el.orders)):
            d = (d1, d2)
            normal = [a for a in baxes if p[a] == -1.0 and d[a] == 1]
            if not normal:
                coef[ranks, i] = _pointwise(zeta, cen, sc, np.broadcast_to(p, cen.shape), d)
            elif len(normal) == 1:
                a = normal[0]
                coef[ranks, i] = _legendre_eval(proj[a], p[1 - a], d[1 - a])
            else:
                coef[ranks, i] = 0.5 * (_legendre_eval(proj[0], -1.0, 1) + _legendre_eval(proj[1], -1.0, 1))
    return coef.ravel()


def boundary_coefficients(space, g):
    """Interpolant coefficients of ``g`` on the boundary DOFs, as a dict."""
    ids = np.flatnonzero(space.dofs.is_boundary)
    if g is None:
        return {int(i): 0.0 for i in ids}
    vals = interpolate(space, g)[ids]
    return {int(i): float(v) for i, v in zip(ids, vals)}
