"""Reference elements, patch classification and the global DOF table.

Every local shape function is a polynomial stored as a coefficient table
over the monomials ``xi1**a * xi2**b``.  Tensor-product elements combine
1-D Lagrange ("L") and Hermite ("H") families; the Hermite data always sit
on the reference line ``xi = -1`` and the map to physical space carries any
reflection needed to put that line on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .errors import ConstructionError
from .pu_grid import LShape

__all__ = [
    "shape_1d",
    "ReferenceElement",
    "FlatTopMap",
    "PatchClass",
    "DofTable",
    "classify_patches",
    "build_reference_element",
    "lcorner_element",
    "enumerate_dofs",
    "VALUE",
    "D1",
    "D2",
    "D1D2",
]

VALUE, D1, D2, D1D2 = "value", "d1", "d2", "d1d2"
_KIND_OF_ORDER = {(0, 0): VALUE, (1, 0): D1, (0, 1): D2, (1, 1): D1D2}

# 1-D nodal functionals as (point, derivative order).
_FUNCTIONALS_1D = {
    ("lagrange", 2): ((-1.0, 0), (0.0, 0), (1.0, 0)),
    ("hermite", 2): ((-1.0, 1), (-1.0, 0), (1.0, 0)),
    ("lagrange", 3): ((-1.0, 0), (-1.0 / 3.0, 0), (1.0 / 3.0, 0), (1.0, 0)),
    ("hermite", 3): ((-1.0, 1), (-1.0, 0), (1.0, 0), (1.0, 1)),
}
_FAMILY_NAMES = {"L": "lagrange", "H": "hermite"}


def monomials(t, degree, order=0):
    """Table ``d^order/dt^order t**a`` for ``a = 0..degree``; shape (..., degree+1)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (degree + 1,))
    for a in range(order, degree + 1):
        out[..., a] = factorial(a) // factorial(a - order) * t ** (a - order)
    return out


@lru_cache(maxsize=None)
def _coeffs_1d(family, degree):
    funcs = _FUNCTIONALS_1D[(family, degree)]
    nodal = np.array([monomials(p, degree, d) for p, d in funcs])
    return np.linalg.inv(nodal).T  # row j: monomial coefficients of basis j


def shape_1d(family, i, xi, order=0, degree=2):
    """1-D Lagrange or Hermite shape function ``i`` (1-based) or a derivative.

    Lagrange functionals are ``v(-1), v(0), v(1)``; Hermite ones are
    ``v'(-1), v(-1), v(1)``.  ``degree=3`` selects the cubic analogues.
    """
    family = _FAMILY_NAMES.get(family, family)
    key = (family, degree)
    if key not in _FUNCTIONALS_1D:
        raise ValueError(f"unknown 1-D family {family!r} of degree {degree}")
    n = len(_FUNCTIONALS_1D[key])
    if not 1 <= i <= n:
        raise ValueError(f"shape index {i} out of range 1..{n}")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    c = _coeffs_1d(family, degree)[i - 1]
    val = monomials(xi, degree, order) @ c
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class ReferenceElement:
    """Dual basis of a local polynomial space.

    ``coeffs[s, a, b]`` multiplies ``xi1**a * xi2**b`` in shape ``s``;
    ``points[i]`` and ``orders[i]`` describe nodal functional ``i``.
    """

    name: str
    degree: int
    coeffs: np.ndarray
    points: np.ndarray
    orders: tuple
    families: tuple = ()
    variant: str = ""

    @property
    def size(self):
        return self.coeffs.shape[0]

    @property
    def kinds(self):
        return tuple(_KIND_OF_ORDER[o] for o in self.orders)

    def evaluate(self, xi, dorder=(0, 0)):
        """Shape derivatives in reference coordinates; returns (n, size)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        p1 = monomials(xi[:, 0], self.degree, dorder[0])
        p2 = monomials(xi[:, 1], self.degree, dorder[1])
        return np.einsum("na,nb,sab->ns", p1, p2, self.coeffs)

    def apply_functionals(self, coeffs=None):
        """Matrix ``[i, s] = N_i(f_s)`` for the given (or own) coefficient tables."""
        coeffs = self.coeffs if coeffs is None else coeffs
        rows = []
        for p, (d1, d2) in zip(self.points, self.orders):
            m1 = monomials(p[0], self.degree, d1)
            m2 = monomials(p[1], self.degree, d2)
            rows.append(np.einsum("a,b,sab->s", m1, m2, coeffs))
        return np.array(rows)


def _tensor_element(families, degree):
    f1, f2 = (_FAMILY_NAMES[f] for f in families)
    c1, c2 = _coeffs_1d(f1, degree), _coeffs_1d(f2, degree)
    fun1, fun2 = _FUNCTIONALS_1D[(f1, degree)], _FUNCTIONALS_1D[(f2, degree)]
    n = degree + 1
    coeffs = np.zeros((n * n, n, n))
    points, orders = [], []
    for l in range(n):
        for k in range(n):
            coeffs[l * n + k] = np.outer(c1[k], c2[l])
            points.append((fun1[k][0], fun2[l][0]))
            orders.append((fun1[k][1], fun2[l][1]))
    name = "".join(families) + f"-Q{degree}"
    return ReferenceElement(name, degree, coeffs, np.array(points), tuple(orders), tuple(families))


_LCORNER_LITERAL = (
    ((0.0, 0.0), (0, 0)),
    ((1.0, 0.0), (0, 0)),
    ((0.0, 1.0), (0, 0)),
    ((-1.0, -1.0), (0, 0)),
    ((0.0, 0.0), (1, 0)),
    ((0.0, 1.0), (1, 0)),
    ((0.0, 0.0), (0, 1)),
    ((0.0, 1.0), (0, 1)),
    ((0.0, 0.0), (1, 1)),
)


def _lcorner_functionals(variant):
    funcs = list(_LCORNER_LITERAL)
    if variant == "symmetric":
        funcs[7] = ((1.0, 0.0), (0, 1))
    return funcs


def _dual_from_functionals(funcs, degree=2):
    """Invert the nodal matrix of ``funcs`` on the tensor monomial basis.

    Returns (coeffs, smallest singular value of the nodal matrix).
    """
    n = degree + 1
    nodal = np.zeros((len(funcs), n * n))
    for i, (p, (d1, d2)) in enumerate(funcs):
        nodal[i] = np.outer(monomials(p[0], degree, d1), monomials(p[1], degree, d2)).ravel()
    smin = np.linalg.svd(nodal, compute_uv=False).min()
    if smin < 1e-10:
        return None, smin
    coeffs = np.linalg.inv(nodal).T.reshape(len(funcs), n, n)
    return coeffs, smin


@lru_cache(maxsize=None)
def lcorner_element():
    """Biquadratic element on the reference L ``(-1,1)^2 minus [0,1]^2``.

    The functional list as printed takes the second ``d/dxi2`` at (0, 1),
    which leaves the nodal matrix singular; in that case the derivative is
    moved to (1, 0), the mirror image of the ``d/dxi1`` functional at (0, 1).
    """
    for variant in ("literal", "symmetric"):
        funcs = _lcorner_functionals(variant)
        coeffs, smin = _dual_from_functionals(funcs)
        if coeffs is not None:
            if smin < 1e-6:
                raise ConstructionError(f"L-corner nodal matrix badly conditioned (smin={smin:.2e})")
            points = np.array([p for p, _ in funcs])
            orders = tuple(o for _, o in funcs)
            return ReferenceElement("L-corner-Q2", 2, coeffs, points, orders, ("L", "L"), variant)
    raise ConstructionError("no nonsingular L-corner functional set")


@lru_cache(maxsize=None)
def _element_cached(key, degree):
    if key == "lcorner":
        if degree != 2:
            raise ConstructionError("the L-corner element exists only for Q2")
        return lcorner_element()
    return _tensor_element(key, degree)


@dataclass(frozen=True)
class FlatTopMap:
    """Affine map ``x = center + scale * xi`` (``scale`` carries reflections)."""

    center: np.ndarray
    scale: np.ndarray

    def forward(self, xi):
        return self.center + self.scale * np.asarray(xi, dtype=float)

    def inverse(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale


@dataclass(frozen=True)
class PatchClass:
    """How a patch meets the boundary and which element it carries.

    ``kind`` is one of interior, edge, corner, reentrant_edge, lcorner.
    ``sides`` lists the flat-top sides lying on the boundary; ``clipped``
    marks patches whose flat-top is cut by a reentrant edge, in which case
    the map targets the in-domain part only.
    """

    patch: int
    kind: str
    sides: tuple
    families: tuple
    map: FlatTopMap
    clipped: bool = False

    @property
    def element_key(self):
        return "lcorner" if self.kind == "lcorner" else self.families


def _side_segments(rect):
    x0, x1, y0, y1 = rect
    return {
        "left": ((x0, y0), (x0, y1)),
        "right": ((x1, y0), (x1, y1)),
        "bottom": ((x0, y0), (x1, y0)),
        "top": ((x0, y1), (x1, y1)),
    }


def _segment_on_boundary(domain, seg, tol):
    (xa, ya), (xb, yb) = seg
    t = np.linspace(0.0, 1.0, 5)
    pts = np.stack([xa + t * (xb - xa), ya + t * (yb - ya)], axis=1)
    return bool(np.all(domain.on_boundary(pts, tol)))


def _open_rect_meets_segment(rect, seg):
    x0, x1, y0, y1 = rect
    (xa, ya), (xb, yb) = seg
    if xa == xb:  # vertical
        lo, hi = sorted((ya, yb))
        return x0 < xa < x1 and lo < y1 and hi > y0
    lo, hi = sorted((xa, xb))
    return y0 < ya < y1 and lo < x1 and hi > x0


def _clip_flat_rect(domain, rect, tol):
    x0, x1, y0, y1 = rect
    if isinstance(domain, LShape):
        if x0 >= -tol and y0 >= -tol:
            raise ConstructionError("flat-top lies in the removed quadrant")
        if x0 > tol and y0 < -tol < tol < y1:
            return (x0, x1, y0, 0.0), True
        if y0 > tol and x0 < -tol < tol < x1:
            return (x0, 0.0, y0, y1), True
    return rect, False


def classify_patches(grid):
    """One :class:`PatchClass` per alive patch, in ``grid.alive_ids`` order."""
    domain = grid.domain
    tol = 1e-9 * grid.h
    hf = grid.flat_half
    out = []
    for j in grid.alive_ids:
        j = int(j)
        if grid.corner_patch is not None and j == grid.corner_patch:
            c = grid.center(j)
            out.append(PatchClass(j, "lcorner", ("reentrant",), ("L", "L"), FlatTopMap(c, hf.copy())))
            continue
        rect, clipped = _clip_flat_rect(domain, grid.flat_rect(j), tol)
        sides = tuple(
            name for name, seg in _side_segments(rect).items() if _segment_on_boundary(domain, seg, tol)
        )
        if ("left" in sides and "right" in sides) or ("bottom" in sides and "top" in sides):
            raise ConstructionError(f"patch {j}: boundary on opposite flat-top sides {sides}")
        inner = (rect[0] + tol, rect[1] - tol, rect[2] + tol, rect[3] - tol)
        for seg in domain.boundary_segments():
            if _open_rect_meets_segment(inner, seg):
                raise ConstructionError(f"patch {j}: boundary crosses the flat-top interior")
        if not sides:
            sup = grid.support_rect(j)
            for seg in domain.boundary_segments():
                if _open_rect_meets_segment(sup, seg):
                    raise ConstructionError(f"patch {j}: support meets the boundary but flat-top does not")
        fam = ("H" if {"left", "right"} & set(sides) else "L", "H" if {"bottom", "top"} & set(sides) else "L")
        sign = np.array([-1.0 if "right" in sides else 1.0, -1.0 if "top" in sides else 1.0])
        center = np.array([(rect[0] + rect[1]) / 2, (rect[2] + rect[3]) / 2])
        half = np.array([(rect[1] - rect[0]) / 2, (rect[3] - rect[2]) / 2])
        if len(sides) == 0:
            kind = "interior"
        elif len(sides) == 1:
            kind = "reentrant_edge" if clipped else "edge"
        else:
            kind = "corner"
        out.append(PatchClass(j, kind, sides, fam, FlatTopMap(center, sign * half), clipped))
    return out


def build_reference_element(pclass, space="q2"):
    """Reference element for a patch class (or a raw element key)."""
    degree = {"q2": 2, "q3": 3}[space.lower()]
    key = pclass.element_key if isinstance(pclass, PatchClass) else pclass
    if isinstance(key, list):
        key = tuple(key)
    return _element_cached(key, degree)


@dataclass
class DofTable:
    """Patch-owned degrees of freedom, numbered patch-major.

    DOF ``rank * nloc + i`` is local functional ``i`` of the alive patch
    with rank ``rank``.
    """

    nloc: int
    patch: np.ndarray
    local: np.ndarray
    node: np.ndarray
    kind: np.ndarray
    is_boundary: np.ndarray
    is_pointwise: np.ndarray

    @property
    def size(self):
        return self.patch.size

    @property
    def constrained(self):
        """Interior point-evaluation DOFs (the obstacle node set)."""
        return np.flatnonzero(self.is_pointwise & ~self.is_boundary)

    def census(self):
        kinds, counts = np.unique(self.kind, return_counts=True)
        return {
            "total": int(self.size),
            "boundary": int(self.is_boundary.sum()),
            "constrained": int(self.constrained.size),
            **{str(k): int(c) for k, c in zip(kinds, counts)},
        }


def enumerate_dofs(grid, classes, space="q2"):
    elems = [build_reference_element(pc, space) for pc in classes]
    nloc = elems[0].size
    patch, local, node, kind = [], [], [], []
    for pc, el in zip(classes, elems):
        patch.append(np.full(el.size, pc.patch))
        local.append(np.arange(el.size))
        node.append(pc.map.forward(el.points))
        kind.extend(el.kinds)
    patch = np.concatenate(patch)
    node = np.concatenate(node)
    kind = np.array(kind)
    on_bdry = grid.domain.on_boundary(node, 1e-9 * grid.h)
    return DofTable(
        nloc=nloc,
        patch=patch,
        local=np.concatenate(local),
        node=node,
        kind=kind,
        is_boundary=on_bdry,
        is_pointwise=kind == VALUE,
    )
