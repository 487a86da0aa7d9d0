"""Patch cover of a polygonal domain and its flat-top partition of unity.

The domain is expanded by the overlap widths, tiled by congruent
rectangular patches, and every patch carries the tensor-product window

    Psi_j(x) = psi_d1((x1 - y1)/(h1/2)) * psi_d2((x2 - y2)/(h2/2))

which is identically one on the shrunken flat-top rectangle of the patch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Rectangle",
    "LShape",
    "FlatTopParams",
    "PatchGrid",
    "window_1d",
    "build_patch_grid",
    "pu_eval",
    "covering_patches",
]

_GEOM_TOL = 1e-12


@dataclass(frozen=True)
class Rectangle:
    """The open rectangle (a, b) x (c, d)."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a < self.b and self.c < self.d):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def bbox(self):
        return (self.a, self.b, self.c, self.d)

    @property
    def area(self):
        return (self.b - self.a) * (self.d - self.c)

    def patches_per_side(self, level):
        return 2**level

    def cut_lines(self):
        """Interior lines along which boundary edges run (none here)."""
        return (), ()

    def boundary_segments(self):
        a, b, c, d = self.bbox
        return [((a, c), (b, c)), ((b, c), (b, d)), ((b, d), (a, d)), ((a, d), (a, c))]

    def contains(self, pts, tol=_GEOM_TOL):
        """Membership in the closed domain for an (n, 2) array of points."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return (x >= self.a - tol) & (x <= self.b + tol) & (y >= self.c - tol) & (y <= self.d + tol)

    def on_boundary(self, pts, tol=1e-10):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        inside = self.contains(pts, tol)
        near = (
            (np.abs(x - self.a) <= tol)
            | (np.abs(x - self.b) <= tol)
            | (np.abs(y - self.c) <= tol)
            | (np.abs(y - self.d) <= tol)
        )
        return inside & near

    def meets_rect(self, x0, x1, y0, y1):
        return x0 <= self.b and x1 >= self.a and y0 <= self.d and y1 >= self.c

    def describe(self):
        return {"kind": "rectangle", "a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class LShape:
    """The L-shaped domain (-a, a)^2 minus the closed quadrant [0, a]^2."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("LShape needs a > 0")

    @property
    def bbox(self):
        return (-self.a, self.a, -self.a, self.a)

    @property
    def area(self):
        return 3.0 * self.a**2

    def patches_per_side(self, level):
        return 2**level + 1

    def cut_lines(self):
        return (0.0,), (0.0,)

    def boundary_segments(self):
        a = self.a
        return [
            ((-a, -a), (a, -a)),
            ((a, -a), (a, 0.0)),
            ((a, 0.0), (0.0, 0.0)),
            ((0.0, 0.0), (0.0, a)),
            ((0.0, a), (-a, a)),
            ((-a, a), (-a, -a)),
        ]

    def contains(self, pts, tol=_GEOM_TOL):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        a = self.a
        box = (np.abs(x) <= a + tol) & (np.abs(y) <= a + tol)
        return box & ~((x > tol) & (y > tol))

    def on_boundary(self, pts, tol=1e-10):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        a = self.a
        inside = self.contains(pts, tol)
        outer = (np.abs(np.abs(x) - a) <= tol) | (np.abs(np.abs(y) - a) <= tol)
        reentrant = ((np.abs(x) <= tol) & (y >= -tol)) | ((np.abs(y) <= tol) & (x >= -tol))
        return inside & (outer | reentrant)

    def meets_rect(self, x0, x1, y0, y1):
        a = self.a
        if not (x0 <= a and x1 >= -a and y0 <= a and y1 >= -a):
            return False
        return x0 <= 0.0 or y0 <= 0.0

    def describe(self):
        return {"kind": "lshape", "a": self.a}


@dataclass(frozen=True)
class FlatTopParams:
    """Overlap fractions; gamma_i = delta_i * h_i / 2."""

    delta1: float = 1.0 / 3.0
    delta2: float = 1.0 / 3.0

    def __post_init__(self):
        for dl in (self.delta1, self.delta2):
            if not 0.0 < dl < 1.0:
                raise ValueError(f"overlap fraction must lie in (0, 1), got {dl}")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def window_1d(x, delta, order=0):
    """Flat-top window psi_delta and its first two derivatives.

    Parameters
    ----------
    x : float or array_like
        Evaluation points on the real line.
    delta : float
        Half-width of each transition zone, in (0, 1).
    order : int
        0, 1 or 2.

    Returns
    -------
    float or ndarray
        Same shape as `x`.  The second derivative jumps at the four
        breakpoints; there the one-sided value of the transition cubic is
        returned.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    _check_delta(delta)
    xa = np.asarray(x, dtype=float)
    out = np.zeros_like(xa)
    left = (xa > -1.0 - delta) & (xa <= -1.0 + delta)
    right = (xa >= 1.0 - delta) & (xa < 1.0 + delta)
    flat = (xa > -1.0 + delta) & (xa < 1.0 - delta)
    scale = (0.5 / delta) ** order

    s = (xa[left] - (-1.0 + delta)) / (2.0 * delta)
    if order == 0:
        out[left] = (1.0 + s) ** 2 * (1.0 - 2.0 * s)
    elif order == 1:
        out[left] = -6.0 * s * (1.0 + s) * scale
    else:
        out[left] = -6.0 * (1.0 + 2.0 * s) * scale

    s = (xa[right] - (1.0 - delta)) / (2.0 * delta)
    if order == 0:
        out[right] = (1.0 - s) ** 2 * (1.0 + 2.0 * s)
    elif order == 1:
        out[right] = -6.0 * s * (1.0 - s) * scale
    else:
        out[right] = (-6.0 + 12.0 * s) * scale

    if order == 0:
        out[flat] = 1.0
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass
class PatchGrid:
    """Uniform patch cover of the expanded bounding box of a domain.

    Patch ``j`` sits at column ``j % m1`` and row ``j // m1``.  Only alive
    patches (supports meeting the closed domain) take part in any
    enumeration; ``alive_ids`` lists them in increasing order.
    """

    domain: object
    level: int
    params: FlatTopParams
    m1: int
    m2: int
    h1: float
    h2: float
    gamma1: float
    gamma2: float
    cx: np.ndarray  # column centres
    cy: np.ndarray  # row centres
    alive: np.ndarray  # (m1*m2,) bool
    corner_patch: int | None = None
    alive_ids: np.ndarray = field(init=False)
    rank: np.ndarray = field(init=False)  # global patch id -> alive rank or -1

    def __post_init__(self):
        self.alive_ids = np.flatnonzero(self.alive)
        self.rank = -np.ones(self.m1 * self.m2, dtype=int)
        self.rank[self.alive_ids] = np.arange(self.alive_ids.size)

    @property
    def n_patches(self):
        return self.m1 * self.m2

    @property
    def n_alive(self):
        return int(self.alive_ids.size)

    @property
    def h(self):
        return max(self.h1, self.h2)

    @property
    def half(self):
        return np.array([self.h1 / 2.0, self.h2 / 2.0])

    @property
    def flat_half(self):
        """Half-widths of every flat-top rectangle."""
        return np.array([self.h1 / 2.0 - self.gamma1, self.h2 / 2.0 - self.gamma2])

    @property
    def support_half(self):
        return np.array([self.h1 / 2.0 + self.gamma1, self.h2 / 2.0 + self.gamma2])

    def center(self, j):
        return np.array([self.cx[j % self.m1], self.cy[j // self.m1]])

    def centers(self, ids=None):
        ids = np.arange(self.n_patches) if ids is None else np.asarray(ids)
        return np.stack([self.cx[ids % self.m1], self.cy[ids // self.m1]], axis=-1)

    def flat_rect(self, j):
        c, hf = self.center(j), self.flat_half
        return (c[0] - hf[0], c[0] + hf[0], c[1] - hf[1], c[1] + hf[1])

    def support_rect(self, j):
        c, hs = self.center(j), self.support_half
        return (c[0] - hs[0], c[0] + hs[0], c[1] - hs[1], c[1] + hs[1])

    def patch_rect(self, j):
        c = self.center(j)
        return (c[0] - self.h1 / 2, c[0] + self.h1 / 2, c[1] - self.h2 / 2, c[1] + self.h2 / 2)

    def breakpoints(self, axis):
        """Sorted 1-D breakpoints of all windows along one axis."""
        cen = self.cx if axis == 0 else self.cy
        hf = self.flat_half[axis]
        hs = self.support_half[axis]
        pts = np.concatenate([cen - hs, cen - hf, cen + hf, cen + hs])
        return np.unique(np.round(pts, 14))

    def summary(self):
        return {
            "level": self.level,
            "m1": self.m1,
            "m2": self.m2,
            "h1": self.h1,
            "h2": self.h2,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "delta1": self.params.delta1,
            "delta2": self.params.delta2,
            "alive": self.n_alive,
        }


def build_patch_grid(domain, level, params=None):
    """Tile the expanded domain with ``m x m`` congruent patches.

    For a rectangle ``m = 2**level``; for the L-shape ``m = 2**level + 1`` so
    that the middle patch is centred on the reentrant corner.  The patch
    size solves ``m*h = L + delta*h``, which places the outermost flat-top
    edges exactly on the boundary.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    params = params or FlatTopParams()
    a, b, c, d = domain.bbox
    m = domain.patches_per_side(level)
    h1 = (b - a) / (m - params.delta1)
    h2 = (d - c) / (m - params.delta2)
    g1 = params.delta1 * h1 / 2.0
    g2 = params.delta2 * h2 / 2.0
    cx = a - g1 + (np.arange(m) + 0.5) * h1
    cy = c - g2 + (np.arange(m) + 0.5) * h2
    hs1, hs2 = h1 / 2 + g1, h2 / 2 + g2
    alive = np.zeros(m * m, dtype=bool)
    for j in range(m * m):
        x0, y0 = cx[j % m], cy[j // m]
        alive[j] = domain.meets_rect(x0 - hs1, x0 + hs1, y0 - hs2, y0 + hs2)
    corner = None
    if isinstance(domain, LShape):
        mid = (m - 1) // 2
        corner = mid * m + mid
        cx[mid] = 0.0  # exact zero; the arithmetic leaves ~1e-17
        cy[mid] = 0.0
    return PatchGrid(domain, level, params, m, m, h1, h2, g1, g2, cx, cy, alive, corner)


def _window_axis(grid, t, axis, order):
    delta = grid.params.delta1 if axis == 0 else grid.params.delta2
    half = grid.half[axis]
    return window_1d(t / half, delta, order) / half**order


def pu_eval(grid, j, x, dorder=(0, 0)):
    """Derivative ``d^(d1,d2) Psi_j`` at a point or an (n, 2) array of points."""
    d1, d2 = dorder
    if d1 < 0 or d2 < 0 or d1 + d2 > 2:
        raise ValueError(f"unsupported derivative order {dorder}")
    if not (0 <= j < grid.n_patches) or not grid.alive[j]:
        raise ValueError(f"patch {j} is not an alive patch")
    pts = np.asarray(x, dtype=float)
    c = grid.center(j)
    w1 = _window_axis(grid, pts[..., 0] - c[0], 0, d1)
    w2 = _window_axis(grid, pts[..., 1] - c[1], 1, d2)
    out = w1 * w2
    return float(out) if np.ndim(out) == 0 else out


def _axis_candidates(grid, t, axis):
    """Two candidate patch indices along one axis for coordinates ``t``."""
    cen = grid.cx if axis == 0 else grid.cy
    h = grid.h1 if axis == 0 else grid.h2
    k0 = np.floor((t - cen[0]) / h).astype(int)
    return np.stack([k0, k0 + 1], axis=-1)


def covering_patches_array(grid, pts):
    """Alive patches whose closed support contains each point.

    Returns an (n, 4) integer array padded with -1.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[0]
    hs = grid.support_half
    kx = _axis_candidates(grid, pts[:, 0], 0)
    ky = _axis_candidates(grid, pts[:, 1], 1)
    okx = (kx >= 0) & (kx < grid.m1)
    oky = (ky >= 0) & (ky < grid.m2)
    kxc = np.clip(kx, 0, grid.m1 - 1)
    kyc = np.clip(ky, 0, grid.m2 - 1)
    tol = 1e-13 * grid.h
    okx &= np.abs(pts[:, :1] - grid.cx[kxc]) <= hs[0] + tol
    oky &= np.abs(pts[:, 1:] - grid.cy[kyc]) <= hs[1] + tol
    out = -np.ones((n, 4), dtype=int)
    slot = 0
    for a in range(2):
        for b in range(2):
            j = kyc[:, b] * grid.m1 + kxc[:, a]
            ok = okx[:, a] & oky[:, b] & grid.alive[j]
            out[:, slot] = np.where(ok, j, -1)
            slot += 1
    # compact so valid entries come first, keeping order deterministic
    order = np.argsort(out < 0, axis=1, kind="stable")
    return np.take_along_axis(out, order, axis=1)


def covering_patches(grid, x):
    """Sorted list of alive patch indices whose support contains ``x``."""
    row = covering_patches_array(grid, np.asarray(x, dtype=float).reshape(1, 2))[0]
    return sorted(int(j) for j in row if j >= 0)
