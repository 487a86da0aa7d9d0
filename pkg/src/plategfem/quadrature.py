"""Gauss-Legendre rules and the polynomial subcell mesh used for integration."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["QuadratureRule", "gauss_rule", "SubcellMesh", "build_subcell_mesh"]


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self):
        return self.nodes.size


def _legendre_and_derivative(n, x):
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


@lru_cache(maxsize=None)
def _gauss(n):
    if n == 1:
        return np.array([0.0]), np.array([2.0])
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # symmetrise to remove last-bit asymmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def gauss_rule(n):
    """n-point Gauss-Legendre rule on [-1, 1], exact to degree 2n-1."""
    if not 1 <= int(n) <= 20 or int(n) != n:
        raise ValueError(f"rule order must be an integer in 1..20, got {n}")
    x, w = _gauss(int(n))
    return QuadratureRule(x.copy(), w.copy())


@dataclass
class SubcellMesh:
    """Axis-aligned cells on which every window and shape is one polynomial.

    ``cells[k] = (x0, x1, y0, y1)``.
    """

    xb: np.ndarray
    yb: np.ndarray
    cells: np.ndarray

    @property
    def size(self):
        return self.cells.shape[0]

    @property
    def centers(self):
        c = self.cells
        return np.stack([(c[:, 0] + c[:, 1]) / 2, (c[:, 2] + c[:, 3]) / 2], axis=1)

    @property
    def areas(self):
        c = self.cells
        return (c[:, 1] - c[:, 0]) * (c[:, 3] - c[:, 2])

    def quadrature(self, n):
        """Tensor Gauss points (ncell, n*n, 2) and weights (ncell, n*n)."""
        rule = gauss_rule(n)
        c = self.cells
        mx, rx = (c[:, 0] + c[:, 1]) / 2, (c[:, 1] - c[:, 0]) / 2
        my, ry = (c[:, 2] + c[:, 3]) / 2, (c[:, 3] - c[:, 2]) / 2
        gx, gy = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
        wx = np.outer(rule.weights, rule.weights).ravel()
        px = mx[:, None] + rx[:, None] * gx.ravel()[None, :]
        py = my[:, None] + ry[:, None] * gy.ravel()[None, :]
        w = (rx * ry)[:, None] * wx[None, :]
        return np.stack([px, py], axis=-1), w


def _merge(points, lo, hi, tol):
    pts = np.sort(np.concatenate([points, [lo, hi]]))
    pts = pts[(pts >= lo - tol) & (pts <= hi + tol)]
    pts = np.clip(pts, lo, hi)
    keep = np.concatenate([[True], np.diff(pts) > tol])
    pts = pts[keep]
    pts[0], pts[-1] = lo, hi
    return pts


def build_subcell_mesh(grid, domain=None):
    """Arrangement of all window breakpoints, clipped to the domain."""
    domain = domain if domain is not None else grid.domain
    a, b, c, d = domain.bbox
    cutx, cuty = domain.cut_lines()
    tol = 1e-11 * grid.h
    xb = _merge(np.concatenate([grid.breakpoints(0), cutx]), a, b, tol)
    yb = _merge(np.concatenate([grid.breakpoints(1), cuty]), c, d, tol)
    X0, Y0 = np.meshgrid(xb[:-1], yb[:-1], indexing="xy")
    X1, Y1 = np.meshgrid(xb[1:], yb[1:], indexing="xy")
    cells = np.stack([X0.ravel(), X1.ravel(), Y0.ravel(), Y1.ravel()], axis=1)
    centers = np.stack([(cells[:, 0] + cells[:, 1]) / 2, (cells[:, 2] + cells[:, 3]) / 2], axis=1)
    cells = cells[domain.contains(centers, tol=0.0)]
    return SubcellMesh(xb, yb, cells)
