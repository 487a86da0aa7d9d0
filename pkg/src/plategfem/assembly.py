"""Stiffness matrix and load vector of the plate bilinear form.

``a(v, w) = int grad^2 v : grad^2 w`` is integrated cell by cell on the
subcell mesh, where every integrand is a polynomial, so a tensor Gauss rule
of sufficient order is exact.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .gfem_space import DERIVS, field_derivatives
from .pu_grid import covering_patches_array
from .quadrature import QuadratureRule, SubcellMesh, build_subcell_mesh, gauss_rule

__all__ = [
    "QuadratureRule",
    "SubcellMesh",
    "gauss_rule",
    "build_subcell_mesh",
    "default_rule_order",
    "assemble_stiffness",
    "assemble_load",
    "energy_value",
    "energy_norm",
    "seminorm",
    "laplacian_norm",
    "export_triplets",
]

_CELL_CHUNK = 1500


def default_rule_order(space):
    return {"q2": 6, "q3": 8}[space.space]


def _cell_groups(space, mesh):
    """Cells grouped by the number of alive patches covering them."""
    cov = covering_patches_array(space.grid, mesh.centers)
    count = (cov >= 0).sum(axis=1)
    for k in range(1, 5):
        idx = np.flatnonzero(count == k)
        if idx.size:
            yield k, idx, space.grid.rank[cov[idx, :k]]


def assemble_stiffness(space, order=None, mesh=None):
    """Sparse symmetric matrix ``K[i, k] = a(phi_i, phi_k)`` in CSR format."""
    order = order or default_rule_order(space)
    mesh = mesh or build_subcell_mesh(space.grid)
    nloc = space.nloc
    rows, cols, vals = [], [], []
    all_pts, all_w = mesh.quadrature(order)
    for k, idx, ranks in _cell_groups(space, mesh):
        for s in range(0, idx.size, _CELL_CHUNK):
            cid = idx[s : s + _CELL_CHUNK]
            rk = ranks[s : s + _CELL_CHUNK]
            pts, w = all_pts[cid], all_w[cid]
            nc, nq = w.shape
            rr = np.repeat(rk[:, :, None], nq, axis=2)  # (nc, k, nq)
            pp = np.broadcast_to(pts[:, None], (nc, k, nq, 2))
            basis = space.local_basis(rr.ravel(), pp.reshape(-1, 2), max_order=2)
            hess = basis[3:].reshape(3, nc, k, nq, nloc)
            hess[1] *= np.sqrt(2.0)
            hess = hess * np.sqrt(w)[None, :, None, :, None]
            # (nc, k*nloc, 3*nq)
            hmat = hess.transpose(1, 2, 4, 0, 3).reshape(nc, k * nloc, 3 * nq)
            kloc = hmat @ hmat.transpose(0, 2, 1)
            dof = (rk[:, :, None] * nloc + np.arange(nloc)).reshape(nc, k * nloc)
            rows.append(np.repeat(dof, k * nloc, axis=1).ravel())
            cols.append(np.tile(dof, (1, k * nloc)).ravel())
            vals.append(kloc.ravel())
    n = space.ndof
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    K.sum_duplicates()
    return ((K + K.T) * 0.5).tocsr()


def assemble_load(space, f, order=None, mesh=None):
    """Load vector ``F[i] = (f, phi_i)``; ``f=None`` gives zeros."""
    n = space.ndof
    if f is None:
        return np.zeros(n)
    order = order or default_rule_order(space)
    mesh = mesh or build_subcell_mesh(space.grid)
    nloc = space.nloc
    F = np.zeros(n)
    all_pts, all_w = mesh.quadrature(order)
    for k, idx, ranks in _cell_groups(space, mesh):
        for s in range(0, idx.size, _CELL_CHUNK):
            cid = idx[s : s + _CELL_CHUNK]
            rk = ranks[s : s + _CELL_CHUNK]
            pts, w = all_pts[cid], all_w[cid]
            nc, nq = w.shape
            fw = f(pts.reshape(-1, 2)).reshape(nc, nq) * w
            rr = np.repeat(rk[:, :, None], nq, axis=2)
            pp = np.broadcast_to(pts[:, None], (nc, k, nq, 2))
            val = space.local_basis(rr.ravel(), pp.reshape(-1, 2), max_order=0)[0]
            val = val.reshape(nc, k, nq, nloc)
            loc = np.einsum("ckqs,cq->cks", val, fw)
            dof = rk[:, :, None] * nloc + np.arange(nloc)
            np.add.at(F, dof.ravel(), loc.ravel())
    return F


def energy_value(K, F, c):
    """Plate energy ``0.5 c.K.c - F.c``."""
    c = np.asarray(c, dtype=float)
    if K.shape[0] != c.size or np.size(F) != c.size:
        raise ValueError(f"dimension mismatch: K {K.shape}, F {np.size(F)}, c {c.size}")
    return 0.5 * c @ (K @ c) - np.asarray(F) @ c


def energy_norm(K, c):
    c = np.asarray(c, dtype=float)
    return float(np.sqrt(max(c @ (K @ c), 0.0)))


def seminorm(space, m, c=None, zeta=None, order=None, mesh=None):
    """``|zeta - u_c|_{H^m}`` by subcell quadrature (either term may be absent).

    Mixed second derivatives are counted twice, so ``m=2`` matches the
    energy ``c.K.c``.
    """
    order = order or default_rule_order(space)
    mesh = mesh or build_subcell_mesh(space.grid)
    pts, w = mesh.quadrature(order)
    pts, w = pts.reshape(-1, 2), w.ravel()
    comps = {0: [((0, 0), 1.0)], 1: [((1, 0), 1.0), ((0, 1), 1.0)], 2: [((2, 0), 1.0), ((1, 1), 2.0), ((0, 2), 1.0)]}[m]
    fd = field_derivatives(space, c, pts, m) if c is not None else None
    total = 0.0
    for d, mult in comps:
        diff = np.zeros(pts.shape[0])
        if zeta is not None:
            diff += zeta(pts, d)
        if fd is not None:
            diff -= fd[DERIVS.index(d)]
        total += mult * np.sum(w * diff**2)
    return float(np.sqrt(total))


def laplacian_norm(space, c, order=None, mesh=None):
    """``||Delta u_c||_{L2}``, the energy of ``u_c`` for the Laplacian form of the plate energy.

    Both forms agree on fields with clamped homogeneous traces, so they give
    the same error norms; they differ for fields with boundary data.
    """
    order = order or default_rule_order(space)
    mesh = mesh or build_subcell_mesh(space.grid)
    pts, w = mesh.quadrature(order)
    fd = field_derivatives(space, c, pts.reshape(-1, 2), 2)
    lap = fd[DERIVS.index((2, 0))] + fd[DERIVS.index((0, 2))]
    return float(np.sqrt(np.sum(w.ravel() * lap**2)))


def export_triplets(K, path):
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    coo = K.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
    return path
