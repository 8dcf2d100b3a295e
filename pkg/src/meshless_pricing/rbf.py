"""Wendland kernels and local radial point interpolation (RPIM) shape functions.

Shape functions interpolate nodal values (Kronecker property) and reproduce
the augmenting monomials exactly: ``{1, x, z, xz}`` for the bilinear block,
all polynomials of degree two for the quadratic one. Every local system is assembled in
coordinates centred on the evaluation point, so results are invariant under
translation of the point set by whole grid steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .transform import NodeGrid

COND_LIMIT = 1e12


class Smoothness(str, enum.Enum):
    C2 = "C2"
    C4 = "C4"
    C6 = "C6"


_ONE_MINUS_R = Polynomial([1.0, -1.0])
_WENDLAND_POLY = {
    Smoothness.C2: _ONE_MINUS_R ** 4 * Polynomial([1.0, 4.0]),
    Smoothness.C4: _ONE_MINUS_R ** 6 * Polynomial([3.0, 18.0, 35.0]),
    Smoothness.C6: _ONE_MINUS_R ** 8 * Polynomial([1.0, 8.0, 25.0, 32.0]),
}


class Augmentation(str, enum.Enum):
    """Polynomial block appended to the RBF part of the interpolant."""

    BILINEAR = "bilinear"      # {1, x, z, xz}
    QUADRATIC = "quadratic"    # {1, x, z, x^2, xz, z^2}


N_MONOMIALS = {Augmentation.BILINEAR: 4, Augmentation.QUADRATIC: 6}


class ShapeFunctionError(RuntimeError):
    """Local interpolation system is singular, ill-conditioned or under-supported."""


@dataclass(frozen=True)
class WendlandKernel:
    smoothness: Smoothness
    support_radius: float
    augmentation: Augmentation = Augmentation.BILINEAR
    metric: tuple = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "smoothness", _parse_smoothness(self.smoothness))
        object.__setattr__(self, "augmentation", Augmentation(self.augmentation))
        object.__setattr__(self, "metric", tuple(float(m) for m in self.metric))
        if not self.support_radius > 0:
            raise ValueError("support radius must be positive")
        if len(self.metric) != 2 or min(self.metric) <= 0:
            raise ValueError("metric must be two positive axis scales")

    @property
    def n_monomials(self) -> int:
        return N_MONOMIALS[self.augmentation]

    def widened(self, factor: float) -> "WendlandKernel":
        return WendlandKernel(self.smoothness, self.support_radius * factor,
                              self.augmentation, self.metric)

    @property
    def _polys(self):
        p = _WENDLAND_POLY[self.smoothness]
        d1 = p.deriv()
        # phi'(r)/r is a polynomial because phi'(0) = 0 for every Wendland kernel
        g, rem = divmod(d1, Polynomial([0.0, 1.0]))
        assert np.allclose(rem.coef, 0.0)
        return p, d1, d1.deriv(), g

    def profile(self, r):
        """``phi(r), phi'(r), phi''(r), phi'(r)/r`` at normalised distance ``r``."""
        r = np.asarray(r, dtype=float)
        inside = r < 1.0
        rc = np.where(inside, r, 1.0)
        out = [np.where(inside, poly(rc), 0.0) for poly in self._polys]
        return tuple(out)


def _parse_smoothness(value) -> Smoothness:
    if isinstance(value, Smoothness):
        return value
    return Smoothness(str(value).upper())


def kernel_eval(kernel: WendlandKernel, distance):
    """Kernel value and its first two derivatives with respect to distance."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance < 0):
        raise ValueError("distance must be >= 0")
    rw = kernel.support_radius
    phi, d1, d2, _ = kernel.profile(distance / rw)
    return phi, d1 / rw, d2 / rw ** 2


@dataclass(frozen=True)
class ShapeFunctionTable:
    """Shape functions at a list of evaluation points.

    Ragged support sets are stored padded: ``index[k, p] == -1`` marks padding
    and the corresponding value columns are zero.
    """

    points: np.ndarray
    index: np.ndarray
    phi: np.ndarray
    dx: np.ndarray
    dz: np.ndarray
    dxx: np.ndarray
    dzz: np.ndarray
    dxz: np.ndarray
    n_nodes: int

    def __len__(self):
        return len(self.points)

    def to_sparse(self, which: str = "phi"):
        """Return the chosen table as a ``(n_points, n_nodes)`` CSR matrix."""
        import scipy.sparse as sp

        vals = getattr(self, which)
        rows = np.repeat(np.arange(len(self.points)), self.index.shape[1])
        cols = self.index.ravel()
        keep = cols >= 0
        return sp.csr_matrix((vals.ravel()[keep], (rows[keep], cols[keep])),
                             shape=(len(self.points), self.n_nodes))


def _monomials(dx, dz, h, augmentation=Augmentation.BILINEAR):
    """Scaled monomial basis and its derivatives at relative offsets."""
    u, v = dx / h, dz / h
    one = np.ones_like(u)
    zero = np.zeros_like(u)
    if augmentation is Augmentation.BILINEAR:
        cols = [(one, zero, zero, zero, zero, zero),
                (u, one / h, zero, zero, zero, zero),
                (v, zero, one / h, zero, zero, zero),
                (u * v, v / h, u / h, zero, zero, one / h ** 2)]
    else:
        cols = [(one, zero, zero, zero, zero, zero),
                (u, one / h, zero, zero, zero, zero),
                (v, zero, one / h, zero, zero, zero),
                (u * u, 2 * u / h, zero, 2 * one / h ** 2, zero, zero),
                (u * v, v / h, u / h, zero, zero, one / h ** 2),
                (v * v, zero, 2 * v / h, zero, 2 * one / h ** 2, zero)]
    return tuple(np.stack([c[d] for c in cols], axis=-1) for d in range(6))


def local_shape_functions(rel_nodes, kernel: WendlandKernel, h: float, check=True):
    """Shape functions at the origin for batches of local node sets.

    Parameters
    ----------
    rel_nodes : ndarray, shape (k, n, 2)
        Support node coordinates relative to each evaluation point.
    kernel : WendlandKernel
    h : float
        Length scale used to normalise the monomial block.

    Returns
    -------
    tuple of six ndarrays of shape (k, n)
        Values, ``d/dx``, ``d/dz``, ``d2/dx2``, ``d2/dz2``, ``d2/dxdz``.
    """
    mx, mz = kernel.metric
    rel_nodes = np.asarray(rel_nodes, dtype=float) / np.array([mx, mz])
    k, n, _ = rel_nodes.shape
    m = kernel.n_monomials
    aug = kernel.augmentation
    if n < m + 1:
        raise ShapeFunctionError(
            f"only {n} nodes in the support domain (need >= {m + 1}); "
            "increase the support radius")
    rw = kernel.support_radius
    diff = rel_nodes[:, :, None, :] - rel_nodes[:, None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=-1))
    R = kernel.profile(dist / rw)[0]
    P = _monomials(rel_nodes[..., 0], rel_nodes[..., 1], h, aug)[0]
    G = np.zeros((k, n + m, n + m))
    G[:, :n, :n] = R
    G[:, :n, n:] = P
    G[:, n:, :n] = np.swapaxes(P, 1, 2)
    if check:
        cond = np.linalg.cond(G)
        bad = ~(cond < COND_LIMIT)
        if np.any(bad):
            raise ShapeFunctionError(
                f"moment matrix ill-conditioned (cond={cond[bad].max():.3g}) "
                f"for {int(bad.sum())} evaluation point(s)")

    # RBF part evaluated at the origin: offsets of the origin from each node are -rel
    off = -rel_nodes
    r = np.sqrt(np.sum(off ** 2, axis=-1))
    phi, _, d2, g = kernel.profile(r / rw)
    with np.errstate(invalid="ignore", divide="ignore"):
        ex = np.where(r > 0, off[..., 0] / r, 0.0)
        ez = np.where(r > 0, off[..., 1] / r, 0.0)
    g = g / rw ** 2
    c = (d2 / rw ** 2) - g
    rx = g * off[..., 0]
    rz = g * off[..., 1]
    rxx = g + c * ex * ex
    rzz = g + c * ez * ez
    rxz = c * ex * ez
    zeros = np.zeros((k, 1))
    mono = _monomials(zeros, zeros, h, aug)
    rhs = np.concatenate(
        [np.stack([phi, rx, rz, rxx, rzz, rxz], axis=-1),
         np.stack([m[:, 0, :] for m in mono], axis=-1)], axis=1)
    sol = np.linalg.solve(G, rhs)
    scale = (1.0, mx, mz, mx * mx, mz * mz, mx * mz)
    return tuple(sol[:, :n, c_] / scale[c_] for c_ in range(6))


def support_offsets(grid: NodeGrid, radius: float, metric=(1.0, 1.0)):
    """Candidate index window ``(di, dj)`` covering an ellipse of ``radius``."""
    wi = int(np.ceil(radius * metric[0] / grid.dx)) + 1
    wj = int(np.ceil(radius * metric[1] / grid.dz)) + 1
    di, dj = np.meshgrid(np.arange(-wi, wi + 1), np.arange(-wj, wj + 1), indexing="ij")
    return di.ravel(), dj.ravel()


def find_supports(grid: NodeGrid, points, radius: float, centers_mask=None, metric=(1.0, 1.0)):
    """Nodes strictly within ``radius`` of each point (tensor-grid window search).

    Distances are measured in the scaled coordinates ``(x/metric[0], z/metric[1])``.

    Returns padded ``(k, C)`` arrays of flat node indices (``-1`` padding) and
    the per-point counts. Valid indices come first in each row, ordered by
    flat index.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    di, dj = support_offsets(grid, radius, metric)
    i0 = np.rint(points[:, 0] / grid.dx).astype(int)
    j0 = np.rint(points[:, 1] / grid.dz).astype(int)
    ii = i0[:, None] + di[None, :]
    jj = j0[:, None] + dj[None, :]
    inside = (ii >= 0) & (ii <= grid.nx) & (jj >= 0) & (jj <= grid.nz)
    ddx = (ii * grid.dx - points[:, :1]) / metric[0]
    ddz = (jj * grid.dz - points[:, 1:]) / metric[1]
    close = ddx ** 2 + ddz ** 2 < (radius * (1 - 1e-12)) ** 2
    valid = inside & close
    flat = np.where(valid, ii * (grid.nz + 1) + jj, -1)
    if centers_mask is not None:
        ok = np.zeros_like(valid)
        ok[valid] = centers_mask[flat[valid]]
        flat = np.where(ok, flat, -1)
        valid = ok
    order = np.argsort(~valid, axis=1, kind="stable")
    flat = np.take_along_axis(flat, order, axis=1)
    counts = valid.sum(axis=1)
    width = max(int(counts.max()), 1)
    return flat[:, :width], counts


RETRY_FACTOR = 1.25


def _shape_values(grid, pts, kernel, mask, check):
    """Shape functions for ``pts``; returns the table pieces and failed rows."""
    index, counts = find_supports(grid, pts, kernel.support_radius, mask, kernel.metric)
    coords = grid.coordinates()
    out = [np.zeros(index.shape) for _ in range(6)]
    failed = np.zeros(len(pts), dtype=bool)
    failed[counts < kernel.n_monomials + 1] = True
    messages = {}
    for n in np.unique(counts[~failed]):
        sel = np.nonzero((counts == n) & ~failed)[0]
        idx = index[sel, :n]
        rel = coords[idx] - pts[sel, None, :]
        if check:
            # flag ill-conditioned configurations one by one
            G_ok = _well_conditioned(rel, kernel, grid.h)
            for k in sel[~G_ok]:
                messages[k] = "moment matrix ill-conditioned"
            failed[sel[~G_ok]] = True
            sel, idx, rel = sel[G_ok], idx[G_ok], rel[G_ok]
            if len(sel) == 0:
                continue
        vals = local_shape_functions(rel, kernel, grid.h, check=False)
        for o, v in zip(out, vals):
            o[sel, :n] = v
    return index, out, failed, counts, messages


def _well_conditioned(rel, kernel, h):
    rel = rel / np.asarray(kernel.metric)
    n = rel.shape[1]
    m = kernel.n_monomials
    dist = np.sqrt(np.sum((rel[:, :, None, :] - rel[:, None, :, :]) ** 2, axis=-1))
    G = np.zeros((len(rel), n + m, n + m))
    G[:, :n, :n] = kernel.profile(dist / kernel.support_radius)[0]
    P = _monomials(rel[..., 0], rel[..., 1], h, kernel.augmentation)[0]
    G[:, :n, n:] = P
    G[:, n:, :n] = np.swapaxes(P, 1, 2)
    return np.linalg.cond(G) < COND_LIMIT


def build_shape_functions(grid: NodeGrid, eval_points, kernel: WendlandKernel,
                          centers=None, check=True) -> ShapeFunctionTable:
    """RPIM shape functions (with first and second derivatives) at ``eval_points``.

    Points whose support is too small or whose moment matrix is
    ill-conditioned are retried once with the support radius enlarged by
    ``RETRY_FACTOR``; a second failure raises :class:`ShapeFunctionError`.

    Parameters
    ----------
    grid : NodeGrid
    eval_points : array_like, shape (k, 2)
        Points in the transformed unit square.
    kernel : WendlandKernel
    centers : array_like of bool or int, optional
        Restrict the interpolation centres to a subset of nodes.
    check : bool
        Verify the conditioning of every moment matrix.
    """
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    mask = None
    if centers is not None:
        centers = np.asarray(centers)
        if centers.dtype == bool:
            mask = centers
        else:
            mask = np.zeros(grid.n_nodes, dtype=bool)
            mask[centers] = True
    index, out, failed, counts, _ = _shape_values(grid, pts, kernel, mask, check)
    if np.any(failed):
        bad = np.nonzero(failed)[0]
        wide = kernel.widened(RETRY_FACTOR)
        idx2, out2, failed2, counts2, msg2 = _shape_values(grid, pts[bad], wide, mask, check)
        if np.any(failed2):
            k = int(np.nonzero(failed2)[0][0])
            reason = msg2.get(k, f"{counts2[k]} support nodes (need >= {kernel.n_monomials + 1})")
            raise ShapeFunctionError(
                f"point {pts[bad[k]].tolist()}: {reason} even with support radius "
                f"{wide.support_radius:.4g}; use a larger support radius")
        width = max(index.shape[1], idx2.shape[1])
        pad = lambda a, fill: np.pad(a, ((0, 0), (0, width - a.shape[1])), constant_values=fill)
        index = pad(index, -1)
        out = [pad(o, 0.0) for o in out]
        index[bad] = pad(idx2, -1)
        for o, o2 in zip(out, out2):
            o[bad] = pad(o2, 0.0)
    return ShapeFunctionTable(pts, index, *out, n_nodes=grid.n_nodes)


def interpolate(table: ShapeFunctionTable, nodal_values, derivatives: bool = False):
    """Evaluate the RPIM interpolant of ``nodal_values`` at the table points.

    With ``derivatives=True`` returns a dict with keys ``value, dx, dz, dxx,
    dzz, dxz``.
    """
    u = np.asarray(nodal_values, dtype=float)
    if u.shape[0] != table.n_nodes:
        raise ValueError(f"expected {table.n_nodes} nodal values, got {u.shape[0]}")
    idx = np.where(table.index >= 0, table.index, 0)
    gathered = u[idx]
    if not derivatives:
        return np.einsum("kp,kp...->k...", table.phi, gathered)
    return {name: np.einsum("kp,kp...->k...", getattr(table, attr), gathered)
            for name, attr in [("value", "phi"), ("dx", "dx"), ("dz", "dz"),
                               ("dxx", "dxx"), ("dzz", "dzz"), ("dxz", "dxz")]}
