"""Sinh stretching of ``[0, S_max] x [0, y_max]`` onto the unit square.

Nodes are uniform in the transformed coordinates ``(x, z)``; in physical space
they concentrate around the strike and around the variance level ``y0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class _SinhMap:
    """One-dimensional map ``t -> c + sinh(t*a1 - (1-t)*a0)/xi`` on [0, 1]."""

    xi: float
    center: float
    upper: float

    @property
    def a0(self):
        return math.asinh(self.xi * self.center)

    @property
    def a1(self):
        return math.asinh(self.xi * (self.upper - self.center))

    @property
    def span(self):
        return self.a0 + self.a1

    def forward(self, v):
        return (np.arcsinh(self.xi * (np.asarray(v, dtype=float) - self.center)) + self.a0) / self.span

    def inverse(self, t):
        u = self.span * np.asarray(t, dtype=float) - self.a0
        return np.sinh(u) / self.xi + self.center

    def derivatives(self, t, order=3):
        """First ``order`` derivatives of :meth:`inverse` (closed form)."""
        u = self.span * np.asarray(t, dtype=float) - self.a0
        c = self.span
        ch, sh = np.cosh(u), np.sinh(u)
        out = []
        for k in range(1, order + 1):
            out.append(c ** k * (ch if k % 2 else sh) / self.xi)
        return out


@dataclass(frozen=True)
class StretchParams:
    """Parameters of the coordinate stretching.

    ``xi_s`` and ``xi_y`` control how strongly nodes cluster around ``strike``
    and ``y0``.
    """

    strike: float
    y0: float
    s_max: float = None
    y_max: float = 1.0
    xi_s: float = 1.0
    xi_y: float = 10.0

    def __post_init__(self):
        if self.s_max is None:
            object.__setattr__(self, "s_max", 4.0 * self.strike)
        if not 0 < self.strike < self.s_max:
            raise ValueError("need 0 < strike < s_max")
        if not 0 <= self.y0 <= self.y_max:
            raise ValueError("need 0 <= y0 <= y_max")
        if not (self.xi_s > 0 and self.xi_y > 0):
            raise ValueError("stretch intensities must be positive")

    @property
    def s_map(self) -> _SinhMap:
        return _SinhMap(self.xi_s, self.strike, self.s_max)

    @property
    def y_map(self) -> _SinhMap:
        return _SinhMap(self.xi_y, self.y0, self.y_max)


def forward_map(s, y, p: StretchParams):
    """Physical ``(s, y)`` to transformed ``(x, z)``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = 1e-12
    if np.any(s < -tol * p.s_max) or np.any(s > p.s_max * (1 + tol)):
        raise ValueError(f"s outside [0, {p.s_max}]")
    if np.any(y < -tol) or np.any(y > p.y_max * (1 + tol)):
        raise ValueError(f"y outside [0, {p.y_max}]")
    return p.s_map.forward(s), p.y_map.forward(y)


def inverse_map(x, z, p: StretchParams):
    """Transformed ``(x, z)`` to physical ``(s, y)``."""
    return p.s_map.inverse(x), p.y_map.inverse(z)


@dataclass(frozen=True)
class NodeGrid:
    """Uniform tensor grid of ``(nx+1) x (nz+1)`` nodes in the unit square.

    Nodes are numbered with ``z`` running fastest: node ``(i, j)`` has flat
    index ``i*(nz+1) + j``.
    """

    nx: int
    nz: int
    stretch: StretchParams
    x: np.ndarray = field(init=False, repr=False)
    z: np.ndarray = field(init=False, repr=False)
    s: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 2 or self.nz < 1:
            raise ValueError("grid needs nx >= 2 and nz >= 1")
        x = np.arange(self.nx + 1) / self.nx
        z = np.arange(self.nz + 1) / self.nz
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        s, y = inverse_map(x, z, self.stretch)
        # endpoints exact by construction
        s[0], s[-1] = 0.0, self.stretch.s_max
        y[0], y[-1] = 0.0, self.stretch.y_max
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "y", y)

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dz(self) -> float:
        return 1.0 / self.nz

    @property
    def h(self) -> float:
        return max(self.dx, self.dz)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.nz + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx + 1, self.nz + 1

    def index(self, i, j):
        return np.asarray(i) * (self.nz + 1) + np.asarray(j)

    def coordinates(self) -> np.ndarray:
        """``(n_nodes, 2)`` array of node coordinates in the unit square."""
        xx, zz = np.meshgrid(self.x, self.z, indexing="ij")
        return np.column_stack([xx.ravel(), zz.ravel()])

    def dirichlet_mask(self) -> np.ndarray:
        """Nodes on ``x = 0`` and ``x = 1`` (values fixed by boundary data)."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = True
        mask[-1, :] = True
        return mask.ravel()


def jacobians(grid: NodeGrid):
    """Analytic ``s', s'', y', y''`` at the grid lines.

    Returns
    -------
    ds, d2s : ndarray, shape (nx+1,)
    dy, d2y : ndarray, shape (nz+1,)
    """
    ds, d2s = grid.stretch.s_map.derivatives(grid.x, order=2)
    dy, d2y = grid.stretch.y_map.derivatives(grid.z, order=2)
    return ds, d2s, dy, d2y
