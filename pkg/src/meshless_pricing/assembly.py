"""Local weak-form assembly on (scaled) circular sub-domains.

For every non-Dirichlet node the pricing operator, written in the stretched
coordinates as ``div(A grad U) + w . grad U - (r + lambda) U``, is integrated
over a disc of radius ``r_Q`` (clipped to the unit square) against the
Heaviside test function. The divergence theorem moves every derivative of the
convection term onto the coefficients, so each matrix row is a combination of

* ``A_ij = int_Omega M phi_j``           (volume kernel ``M = div w``),
* ``B_ij = int_dOmega N phi_j``          (``N = -w . nu``),
* ``C_ij = int_dOmega I dphi_j/dx``      (``I = -(A nu)_1``),
* ``D_ij = int_dOmega Theta dphi_j/dz``  (``Theta = -(A nu)_2``),
* ``E_ij = int_Omega phi_j``             (mass).

The jump integral is kept out of the left-hand matrix (treated explicitly in
time) and is applied through :class:`JumpOperator`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtr

from .models import ModelKind, ModelSpec, Right, drift
from .rbf import WendlandKernel, build_shape_functions
from .transform import NodeGrid

log = logging.getLogger(__name__)

GAUSS_POINTS = 4


def gauss_legendre(n: int = GAUSS_POINTS, a: float = -1.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    t, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), half * w


# --------------------------------------------------------------------------
# sub-domains


@dataclass(frozen=True)
class SubDomain:
    """Quadrature description of one (possibly clipped) circular sub-domain.

    Offsets are relative to ``center``; boundary normals are outward unit
    vectors. ``arc_length`` counts only the circular part of the boundary.
    """

    center: tuple
    radius: float
    interior: np.ndarray
    interior_weights: np.ndarray
    boundary: np.ndarray
    boundary_weights: np.ndarray
    normals: np.ndarray
    arc_length: float

    @property
    def area(self) -> float:
        return float(self.interior_weights.sum())


def _ray_limit(cx, cz, theta, radius, lx=1.0, lz=1.0):
    """Distance from ``(cx, cz)`` to the boundary of ``[0,lx]x[0,lz]`` along ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    t = np.full(np.shape(theta), radius, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        for comp, lo_dist, hi_dist in ((c, cx, lx - cx), (s, cz, lz - cz)):
            t = np.where(comp > 1e-15, np.minimum(t, hi_dist / comp), t)
            t = np.where(comp < -1e-15, np.minimum(t, -lo_dist / comp), t)
    return np.maximum(t, 0.0)


def _breakpoints(cx, cz, radius, n_arc, lx=1.0, lz=1.0):
    """Angles where the clipped-disc boundary changes type."""
    angles = list(np.linspace(0.0, 2 * math.pi, n_arc + 1)[:-1])
    for d, base in ((cx, math.pi), (lx - cx, 0.0), (cz, 1.5 * math.pi), (lz - cz, 0.5 * math.pi)):
        if d < radius:
            a = math.acos(max(-1.0, min(1.0, d / radius)))
            angles += [base - a, base + a]
    for px, pz in ((0, 0), (lx, 0), (0, lz), (lx, lz)):
        dx, dz = px - cx, pz - cz
        if 0 < math.hypot(dx, dz) < radius:
            angles.append(math.atan2(dz, dx))
    angles = np.mod(np.asarray(angles), 2 * math.pi)
    angles = np.unique(np.round(angles, 14))
    return np.append(angles, angles[0] + 2 * math.pi)


def subdomain_rule(center, radius: float, n_arc: int = 4, n_gauss: int = GAUSS_POINTS,
                   metric=(1.0, 1.0)) -> SubDomain:
    """Quadrature for a disc of ``radius`` around ``center`` clipped to [0,1]^2.

    The disc is taken in the scaled coordinates ``(x/metric[0], z/metric[1])``,
    so with a non-unit metric the sub-domain is an axis-aligned ellipse.
    Interior integrals use a tensor Gauss-Legendre rule in polar coordinates
    (angle x radius) on every angular piece; boundary integrals use
    Gauss-Legendre on every elliptic arc piece and on every straight piece
    lying on the edge of the unit square.
    """
    mx, mz = float(metric[0]), float(metric[1])
    cx, cz = float(center[0]) / mx, float(center[1]) / mz
    lx, lz = 1.0 / mx, 1.0 / mz
    br = _breakpoints(cx, cz, radius, n_arc, lx, lz)
    tg, wg = gauss_legendre(n_gauss, 0.0, 1.0)
    ipts, iw, bpts, bw, bn = [], [], [], [], []
    arc = 0.0
    for ta, tb in zip(br[:-1], br[1:]):
        if tb - ta < 1e-13:
            continue
        lim_mid = _ray_limit(cx, cz, 0.5 * (ta + tb), radius, lx, lz)
        if lim_mid <= 1e-14:
            continue
        th = ta + (tb - ta) * tg
        wth = (tb - ta) * wg
        lim = _ray_limit(cx, cz, th, radius, lx, lz)
        for t_k, w_k, l_k in zip(th, wth, lim):
            rho = l_k * tg
            ipts.append(np.column_stack([mx * rho * math.cos(t_k), mz * rho * math.sin(t_k)]))
            iw.append(mx * mz * w_k * wg * l_k * rho)
        if lim_mid >= radius * (1 - 1e-12):
            cos, sin = np.cos(th), np.sin(th)
            speed = np.hypot(mx * sin, mz * cos)
            bpts.append(radius * np.column_stack([mx * cos, mz * sin]))
            bw.append(radius * wth * speed)
            bn.append(np.column_stack([mz * cos, mx * sin]) / speed[:, None])
            arc += float(np.sum(radius * wth * speed))
    # straight pieces on the square edges (done explicitly so that centres
    # lying on an edge are handled too)
    scale = (mx, mz)
    for axis, level, normal in ((0, 0.0, (-1.0, 0.0)), (0, 1.0, (1.0, 0.0)),
                                (1, 0.0, (0.0, -1.0)), (1, 1.0, (0.0, 1.0))):
        cen = (float(center[0]), float(center[1]))
        d = abs(cen[axis] - level) / scale[axis]
        if d >= radius:
            continue
        half = math.sqrt(radius ** 2 - d ** 2) * scale[1 - axis]
        along = cen[1 - axis]
        lo, hi = max(along - half, 0.0), min(along + half, 1.0)
        if hi - lo < 1e-15:
            continue
        piece = 2 * math.pi * radius * scale[1 - axis] / n_arc
        nseg = max(1, int(math.ceil((hi - lo) / piece - 1e-9)))
        edges = np.linspace(lo, hi, nseg + 1)
        for ea, eb in zip(edges[:-1], edges[1:]):
            t_k, w_k = gauss_legendre(n_gauss, ea, eb)
            pts = np.empty((n_gauss, 2))
            pts[:, axis] = level - cen[axis]
            pts[:, 1 - axis] = t_k - along
            bpts.append(pts)
            bw.append(w_k)
            bn.append(np.tile(normal, (n_gauss, 1)))
    return SubDomain(
        center=(float(center[0]), float(center[1])), radius=radius,
        interior=np.vstack(ipts), interior_weights=np.concatenate(iw),
        boundary=np.vstack(bpts), boundary_weights=np.concatenate(bw),
        normals=np.vstack(bn), arc_length=arc)


def _check_coverage(grid: NodeGrid, r_q: float, metric):
    spacing = max(grid.dx / metric[0], grid.dz / metric[1])
    if not r_q > 0.5 * spacing:
        raise ValueError(
            f"r_Q={r_q:.4g} does not exceed h/2={0.5 * spacing:.4g}; "
            "neighbouring sub-domains would not overlap")


def make_subdomains(grid: NodeGrid, r_q: float, n_arc: int = 4, metric=(1.0, 1.0)):
    """One sub-domain per non-Dirichlet node (ordered by flat index)."""
    _check_coverage(grid, r_q, metric)
    coords = grid.coordinates()
    rows = np.nonzero(~grid.dirichlet_mask())[0]
    return [subdomain_rule(coords[k], r_q, n_arc, metric=metric) for k in rows]


# --------------------------------------------------------------------------
# operator coefficients


@dataclass(frozen=True)
class OperatorCoefficients:
    """Coefficient fields of the transformed operator at a set of points.

    ``e11, e12, e22`` is the physical diffusion tensor, ``f1, f2`` the
    convection vector of the divergence form, ``p1, p2`` the inverse
    Jacobians ``1/s'`` and ``1/y'``. ``a, b, c`` and ``w1, w2`` are the
    diffusion tensor and convection field in the stretched coordinates, and
    ``M`` is the volume kernel ``div w``. The boundary kernels are present when
    normals were supplied.
    """

    e11: np.ndarray
    e12: np.ndarray
    e22: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    M: np.ndarray
    N: Optional[np.ndarray] = None
    I: Optional[np.ndarray] = None
    Theta: Optional[np.ndarray] = None


def operator_coefficients(spec: ModelSpec, grid: NodeGrid, x, z, normals=None) -> OperatorCoefficients:
    """Evaluate the operator coefficients at transformed points ``(x, z)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    smap, ymap = grid.stretch.s_map, grid.stretch.y_map
    s = smap.inverse(x)
    s1, s2, s3 = smap.derivatives(x, 3)
    y = ymap.inverse(z)
    y1, y2, y3 = ymap.derivatives(z, 3)
    alpha = drift(spec)
    rt = spec.rho * spec.theta
    th2 = spec.theta ** 2
    xi, eta = spec.xi, spec.eta

    p = s / s1
    dp = 1.0 - s * s2 / s1 ** 2
    m = y / y1
    dm = 1.0 - y * y2 / y1 ** 2
    H = p - 0.5 * s ** 2 * s2 / s1 ** 3
    dH = 1.0 - 2.0 * s * s2 / s1 ** 2 - 0.5 * s ** 2 * s3 / s1 ** 3 + 1.5 * s ** 2 * s2 ** 2 / s1 ** 4
    K1 = -1.0 - (eta - y) * y2 / y1 ** 2
    K2 = 2.0 * y2 / y1 ** 2 + y * y3 / y1 ** 3 - 3.0 * y * y2 ** 2 / y1 ** 4

    a = 0.5 * y * p ** 2
    b = 0.5 * rt * p * m
    c = 0.5 * th2 * y / y1 ** 2
    w1 = alpha * p - y * H - 0.5 * rt * p * dm
    w2 = (xi * (eta - y) - 0.5 * th2) / y1 + 0.5 * th2 * y * y2 / y1 ** 3 - 0.5 * rt * dp * m
    M = alpha * dp - y * dH - rt * dp * dm + xi * K1 + 0.5 * th2 * K2

    extra = {}
    if normals is not None:
        n1, n2 = normals[..., 0], normals[..., 1]
        extra = dict(N=-(w1 * n1 + w2 * n2), I=-(a * n1 + b * n2), Theta=-(b * n1 + c * n2))
    return OperatorCoefficients(
        e11=0.5 * y * s ** 2, e12=0.5 * rt * s * y, e22=0.5 * th2 * y,
        f1=alpha * s - y * s - 0.5 * rt * s, f2=xi * (eta - y) - 0.5 * th2 - 0.5 * rt * y,
        p1=1.0 / s1, p2=1.0 / y1, a=a, b=b, c=c, w1=w1, w2=w2, M=M, **extra)


# --------------------------------------------------------------------------
# row assembly


@dataclass
class _ClassTemplate:
    """Quadrature and shape-function tables shared by nodes of one class."""

    rule: SubDomain
    offsets: np.ndarray          # (J, 2) integer (di, dj) stencil
    phi_int: np.ndarray          # (Qi, J)
    phi_bnd: np.ndarray          # (Qb, J)
    dphi_x: np.ndarray           # (Qb, J)
    dphi_z: np.ndarray           # (Qb, J)


def _node_classes(grid: NodeGrid, reach):
    """Group interior-row nodes by their clipped distance to the four edges.

    ``reach`` is the ``(x, z)`` extent of sub-domain plus support radius.
    """
    cx = int(math.ceil(reach[0] / grid.dx)) + 1
    cz = int(math.ceil(reach[1] / grid.dz)) + 1
    ii, jj = np.meshgrid(np.arange(1, grid.nx), np.arange(grid.nz + 1), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    keys = np.column_stack([np.minimum(ii, cx), np.minimum(grid.nx - ii, cx),
                            np.minimum(jj, cz), np.minimum(grid.nz - jj, cz)])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    return ii, jj, uniq, inverse.ravel()


def _build_template(grid, i0, j0, r_q, kernel, n_arc, metric):
    center = (i0 * grid.dx, j0 * grid.dz)
    rule = subdomain_rule(center, r_q, n_arc, metric=metric)
    pts = np.vstack([rule.interior, rule.boundary]) + np.asarray(center)
    tab = build_shape_functions(grid, pts, kernel)
    valid = tab.index >= 0
    di = np.where(valid, tab.index // (grid.nz + 1) - i0, 0)
    dj = np.where(valid, tab.index % (grid.nz + 1) - j0, 0)
    pairs = np.unique(np.column_stack([di[valid], dj[valid]]), axis=0)
    lookup = {tuple(p): k for k, p in enumerate(pairs)}
    col = np.full(tab.index.shape, -1)
    col[valid] = [lookup[(a, b)] for a, b in zip(di[valid], dj[valid])]

    def dense(vals):
        out = np.zeros((len(pts), len(pairs)))
        r, c = np.nonzero(valid)
        np.add.at(out, (r, col[r, c]), vals[r, c])
        return out

    qi = len(rule.interior)
    phi, phx, phz = dense(tab.phi), dense(tab.dx), dense(tab.dz)
    return _ClassTemplate(rule, pairs, phi[:qi], phi[qi:], phx[qi:], phz[qi:])


@dataclass
class AssembledSystem:
    """Sparse pieces of the time-stepping system for one ``(spec, grid, dt)``.

    Rows correspond to the unknown (non-Dirichlet) nodes; columns to all
    nodes. ``stiffness`` holds ``A + B + C + D + (r + lambda) E`` so that the
    left matrix is ``stiffness + E/dt`` restricted to unknown columns.
    """

    grid: NodeGrid
    rows: np.ndarray
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    volume: sp.csr_matrix = field(repr=False, default=None)
    boundary: sp.csr_matrix = field(repr=False, default=None)
    flux_x: sp.csr_matrix = field(repr=False, default=None)
    flux_z: sp.csr_matrix = field(repr=False, default=None)
    areas: np.ndarray = field(repr=False, default=None)

    @property
    def unknown(self) -> np.ndarray:
        return self.rows

    @property
    def dirichlet(self) -> np.ndarray:
        return np.nonzero(self.grid.dirichlet_mask())[0]

    def lhs(self, dt: float) -> sp.csr_matrix:
        """Left matrix ``F`` restricted to unknowns."""
        full = (self.stiffness + self.mass / dt).tocsc()
        return full[:, self.rows].tocsr()

    def lhs_dirichlet(self, dt: float) -> sp.csr_matrix:
        full = (self.stiffness + self.mass / dt).tocsc()
        return full[:, self.dirichlet].tocsr()


def assemble(spec: ModelSpec, grid: NodeGrid, kernel: WendlandKernel, r_q: float,
             n_arc: int = 4, subdomain_metric=None, check_coverage=True) -> AssembledSystem:
    """Assemble the local weak-form rows for every unknown node."""
    metric = kernel.metric if subdomain_metric is None else subdomain_metric
    if check_coverage:
        _check_coverage(grid, r_q, metric)
    reach = (r_q * metric[0] + kernel.support_radius * kernel.metric[0],
             r_q * metric[1] + kernel.support_radius * kernel.metric[1])
    ii, jj, classes, members = _node_classes(grid, reach)
    nzp = grid.nz + 1
    react = spec.r + spec.lam
    pieces = {k: ([], [], []) for k in ("A", "B", "C", "D", "E")}
    areas = np.zeros(len(ii))
    for cls in range(len(classes)):
        sel = np.nonzero(members == cls)[0]
        tpl = _build_template(grid, ii[sel[0]], jj[sel[0]], r_q, kernel, n_arc, metric)
        rule = tpl.rule
        cx = ii[sel] * grid.dx
        cz = jj[sel] * grid.dz
        xi_ = cx[:, None] + rule.interior[None, :, 0]
        zi_ = cz[:, None] + rule.interior[None, :, 1]
        xb_ = cx[:, None] + rule.boundary[None, :, 0]
        zb_ = cz[:, None] + rule.boundary[None, :, 1]
        ci = operator_coefficients(spec, grid, xi_, zi_)
        cb = operator_coefficients(spec, grid, xb_, zb_, normals=rule.normals[None, :, :])
        wi, wb = rule.interior_weights, rule.boundary_weights
        blocks = {
            "A": (ci.M * wi) @ tpl.phi_int,
            "B": (cb.N * wb) @ tpl.phi_bnd,
            "C": (cb.I * wb) @ tpl.dphi_x,
            "D": (cb.Theta * wb) @ tpl.dphi_z,
            "E": np.broadcast_to(wi @ tpl.phi_int, (len(sel), len(tpl.offsets))),
        }
        areas[sel] = rule.area
        node = ii[sel] * nzp + jj[sel]
        cols = node[:, None] + (tpl.offsets[:, 0] * nzp + tpl.offsets[:, 1])[None, :]
        rows = np.broadcast_to(sel[:, None], cols.shape)
        for key, vals in blocks.items():
            pieces[key][0].append(rows.ravel())
            pieces[key][1].append(cols.ravel())
            pieces[key][2].append(np.asarray(vals).ravel())

    shape = (len(ii), grid.n_nodes)

    def build(key):
        r, c, v = (np.concatenate(p) for p in pieces[key])
        return sp.csr_matrix((v, (r, c)), shape=shape)

    A, B, C, D, E = (build(k) for k in ("A", "B", "C", "D", "E"))
    stiff = (A + B + C + D + react * E).tocsr()
    rows = grid.index(ii, jj)
    return AssembledSystem(grid, rows, stiff, E, A, B, C, D, areas)


def assemble_local_row(spec: ModelSpec, grid: NodeGrid, kernel: WendlandKernel, r_q: float,
                       node: int, dt: Optional[float] = None, n_arc: int = 4):
    """Entries of a single row: ``(columns, lhs values, mass values)``.

    Convenience wrapper for inspection and tests; :func:`assemble` is the
    vectorised production path. Without ``dt`` the lhs values are the
    steady-state stiffness entries.
    """
    i, j = divmod(int(node), grid.nz + 1)
    if i == 0 or i == grid.nx:
        raise ValueError(f"node {node} carries Dirichlet data and has no weak-form row")
    metric = kernel.metric
    tpl = _build_template(grid, i, j, r_q, kernel, n_arc, metric)
    rule = tpl.rule
    c = np.asarray(rule.center)
    ci = operator_coefficients(spec, grid, c[0] + rule.interior[:, 0], c[1] + rule.interior[:, 1])
    cb = operator_coefficients(spec, grid, c[0] + rule.boundary[:, 0], c[1] + rule.boundary[:, 1],
                               normals=rule.normals)
    wi, wb = rule.interior_weights, rule.boundary_weights
    mass = wi @ tpl.phi_int
    stiff = ((ci.M * wi) @ tpl.phi_int + (cb.N * wb) @ tpl.phi_bnd
             + (cb.I * wb) @ tpl.dphi_x + (cb.Theta * wb) @ tpl.dphi_z
             + (spec.r + spec.lam) * mass)
    if dt is not None:
        stiff = stiff + mass / dt
    cols = node + tpl.offsets[:, 0] * (grid.nz + 1) + tpl.offsets[:, 1]
    return cols, stiff, mass


# --------------------------------------------------------------------------
# jump integral

SVCJ_CUTOFF = 10.0        # variance jumps truncated at SVCJ_CUTOFF * nu
SVCJ_POINTS = 16


def _lognormal_line_matrix(s, mu, delta):
    """Product-integration weights of ``int U(r) f(r/s_i)/s_i dr`` on ``[0, s[-1]]``.

    ``U`` is taken piecewise linear between the grid prices ``s``; the jump
    ratio is lognormal with log-mean ``mu`` and log-std ``delta``. Row ``i``
    holds the weights of the nodal values for the target price ``s[i]``.
    """
    n = len(s)
    J = np.zeros((n, n))
    J[0, 0] = 1.0      # at s = 0 every jump lands on s = 0
    si = s[1:, None]
    m = np.log(si) + mu
    with np.errstate(divide="ignore"):
        ls = np.log(s)[None, :]
    d0 = (ls - m) / delta                       # -inf at s = 0
    cdf = ndtr(d0)
    part = np.exp(m + 0.5 * delta ** 2) * ndtr(d0 - delta)   # E[r; r < s_k]
    P = np.diff(cdf, axis=1)
    Q = np.diff(part, axis=1)
    width = np.diff(s)[None, :]
    lo, hi = s[None, :-1], s[None, 1:]
    J[1:, :-1] += (hi * P - Q) / width
    J[1:, 1:] += (Q - lo * P) / width
    return J


def _call_tail(s, strike, s_max, mu, delta):
    """``int_{S_max}^inf (r - K) f(r/s)/s dr`` for a lognormal jump ratio."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    m = np.log(s[pos]) + mu
    d = (m - math.log(s_max)) / delta
    out[pos] = np.exp(m + 0.5 * delta ** 2) * ndtr(d + delta) - strike * ndtr(d)
    return out


def tail_term(spec: ModelSpec, grid: NodeGrid) -> np.ndarray:
    """Far-field part of the jump integral for every node (zero for puts).

    For calls the payoff beyond ``S_max`` is taken as ``r - K``; the integral
    against the lognormal law is a partial expectation in closed form.
    """
    out = np.zeros(grid.n_nodes)
    if spec.jump is None or spec.lam == 0.0 or spec.right is Right.PUT:
        return out
    s_max = grid.stretch.s_max
    law = spec.jump
    if spec.kind is ModelKind.SVCJ:
        zv, wv = _variance_jump_rule(law.nu)
        line = sum(w * _call_tail(grid.s, spec.strike, s_max, law.gamma + law.rho_j * v, law.delta)
                   for v, w in zip(zv, wv))
    else:
        line = _call_tail(grid.s, spec.strike, s_max, law.gamma, law.delta)
    return np.repeat(line, grid.nz + 1)


def _variance_jump_rule(nu, n=SVCJ_POINTS, cutoff=SVCJ_CUTOFF, raw=False):
    """Gauss-Legendre nodes on ``[0, cutoff*nu]`` weighted by the exponential law.

    The weights are renormalised to sum to one so that the truncated tail mass
    is redistributed instead of lost. ``raw=True`` also returns the
    unnormalised total (the captured probability mass).
    """
    zv, w = gauss_legendre(n, 0.0, cutoff * nu)
    w = w * np.exp(-zv / nu) / nu
    total = float(w.sum())
    return (zv, w / total, total) if raw else (zv, w / total)


def _shift_matrix(y, shift, y_max):
    """Linear interpolation matrix from ``u(y_j)`` to ``u(min(y_j + shift, y_max))``."""
    n = len(y)
    target = np.minimum(y + shift, y_max)
    k = np.clip(np.searchsorted(y, target, side="right") - 1, 0, n - 2)
    t = (target - y[k]) / (y[k + 1] - y[k])
    rows = np.arange(n)
    return sp.csr_matrix((np.concatenate([1 - t, t]), (np.concatenate([rows, rows]),
                                                       np.concatenate([k, k + 1]))), shape=(n, n))


@dataclass
class JumpOperator:
    """Explicit jump term ``lambda * E~ (W(U) + Pi)`` of the time-stepping system.

    ``W(U)`` is the jump integral evaluated at the nodes, with ``U`` taken
    piecewise linear in ``s`` along every grid line; the weak-form row is then
    obtained by integrating the nodal interpolant of ``W`` over the
    sub-domain, i.e. by multiplying with the mass matrix.
    """

    grid: NodeGrid
    lam: float
    lines: list              # [(weight, J (nx+1)x(nx+1), shift matrix or None)]
    tail: np.ndarray

    def nodal(self, u) -> np.ndarray:
        """Jump integral ``W`` (without the tail) at every node."""
        U = np.asarray(u, dtype=float).reshape(self.grid.shape)
        out = np.zeros_like(U)
        for w, J, shift in self.lines:
            V = U if shift is None else (shift @ U.T).T
            out += w * (J @ V)
        return out.ravel()

    def apply(self, u, mass: sp.spmatrix) -> np.ndarray:
        """Right-hand-side contribution for the unknown rows."""
        if self.lam == 0.0:
            return np.zeros(mass.shape[0])
        return self.lam * (mass @ (self.nodal(u) + self.tail))

    def landing_probability(self) -> np.ndarray:
        """Probability that a jump from each node lands inside ``[0, S_max]``."""
        return self.nodal(np.ones(self.grid.n_nodes))


def assemble_jump_rows(spec: ModelSpec, grid: NodeGrid) -> JumpOperator:
    """Build the jump operator of an SVJ or SVCJ problem (empty for SV)."""
    if spec.jump is None:
        return JumpOperator(grid, 0.0, [], np.zeros(grid.n_nodes))
    law = spec.jump
    if law.lam > 0 and law.delta == 0:
        raise ValueError("jump operator needs delta > 0 (point-mass jumps are not supported)")
    if spec.kind is ModelKind.SVCJ:
        zv, wv, captured = _variance_jump_rule(law.nu, raw=True)
        lines = [(w, _lognormal_line_matrix(grid.s, law.gamma + law.rho_j * v, law.delta),
                  _shift_matrix(grid.y, v, grid.stretch.y_max)) for v, w in zip(zv, wv)]
        mass_check = abs(captured - 1.0)
    else:
        lines = [(1.0, _lognormal_line_matrix(grid.s, law.gamma, law.delta), None)]
        mass_check = 0.0
    if mass_check > 1e-4:
        log.warning("variance-jump quadrature weights drift from 1 by %.2e", mass_check)
    return JumpOperator(grid, law.lam, lines, tail_term(spec, grid))
