"""Uniform box grids, finite-difference stencils and PDE residuals."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "MonotonicityError",
    "gradient_fd",
    "hessian_fd",
    "operator_stencils",
    "apply_stencils",
    "apply_operator",
    "upwind_gradient",
    "ResidualReport",
    "pde_residual",
    "kink_mask",
    "write_field_csv",
    "read_field_csv",
]


class MonotonicityError(ValueError):
    """The operator stencil would not be monotone on this grid."""


class Grid:
    """Tensor grid on the box ``[lo, hi]`` with ``m`` nodes per axis.

    Node ``i`` sits at ``lo + i * h`` with ``h = (hi - lo) / (m - 1)``.
    """

    def __init__(self, lo, hi, m):
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        m = np.broadcast_to(np.asarray(m, int), lo.shape).copy()
        if np.any(m < 5):
            raise ValueError("at least 5 nodes per axis are required")
        if np.any(hi <= lo):
            raise ValueError("hi must exceed lo on every axis")
        self.lo, self.hi, self.m = lo, hi, m
        self.n = len(lo)
        self.h = (hi - lo) / (m - 1)
        self.shape = tuple(int(k) for k in m)

    @classmethod
    def from_spacing(cls, lo, hi, h):
        """Grid whose spacing is as close to ``h`` as the box allows (never coarser)."""
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        m = np.ceil((hi - lo) / h - 1e-9).astype(int) + 1
        return cls(lo, hi, m)

    @classmethod
    def cube(cls, half_width, n, h):
        return cls.from_spacing(-half_width * np.ones(n), half_width * np.ones(n), h)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def hmax(self):
        return float(self.h.max())

    def axes(self):
        return [self.lo[k] + np.arange(self.m[k]) * self.h[k] for k in range(self.n)]

    def points(self):
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def node(self, index):
        index = np.asarray(index, int)
        return self.lo + index * self.h

    def interior_mask(self, width=1):
        mask = np.zeros(self.shape, bool)
        mask[tuple(slice(width, k - width) for k in self.shape)] = True
        return mask

    def boundary_mask(self):
        return ~self.interior_mask()

    @property
    def interior(self):
        return tuple(slice(1, k - 1) for k in self.shape)

    def contains_ball(self, radius, margin=0.0):
        r = radius * (1.0 + margin)
        return bool(np.all(self.lo <= -r) and np.all(self.hi >= r))

    def describe(self):
        return {"n": self.n, "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "m": self.m.tolist(), "h": self.h.tolist()}

    def __eq__(self, other):
        return (isinstance(other, Grid) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi) and np.array_equal(self.m, other.m))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes(), self.m.tobytes()))

    def __repr__(self):
        return f"Grid(lo={self.lo.tolist()}, hi={self.hi.tolist()}, m={self.m.tolist()})"


class Field:
    """Nodal values on a grid.  Boundary nodes may carry NaN as a sentinel."""

    def __init__(self, grid: Grid, values):
        values = np.asarray(values, float)
        if values.size != grid.size:
            raise ValueError(f"expected {grid.size} values, got {values.size}")
        values = values.reshape(grid.shape)
        if not np.all(np.isfinite(values[grid.interior])):
            raise ValueError("field values must be finite on interior nodes")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, func(grid.points()))

    @property
    def boundary_mask(self):
        return self.grid.boundary_mask()

    def interior_values(self):
        return self.values[self.grid.interior]

    def argmin(self):
        """Flat index of the minimum; ties go to the smallest flat index."""
        return int(np.argmin(self.values.reshape(-1)))

    def copy(self):
        return Field(self.grid, self.values.copy())

    def __add__(self, c):
        return Field(self.grid, self.values + (c.values if isinstance(c, Field) else c))

    def __sub__(self, c):
        return Field(self.grid, self.values - (c.values if isinstance(c, Field) else c))


# ---------------------------------------------------------------------------
# pointwise stencils


def _check_node(grid, node, need):
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != grid.n:
        raise IndexError("node index has wrong dimension")
    for k, i in enumerate(node):
        lo_ok = i - need[k][0] >= 0
        hi_ok = i + need[k][1] <= grid.shape[k] - 1
        if not (lo_ok and hi_ok):
            raise IndexError(f"node {node} lacks the neighbours required along axis {k}")
    return node


def _shift(node, k, s):
    out = list(node)
    out[k] += s
    return tuple(out)


def gradient_fd(u: Field, node, scheme="central"):
    """Gradient at one node.

    Parameters
    ----------
    scheme : ``"central"`` or a sequence of signs
        Central differences are second order.  A sign vector selects the
        forward (``+1``) or backward (``-1``) one-sided difference per axis.
    """
    g, v, h = u.grid, u.values, u.grid.h
    if isinstance(scheme, str):
        if scheme != "central":
            raise ValueError(f"unknown scheme {scheme!r}")
        node = _check_node(g, node, [(1, 1)] * g.n)
        return np.array([(v[_shift(node, k, 1)] - v[_shift(node, k, -1)]) / (2 * h[k]) for k in range(g.n)])
    signs = np.asarray(scheme)
    need = [(1, 0) if s < 0 else (0, 1) for s in signs]
    node = _check_node(g, node, need)
    out = []
    for k, s in enumerate(signs):
        if s < 0:
            out.append((v[node] - v[_shift(node, k, -1)]) / h[k])
        else:
            out.append((v[_shift(node, k, 1)] - v[node]) / h[k])
    return np.array(out)


def hessian_fd(u: Field, node):
    """Hessian at an interior node: second central differences and the 4-point cross stencil."""
    g, v, h = u.grid, u.values, u.grid.h
    node = _check_node(g, node, [(1, 1)] * g.n)
    H = np.empty((g.n, g.n))
    for k in range(g.n):
        H[k, k] = (v[_shift(node, k, 1)] - 2 * v[node] + v[_shift(node, k, -1)]) / h[k] ** 2
        for l in range(k + 1, g.n):
            pp = v[_shift(_shift(node, k, 1), l, 1)]
            mm = v[_shift(_shift(node, k, -1), l, -1)]
            pm = v[_shift(_shift(node, k, 1), l, -1)]
            mp = v[_shift(_shift(node, k, -1), l, 1)]
            H[k, l] = H[l, k] = (pp + mm - pm - mp) / (4 * h[k] * h[l])
    return H


# ---------------------------------------------------------------------------
# discrete operator


def _unit(n, k, s=1):
    e = np.zeros(n, int)
    e[k] = s
    return e


def _linear_stencil(A, h):
    """Stencil of ``-tr(A D^2 u)`` as ``{offset: coefficient}``.

    Off-diagonal terms use the 7-point cross stencil whose diagonal arm
    follows the sign of ``A_kl``; it is exact on quadratics and monotone
    under diagonal dominance.
    """
    n = len(h)
    st = {}

    def add(off, c):
        key = tuple(int(x) for x in off)
        st[key] = st.get(key, 0.0) + c

    for k in range(n):
        c = A[k, k] / h[k] ** 2
        add(_unit(n, k, 1), -c)
        add(_unit(n, k, -1), -c)
        add(np.zeros(n, int), 2 * c)
    for k in range(n):
        for l in range(k + 1, n):
            a = A[k, l]
            if a == 0:
                continue
            # 2 a u_kl ~ a/(h_k h_l) * s * [2u0 + u(+k+sl) + u(-k-sl) - u(+-k) - u(+-l)]
            s = 1 if a > 0 else -1
            c = abs(a) / (h[k] * h[l])
            add(_unit(n, k, 1) + _unit(n, l, s), -c)
            add(_unit(n, k, -1) + _unit(n, l, -s), -c)
            add(np.zeros(n, int), -2 * c)
            for e in (_unit(n, k, 1), _unit(n, k, -1), _unit(n, l, 1), _unit(n, l, -1)):
                add(e, c)
    for k in range(n):
        for s in (1, -1):
            c = st[tuple(_unit(n, k, s))]
            if c > 1e-12 * abs(st[(0,) * n]):
                offenders = [l for l in range(n) if l != k and A[k, l] != 0]
                pair = (k, offenders[0]) if offenders else (k, k)
                raise MonotonicityError(
                    f"off-diagonal coefficient A[{pair[0]},{pair[1]}] breaks diagonal dominance "
                    f"on this grid (axis pair {pair}); refine the coarser axis or use a diagonal operator"
                )
    return st


def operator_stencils(F, grid: Grid):
    """One stencil per branch of ``F``; ``F(D^2u) = min`` over branches of the stencil sums."""
    if F.kind == "zero":
        return [{(0,) * grid.n: 0.0}]
    return [_linear_stencil(A, grid.h) for A in F.matrices]


def apply_stencils(stencils, values, grid: Grid):
    """Evaluate each stencil on interior nodes; returns array ``(branches,) + interior shape``."""
    out = []
    for st in stencils:
        acc = np.zeros(tuple(k - 2 for k in grid.shape))
        for off, c in st.items():
            if c == 0.0:
                continue
            sl = tuple(slice(1 + o, k - 1 + o) for o, k in zip(off, grid.shape))
            acc = acc + c * values[sl]
        out.append(acc)
    return np.array(out)


def apply_operator(spec, u: Field) -> Field:
    """``F(D^2 u)`` on interior nodes, NaN on the boundary."""
    grid = u.grid
    branches = apply_stencils(operator_stencils(spec.F, grid), u.values, grid)
    out = np.full(grid.shape, np.nan)
    out[grid.interior] = branches.min(axis=0)
    return Field(grid, out)


# ---------------------------------------------------------------------------
# upwind gradient for the constraint


def _one_sided(values, grid):
    """Backward and forward differences on interior nodes, shape ``(n,) + interior``."""
    n = grid.n
    dm, dp = [], []
    for k in range(n):
        c = tuple(slice(1, s - 1) for s in grid.shape)
        lo = tuple(slice(0, s - 2) if j == k else slice(1, s - 1) for j, s in enumerate(grid.shape))
        hi = tuple(slice(2, s) if j == k else slice(1, s - 1) for j, s in enumerate(grid.shape))
        dm.append((values[c] - values[lo]) / grid.h[k])
        dp.append((values[hi] - values[c]) / grid.h[k])
    return np.array(dm), np.array(dp)


def upwind_gradient(values, grid: Grid, ell, with_direction=False):
    """Clipped upwind gradient maximising the gauge over one-sided sign patterns.

    Per axis the candidates are ``max(D^- u, 0)`` and ``min(D^+ u, 0)``;
    of the ``2^n`` combinations the one with largest ``H0`` is kept (first
    pattern on ties).  Gauges even in each coordinate take the larger
    magnitude per axis, which selects the same maximiser.

    Returns
    -------
    q : ndarray, shape ``(N, n)`` over interior nodes in lexicographic order
    h0 : ndarray, shape ``(N,)``
    choice : ndarray of int, shape ``(N, n)``
        ``-1`` backward difference, ``+1`` forward, ``0`` clipped to zero.
    direction : ndarray, shape ``(N, n)``, only with ``with_direction``
        Maximising unit vector of the gauge (a subgradient of ``H0`` at ``q``).
    """
    n = grid.n
    dm, dp = _one_sided(np.asarray(values, float), grid)
    a = np.maximum(dm, 0.0).reshape(n, -1).T
    b = np.minimum(dp, 0.0).reshape(n, -1).T
    if getattr(ell, "axis_symmetric", False):
        sel = -b > a
        q = np.where(sel, b, a)
        choice = np.where(sel, 1, np.where(q > 0, -1, 0)).astype(int)
        if with_direction:
            val, d = ell.gauge(q, grad=True)
            return q, val, choice, d
        return q, ell.gauge(q), choice
    best = None
    for pattern in itertools.product((0, 1), repeat=n):
        sel = np.array(pattern, bool)
        q = np.where(sel, b, a)
        if with_direction:
            val, d = ell.gauge(q, grad=True)
        else:
            val, d = ell.gauge(q), None
        if best is None:
            best = [q, val, np.broadcast_to(sel, q.shape).copy(), d]
            continue
        better = val > best[1]
        best[0][better] = q[better]
        best[1] = np.where(better, val, best[1])
        best[2][better] = sel
        if with_direction:
            best[3][better] = d[better]
    q, val, sel, d = best
    choice = np.where(sel, np.where(q < 0, 1, 0), np.where(q > 0, -1, 0)).astype(int)
    if with_direction:
        return q, val, choice, d
    return q, val, choice


def kink_mask(values, grid: Grid, curvature_scale=1.0):
    """Interior nodes where ``|D^+ u - D^- u| > 10 h * curvature_scale`` on some axis."""
    dm, dp = _one_sided(np.asarray(values, float), grid)
    jump = np.abs(dp - dm) > 10.0 * grid.h.reshape((-1,) + (1,) * grid.n) * curvature_scale
    return np.any(jump, axis=0)


# ---------------------------------------------------------------------------
# residual


@dataclass
class ResidualReport:
    """Sup-norms of the eigenvalue equation residual on interior nodes.

    ``sup_abs`` is the sup of ``|max{lam + F - f, H0}|``; ``elliptic_excess``
    and ``constraint_excess`` are sups of the positive parts of each branch;
    ``deficit`` is the sup of the negative part of the max.  The ``filtered``
    value drops nodes flagged as gradient kinks.
    """

    sup_abs: float
    sup_abs_filtered: float
    elliptic_excess: float
    constraint_excess: float
    deficit: float
    contact_fraction: float
    kink_count: int
    nodes: int
    worst_node: tuple = field(default=())

    def as_dict(self):
        d = dict(self.__dict__)
        d["worst_node"] = [int(i) for i in self.worst_node]
        return d


def _sup(x):
    return float(np.max(x)) if x.size else 0.0


def pde_residual(spec, lam, u: Field, region=None, curvature_scale=1.0, contact_tol=None) -> ResidualReport:
    """Residual of ``max{lam + F(D^2u) - f, H0(Du)} = 0``.

    Parameters
    ----------
    region : bool array over the grid, optional
        Restrict the norms to these interior nodes.
    contact_tol : float, optional
        Threshold for the contact fraction ``H0 < -contact_tol``; defaults
        to ``h^2 c1``.
    """
    grid = u.grid
    ell = spec.ell
    Fu = apply_operator(spec, u).values[grid.interior].reshape(-1)
    fx = spec.f(grid.points()[grid.interior].reshape(-1, grid.n))
    lam_i = lam if np.ndim(lam) == 0 else np.asarray(lam, float)[grid.interior].reshape(-1)
    elliptic = lam_i + Fu - fx
    _, h0, _ = upwind_gradient(u.values, grid, ell)
    total = np.maximum(elliptic, h0)
    kinks = kink_mask(u.values, grid, curvature_scale).reshape(-1)
    keep = np.ones(total.size, bool) if region is None else np.asarray(region)[grid.interior].reshape(-1)
    if contact_tol is None:
        contact_tol = grid.hmax ** 2 * ell.c1
    absr = np.abs(total)
    idx = np.flatnonzero(keep)
    worst = ()
    if idx.size:
        j = idx[np.argmax(absr[idx])]
        worst = tuple(int(i) + 1 for i in np.unravel_index(j, tuple(k - 2 for k in grid.shape)))
    return ResidualReport(
        sup_abs=_sup(absr[keep]),
        sup_abs_filtered=_sup(absr[keep & ~kinks]),
        elliptic_excess=_sup(np.maximum(elliptic[keep], 0.0)),
        constraint_excess=_sup(np.maximum(h0[keep], 0.0)),
        deficit=_sup(np.maximum(-total[keep], 0.0)),
        contact_fraction=float(np.mean(h0[keep] < -contact_tol)) if keep.any() else 0.0,
        kink_count=int(np.sum(kinks & keep)),
        nodes=int(keep.sum()),
        worst_node=worst,
    )


# ---------------------------------------------------------------------------
# CSV


def write_field_csv(u: Field, path, value_name="value"):
    """One row per node: coordinates then value, lexicographic node order."""
    pts = u.grid.points().reshape(-1, u.grid.n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(u.grid.n)] + [value_name])
        for row, val in zip(pts, u.values.reshape(-1)):
            w.writerow([repr(float(c)) for c in row] + [repr(float(val))])


def read_field_csv(path) -> Field:
    """Inverse of :func:`write_field_csv`; the grid is rebuilt from the coordinates."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = data.shape[1] - 1
    axes = [np.unique(data[:, k]) for k in range(n)]
    grid = Grid([a[0] for a in axes], [a[-1] for a in axes], [len(a) for a in axes])
    if grid.size != len(data):
        raise ValueError("CSV rows do not form a full tensor grid")
    return Field(grid, data[:, -1])
