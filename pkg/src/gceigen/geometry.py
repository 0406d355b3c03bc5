"""Convex geometry of the gradient constraint.

The constraint ``H(Du) <= 0`` only enters through the convex body
``K = {p : H(p) <= 0}``.  This module evaluates

* the support function ``ell(v) = max{p.v : p in K}``,
* the gauge ``H0(p) = max_{|v|=1} {p.v - ell(v)}`` (same sign as ``H``),
* the Legendre transform ``H*(w) = sup_p {p.w - H(p)}``,
* inf-convolutions ``min_y {g(y) + ell(x - y)}`` of grid functions.

Tagged constraint forms (ball, box, ellipsoid) use closed forms.  Custom
constraints are handled by ray bisection over a fixed direction mesh followed
by golden-section refinement.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize
from scipy.interpolate import CubicSpline

__all__ = [
    "TOL_GEO",
    "UnsupportedOperation",
    "ConstraintH",
    "SupportFunction",
    "support_eval",
    "gauge_eval",
    "legendre_eval",
    "support_via_legendre",
    "inf_convolve",
    "direction_mesh",
    "project_onto_set",
    "half_square_envelope",
]

TOL_GEO = 1e-8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_BISECT_ITERS = 64
_GOLDEN_ITERS = 48
_CHUNK = 4_000_000


class UnsupportedOperation(ValueError):
    """Raised when an operation needs structure the constraint does not declare."""


# ---------------------------------------------------------------------------
# direction meshes


def _icosphere_centroids(levels: int) -> np.ndarray:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(levels):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                mid = verts[i] + verts[j]
                verts.append(mid / np.linalg.norm(mid))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    V = np.array(verts)
    F = np.array(faces)
    cent = V[F].mean(axis=1)
    return cent / np.linalg.norm(cent, axis=1, keepdims=True)


def direction_mesh(n: int, size: int | None = None) -> np.ndarray:
    """Deterministic unit-direction mesh, shape ``(k, n)``.

    n = 1 gives ``[-1, +1]``; n = 2 gives ``size`` (default 4096) equally
    spaced angles starting at 0; n = 3 gives the 20480 face centroids of a
    five-times subdivided icosahedron (fewer levels when ``size`` is small).
    """
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        k = 4096 if size is None else int(size)
        th = 2.0 * np.pi * np.arange(k) / k
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        levels = 5
        if size is not None:
            levels = max(0, min(5, int(round(math.log(max(size, 20) / 20.0, 4)))))
        return _icosphere_centroids(levels)
    raise UnsupportedOperation(f"direction meshes are implemented for n <= 3, got n={n}")


def _golden_max(func, a, b, iters=_GOLDEN_ITERS):
    """Vectorised golden-section maximisation of ``func`` on ``[a, b]``."""
    a = np.array(a, float)
    b = np.array(b, float)
    for _ in range(iters):
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        left = func(c) >= func(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    x = 0.5 * (a + b)
    return x, func(x)


# ---------------------------------------------------------------------------
# the constraint


class ConstraintH:
    """Gradient-constraint function ``H`` together with its declared form.

    Parameters
    ----------
    func : callable
        Vectorised map from an array of shape ``(..., n)`` to ``(...)``.
    n : int
        Dimension.
    form : {"ball", "box", "ellipsoid", "custom"}
        Tag selecting the closed-form evaluators in :class:`SupportFunction`.
    params : dict, optional
        Parameters of the tagged form (``radius``, ``half_width`` or ``A``).
    sigma, Sigma : float, optional
        Declared curvature bounds ``sigma |xi|^2 <= D^2H xi.xi <= Sigma |xi|^2``.
    """

    FORMS = ("ball", "box", "ellipsoid", "custom")

    def __init__(self, func, n, form="custom", params=None, sigma=None, Sigma=None):
        if form not in self.FORMS:
            raise ValueError(f"unknown constraint form {form!r}")
        self.func = func
        self.n = int(n)
        self.form = form
        self.params = dict(params or {})
        self.sigma = sigma
        self.Sigma = Sigma
        h0 = float(self(np.zeros(self.n)))
        if not h0 < 0:
            raise ValueError(f"constraint must satisfy H(0) < 0, got H(0) = {h0}")

    @classmethod
    def ball(cls, n, radius=1.0):
        r = float(radius)
        return cls(lambda p: np.linalg.norm(p, axis=-1) - r, n, "ball", {"radius": r})

    @classmethod
    def box(cls, n, half_width=1.0):
        a = float(half_width)
        return cls(lambda p: np.max(np.abs(p), axis=-1) - a, n, "box", {"half_width": a})

    @classmethod
    def ellipsoid(cls, A):
        """``H(p) = p.Ap - 1`` for a symmetric positive-definite ``A``."""
        A = np.atleast_2d(np.asarray(A, float))
        if not np.allclose(A, A.T):
            raise ValueError("ellipsoid matrix must be symmetric")
        w = np.linalg.eigvalsh(A)
        if w.min() <= 0:
            raise ValueError("ellipsoid matrix must be positive definite")

        def func(p):
            p = np.asarray(p, float)
            return np.einsum("...i,ij,...j->...", p, A, p) - 1.0

        return cls(func, A.shape[0], "ellipsoid", {"A": A}, sigma=2 * w.min(), Sigma=2 * w.max())

    @classmethod
    def custom(cls, func, n, sigma=None, Sigma=None):
        return cls(func, n, "custom", sigma=sigma, Sigma=Sigma)

    def __call__(self, p):
        return np.asarray(self.func(np.asarray(p, float)), float)

    def probe_radius(self, direction, cap=2.0**20):
        """Doubling search for ``t`` with ``H(t d) > 0``; ``inf`` if the cap is hit."""
        d = np.asarray(direction, float)
        t = 1.0
        while t <= cap:
            if self(t * d) > 0:
                return t
            t *= 2.0
        return math.inf

    def bounded_witness(self, cap=2.0**20):
        """Return ``None`` if every axis ray leaves ``{H <= 0}``, else the failing direction."""
        for k in range(self.n):
            for s in (1.0, -1.0):
                e = np.zeros(self.n)
                e[k] = s
                if not math.isfinite(self.probe_radius(e, cap)):
                    return e
        return None

    def describe(self):
        out = {"form": self.form, "n": self.n}
        for key, val in self.params.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


# ---------------------------------------------------------------------------
# support function and gauge


class SupportFunction:
    """Support function ``ell`` of ``{H <= 0}`` with gauge and sandwich constants.

    The direction cache (boundary scale ``t*(d)`` on the direction mesh) is
    filled at construction and never modified afterwards.
    """

    def __init__(self, H: ConstraintH, mesh_size: int | None = None):
        self.H = H
        self.n = H.n
        self.form = H.form
        self.dirs = direction_mesh(self.n, mesh_size)
        if self.form == "custom":
            witness = H.bounded_witness()
            if witness is not None:
                raise ValueError(f"sublevel set of H is unbounded along {witness.tolist()}")
            self.scales = self._ray_scale(self.dirs)
            self._t_hi = 1.5 * float(self.scales.max())
            self._boundary = self.scales[:, None] * self.dirs
            if self.n == 3:
                ell_mesh = np.concatenate([
                    np.max(self.dirs[s:s + 512] @ self._boundary.T, axis=1)
                    for s in range(0, len(self.dirs), 512)
                ])
            else:
                ell_mesh = self._support_custom(self.dirs)
            if self.n == 2:
                th = np.arctan2(self.dirs[:, 1], self.dirs[:, 0]) % (2 * np.pi)
                order = np.argsort(th)
                th = np.append(th[order], th[order][0] + 2 * np.pi)
                vals = np.append(ell_mesh[order], ell_mesh[order][0])
                self._ell_spline = CubicSpline(th, vals, bc_type="periodic")
        else:
            self.scales = self._closed_scale(self.dirs)
            self._boundary = self.scales[:, None] * self.dirs
            ell_mesh = self.support(self.dirs)
        self.ell_mesh = ell_mesh
        self.c0, self.c1 = self._constants(ell_mesh)

    # -- closed forms -----------------------------------------------------

    def _closed_scale(self, d):
        p = self.H.params
        if self.form == "ball":
            return np.full(len(d), p["radius"])
        if self.form == "box":
            return p["half_width"] / np.max(np.abs(d), axis=1)
        A = p["A"]
        return 1.0 / np.sqrt(np.einsum("ki,ij,kj->k", d, A, d))

    def _constants(self, ell_mesh):
        p = self.H.params
        if self.form == "ball":
            return p["radius"], p["radius"]
        if self.form == "box":
            return p["half_width"], p["half_width"] * math.sqrt(self.n)
        if self.form == "ellipsoid":
            w = np.linalg.eigvalsh(p["A"])
            return 1.0 / math.sqrt(w.max()), 1.0 / math.sqrt(w.min())
        return float(ell_mesh.min()), float(ell_mesh.max())

    # -- custom constraint machinery --------------------------------------

    def _ray_scale(self, d, t_hi=None):
        """Boundary scale ``t*(d)`` with ``H(t* d) = 0`` by vectorised bisection."""
        d = np.atleast_2d(d)
        lo = np.zeros(len(d))
        if t_hi is None:
            hi = np.ones(len(d))
            for _ in range(60):
                out = self.H(hi[:, None] * d) > 0
                if out.all():
                    break
                hi = np.where(out, hi, 2 * hi)
        else:
            hi = np.full(len(d), t_hi)
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            inside = self.H(mid[:, None] * d) <= 0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return 0.5 * (lo + hi)

    def _boundary_point(self, d):
        return self._ray_scale(d, self._t_hi)[:, None] * d

    def _sphere_refine(self, objective, d0, step):
        """Maximise ``objective(d)`` over unit ``d`` near the rows of ``d0``."""
        n = self.n
        if n == 2:
            th0 = np.arctan2(d0[:, 1], d0[:, 0])

            def f(th):
                return objective(np.stack([np.cos(th), np.sin(th)], axis=1))

            th, val = _golden_max(f, th0 - step, th0 + step)
            return np.stack([np.cos(th), np.sin(th)], axis=1), val
        # n == 3: alternate golden searches along two tangent directions
        d = d0.copy()
        helper = np.where(np.abs(d[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
        e1 = np.cross(d, helper)
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(d, e1)
        val = objective(d)
        s = step
        for _ in range(4):
            for e in (e1, e2):
                base = d

                def f(t, base=base, e=e):
                    q = base + t[:, None] * e
                    return objective(q / np.linalg.norm(q, axis=1, keepdims=True))

                t, val = _golden_max(f, -s * np.ones(len(d)), s * np.ones(len(d)), iters=40)
                d = base + t[:, None] * e
                d /= np.linalg.norm(d, axis=1, keepdims=True)
            s *= 0.5
        return d, val

    def _mesh_step(self):
        if self.n == 2:
            return 2 * np.pi / len(self.dirs)
        return 2.0 * math.sqrt(4 * np.pi / len(self.dirs))

    def _support_custom(self, v):
        v = np.atleast_2d(v)
        if self.n == 1:
            tp = float(self.scales[self.dirs[:, 0] > 0][0])
            tm = float(self.scales[self.dirs[:, 0] < 0][0])
            return np.maximum(tp * v[:, 0], -tm * v[:, 0])
        out = np.empty(len(v))
        for s in range(0, len(v), 256):
            vv = v[s:s + 256]
            j = np.argmax(vv @ self._boundary.T, axis=1)

            def obj(d, vv=vv):
                return np.einsum("ki,ki->k", self._boundary_point(d), vv)

            _, val = self._sphere_refine(obj, self.dirs[j], self._mesh_step())
            out[s:s + 256] = np.maximum(val, np.einsum("ki,ki->k", self._boundary[j], vv))
        return out

    def _ell_dirs(self, d):
        """``ell`` on unit directions; uses the periodic spline for custom n = 2."""
        if self.form != "custom":
            return self.support(d)
        if self.n == 2:
            th = np.arctan2(d[:, 1], d[:, 0]) % (2 * np.pi)
            return self._ell_spline(th)
        # n = 3: mesh maximum, accurate to O(mesh spacing^2)
        return np.max(d @ self._boundary.T, axis=1)

    # -- public evaluators ------------------------------------------------

    def support(self, v):
        """``ell(v)`` for ``v`` of shape ``(..., n)``; exactly 0 at ``v = 0``."""
        v = np.asarray(v, float)
        shape = v.shape[:-1]
        flat = v.reshape(-1, self.n)
        p = self.H.params
        if self.form == "ball":
            out = p["radius"] * np.linalg.norm(flat, axis=1)
        elif self.form == "box":
            out = p["half_width"] * np.abs(flat).sum(axis=1)
        elif self.form == "ellipsoid":
            Ainv = np.linalg.inv(p["A"])
            out = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", flat, Ainv, flat), 0.0))
        else:
            out = np.zeros(len(flat))
            nz = np.any(flat != 0, axis=1)
            if nz.any():
                out[nz] = self._support_custom(flat[nz])
        return out.reshape(shape)

    __call__ = support

    def gauge(self, p, grad=False):
        """Gauge ``H0(p)``; with ``grad=True`` also the maximising unit direction.

        The maximiser is a valid (sub)gradient of the convex function ``H0``.
        """
        p = np.asarray(p, float)
        shape = p.shape[:-1]
        flat = p.reshape(-1, self.n)
        val, g = self._gauge_flat(flat)
        val = val.reshape(shape)
        if grad:
            return val, g.reshape(shape + (self.n,))
        return val

    def _gauge_flat(self, p):
        n = self.n
        prm = self.H.params
        if self.form == "ball":
            r = np.linalg.norm(p, axis=1)
            g = np.zeros_like(p)
            g[:, 0] = 1.0
            nz = r > 0
            g[nz] = p[nz] / r[nz, None]
            return r - prm["radius"], g
        if self.form == "box":
            a = prm["half_width"]
            c = np.abs(p) - a
            sgn = np.where(p < 0, -1.0, 1.0)
            cpos = np.maximum(c, 0.0)
            norm = np.linalg.norm(cpos, axis=1)
            pos = norm > 0
            k = np.argmax(c, axis=1)
            val = np.where(pos, norm, c[np.arange(len(p)), k])
            g = np.zeros_like(p)
            g[np.arange(len(p)), k] = sgn[np.arange(len(p)), k]
            g[pos] = sgn[pos] * cpos[pos] / norm[pos, None]
            return val, g
        if n == 1:
            lp = float(self._ell_dirs(np.array([[1.0]]))[0])
            lm = float(self._ell_dirs(np.array([[-1.0]]))[0])
            a, b = p[:, 0] - lp, -p[:, 0] - lm
            return np.maximum(a, b), np.where(a >= b, 1.0, -1.0)[:, None]
        if n == 2 and self.form == "ellipsoid":
            return self._gauge_ellipse2d(p)
        # generic: coarse mesh then local refinement on the sphere
        coarse = self.dirs if n == 3 else direction_mesh(2, 256 if self.form == "ellipsoid" else 4096)
        ell_c = self._ell_dirs(coarse)
        val = np.empty(len(p))
        g = np.empty_like(p)
        rows = max(1, _CHUNK // len(coarse))
        step = 2 * np.pi / len(coarse) if n == 2 else 2.0 * math.sqrt(4 * np.pi / len(coarse))
        for s in range(0, len(p), rows):
            pp = p[s:s + rows]
            scores = pp @ coarse.T - ell_c
            j = np.argmax(scores, axis=1)

            def obj(d, pp=pp):
                return np.einsum("ki,ki->k", pp, d) - self._ell_dirs(d)

            d, v = self._sphere_refine(obj, coarse[j], step)
            best = scores[np.arange(len(pp)), j]
            keep = best > v
            d[keep] = coarse[j[keep]]
            val[s:s + rows] = np.maximum(v, best)
            g[s:s + rows] = d
        return val, g

    def _gauge_ellipse2d(self, p, iters=8):
        """Planar ellipse: Newton on the angle from the best of 256 directions."""
        B = np.linalg.inv(self.H.params["A"])
        coarse = direction_mesh(2, 256)
        ell_c = self.support(coarse)
        val = np.empty(len(p))
        g = np.empty_like(p)
        rows = max(1, _CHUNK // len(coarse))
        for s in range(0, len(p), rows):
            pp = p[s:s + rows]
            scores = pp @ coarse.T - ell_c
            j = np.argmax(scores, axis=1)
            best = scores[np.arange(len(pp)), j]
            th = np.arctan2(coarse[j, 1], coarse[j, 0])
            for _ in range(iters):
                v = np.stack([np.cos(th), np.sin(th)], axis=1)
                w = np.stack([-np.sin(th), np.cos(th)], axis=1)
                Bv, Bw = v @ B, w @ B
                ell = np.sqrt(np.einsum("ki,ki->k", v, Bv))
                wBv = np.einsum("ki,ki->k", w, Bv)
                d1 = np.einsum("ki,ki->k", pp, w) - wBv / ell
                d2 = (-np.einsum("ki,ki->k", pp, v)
                      - ((np.einsum("ki,ki->k", w, Bw) - ell**2) * ell - wBv**2 / ell) / ell**2)
                step = np.where(d2 < 0, -d1 / np.where(d2 < 0, d2, -1.0), 0.0)
                th = th + np.clip(step, -np.pi / 128, np.pi / 128)
            v = np.stack([np.cos(th), np.sin(th)], axis=1)
            refined = np.einsum("ki,ki->k", pp, v) - self.support(v)
            keep = best > refined
            v[keep] = coarse[j[keep]]
            val[s:s + rows] = np.maximum(refined, best)
            g[s:s + rows] = v
        return val, g

    @property
    def axis_symmetric(self):
        """True when ``H0`` is even in every coordinate separately.

        A convex function even in ``p_i`` is nondecreasing in ``|p_i|``, which
        lets upwind selection pick the larger one-sided magnitude per axis.
        """
        if self.form in ("ball", "box"):
            return True
        if self.form == "ellipsoid":
            A = self.H.params["A"]
            return not np.any(A - np.diag(np.diag(A)))
        return False

    def boundary_points(self):
        """Points of ``{H = 0}`` along the direction mesh (the cached samples)."""
        return self._boundary.copy()

    def describe(self):
        return {"form": self.form, "c0": self.c0, "c1": self.c1, "mesh_size": len(self.dirs)}


def support_eval(ell: SupportFunction, v):
    return ell.support(v)


def gauge_eval(ell: SupportFunction, p):
    return ell.gauge(p)


# ---------------------------------------------------------------------------
# Legendre transform


def legendre_eval(h: ConstraintH, w):
    """``H*(w) = sup_p {p.w - H(p)}`` by concave maximisation.

    Only defined for constraints that declare uniform convexity (``sigma > 0``).
    """
    if not h.sigma or h.sigma <= 0:
        raise UnsupportedOperation("Legendre transform requires a uniformly convex H (declare sigma > 0)")
    w = np.asarray(w, float).reshape(h.n)
    if h.form == "ellipsoid":
        Ainv = np.linalg.inv(h.params["A"])
        return float(w @ Ainv @ w / 4.0 + 1.0)

    def neg(p):
        return -(p @ w - float(h(p)))

    res = optimize.minimize(neg, np.zeros(h.n), method="BFGS", options={"gtol": 1e-12})
    if not res.success:
        res = optimize.minimize(neg, res.x, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
    return float(-res.fun)


def support_via_legendre(h: ConstraintH, v, lam_max=10.0):
    """``inf_{0 < s <= lam_max} s H*(v / s)``, a second route to ``ell(v)``."""
    v = np.asarray(v, float).reshape(h.n)
    if not np.any(v):
        return 0.0
    res = optimize.minimize_scalar(lambda s: s * legendre_eval(h, v / s),
                                   bounds=(1e-9, lam_max), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.fun)


# ---------------------------------------------------------------------------
# inf-convolution on grids


def inf_convolve(g, ell: SupportFunction, query=None, scan_limit=200_000):
    """Discrete inf-convolution ``v(x) = min_y {g(y) + ell(x - y)}``.

    Parameters
    ----------
    g : Field
        Values on a full grid; ``y`` ranges over every node.
    ell : SupportFunction
    query : ndarray of bool, optional
        Grid-shaped mask of nodes where ``v`` is wanted; other nodes keep
        ``g``.  Default: every node.
    scan_limit : int
        Node count above which the exact scan is replaced by iterated local
        relaxation with neighbour offsets until a fixpoint.

    Returns
    -------
    Field
    """
    from .grid import Field

    grid = g.grid
    vals = np.asarray(g.values, float)
    if vals.size == 0:
        raise ValueError("empty grid")
    X = grid.points().reshape(-1, grid.n)
    gv = vals.reshape(-1)
    out = gv.copy()
    qidx = np.arange(gv.size) if query is None else np.flatnonzero(np.asarray(query).reshape(-1))
    if gv.size <= scan_limit:
        out[qidx] = _scan_min(X[qidx], X, gv, ell)
    else:
        out = _sweep_relax(vals, grid, ell).reshape(-1)
        if query is not None:
            keep = np.ones(gv.size, bool)
            keep[qidx] = False
            out[keep] = gv[keep]
    return Field(grid, out.reshape(grid.shape))


def _scan_min(Xq, Y, gy, ell):
    out = np.empty(len(Xq))
    rows = max(1, _CHUNK // max(len(Y), 1))
    for s in range(0, len(Xq), rows):
        diff = Xq[s:s + rows, None, :] - Y[None, :, :]
        out[s:s + rows] = np.min(gy[None, :] + ell.support(diff), axis=1)
    return out


def _sweep_relax(vals, grid, ell, radius=2, max_sweeps=10_000):
    v = vals.astype(float).copy()
    n = grid.n
    rng = range(-radius, radius + 1)
    offsets = [o for o in np.array(np.meshgrid(*[rng] * n, indexing="ij")).reshape(n, -1).T if np.any(o)]
    costs = [float(ell.support(o * grid.h)) for o in offsets]
    for _ in range(max_sweeps):
        changed = False
        for o, c in zip(offsets, costs):
            src = tuple(slice(max(0, -k), grid.shape[i] - max(0, k)) for i, k in enumerate(o))
            dst = tuple(slice(max(0, k), grid.shape[i] - max(0, -k)) for i, k in enumerate(o))
            cand = v[src] + c
            better = cand < v[dst]
            if better.any():
                v[dst] = np.where(better, cand, v[dst])
                changed = True
        if not changed:
            return v
    return v


def project_onto_set(H: ConstraintH, x):
    """Euclidean projection onto ``{H <= 0}`` for ball, box and ellipsoid forms.

    Returns ``None`` for custom constraints.
    """
    x = np.asarray(x, float)
    p = H.params
    if H.form == "ball":
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return x * np.minimum(1.0, p["radius"] / np.maximum(r, 1e-300))
    if H.form == "box":
        return np.clip(x, -p["half_width"], p["half_width"])
    if H.form != "ellipsoid":
        return None
    # minimise |y - x|^2 subject to y.Ay <= 1: y = (I + mu A)^{-1} x, bisection on mu
    w, V = np.linalg.eigh(p["A"])
    z = x @ V
    inside = np.einsum("...i,i,...i->...", z, w, z) <= 1.0
    lo = np.zeros(z.shape[:-1])
    hi = np.ones(z.shape[:-1])

    def g(mu):
        y = z / (1.0 + mu[..., None] * w)
        return np.einsum("...i,i,...i->...", y, w, y) - 1.0

    for _ in range(200):
        grow = (g(hi) > 0) & ~inside
        if not grow.any():
            break
        hi = np.where(grow, 2 * hi, hi)
    for _ in range(_BISECT_ITERS * 2):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    mu = np.where(inside, 0.0, hi)
    y = z / (1.0 + mu[..., None] * w)
    return y @ V.T


def half_square_envelope(ell: SupportFunction, x):
    """``min_y {|y|^2/2 + ell(x - y)}`` in closed form when the projection is known.

    By conjugate duality this equals ``|x|^2/2 - dist(x, K)^2/2`` with
    ``K = {H <= 0}``.  Returns ``None`` for custom constraints.
    """
    x = np.asarray(x, float)
    proj = project_onto_set(ell.H, x)
    if proj is None:
        return None
    d2 = np.sum((x - proj) ** 2, axis=-1)
    return 0.5 * np.sum(x**2, axis=-1) - 0.5 * d2
