"""Smooth-fit shooting for rotationally symmetric problems.

With ``u(x) = phi(|x|)`` the eigenvalue problem reduces to the ODE
``lam + G(phi'/r, ..., phi'/r, phi'') = f0(r)`` on ``[0, r0]``, with the
free boundary ``r0`` fixed by ``phi'(r0) = a`` and ``phi''(r0) = 0``.
The eigenvalue is the ``lam`` at which the first zero of ``phi''`` meets
the slope ``a``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

__all__ = [
    "NotRotationalError",
    "RadialProblem",
    "RadialSolution",
    "shoot",
    "smooth_fit_solve",
    "separable_compose",
    "closed_form_laplacian",
    "write_phi_csv",
]


class NotRotationalError(ValueError):
    """The operator or data lack the orthogonal invariance the reduction needs."""


@dataclass(frozen=True)
class RadialProblem:
    """Radial data: ``G(mu) = min_k -c_k sum(mu)``, profile ``f0`` and constraint radius ``a``.

    Every rotational operator among the supported variants is a function
    of the trace only, so ``G`` is stored through the scalars ``c_k``.
    """

    n: int
    coeffs: tuple
    f0: object
    a: float
    f0_at_zero: float

    @classmethod
    def laplacian(cls, n, f0=lambda r: r * r, a=1.0, scale=1.0):
        return cls(n, (float(scale),), f0, float(a), float(f0(0.0)))

    @classmethod
    def from_spec(cls, spec):
        F, H, f = spec.F, spec.H, spec.f
        if F.kind == "zero" or F.theta == 0:
            raise NotRotationalError("G must be strictly monotone in its last argument (theta > 0)")
        if not F.rotational:
            raise NotRotationalError("operator is not orthogonally invariant; refusing the radial reduction")
        if H.form != "ball":
            raise NotRotationalError("constraint set must be a ball")
        if not f.radial:
            raise NotRotationalError("cost must be radial")
        if f.kind == "quadratic":
            s, off = float(f.params["scale"]), float(f.params["offset"])

            def f0(r, s=s, off=off):
                return s * r * r + off
        elif f.kind == "quadform":
            q = float(f.params["Q"][0, 0])

            def f0(r, q=q):
                return q * r * r
        else:
            e = np.zeros(spec.n)
            e[0] = 1.0

            def f0(r, f=f, e=e):
                return float(f(r * e))

        return cls(spec.n, tuple(float(A[0, 0]) for A in F.matrices), f0, float(H.params["radius"]),
                   f0(0.0))

    @classmethod
    def separable_base(cls, spec):
        """One-dimensional factor of a separable problem (box constraint, ``A = cI``, centred quadratic)."""
        F, H, f = spec.F, spec.H, spec.f
        if F.kind != "linear" or not F.rotational:
            raise NotRotationalError("separable composition needs F = -c Laplacian")
        if H.form != "box":
            raise NotRotationalError("separable composition needs a box constraint")
        if f.kind != "quadratic" or np.any(f.params["center"]) or f.params["offset"] != 0:
            raise NotRotationalError("separable composition needs f = s |x|^2")
        s = f.params["scale"]
        return cls(1, (float(F.matrices[0][0, 0]),), lambda r, s=s: s * r * r,
                   float(H.params["half_width"]), 0.0)

    def G(self, mu):
        s = float(np.sum(mu))
        return min(-c * s for c in self.coeffs)

    def trace_for(self, target):
        """The trace ``S`` with ``min_k -c_k S = target`` (``G`` is decreasing in ``S``)."""
        return -target / max(self.coeffs) if target <= 0 else -target / min(self.coeffs)

    def K1(self):
        return -self.G(np.ones(self.n)) + self.f0(self.a)

    def radius_scale(self):
        """Crossing radius of ``f0(R) = K1 + a R`` (bounds the free boundary)."""
        K1 = self.K1()
        hi = 1.0
        while self.f0(hi) <= K1 + self.a * hi:
            hi *= 2.0
            if hi > 2.0**20:
                raise ValueError("f0 is not superlinear enough")
        return optimize.brentq(lambda R: self.f0(R) - K1 - self.a * R, 0.0, hi)


@dataclass
class RadialSolution:
    lam: float
    r0: float
    r: np.ndarray
    dphi: np.ndarray
    phi: np.ndarray
    a: float
    n: int
    defect: float
    evaluations: int = 0

    def profile(self, rho):
        """``phi(rho)`` with ``phi(0) = 0``, continued linearly with slope ``a`` past ``r0``."""
        rho = np.abs(np.asarray(rho, float))
        inside = np.interp(np.minimum(rho, self.r0), self.r, self.phi)
        return inside + self.a * np.maximum(rho - self.r0, 0.0)

    def field_values(self, X):
        return self.profile(np.linalg.norm(np.asarray(X, float), axis=-1))


def _rk4_path(prob: RadialProblem, lam, dr, r_cap, record=False):
    """Integrate ``(phi, phi')`` from the series start; stop at the first ``phi'' <= 0``."""
    n = prob.n
    f0 = prob.f0
    trace_for = prob.trace_for
    nm1 = n - 1

    def acc(r, p):
        return trace_for(f0(r) - lam) - nm1 * p / r

    c = trace_for(prob.f0_at_zero - lam) / n
    if c <= 0:
        return 0.0, 0.0, 0.0, ([0.0], [0.0], [0.0]) if record else None
    r = dr
    p = c * dr
    y = 0.5 * c * dr * dr
    rs, ps, ys = ([0.0, r], [0.0, p], [0.0, y]) if record else (None, None, None)

    def step(r, y, p, t):
        k1y, k1p = p, acc(r, p)
        k2y, k2p = p + 0.5 * t * k1p, acc(r + 0.5 * t, p + 0.5 * t * k1p)
        k3y, k3p = p + 0.5 * t * k2p, acc(r + 0.5 * t, p + 0.5 * t * k2p)
        k4y, k4p = p + t * k3p, acc(r + t, p + t * k3p)
        return (y + t * (k1y + 2 * k2y + 2 * k3y + k4y) / 6,
                p + t * (k1p + 2 * k2p + 2 * k3p + k4p) / 6)

    while r < r_cap:
        y1, p1 = step(r, y, p, dr)
        if acc(r + dr, p1) <= 0:
            lo, hi = 0.0, dr
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                _, pm = step(r, y, p, mid)
                if acc(r + mid, pm) > 0:
                    lo = mid
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
            y, p = step(r, y, p, t)
            r = r + t
            if record:
                rs.append(r)
                ps.append(p)
                ys.append(y)
            return r, p, y, (rs, ps, ys) if record else None
        r, y, p = r + dr, y1, p1
        if record:
            rs.append(r)
            ps.append(p)
            ys.append(y)
    raise RuntimeError(f"phi'' stayed positive up to r = {r_cap:g} (lam = {lam:g})")


def shoot(prob: RadialProblem, lam: float, steps: int = 100_000):
    """``(r_hit, phi'(r_hit) - a)`` for the outward integration at eigenvalue guess ``lam``."""
    scale = prob.radius_scale()
    r_hit, p, _, _ = _rk4_path(prob, lam, scale / steps, 10 * scale)
    return r_hit, p - prob.a


def smooth_fit_solve(prob: RadialProblem, lam_hi=None, steps: int = 100_000, tol=1e-10) -> RadialSolution:
    """Root of the slope defect in ``lam`` over ``[f0(0) + 1e-9, lam_hi + 1]``.

    ``lam_hi`` defaults to the a-priori upper bound ``K1``.
    """
    scale = prob.radius_scale()
    dr = scale / steps
    r_cap = 10 * scale
    lo = prob.f0_at_zero + 1e-9
    hi = (prob.K1() if lam_hi is None else lam_hi) + 1.0
    count = [0]

    def defect(lam):
        count[0] += 1
        return _rk4_path(prob, lam, dr, r_cap)[1] - prob.a

    dlo, dhi = defect(lo), defect(hi)
    if not (dlo < 0 < dhi):
        raise ValueError(f"slope defect has no sign change on [{lo:g}, {hi:g}]: ({dlo:g}, {dhi:g})")
    lam = optimize.brentq(defect, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    r0, p, y, (rs, ps, ys) = _rk4_path(prob, lam, dr, r_cap, record=True)
    d = p - prob.a
    if abs(d) > tol:
        raise RuntimeError(f"smooth fit defect {d:.3e} exceeds {tol:g}")
    return RadialSolution(lam=float(lam), r0=float(r0), r=np.array(rs), dphi=np.array(ps), phi=np.array(ys),
                          a=prob.a, n=prob.n, defect=float(d), evaluations=count[0] + 1)


def closed_form_laplacian(n, a=1.0):
    """Smooth-fit eigenvalue and radius for ``F = -Laplacian``, ``f = |x|^2``, ball radius ``a``.

    ``phi' = lam r/n - r^3/(n+2)``; ``phi'' = 0`` gives ``r0^2 = (n+2) lam / (3 n)``
    and ``phi'(r0) = a`` then fixes ``lam``.
    """
    lam = (a * 1.5 * n * math.sqrt(3 * n / (n + 2))) ** (2.0 / 3.0)
    r0 = math.sqrt((n + 2) * lam / (3 * n))
    return lam, r0


def separable_compose(base: RadialSolution, n: int):
    """``(n lam_1, x -> sum_i u_1(x_i))`` from a one-dimensional solution."""
    if base.n != 1:
        raise ValueError("separable composition needs a one-dimensional base solution")

    def u(X):
        X = np.asarray(X, float)
        return np.sum(base.profile(X), axis=-1)

    return n * base.lam, u


def write_phi_csv(sol: RadialSolution, path, stride=1):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "dphi"])
        for r, p in zip(sol.r[::stride], sol.dphi[::stride]):
            w.writerow([repr(float(r)), repr(float(p))])
