"""Eigenvalue brackets, test-function bounds and structural checks on computed pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .eigen import EigenPair, estimate_contact_radius, extend_field
from .geometry import inf_convolve
from .grid import Field, Grid, apply_operator, upwind_gradient

__all__ = [
    "AdmissibilityError",
    "CertificateBounds",
    "CheckReport",
    "admissibility_tol",
    "apriori_bracket",
    "lambda_minus",
    "lambda_plus",
    "mollify",
    "clip_to_admissible",
    "structural_checks",
    "certify",
]

TOL_CERT = 1e-3


class AdmissibilityError(ValueError):
    """A test function violates the gradient constraint (or has no strictly admissible region)."""


def admissibility_tol(grid: Grid, eps_min: float, c1: float) -> float:
    """``max(2 eps_min, 5 h c1)``: gradient error ``O(h)`` times the constraint scale."""
    return max(2.0 * eps_min, 5.0 * grid.hmax * c1)


def _ball_sample(n, R, per_axis):
    axes = [np.linspace(-R, R, per_axis)] * n
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return X[np.linalg.norm(X, axis=1) <= R * (1 + 1e-12)]


def apriori_bracket(spec, R=None):
    """``(min f over ball(R_contact), -F(I) + max f over {H <= 0})`` from dense samples."""
    if R is None:
        R = estimate_contact_radius(spec)
    per_axis = {1: 20001, 2: 801, 3: 121}.get(spec.n, 21)
    X = _ball_sample(spec.n, R, per_axis)
    if spec.f.argmin is not None and np.linalg.norm(spec.f.argmin) <= R:
        X = np.vstack([X, spec.f.argmin[None, :]])
    lo = float(np.min(spec.f(X)))
    return lo, spec.K1()


def _interior_points(grid):
    return grid.points()[grid.interior].reshape(-1, grid.n)


def lambda_minus(spec, phi: Field, tol_c=None) -> float:
    """``inf`` over interior nodes of ``-F(D^2 phi) + f`` for an admissible test function.

    Raises
    ------
    AdmissibilityError
        If ``H0(D phi) > tol_c`` at some interior node (the worst node is named).
    """
    grid = phi.grid
    if tol_c is None:
        tol_c = admissibility_tol(grid, max(1e-4, grid.hmax / 10), spec.ell.c1)
    _, h0, _ = upwind_gradient(phi.values, grid, spec.ell)
    if h0.size and h0.max() > tol_c:
        j = int(np.argmax(h0))
        node = tuple(int(i) + 1 for i in np.unravel_index(j, tuple(k - 2 for k in grid.shape)))
        raise AdmissibilityError(f"test function violates H0(Dphi) <= {tol_c:.3g} at node {node} "
                                 f"(H0 = {h0[j]:.4g})")
    Fphi = apply_operator(spec, phi).values[grid.interior].reshape(-1)
    return float(np.min(-Fphi + spec.f(_interior_points(grid))))


def mollify(u: Field, width: float) -> Field:
    """Lattice convolution with the bump ``(1 - r^2/w^2)^3`` of radius ``w``.

    Weights are renormalized to unit mass over the nodes that fall inside
    the grid, so constants are reproduced exactly.
    """
    grid = u.grid
    if width <= 0:
        raise ValueError("width must be positive")
    half = [int(np.floor(width / h + 1e-12)) for h in grid.h]
    axes = [np.arange(-k, k + 1) * h for k, h in zip(half, grid.h)]
    R2 = sum(np.meshgrid(*[a**2 for a in axes], indexing="ij"))
    kernel = np.where(R2 < width**2, (1 - R2 / width**2) ** 3, 0.0)
    num = ndimage.correlate(u.values, kernel, mode="constant", cval=0.0)
    den = ndimage.correlate(np.ones(grid.shape), kernel, mode="constant", cval=0.0)
    return Field(grid, num / den)


def clip_to_admissible(u: Field, ell) -> Field:
    """Largest ``ell``-Lipschitz field below ``u`` (discrete inf-convolution)."""
    return inf_convolve(u, ell)


def lambda_plus(spec, pair: EigenPair, tau: float, width: float, tol_c=None) -> float:
    """``sup{-F(D^2 psi) + f}`` over nodes with ``H0(D psi) < -tol_c``, ``psi = tau * mollify(u*)``.

    Raises
    ------
    AdmissibilityError
        When no node is strictly admissible.
    """
    grid = pair.u_star.grid
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    if width < 2 * grid.hmax * (1 - 1e-12):
        raise ValueError("width must be at least 2h")
    if tol_c is None:
        tol_c = admissibility_tol(grid, max(1e-4, grid.hmax / 10), spec.ell.c1)
    psi = Field(grid, tau * mollify(pair.u_star, width).values)
    _, h0, _ = upwind_gradient(psi.values, grid, spec.ell)
    keep = h0 < -tol_c
    if not keep.any():
        raise AdmissibilityError("no strictly admissible node for the scaled mollified field; "
                                 "lower tau or widen the kernel")
    Fpsi = apply_operator(spec, psi).values[grid.interior].reshape(-1)
    vals = -Fpsi + spec.f(_interior_points(grid))
    return float(np.max(vals[keep]))


@dataclass
class CertificateBounds:
    lambda_minus: float
    lambda_plus: float
    tau: float
    mollify_width: float
    apriori: tuple
    tol_cert: float = TOL_CERT

    def __post_init__(self):
        if self.apriori[0] > self.apriori[1]:
            raise ValueError("a-priori bracket is inverted")

    @property
    def consistent(self):
        return self.lambda_minus <= self.lambda_plus + self.tol_cert

    def as_dict(self):
        return {"lambda_minus": self.lambda_minus, "lambda_plus": self.lambda_plus, "tau": self.tau,
                "mollify_width": self.mollify_width, "apriori": list(self.apriori),
                "tol_cert": self.tol_cert, "consistent": self.consistent}


def certify(spec, pair: EigenPair, tau=1.01, width=None, tol_c=None) -> CertificateBounds:
    """Both test-function bounds plus the a-priori bracket."""
    grid = pair.u_star.grid
    width = 4 * grid.hmax if width is None else width
    phi = clip_to_admissible(pair.u_star, spec.ell)
    return CertificateBounds(
        lambda_minus=lambda_minus(spec, phi, tol_c),
        lambda_plus=lambda_plus(spec, pair, tau, width, tol_c),
        tau=tau, mollify_width=width, apriori=apriori_bracket(spec),
    )


# ---------------------------------------------------------------------------
# structural checks


@dataclass
class CheckReport:
    """Findings on a computed pair; ``values`` holds statistics, ``passed`` the verdicts."""

    values: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())

    def as_dict(self):
        wit = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.witnesses.items()}
        return {"ok": self.ok, "values": self.values, "passed": self.passed, "witnesses": wit}


def _second_differences(v, mask):
    """Minimum second difference along axes and face diagonals over nodes in ``mask``."""
    n = v.ndim
    dirs = [np.eye(n, dtype=int)[k] for k in range(n)]
    for k in range(n):
        for l in range(k + 1, n):
            for s in (1, -1):
                e = np.zeros(n, int)
                e[k], e[l] = 1, s
                dirs.append(e)
    best, where = np.inf, None
    for e in dirs:
        c = tuple(slice(1, s - 1) for s in v.shape)
        p = tuple(slice(1 + o, s - 1 + o) for o, s in zip(e, v.shape))
        m = tuple(slice(1 - o, s - 1 - o) for o, s in zip(e, v.shape))
        d2 = v[p] - 2 * v[c] + v[m]
        d2 = np.where(mask[c], d2, np.inf)
        j = np.argmin(d2)
        if d2.flat[j] < best:
            best = float(d2.flat[j])
            where = tuple(int(i) + 1 for i in np.unravel_index(j, d2.shape))
    return best, where


def _lipschitz_violation(u: Field, ell, mask, samples=20000, seed=0):
    grid = u.grid
    X = grid.points().reshape(-1, grid.n)
    v = u.values.reshape(-1)
    idx = np.flatnonzero(mask.reshape(-1))
    rng = np.random.default_rng(seed)
    a = rng.choice(idx, size=samples)
    b = rng.choice(idx, size=samples)
    worst = v[a] - v[b] - ell.support(X[a] - X[b])
    # all lattice neighbour pairs, where FD violations concentrate
    vals = u.values
    viol = [float(worst.max())]
    wit = [(int(a[np.argmax(worst)]), int(b[np.argmax(worst)]))]
    for k in range(grid.n):
        step = np.zeros(grid.n)
        step[k] = grid.h[k]
        lo = tuple(slice(0, s - 1) if j == k else slice(None) for j, s in enumerate(grid.shape))
        hi = tuple(slice(1, None) if j == k else slice(None) for j, s in enumerate(grid.shape))
        both = mask[lo] & mask[hi]
        for sgn, d in ((1, vals[hi] - vals[lo]), (-1, vals[lo] - vals[hi])):
            viol_k = np.where(both, d - float(ell.support(sgn * step)), -np.inf)
            viol.append(float(viol_k.max()))
            wit.append(("axis", k, sgn))
    j = int(np.argmax(viol))
    return viol[j], wit[j]


def structural_checks(spec, pair: EigenPair, tol_c=None, R_contact=None) -> CheckReport:
    """Lipschitz, convexity, admissibility, contact nesting, extension and growth statistics."""
    u = pair.u_star
    grid = u.grid
    ell = spec.ell
    h = grid.hmax
    core = pair.core
    rep = CheckReport()
    if tol_c is None:
        eps_min = pair.last.eps_final if pair.last is not None else max(1e-4, h / 10)
        tol_c = admissibility_tol(grid, eps_min, ell.c1)
    if R_contact is None:
        R_contact = estimate_contact_radius(spec)
    umax = float(np.max(u.values[core])) if core.any() else 0.0

    lip, lip_w = _lipschitz_violation(u, ell, core)
    rep.values["lipschitz_violation"] = lip
    rep.passed["lipschitz"] = lip <= 10 * h
    rep.witnesses["lipschitz"] = lip_w

    d2min, d2node = _second_differences(u.values, core)
    rep.values["convexity_min_second_difference"] = d2min
    rep.passed["convexity"] = d2min >= -1e-6 * (1 + umax)
    rep.witnesses["convexity"] = d2node

    _, h0, _ = upwind_gradient(u.values, grid, ell)
    core_int = core[grid.interior].reshape(-1)
    bad = core_int & (h0 > tol_c)
    rep.values["admissibility_violations"] = int(bad.sum())
    rep.values["admissibility_tol"] = tol_c
    rep.values["max_core_H0"] = float(h0[core_int].max()) if core_int.any() else 0.0
    rep.passed["admissibility"] = not bad.any()

    X = grid.points()
    om = pair.omega0
    rep.values["contact_fraction"] = float(om[grid.interior].mean())
    radius = float(np.max(np.linalg.norm(X[om], axis=-1))) if om.any() else 0.0
    rep.values["contact_radius_max"] = radius
    rep.values["R_contact"] = R_contact
    rep.passed["contact_nesting"] = radius <= R_contact + 1e-12

    if om.any():
        ext = extend_field(u, om, ell)
        osc = float(np.ptp(u.values[core]))
        disc = float(np.max(np.abs(ext.values - u.values)[core]))
        rep.values["extension_discrepancy"] = disc
        rep.values["extension_relative"] = disc / osc if osc > 0 else 0.0
        rep.passed["extension"] = disc <= 0.05 * osc
    else:
        rep.values["extension_discrepancy"] = None
        rep.passed["extension"] = pair.degenerate

    # growth proxy on the outermost core layer (reported, not asserted)
    idx = np.argwhere(core)
    if idx.size:
        lo_i, hi_i = idx.min(axis=0), idx.max(axis=0)
        shell = np.zeros_like(core)
        for k in range(grid.n):
            for edge in (lo_i[k], hi_i[k]):
                sl = [slice(None)] * grid.n
                sl[k] = edge
                shell[tuple(sl)] = True
        shell &= core
        ellx = ell.support(X[shell])
        ratio = u.values[shell] / np.where(ellx > 0, ellx, np.inf)
        rep.values["growth_proxy"] = float(np.max(np.abs(ratio - 1)))
    return rep
