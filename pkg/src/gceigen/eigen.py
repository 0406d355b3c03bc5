"""Vanishing-discount driver for the eigenvalue problem and related field operations.

The eigenvalue is the limit of ``delta u_delta(x_delta)`` as the discount
``delta`` goes to zero, and the eigenfunction is the limit of the
normalized fields ``u_delta - u_delta(x_delta)``.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import direction_mesh
from .grid import Field, Grid, pde_residual
from .penalty import ContinuationError, DiscountedSolution, SolverParams, solve_discounted

__all__ = [
    "EigenPair",
    "estimate_contact_radius",
    "normalize",
    "boundary_band",
    "core_mask",
    "vanishing_discount",
    "degenerate_eigen",
    "solve_eigen",
    "extend_field",
    "NoConvergenceError",
    "DomainMarginWarning",
]

log = logging.getLogger(__name__)

_CHUNK = 4_000_000


class DomainMarginWarning(UserWarning):
    """The grid box does not contain ``ball(1.2 R_contact)``."""


class NoConvergenceError(RuntimeError):
    """The discount schedule ended without meeting the Cauchy criterion."""

    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


@dataclass
class EigenPair:
    """Approximate eigenvalue and normalized eigenfunction.

    ``core`` marks the nodes away from the layer next to the pinned
    boundary; residuals and structural checks are evaluated there.
    """

    lam_star: float
    u_star: Field
    omega0: np.ndarray
    residual: object
    delta_trace: list
    core: np.ndarray
    band_cells: int
    converged: bool = True
    residual_full: object = None
    last: DiscountedSolution | None = None
    degenerate: bool = False
    x0: np.ndarray | None = None
    steps: list = field(default_factory=list)
    runtime: float = 0.0

    def trace_lambdas(self):
        return [lam for _, lam in self.delta_trace]


# ---------------------------------------------------------------------------
# radius of the region carrying the contact set


def estimate_contact_radius(spec, cap=2.0**10, iters=80) -> float:
    """Radius ``R`` beyond which ``f(R d) > K1 + c1 R`` for every sampled unit ``d``.

    Doubling brackets the crossing, then bisection locates it.  The
    defining gap ``f(R d) - K1 - c1 R`` is convex in ``R`` and negative at 0,
    so past the crossing it stays positive.
    """
    dirs = direction_mesh(spec.n)
    K1 = spec.K1()
    c1 = spec.ell.c1

    def ok(R):
        return bool(np.all(spec.f(R * dirs) > K1 + c1 * R))

    lo, hi = 0.0, 1.0
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > cap:
            raise ValueError(f"contact radius probe exceeded R={cap:g}; f may not be superlinear")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# normalization and the boundary layer


def normalize(sol: DiscountedSolution):
    """``(delta u(x_delta), u - u(x_delta))``."""
    umin = sol.u.values.reshape(-1)[sol.x_index]
    return float(sol.delta * umin), Field(sol.u.grid, sol.u.values - umin)


def boundary_band(u: Field, eps: float, tiny=1e-10) -> int:
    """Width in cells of the layer next to the pinned boundary.

    The penalized equation damps the boundary jump ``J`` by about
    ``1 + h/eps`` per cell, so ``log(J/tiny) / log(1 + h/eps)`` cells bring
    it below ``tiny``.  Capped at a quarter of the nodes per axis.
    """
    grid = u.grid
    v = u.values
    J = 0.0
    for k in range(grid.n):
        a = np.take(v, [0, 1], axis=k)
        b = np.take(v, [-1, -2], axis=k)
        J = max(J, float(np.max(np.abs(np.diff(a, axis=k)))), float(np.max(np.abs(np.diff(b, axis=k)))))
    rate = math.log1p(grid.hmax / eps)
    cells = 1 if J <= tiny else math.ceil(math.log(J / tiny) / rate) + 1
    return int(min(max(cells, 1), min(grid.shape) // 4))


def core_mask(grid: Grid, band: int):
    return grid.interior_mask(width=max(int(band), 1))


# ---------------------------------------------------------------------------
# drivers


def _band_for(sol, params):
    if params.band_cells is not None:
        return int(params.band_cells)
    return boundary_band(sol.u, sol.eps_final)


def vanishing_discount(spec, grid: Grid, params: SolverParams | None = None, strict=False) -> EigenPair:
    """Solve the discounted problem along ``delta_k = delta_start 2^-k`` until Cauchy.

    Each ``delta`` is warm-started from ``v_prev + lam_prev / delta`` directly at
    ``eps_min``; if that Newton solve fails the full ``eps`` continuation runs.
    Stops when ``|Δlam| < tol_lambda`` and ``sup|Δv| < tol_u`` on the core nodes,
    or when ``delta`` would drop below ``delta_min``.

    With ``strict=True`` a schedule that ends without meeting the criterion
    raises :class:`NoConvergenceError` (the pair is attached).
    """
    if spec.F.kind == "zero" or spec.F.theta == 0:
        raise ValueError("theta = 0: use degenerate_eigen")
    params = params or SolverParams()
    t0 = time.perf_counter()
    R = estimate_contact_radius(spec)
    if not grid.contains_ball(R, margin=0.2):
        warnings.warn(f"grid box does not contain the ball of radius 1.2 * R_contact = {1.2 * R:.4g}; "
                      "truncation error may grow", DomainMarginWarning, stacklevel=2)
    eps_min = params.resolved_eps_min(grid)
    delta = params.delta_start
    prev = None
    trace, steps = [], []
    converged = False
    while delta >= params.delta_min * (1 - 1e-12):
        sol = None
        if prev is not None:
            u0 = Field(grid, prev[1].values + prev[0] / delta)
            try:
                sol = solve_discounted(spec, delta, grid, params, warm_start=u0, eps_list=[eps_min])
            except ContinuationError:
                log.info("warm start failed at delta=%.3e; running full continuation", delta)
        if sol is None:
            sol = solve_discounted(spec, delta, grid, params)
        lam, v = normalize(sol)
        band = _band_for(sol, params)
        core = core_mask(grid, band)
        trace.append((delta, lam))
        step = {"delta": delta, "lambda": lam, "newton_iterations": sol.newton_iterations, "band_cells": band}
        if prev is not None:
            dlam = abs(lam - prev[0])
            dv = float(np.max(np.abs(v.values - prev[1].values)[core]))
            step.update(dlam=dlam, dv=dv)
            if dlam < params.tol_lambda and dv < params.tol_u:
                steps.append(step)
                converged = True
                break
        steps.append(step)
        prev = (lam, v, sol)
        delta /= 2
    contact_tol = params.resolved_contact_tol(grid, spec.ell.c1)
    pair = EigenPair(
        lam_star=lam, u_star=v, omega0=sol.contact & core, residual=pde_residual(spec, lam, v, region=core,
                                                                               contact_tol=contact_tol),
        delta_trace=trace, core=core, band_cells=band, converged=converged,
        residual_full=pde_residual(spec, lam, v, contact_tol=contact_tol), last=sol, steps=steps,
        runtime=time.perf_counter() - t0,
    )
    if strict and not converged:
        raise NoConvergenceError("no Cauchy behaviour within the discount budget", pair)
    return pair


def degenerate_eigen(spec, grid: Grid) -> EigenPair:
    """``F = 0``: eigenvalue ``min f`` on the nodes, eigenfunction the cone ``ell(x - x0)``."""
    t0 = time.perf_counter()
    X = grid.points()
    fx = spec.f(X).reshape(-1)
    j = int(np.argmin(fx))
    x0 = X.reshape(-1, grid.n)[j]
    u = Field(grid, spec.ell.support(X - x0))
    lam = float(fx[j])
    core = grid.interior_mask()
    omega = np.zeros(grid.shape, bool)
    res = pde_residual(spec, lam, u)
    return EigenPair(lam_star=lam, u_star=u, omega0=omega, residual=res, delta_trace=[], core=core,
                     band_cells=1, converged=True, residual_full=res, degenerate=True, x0=x0,
                     runtime=time.perf_counter() - t0)


def solve_eigen(spec, grid: Grid, params: SolverParams | None = None, strict=False) -> EigenPair:
    """Dispatch to :func:`degenerate_eigen` or :func:`vanishing_discount`."""
    if spec.F.kind == "zero" or spec.F.theta == 0:
        return degenerate_eigen(spec, grid)
    return vanishing_discount(spec, grid, params, strict=strict)


# ---------------------------------------------------------------------------
# extension formula


def extend_field(u: Field, mask, ell) -> Field:
    """``x -> min_{y in mask} u(y) + ell(x - y)``; unchanged on the mask."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("extension needs a nonempty mask")
    grid = u.grid
    X = grid.points().reshape(-1, grid.n)
    flat = u.values.reshape(-1)
    src = np.flatnonzero(mask.reshape(-1))
    Y, uy = X[src], flat[src]
    out = flat.copy()
    query = np.flatnonzero(~mask.reshape(-1))
    rows = max(1, _CHUNK // len(src))
    for s in range(0, len(query), rows):
        q = query[s:s + rows]
        out[q] = np.min(uy[None, :] + ell.support(X[q, None, :] - Y[None, :, :]), axis=1)
    return Field(grid, out)
