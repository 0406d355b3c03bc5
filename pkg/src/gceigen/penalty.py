"""Penalized discounted equation ``delta u + F(D^2u) + beta_eps(H0(Du)) = f`` and its Newton solver.

The constraint ``H0(Du) <= 0`` is relaxed by a convex penalty ``beta_eps``
that vanishes on admissible gradients.  The discrete system is solved by a
semismooth Newton method with backtracking, and ``eps`` is driven down by
continuation from 1 to ``eps_min``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import half_square_envelope, inf_convolve
from .grid import Field, Grid, operator_stencils, pde_residual, upwind_gradient

__all__ = [
    "PenaltyFn",
    "make_beta",
    "SolverParams",
    "PenalizedResult",
    "DiscountedSolution",
    "DegenerateOperatorError",
    "ContinuationError",
    "eps_schedule",
    "supersolution_field",
    "solve_penalized",
    "solve_discounted",
]

log = logging.getLogger(__name__)


class DegenerateOperatorError(ValueError):
    """Newton path requested for an operator with ``theta = 0``."""


class ContinuationError(RuntimeError):
    """Newton failed at some ``eps`` even after refining the continuation."""

    def __init__(self, msg, last_eps=None, last_field=None):
        super().__init__(msg)
        self.last_eps = last_eps
        self.last_field = last_field


# ---------------------------------------------------------------------------
# penalty


def _junction_coefficients():
    """Quintic ``p(s)`` on ``[0, 1]`` with ``p = p' = p'' = 0`` at 0 and ``p = 1, p' = 2, p'' = 0`` at 1.

    In the variable ``s = z / (2 eps)`` these endpoint conditions match
    value 1, slope ``1/eps`` and curvature 0 of the linear branch at ``z = 2 eps``.
    """
    M = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], float)
    return np.linalg.solve(M, np.array([0, 0, 0, 1, 2, 0], float))


_JUNCTION = _junction_coefficients()


@dataclass(frozen=True)
class PenaltyFn:
    """``beta_eps``: zero for ``z <= 0``, polynomial on ``[0, 2 eps]``, ``(z - eps)/eps`` beyond."""

    eps: float
    coeffs: tuple = tuple(_JUNCTION)

    def __call__(self, z):
        return self.evaluate(z)[0]

    def evaluate(self, z, order=1):
        """Values and derivatives up to ``order`` (at most 2)."""
        z = np.asarray(z, float)
        e = self.eps
        s = np.clip(z / (2 * e), 0.0, 1.0)
        c = np.asarray(self.coeffs)
        P = np.polynomial.polynomial
        val = np.where(z >= 2 * e, (z - e) / e, P.polyval(s, c))
        val = np.where(z <= 0, 0.0, val)
        out = [val]
        if order >= 1:
            d1 = np.where(z >= 2 * e, 1.0 / e, P.polyval(s, P.polyder(c)) / (2 * e))
            out.append(np.where(z <= 0, 0.0, d1))
        if order >= 2:
            d2 = np.where(z >= 2 * e, 0.0, P.polyval(s, P.polyder(c, 2)) / (2 * e) ** 2)
            out.append(np.where(z <= 0, 0.0, d2))
        return tuple(out)


def make_beta(eps: float) -> PenaltyFn:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return PenaltyFn(float(eps))


# ---------------------------------------------------------------------------
# parameters and results


@dataclass
class SolverParams:
    """Tolerances and schedules for the penalized Newton solver and the discount loop.

    ``eps_min`` and ``contact_tol`` default to grid-dependent values
    (``max(1e-4, h/10)`` and ``h^2 c1``).
    """

    newton_tol: float = 1e-8
    max_iter: int = 200
    damping_halvings: int = 10
    eps_start: float = 1.0
    eps_min: float | None = None
    max_refinements: int = 6
    delta_start: float = 1.0
    delta_min: float = 2.0**-10
    tol_lambda: float = 1e-3
    tol_u: float = 1e-2
    contact_tol: float | None = None
    band_cells: int | None = None

    def __post_init__(self):
        for name in ("newton_tol", "eps_start", "delta_start", "delta_min", "tol_lambda", "tol_u"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eps_min is not None and not 0 < self.eps_min <= self.eps_start:
            raise ValueError("eps_min must lie in (0, eps_start]")
        if self.max_iter < 1 or self.damping_halvings < 0:
            raise ValueError("max_iter >= 1 and damping_halvings >= 0 required")

    def resolved_eps_min(self, grid: Grid):
        return self.eps_min if self.eps_min is not None else max(1e-4, grid.hmax / 10)

    def resolved_contact_tol(self, grid: Grid, c1: float):
        return self.contact_tol if self.contact_tol is not None else grid.hmax**2 * c1

    def as_dict(self):
        return dict(self.__dict__)


def eps_schedule(eps_start, eps_min):
    """``eps_k = eps_start 2^-k`` while above ``eps_min``, ending exactly at ``eps_min``."""
    out = []
    e = eps_start
    while e > eps_min * (1 + 1e-12):
        out.append(e)
        e /= 2
    out.append(eps_min)
    return out


@dataclass
class PenalizedResult:
    field: Field
    converged: bool
    iterations: int
    residual: float
    tolerance: float
    message: str = ""


@dataclass
class DiscountedSolution:
    """Solution of the discounted problem at one ``delta``."""

    delta: float
    u: Field
    x_index: int
    x_point: np.ndarray
    lam: float
    contact: np.ndarray
    residual: object
    eps_final: float
    newton_iterations: int
    penalty_max: float
    converged: bool = True
    history: list = field(default_factory=list)

    @property
    def min_value(self):
        return float(self.u.values.reshape(-1)[self.x_index])


# ---------------------------------------------------------------------------
# boundary data


def supersolution_field(spec, delta: float, grid: Grid) -> Field:
    """``K1/delta + min_y{|y|^2/2 + ell(x - y)}`` on every node."""
    ell = spec.ell
    env = half_square_envelope(ell, grid.points())
    if env is None:
        g = Field.from_function(grid, lambda X: 0.5 * np.sum(X**2, axis=-1))
        env = inf_convolve(g, ell).values
    return Field(grid, spec.K1() / delta + env)


# ---------------------------------------------------------------------------
# discrete system


class _System:
    """Sparse pieces of the discrete penalized operator on interior unknowns."""

    def __init__(self, spec, grid: Grid):
        self.spec = spec
        self.grid = grid
        self.ell = spec.ell
        shape = grid.shape
        full = np.arange(grid.size).reshape(shape)
        self.inner_full = full[grid.interior].reshape(-1)
        self.N = self.inner_full.size
        col_of = -np.ones(grid.size, int)
        col_of[self.inner_full] = np.arange(self.N)
        self.col_of = col_of
        self.bnd_full = np.flatnonzero(col_of < 0)
        self.points = grid.points().reshape(-1, grid.n)[self.inner_full]
        self.f = spec.f(self.points)
        self.stencils = operator_stencils(spec.F, grid)
        strides = np.array([int(np.prod(shape[k + 1:])) for k in range(grid.n)])
        self.strides = strides
        self.L = [self._matrix({off: c for off, c in st.items()}) for st in self.stencils]
        self.Dm, self.Dp = [], []
        for k in range(grid.n):
            e = [0] * grid.n
            e[k] = -1
            self.Dm.append(self._matrix({tuple([0] * grid.n): 1 / grid.h[k], tuple(e): -1 / grid.h[k]}))
            e[k] = 1
            self.Dp.append(self._matrix({tuple(e): 1 / grid.h[k], tuple([0] * grid.n): -1 / grid.h[k]}))
        self.Theta_sum = sum(4.0 / h**2 for h in grid.h) * max(spec.F.Theta, 1.0)

    def _matrix(self, stencil):
        """Rows: interior nodes; columns: all nodes (split later into unknowns and boundary)."""
        rows, cols, vals = [], [], []
        r = np.arange(self.N)
        for off, c in stencil.items():
            if c == 0.0:
                continue
            shift = int(np.dot(off, self.strides))
            rows.append(r)
            cols.append(self.inner_full + shift)
            vals.append(np.full(self.N, c))
        M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.N, self.grid.size))
        return M[:, self.inner_full].tocsr(), M[:, self.bnd_full].tocsr()

    def full_values(self, w_inner, w_bnd):
        out = np.empty(self.grid.size)
        out[self.inner_full] = w_inner
        out[self.bnd_full] = w_bnd
        return out.reshape(self.grid.shape)

    def residual(self, w, wb, shift, delta, beta, jac=False):
        """Residual of ``delta (shift + w) + F(D^2 w) + beta(H0(Dw)) - f`` on the unknowns."""
        branches = np.array([Li @ w + Lb @ wb for Li, Lb in self.L])
        k = np.argmin(branches, axis=0)
        Fw = branches[k, np.arange(self.N)]
        vals = self.full_values(w, wb)
        if jac:
            _, h0, choice, g = upwind_gradient(vals, self.grid, self.ell, with_direction=True)
        else:
            _, h0, _ = upwind_gradient(vals, self.grid, self.ell)
        B, dB = beta.evaluate(h0)
        r = delta * (shift + w) + Fw + B - self.f
        if not jac:
            return r, h0, B
        J = delta * sp.identity(self.N, format="csr")
        if len(self.L) == 1:
            J = J + self.L[0][0]
        else:
            for j, (Li, _) in enumerate(self.L):
                J = J + sp.diags((k == j).astype(float)) @ Li
        for ax in range(self.grid.n):
            cm = dB * g[:, ax] * (choice[:, ax] == -1)
            cp = dB * g[:, ax] * (choice[:, ax] == 1)
            if cm.any():
                J = J + sp.diags(cm) @ self.Dm[ax][0]
            if cp.any():
                J = J + sp.diags(cp) @ self.Dp[ax][0]
        return r, h0, B, J.tocsc()


_SYSTEM_CACHE: dict = {}


def _system(spec, grid):
    key = (id(spec), grid)
    sysm = _SYSTEM_CACHE.get(key)
    if sysm is None or sysm.spec is not spec:
        _SYSTEM_CACHE.clear()
        sysm = _System(spec, grid)
        _SYSTEM_CACHE[key] = sysm
    return sysm


def _require_nondegenerate(spec):
    if spec.F.kind == "zero" or spec.F.theta == 0:
        raise DegenerateOperatorError(
            "operator has theta = 0; use the degenerate eigenvalue path instead of Newton"
        )


def solve_penalized(spec, delta, eps, grid: Grid, boundary: Field, warm_start: Field | None = None,
                    params: SolverParams | None = None) -> PenalizedResult:
    """Semismooth Newton for ``delta u + F(D^2u) + beta_eps(H0(Du)) = f`` with pinned boundary.

    Non-convergence is reported through ``converged=False``; the best iterate is returned.
    """
    _require_nondegenerate(spec)
    if not (delta > 0 and eps > 0):
        raise ValueError("delta and eps must be positive")
    params = params or SolverParams()
    sysm = _system(spec, grid)
    beta = make_beta(eps)
    start = (warm_start if warm_start is not None else boundary).values.reshape(-1)
    shift = float(np.min(start))
    w = start[sysm.inner_full] - shift
    wb = boundary.values.reshape(-1)[sysm.bnd_full] - shift
    scale = 1.0 + float(np.max(np.abs(sysm.f)))
    r, _, _, J = sysm.residual(w, wb, shift, delta, beta, jac=True)
    nr = float(np.max(np.abs(r)))
    message = ""
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        floor = 64 * np.finfo(float).eps * sysm.Theta_sum * (1.0 + float(np.max(np.abs(w))) + abs(shift) * delta)
        tol = max(params.newton_tol * scale, floor)
        if nr <= tol:
            converged = True
            it -= 1
            break
        try:
            dw = spla.spsolve(J, -r)
        except RuntimeError as exc:  # singular factorization
            message = f"linear solve failed: {exc}"
            break
        t = 1.0
        accepted = False
        for _ in range(params.damping_halvings + 1):
            wn = w + t * dw
            rn, _, _ = sysm.residual(wn, wb, shift, delta, beta)
            nrn = float(np.max(np.abs(rn)))
            if nrn < nr:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if nr <= 1e3 * tol:
                converged = True
                message = "stagnated at roundoff level"
            else:
                message = f"damping exhausted at residual {nr:.3e}"
            break
        w = wn
        r, _, _, J = sysm.residual(w, wb, shift, delta, beta, jac=True)
        nr = float(np.max(np.abs(r)))
    else:
        message = f"max iterations reached at residual {nr:.3e}"
        converged = nr <= tol
    vals = sysm.full_values(w + shift, wb + shift)
    return PenalizedResult(Field(grid, vals), converged, it, nr, tol, message)


def _contact_and_penalty(spec, u: Field, eps, contact_tol):
    grid = u.grid
    _, h0, _ = upwind_gradient(u.values, grid, spec.ell)
    mask = np.zeros(grid.shape, bool)
    mask[grid.interior] = (h0 < -contact_tol).reshape(tuple(k - 2 for k in grid.shape))
    pen = float(np.max(make_beta(eps)(h0))) if h0.size else 0.0
    return mask, pen


def solve_discounted(spec, delta, grid: Grid, params: SolverParams | None = None,
                     warm_start: Field | None = None, eps_list=None) -> DiscountedSolution:
    """Continuation in ``eps`` down to ``eps_min`` at fixed ``delta``.

    When a Newton solve fails, intermediate ``eps`` values (geometric means
    with the last successful one) are inserted up to ``max_refinements`` times.

    Raises
    ------
    ContinuationError
        If some ``eps`` cannot be reached; carries the last good ``eps`` and field.
    """
    _require_nondegenerate(spec)
    params = params or SolverParams()
    eps_min = params.resolved_eps_min(grid)
    boundary = supersolution_field(spec, delta, grid)
    todo = list(eps_list) if eps_list is not None else eps_schedule(params.eps_start, eps_min)
    u = warm_start if warm_start is not None else boundary
    last_eps = None
    history = []
    total_it = 0
    refinements = 0
    while todo:
        eps = todo[0]
        res = solve_penalized(spec, delta, eps, grid, boundary, u, params)
        total_it += res.iterations
        history.append({"eps": eps, "iterations": res.iterations, "residual": res.residual,
                        "converged": res.converged})
        if res.converged:
            u = res.field
            last_eps = eps
            todo.pop(0)
            continue
        refinements += 1
        if refinements > params.max_refinements:
            raise ContinuationError(
                f"penalized Newton failed at eps={eps:.3e} (delta={delta:.3e}): {res.message}",
                last_eps, u)
        prev = last_eps if last_eps is not None else max(params.eps_start, 2 * eps)
        todo.insert(0, math.sqrt(prev * eps))
        log.info("refining continuation: inserting eps=%.3e", todo[0])
    j = u.argmin()
    contact_tol = params.resolved_contact_tol(grid, spec.ell.c1)
    contact, pen = _contact_and_penalty(spec, u, last_eps, contact_tol)
    resid = pde_residual(spec, delta * u.values, u, contact_tol=contact_tol)
    return DiscountedSolution(
        delta=float(delta), u=u, x_index=j, x_point=grid.points().reshape(-1, grid.n)[j],
        lam=float(delta * u.values.reshape(-1)[j]), contact=contact, residual=resid,
        eps_final=float(last_eps), newton_iterations=total_it, penalty_max=pen,
        converged=True, history=history,
    )

