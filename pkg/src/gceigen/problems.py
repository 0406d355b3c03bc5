"""Problem instances ``max{lam + F(D^2u) - f(x), H(Du)} = 0`` and their validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import ConstraintH, SupportFunction

__all__ = [
    "OperatorF",
    "CostF",
    "ProblemSpec",
    "CheckResult",
    "ValidationReport",
    "eval_F",
    "validate",
    "builtin",
    "BUILTINS",
    "DEFAULT_SEED",
]

DEFAULT_SEED = 20240601


class OperatorF:
    """Elliptic, positively homogeneous, superadditive ``F(M)``.

    Three variants: ``linear`` (``F(M) = -tr(A M)``), ``pucci_min``
    (``F(M) = min_k -tr(A_k M)`` with diagonal ``A_k``) and ``zero``.
    """

    def __init__(self, kind, n, matrices=()):
        self.kind = kind
        self.n = int(n)
        self.matrices = [np.atleast_2d(np.asarray(A, float)) for A in matrices]
        if kind == "zero":
            self.theta = self.Theta = 0.0
            return
        if kind not in ("linear", "pucci_min"):
            raise ValueError(f"unknown operator kind {kind!r}")
        if not self.matrices:
            raise ValueError("at least one coefficient matrix is required")
        eig = []
        for A in self.matrices:
            if A.shape != (self.n, self.n) or not np.allclose(A, A.T):
                raise ValueError("coefficient matrices must be symmetric n x n")
            if kind == "pucci_min" and np.any(A - np.diag(np.diag(A))):
                raise ValueError("pucci_min coefficients must be diagonal")
            w = np.linalg.eigvalsh(A)
            if w.min() <= 0:
                raise ValueError("coefficient matrices must be positive definite")
            eig.append(w)
        if kind == "linear" and len(self.matrices) != 1:
            raise ValueError("linear operator takes exactly one matrix")
        self.theta = float(min(w.min() for w in eig))
        self.Theta = float(max(w.max() for w in eig))

    @classmethod
    def linear(cls, A):
        A = np.atleast_2d(np.asarray(A, float))
        return cls("linear", A.shape[0], [A])

    @classmethod
    def laplacian(cls, n, scale=1.0):
        return cls.linear(scale * np.eye(n))

    @classmethod
    def pucci_min(cls, diagonals):
        mats = [np.diag(np.asarray(d, float)) for d in diagonals]
        return cls("pucci_min", mats[0].shape[0], mats)

    @classmethod
    def zero(cls, n):
        return cls("zero", n)

    @property
    def diagonal(self):
        return all(not np.any(A - np.diag(np.diag(A))) for A in self.matrices)

    @property
    def rotational(self):
        """True if ``F(O M O^t) = F(M)`` for all orthogonal ``O``."""
        return self.kind == "zero" or all(np.allclose(A, A[0, 0] * np.eye(self.n)) for A in self.matrices)

    def __call__(self, M):
        """Evaluate on symmetric matrices of shape ``(..., n, n)``."""
        M = np.asarray(M, float)
        if self.kind == "zero":
            return np.zeros(M.shape[:-2])
        vals = [-np.einsum("ij,...ji->...", A, M) for A in self.matrices]
        return vals[0] if len(vals) == 1 else np.min(vals, axis=0)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "theta": self.theta, "Theta": self.Theta,
                "matrices": [A.tolist() for A in self.matrices]}


def eval_F(op: OperatorF, M):
    return op(M)


class CostF:
    """Convex superlinear running cost ``f``.

    ``func`` maps points of shape ``(..., n)`` to ``(...)``.  ``inf`` and
    ``argmin`` are recorded when known in closed form.
    """

    def __init__(self, func, n, kind="custom", params=None, inf=None, argmin=None):
        self.func = func
        self.n = int(n)
        self.kind = kind
        self.params = dict(params or {})
        self.inf = inf
        self.argmin = None if argmin is None else np.asarray(argmin, float)

    @classmethod
    def quadratic(cls, n, center=None, scale=1.0, offset=0.0):
        """``f(x) = scale |x - center|^2 + offset``."""
        c = np.zeros(n) if center is None else np.asarray(center, float).reshape(n)

        def func(x):
            x = np.asarray(x, float)
            return scale * np.sum((x - c) ** 2, axis=-1) + offset

        return cls(func, n, "quadratic", {"center": c, "scale": float(scale), "offset": float(offset)},
                   inf=float(offset), argmin=c)

    @classmethod
    def quadform(cls, Q):
        """``f(x) = x.Qx`` for symmetric positive-definite ``Q``."""
        Q = np.atleast_2d(np.asarray(Q, float))

        def func(x):
            x = np.asarray(x, float)
            return np.einsum("...i,ij,...j->...", x, Q, x)

        return cls(func, Q.shape[0], "quadform", {"Q": Q}, inf=0.0, argmin=np.zeros(Q.shape[0]))

    @classmethod
    def custom(cls, func, n, inf=None, argmin=None):
        return cls(func, n, "custom", inf=inf, argmin=argmin)

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, float)), float)

    def scaled(self, c):
        """The cost ``c f`` (used in scaling checks)."""
        base = self
        params = dict(self.params)
        if self.kind == "quadratic":
            params["scale"] = params["scale"] * c
            params["offset"] = params["offset"] * c
        elif self.kind == "quadform":
            params["Q"] = params["Q"] * c
        return CostF(lambda x: c * base(x), self.n, self.kind if self.kind != "custom" else "custom", params,
                     inf=None if self.inf is None else c * self.inf, argmin=self.argmin)

    @property
    def radial(self):
        if self.kind == "quadratic":
            return not np.any(self.params["center"])
        if self.kind == "quadform":
            Q = self.params["Q"]
            return np.allclose(Q, Q[0, 0] * np.eye(self.n))
        return False

    def describe(self):
        out = {"kind": self.kind, "n": self.n}
        for key, val in self.params.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


@dataclass(frozen=True)
class ProblemSpec:
    """One eigenvalue problem: dimension, operator, constraint and cost."""

    n: int
    F: OperatorF
    H: ConstraintH
    f: CostF
    symmetry: str = "none"
    name: str = "custom"

    def __post_init__(self):
        if self.symmetry not in ("rotational", "separable", "none"):
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        if not (self.F.n == self.H.n == self.f.n == self.n):
            raise ValueError("F, H and f must share the problem dimension")

    @cached_property
    def ell(self) -> SupportFunction:
        return SupportFunction(self.H)

    @property
    def degenerate(self):
        return self.F.kind == "zero" or self.F.theta == 0

    def K1(self):
        """``-F(I_n) + sup_{H <= 0} f``, sampled over the cached boundary of ``{H <= 0}``.

        ``f`` is convex, so its maximum over the compact convex set sits on the boundary.
        """
        pts = np.vstack([self.ell.boundary_points(), np.zeros((1, self.n))])
        return float(-self.F(np.eye(self.n)) + np.max(self.f(pts)))

    def describe(self):
        return {"name": self.name, "n": self.n, "symmetry": self.symmetry,
                "F": self.F.describe(), "H": self.H.describe(), "f": self.f.describe()}


# ---------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None

    def as_dict(self):
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail, "witness": w}


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    seed: int = DEFAULT_SEED

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"ok": self.ok, "seed": self.seed, "checks": [c.as_dict() for c in self.checks]}


def _random_sym(rng, n, k):
    B = rng.normal(size=(k, n, n))
    return 0.5 * (B + np.swapaxes(B, 1, 2))


def _check_F(F: OperatorF, rng, samples=500):
    out = []
    n = F.n
    M = _random_sym(rng, n, samples)
    B = rng.normal(size=(samples, n, n))
    N = np.einsum("kji,kjl->kil", B, B)
    trN = np.trace(N, axis1=1, axis2=2)
    d = F(M + N) - F(M)
    tol = 1e-10 * (1 + np.abs(F(M)) + np.abs(F(M + N)))
    bad = (d < -F.Theta * trN - tol) | (d > -F.theta * trN + tol)
    out.append(CheckResult("F_ellipticity", not bad.any(),
                           f"theta={F.theta}, Theta={F.Theta}",
                           None if not bad.any() else M[np.argmax(bad)]))
    t = rng.uniform(0, 10, samples)
    hom = np.abs(F(t[:, None, None] * M) - t * F(M)) > 1e-10 * (1 + np.abs(t * F(M)))
    out.append(CheckResult("F_homogeneity", not hom.any(), "",
                           None if not hom.any() else M[np.argmax(hom)]))
    M2 = _random_sym(rng, n, samples)
    sup = F(M) + F(M2) > F(M + M2) + 1e-10 * (1 + np.abs(F(M + M2)))
    out.append(CheckResult("F_superadditivity", not sup.any(), "",
                           None if not sup.any() else M[np.argmax(sup)]))
    return out


def _check_H(H: ConstraintH, rng, samples=200):
    out = [CheckResult("H_origin_negative", float(H(np.zeros(H.n))) < 0, f"H(0)={float(H(np.zeros(H.n)))}")]
    witness = H.bounded_witness()
    out.append(CheckResult("H_compact_sublevel", witness is None,
                           "doubling probe along +-axes", witness))
    if witness is None:
        # strict convexity proxy: midpoint of two boundary points lies strictly inside
        d = rng.normal(size=(samples, 2, H.n))
        d /= np.linalg.norm(d, axis=2, keepdims=True)
        if H.form == "box":
            out.append(CheckResult("H_strictly_convex", True, "box form accepted: support function well defined"))
        else:
            ell = SupportFunction(H)
            t = ell._closed_scale(d.reshape(-1, H.n)) if H.form != "custom" else ell._ray_scale(d.reshape(-1, H.n))
            pts = (t[:, None] * d.reshape(-1, H.n)).reshape(samples, 2, H.n)
            apart = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1) > 1e-6
            mid = H(pts.mean(axis=1))
            bad = apart & ~(mid < 0)
            out.append(CheckResult("H_strictly_convex", not bad.any(), "midpoints of boundary chords",
                                   None if not bad.any() else pts[np.argmax(bad)]))
    if H.sigma is not None and H.Sigma is not None and witness is None:
        p = rng.normal(size=(samples, H.n))
        xi = rng.normal(size=(samples, H.n))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        s = 1e-3
        second = (H(p + s * xi) - 2 * H(p) + H(p - s * xi)) / s**2
        tol = 1e-4 * (1 + H.Sigma)
        bad = (second < H.sigma - tol) | (second > H.Sigma + tol)
        out.append(CheckResult("H_curvature_bounds", not bad.any(), f"sigma={H.sigma}, Sigma={H.Sigma}",
                               None if not bad.any() else p[np.argmax(bad)]))
    return out


def _check_f(f: CostF, rng, c1, samples=500, cap=2.0**10):
    n = f.n
    x = rng.normal(scale=3.0, size=(samples, n))
    y = rng.normal(scale=3.0, size=(samples, n))
    bad = f(0.5 * (x + y)) > 0.5 * (f(x) + f(y)) + 1e-10 * (1 + np.abs(f(x)) + np.abs(f(y)))
    out = [CheckResult("f_convex", not bad.any(), "midpoint inequality",
                       None if not bad.any() else x[np.argmax(bad)])]
    target = 10.0 * c1
    R = 1.0
    passed = False
    prev = None
    axes = np.vstack([np.eye(n), -np.eye(n)])
    while R <= cap:
        ratio = f(R * axes) / R
        if prev is not None and np.any(ratio < prev - 1e-12):
            break
        if np.all(ratio >= target):
            passed = True
            break
        prev = ratio
        R *= 2.0
    out.append(CheckResult("f_superlinear", passed,
                           f"f(R e)/R >= {target:g} at R={R:g}" if passed else f"probe failed up to R={min(R, cap):g}",
                           None if passed else R))
    return out


def validate(spec: ProblemSpec, seed: int = DEFAULT_SEED) -> ValidationReport:
    """Check the structural assumptions on ``spec``; failures are data, not exceptions."""
    rng = np.random.default_rng(seed)
    report = ValidationReport(seed=seed)
    report.checks += _check_F(spec.F, rng)
    h_checks = _check_H(spec.H, rng)
    report.checks += h_checks
    h_ok = all(c.passed for c in h_checks if c.name in ("H_origin_negative", "H_compact_sublevel"))
    c1 = spec.ell.c1 if h_ok else 1.0
    report.checks += _check_f(spec.f, rng, c1)
    if spec.symmetry == "rotational":
        ok = spec.f.radial and spec.H.form == "ball" and spec.F.rotational
        report.checks.append(CheckResult("rotational_symmetry", ok, "radial f, ball H, orthogonally invariant F"))
    if spec.symmetry == "separable":
        ok = (spec.H.form == "box" and spec.F.kind == "linear" and spec.F.diagonal
              and spec.f.kind in ("quadratic", "quadform"))
        report.checks.append(CheckResult("separable_structure", ok, "box H, diagonal linear F, separable f"))
    return report


# ---------------------------------------------------------------------------
# registry


def _quartic1d():
    return ProblemSpec(1, OperatorF.laplacian(1), ConstraintH.ball(1), CostF.quadratic(1),
                       symmetry="rotational", name="quartic1d")


def _separable2d():
    return ProblemSpec(2, OperatorF.laplacian(2), ConstraintH.box(2), CostF.quadratic(2),
                       symmetry="separable", name="separable2d")


def _radial2d():
    return ProblemSpec(2, OperatorF.laplacian(2), ConstraintH.ball(2), CostF.quadratic(2),
                       symmetry="rotational", name="radial2d")


def _degenerate_zeroF():
    return ProblemSpec(1, OperatorF.zero(1), ConstraintH.ball(1), CostF.quadratic(1, center=[0.3]),
                       symmetry="none", name="degenerate_zeroF")


def _ellipse2d():
    return ProblemSpec(2, OperatorF.laplacian(2), ConstraintH.ellipsoid(np.diag([1.0, 4.0])),
                       CostF.quadratic(2), symmetry="none", name="ellipse2d")


BUILTINS = {
    "quartic1d": _quartic1d,
    "separable2d": _separable2d,
    "radial2d": _radial2d,
    "degenerate_zeroF": _degenerate_zeroF,
    "ellipse2d": _ellipse2d,
}


def builtin(name: str) -> ProblemSpec:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in problem {name!r}; choose from {sorted(BUILTINS)}") from None


def from_dict(d: dict) -> ProblemSpec:
    """Build a problem from its JSON description (see the CLI config format)."""
    n = int(d["n"])
    Fd = d.get("F", {"kind": "linear", "A": np.eye(n).tolist()})
    kind = Fd.get("kind", "linear")
    if kind == "linear":
        F = OperatorF.linear(Fd.get("A", np.eye(n).tolist()))
    elif kind == "laplacian":
        F = OperatorF.laplacian(n, Fd.get("scale", 1.0))
    elif kind == "pucci_min":
        F = OperatorF.pucci_min(Fd["diagonals"])
    elif kind == "zero":
        F = OperatorF.zero(n)
    else:
        raise ValueError(f"F.kind: unknown operator {kind!r}")
    Hd = d.get("H", {"form": "ball"})
    form = Hd.get("form", "ball")
    if form == "ball":
        H = ConstraintH.ball(n, Hd.get("radius", 1.0))
    elif form == "box":
        H = ConstraintH.box(n, Hd.get("half_width", 1.0))
    elif form == "ellipsoid":
        H = ConstraintH.ellipsoid(Hd["A"])
    else:
        raise ValueError(f"H.form: unsupported form {form!r} in a config file")
    fd = d.get("f", {"kind": "quadratic"})
    fk = fd.get("kind", "quadratic")
    if fk == "quadratic":
        f = CostF.quadratic(n, fd.get("center"), fd.get("scale", 1.0), fd.get("offset", 0.0))
    elif fk == "quadform":
        f = CostF.quadform(fd["Q"])
    else:
        raise ValueError(f"f.kind: unsupported cost {fk!r} in a config file")
    if H.n != n or F.n != n:
        raise ValueError("n: dimension mismatch between F, H and f")
    return ProblemSpec(n, F, H, f, symmetry=d.get("symmetry", "none"), name=d.get("name", "inline"))


def scaled_cost(spec: ProblemSpec, c: float) -> ProblemSpec:
    """Copy of ``spec`` with ``f`` replaced by ``c f``."""
    return ProblemSpec(spec.n, spec.F, spec.H, spec.f.scaled(c), spec.symmetry, f"{spec.name}*{c:g}")

