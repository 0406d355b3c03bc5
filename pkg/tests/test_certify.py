"""A-priori brackets, test-function bounds and structural checks."""

import numpy as np
import pytest

from gceigen.certify import (
    AdmissibilityError,
    apriori_bracket,
    certify,
    clip_to_admissible,
    lambda_minus,
    lambda_plus,
    mollify,
    structural_checks,
)
from gceigen.geometry import ConstraintH, SupportFunction
from gceigen.grid import Field, Grid, upwind_gradient
from gceigen.problems import builtin


class TestApriori:
    def test_quartic(self):
        lo, hi = apriori_bracket(builtin("quartic1d"))
        assert lo == pytest.approx(0.0, abs=1e-12)
        assert hi == pytest.approx(2.0)

    def test_ordered_for_every_builtin(self):
        for name in ("quartic1d", "separable2d", "radial2d", "ellipse2d"):
            lo, hi = apriori_bracket(builtin(name))
            assert lo <= hi


class TestLambdaMinus:
    def test_zero_test_function(self):
        """``phi = 0`` gives the minimum of ``f`` over interior nodes."""
        spec = builtin("quartic1d")
        grid = Grid.cube(3.0, 1, 0.01)
        assert lambda_minus(spec, Field(grid, np.zeros(grid.shape))) == pytest.approx(0.0, abs=1e-20)

    def test_quadratic_test_function(self):
        # phi = x^2/4 has |phi'| <= 1 on [-2, 2] and -F(D^2 phi) + f = 1/2 + x^2
        spec = builtin("quartic1d")
        grid = Grid.cube(2.0, 1, 0.01)
        phi = Field.from_function(grid, lambda X: X[..., 0] ** 2 / 4)
        assert lambda_minus(spec, phi) == pytest.approx(0.5, abs=1e-10)

    def test_inadmissible_rejected(self):
        spec = builtin("quartic1d")
        grid = Grid.cube(3.0, 1, 0.01)
        phi = Field.from_function(grid, lambda X: 2 * np.abs(X[..., 0]))
        with pytest.raises(AdmissibilityError, match="node"):
            lambda_minus(spec, phi)


class TestMollify:
    def test_reproduces_constants(self):
        g = Grid.cube(1.0, 2, 0.1)
        out = mollify(Field(g, np.full(g.shape, 3.0)), 0.3)
        np.testing.assert_allclose(out.values, 3.0)

    def test_reproduces_affine_away_from_edges(self):
        g = Grid.cube(1.0, 2, 0.05)
        u = Field.from_function(g, lambda X: 2 * X[..., 0] - X[..., 1])
        out = mollify(u, 0.2)
        inner = g.interior_mask(width=5)
        np.testing.assert_allclose(out.values[inner], u.values[inner], atol=1e-12)

    def test_width_validation(self):
        g = Grid.cube(1.0, 1, 0.1)
        with pytest.raises(ValueError):
            mollify(Field(g, np.zeros(g.shape)), 0.0)


def test_clip_is_admissible_and_below():
    g = Grid.cube(1.0, 2, 0.05)
    ell = SupportFunction(ConstraintH.ball(2))
    u = Field.from_function(g, lambda X: 3 * np.sum(X**2, axis=-1))
    out = clip_to_admissible(u, ell)
    assert np.all(out.values <= u.values + 1e-12)
    X = g.points().reshape(-1, 2)
    v = out.values.reshape(-1)
    gap = v[:, None] - v[None, :] - ell.support(X[:, None, :] - X[None, :, :])
    assert gap.max() <= 1e-12
    # one-sided differences of an exactly Lipschitz field overshoot the gauge by O(h)
    _, h0, _ = upwind_gradient(out.values, g, ell)
    assert h0.max() <= g.hmax * ell.c1


class TestOnQuartic:
    def test_certificates_bracket(self, quartic):
        spec, _, pair, _ = quartic
        cert = certify(spec, pair)
        assert cert.consistent
        assert cert.lambda_minus <= pair.lam_star + cert.tol_cert
        assert pair.lam_star <= cert.lambda_plus + cert.tol_cert
        assert cert.apriori[0] <= cert.lambda_minus and cert.lambda_plus <= cert.apriori[1]

    def test_upper_bound_grows_with_tau(self, quartic):
        spec, grid, pair, _ = quartic
        vals = [lambda_plus(spec, pair, t, 4 * grid.hmax) for t in (1.01, 1.05, 1.1)]
        assert vals[0] < vals[1] < vals[2]

    def test_parameter_validation(self, quartic):
        spec, grid, pair, _ = quartic
        with pytest.raises(ValueError):
            lambda_plus(spec, pair, 1.0, 4 * grid.hmax)
        with pytest.raises(ValueError):
            lambda_plus(spec, pair, 1.01, grid.hmax)

    def test_structural_checks_pass(self, quartic):
        spec, _, pair, _ = quartic
        rep = structural_checks(spec, pair)
        assert rep.ok, rep.as_dict()
        assert "growth_proxy" in rep.values

    def test_perturbed_field_fails_convexity(self, quartic):
        spec, grid, pair, _ = quartic
        bent = pair.u_star.values.copy()
        mid = grid.shape[0] // 2
        bent[mid] += 0.01
        broken = type(pair)(**{**pair.__dict__, "u_star": Field(grid, bent)})
        rep = structural_checks(spec, broken)
        assert not rep.passed["convexity"]
        assert rep.witnesses["convexity"] == (mid,)
