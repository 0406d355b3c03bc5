"""Grids, finite-difference stencils, upwind gradients and residuals."""

import numpy as np
import pytest

from gceigen.geometry import ConstraintH, SupportFunction
from gceigen.grid import (
    Field,
    Grid,
    MonotonicityError,
    apply_operator,
    gradient_fd,
    hessian_fd,
    kink_mask,
    pde_residual,
    read_field_csv,
    upwind_gradient,
    write_field_csv,
)
from gceigen.problems import CostF, OperatorF, ProblemSpec, builtin
from gceigen.radial import closed_form_laplacian


class TestGrid:
    def test_spacing_never_coarser(self):
        g = Grid.cube(1.0, 2, 0.3)
        assert np.all(g.h <= 0.3)
        assert g.shape == (8, 8)

    def test_points_and_node(self):
        g = Grid([0.0, -1.0], [1.0, 1.0], [5, 9])
        np.testing.assert_allclose(g.points()[2, 3], g.node((2, 3)))
        np.testing.assert_allclose(g.node((4, 8)), [1.0, 1.0])

    def test_rejects_tiny_grids(self):
        with pytest.raises(ValueError):
            Grid([0.0], [1.0], 3)

    def test_masks(self):
        g = Grid.cube(1.0, 2, 0.25)
        assert g.boundary_mask().sum() == 4 * (g.shape[0] - 1)
        assert g.interior_mask(2).sum() == (g.shape[0] - 4) ** 2

    def test_contains_ball(self):
        g = Grid.cube(2.4, 2, 0.1)
        assert g.contains_ball(2.0, margin=0.2)
        assert not g.contains_ball(2.1, margin=0.2)

    def test_equality(self):
        assert Grid.cube(1.0, 2, 0.1) == Grid.cube(1.0, 2, 0.1)
        assert len({Grid.cube(1.0, 2, 0.1), Grid.cube(1.0, 2, 0.1)}) == 1


class TestField:
    def test_interior_must_be_finite(self):
        g = Grid.cube(1.0, 1, 0.25)
        v = np.zeros(g.shape)
        v[0] = np.nan
        Field(g, v)
        v[3] = np.nan
        with pytest.raises(ValueError):
            Field(g, v)

    def test_argmin_ties_first(self):
        g = Grid.cube(1.0, 1, 0.25)
        assert Field(g, np.zeros(g.shape)).argmin() == 0


class TestPointStencils:
    def test_quadratic_is_exact(self):
        g = Grid.cube(1.0, 2, 0.1)
        u = Field.from_function(g, lambda X: X[..., 0] ** 2 + 3 * X[..., 0] * X[..., 1] - X[..., 1])
        node = (7, 12)
        x = g.node(node)
        np.testing.assert_allclose(gradient_fd(u, node), [2 * x[0] + 3 * x[1], 3 * x[0] - 1], atol=1e-12)
        np.testing.assert_allclose(hessian_fd(u, node), [[2, 3], [3, 0]], atol=1e-10)

    def test_central_second_order(self):
        errs = []
        for h in (0.1, 0.05):
            g = Grid.cube(1.0, 1, h)
            u = Field.from_function(g, lambda X: np.sin(X[..., 0]))
            i = g.shape[0] // 2 + 3
            errs.append(abs(gradient_fd(u, (i,))[0] - np.cos(g.node((i,))[0])))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_one_sided(self):
        g = Grid.cube(1.0, 1, 0.5)
        u = Field(g, [0.0, 1.0, 3.0, 6.0, 10.0])
        assert gradient_fd(u, (2,), scheme=[-1])[0] == pytest.approx(4.0)
        assert gradient_fd(u, (2,), scheme=[1])[0] == pytest.approx(6.0)

    def test_boundary_node_rejected(self):
        g = Grid.cube(1.0, 1, 0.5)
        with pytest.raises(IndexError):
            hessian_fd(Field(g, np.zeros(5)), (0,))


class TestOperator:
    def test_linear_stencil_exact_on_quadratics(self):
        A = np.array([[2.0, 0.3], [0.3, 1.0]])
        spec = ProblemSpec(2, OperatorF.linear(A), ConstraintH.ball(2), CostF.quadratic(2))
        g = Grid.cube(1.0, 2, 0.1)
        M = np.array([[1.0, -0.5], [-0.5, 2.0]])
        u = Field.from_function(g, lambda X: 0.5 * np.einsum("...i,ij,...j->...", X, M, X))
        out = apply_operator(spec, u).values
        np.testing.assert_allclose(out[g.interior], -np.trace(A @ M), atol=1e-10)
        assert np.isnan(out[0, 0])

    def test_monotonicity_error_names_axes(self):
        A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.9], [0.0, 0.9, 1.0]])
        spec = ProblemSpec(3, OperatorF.linear(A), ConstraintH.ball(3), CostF.quadratic(3))
        g = Grid([-1, -1, -1], [1, 1, 1], [11, 11, 41])
        with pytest.raises(MonotonicityError, match=r"\(1, 2\)|\(2, 1\)"):
            apply_operator(spec, Field(g, np.zeros(g.shape)))

    def test_pucci_min(self):
        spec = ProblemSpec(2, OperatorF.pucci_min([[1.0, 2.0], [2.0, 1.0]]), ConstraintH.ball(2),
                           CostF.quadratic(2))
        g = Grid.cube(1.0, 2, 0.1)
        u = Field.from_function(g, lambda X: X[..., 0] ** 2)
        np.testing.assert_allclose(apply_operator(spec, u).values[g.interior], -4.0, atol=1e-10)


class TestUpwind:
    def test_linear_field_is_exact(self):
        H = ConstraintH.ellipsoid(np.diag([1.0, 4.0]))
        ell = SupportFunction(H)
        g = Grid.cube(1.0, 2, 0.05)
        p = np.array([0.6, -0.2])
        q, h0, choice = upwind_gradient(g.points() @ p, g, ell)
        np.testing.assert_allclose(q, np.broadcast_to(p, q.shape), atol=1e-12)
        np.testing.assert_allclose(h0, float(ell.gauge(p)), atol=1e-12)
        assert np.all(choice == [-1, 1])

    def test_cone_gauge_is_first_order(self):
        """For ``u = ell(x)`` the gauge of the upwind gradient tends to zero like ``h``."""
        ell = SupportFunction(ConstraintH.ellipsoid(np.diag([1.0, 4.0])))
        errs = []
        for h in (0.05, 0.025):
            g = Grid.cube(1.0, 2, h)
            X = g.points()[g.interior].reshape(-1, 2)
            far = np.all(np.abs(X) > 0.5, axis=1)
            _, h0, _ = upwind_gradient(ell.support(g.points()), g, ell)
            errs.append(np.max(np.abs(h0[far])))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)

    def test_choice_codes(self):
        g = Grid.cube(1.0, 1, 0.5)
        ell = SupportFunction(ConstraintH.ball(1))
        q, _, choice = upwind_gradient(np.array([4.0, 1.0, 0.0, 1.0, 4.0]), g, ell)
        np.testing.assert_array_equal(choice[:, 0], [1, 0, -1])
        np.testing.assert_allclose(q[:, 0], [-2.0, 0.0, 2.0])

    def test_general_path_matches_shortcut(self):
        H = ConstraintH.ball(2)
        ell = SupportFunction(H)
        g = Grid.cube(1.0, 2, 0.1)
        u = np.random.default_rng(4).normal(size=g.shape)
        fast = upwind_gradient(u, g, ell)
        custom = SupportFunction(ConstraintH.custom(lambda p: np.sum(p**2, axis=-1) - 1, 2))
        slow = upwind_gradient(u, g, custom)
        np.testing.assert_allclose(fast[1], slow[1], atol=1e-6)

    def test_kinks(self):
        g = Grid.cube(1.0, 1, 0.01)
        mask = kink_mask(np.abs(g.points()[..., 0]), g)
        assert mask.sum() == 1


class TestResidual:
    def test_exact_pair_residual_is_small(self):
        """The closed-form one-dimensional pair satisfies the scheme up to discretisation error."""
        lam, r0 = closed_form_laplacian(1)
        g = Grid.cube(3.0, 1, 4e-3)
        r = np.abs(g.points()[..., 0])
        inner = lam * r**2 / 2 - r**4 / 12
        at_r0 = lam * r0**2 / 2 - r0**4 / 12
        u = Field(g, np.where(r < r0, inner, at_r0 + (r - r0)))
        rep = pde_residual(builtin("quartic1d"), lam, u)
        assert rep.sup_abs < 1e-4
        assert 0.2 < rep.contact_fraction < 0.5

    def test_array_lambda(self):
        g = Grid.cube(1.0, 1, 0.1)
        u = Field(g, np.zeros(g.shape))
        spec = builtin("quartic1d")
        a = pde_residual(spec, 0.5, u)
        b = pde_residual(spec, np.full(g.shape, 0.5), u)
        assert a.as_dict() == b.as_dict()


def test_csv_roundtrip(tmp_path):
    g = Grid([0.0, -1.0], [1.0, 1.0], [5, 6])
    u = Field(g, np.random.default_rng(1).normal(size=g.shape))
    write_field_csv(u, tmp_path / "u.csv")
    v = read_field_csv(tmp_path / "u.csv")
    assert v.grid == g
    np.testing.assert_array_equal(v.values, u.values)
