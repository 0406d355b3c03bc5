"""Support function, gauge, Legendre transform and inf-convolution."""

import numpy as np
import pytest

from gceigen.geometry import (
    ConstraintH,
    SupportFunction,
    UnsupportedOperation,
    direction_mesh,
    gauge_eval,
    half_square_envelope,
    inf_convolve,
    legendre_eval,
    project_onto_set,
    support_eval,
    support_via_legendre,
)
from gceigen.grid import Field, Grid

ELLIPSE = np.diag([1.0, 4.0])


def _ellipse_support(v):
    v = np.atleast_2d(v)
    return np.sqrt(v[:, 0] ** 2 + v[:, 1] ** 2 / 4)


class TestConstraintH:
    def test_origin_must_be_strictly_inside(self):
        with pytest.raises(ValueError):
            ConstraintH.custom(lambda p: np.linalg.norm(p, axis=-1), 2)

    def test_unbounded_sublevel_set_has_witness(self):
        H = ConstraintH.custom(lambda p: -np.ones(p.shape[:-1]), 2)
        assert H.bounded_witness() is not None
        with pytest.raises(ValueError):
            SupportFunction(H)

    def test_ellipsoid_curvature_constants(self):
        H = ConstraintH.ellipsoid(ELLIPSE)
        assert H.sigma == pytest.approx(2.0)
        assert H.Sigma == pytest.approx(8.0)


class TestSupportFunction:
    def test_ball_values(self):
        ell = SupportFunction(ConstraintH.ball(2))
        assert support_eval(ell, np.array([3.0, 4.0])) == pytest.approx(5.0)
        assert (ell.c0, ell.c1) == (1.0, 1.0)

    def test_box_is_l1(self):
        ell = SupportFunction(ConstraintH.box(2))
        assert float(ell(np.array([1.0, -2.0]))) == pytest.approx(3.0)
        assert ell.c1 == pytest.approx(np.sqrt(2))

    def test_ellipse_closed_form(self):
        ell = SupportFunction(ConstraintH.ellipsoid(ELLIPSE))
        assert float(ell(np.array([0.0, 1.0]))) == pytest.approx(0.5)
        assert (ell.c0, ell.c1) == (pytest.approx(0.5), pytest.approx(1.0))

    def test_zero_vector(self):
        for H in (ConstraintH.ball(3), ConstraintH.box(2), ConstraintH.ellipsoid(ELLIPSE)):
            assert float(SupportFunction(H)(np.zeros(H.n))) == 0.0

    def test_custom_matches_closed_form(self):
        H = ConstraintH.custom(lambda p: p[..., 0] ** 2 + 4 * p[..., 1] ** 2 - 1, 2)
        ell = SupportFunction(H)
        v = np.random.default_rng(3).normal(size=(50, 2))
        np.testing.assert_allclose(ell(v), _ellipse_support(v), rtol=1e-8)

    def test_custom_one_dimensional(self):
        H = ConstraintH.custom(lambda p: np.where(p[..., 0] > 0, p[..., 0] - 2, -p[..., 0] - 1), 1)
        ell = SupportFunction(H)
        np.testing.assert_allclose(ell(np.array([[3.0], [-3.0]])), [6.0, 3.0], rtol=1e-9)

    def test_gauge_sign_matches_H(self):
        rng = np.random.default_rng(5)
        for H in (ConstraintH.ball(2), ConstraintH.box(2), ConstraintH.ellipsoid(ELLIPSE)):
            ell = SupportFunction(H)
            p = rng.normal(scale=1.5, size=(400, 2))
            g = gauge_eval(ell, p)
            h = H(p)
            away = np.abs(h) > 1e-3
            np.testing.assert_array_equal(np.sign(g[away]), np.sign(h[away]))

    def test_gauge_values(self):
        ell = SupportFunction(ConstraintH.ball(2))
        assert float(ell.gauge(np.array([0.5, 0.0]))) == pytest.approx(-0.5)
        box = SupportFunction(ConstraintH.box(2))
        # outside the box along a corner: distance-like value
        assert float(box.gauge(np.array([2.0, 2.0]))) == pytest.approx(np.sqrt(2))
        assert float(box.gauge(np.array([0.5, -0.2]))) == pytest.approx(-0.5)

    def test_ellipse_gauge_against_dense_directions(self):
        ell = SupportFunction(ConstraintH.ellipsoid(ELLIPSE))
        th = np.linspace(0, 2 * np.pi, 100001)[:-1]
        D = np.stack([np.cos(th), np.sin(th)], axis=1)
        L = ell(D)
        p = np.random.default_rng(0).normal(size=(100, 2))
        brute = np.max(p @ D.T - L, axis=1)
        np.testing.assert_allclose(ell.gauge(p), brute, atol=1e-8)

    def test_axis_symmetry_flag(self):
        assert SupportFunction(ConstraintH.ellipsoid(ELLIPSE)).axis_symmetric
        rot = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert not SupportFunction(ConstraintH.ellipsoid(rot)).axis_symmetric


class TestSupportProperties:
    """Positive homogeneity and subadditivity on random samples."""

    @pytest.mark.parametrize("H", [ConstraintH.ball(2), ConstraintH.box(3), ConstraintH.ellipsoid(ELLIPSE)],
                             ids=["ball", "box", "ellipse"])
    def test_homogeneous_and_subadditive(self, H):
        ell = SupportFunction(H)
        rng = np.random.default_rng(11)
        v, w = rng.normal(size=(2, 100, H.n))
        t = rng.uniform(0, 5, size=100)
        np.testing.assert_allclose(ell(t[:, None] * v), t * ell(v), atol=1e-8)
        assert np.all(ell(v + w) <= ell(v) + ell(w) + 1e-8)


class TestLegendre:
    def test_ellipse_closed_form(self):
        H = ConstraintH.ellipsoid(ELLIPSE)
        w = np.array([1.0, 2.0])
        assert legendre_eval(H, w) == pytest.approx(w @ np.linalg.inv(ELLIPSE) @ w / 4 + 1)

    def test_support_via_legendre_matches(self):
        H = ConstraintH.ellipsoid(ELLIPSE)
        assert support_via_legendre(H, np.array([0.0, 1.0])) == pytest.approx(0.5, abs=1e-6)

    def test_requires_curvature_bounds(self):
        with pytest.raises(UnsupportedOperation):
            legendre_eval(ConstraintH.box(2), np.ones(2))


class TestInfConvolution:
    def test_half_square_fixed_on_constraint_set(self):
        """On ``{H <= 0}`` the envelope of ``|x|^2/2`` equals ``|x|^2/2``."""
        grid = Grid.cube(2.0, 2, 0.1)
        X = grid.points()
        g = Field(grid, 0.5 * np.sum(X**2, axis=-1))
        for H in (ConstraintH.ball(2), ConstraintH.ellipsoid(ELLIPSE)):
            out = inf_convolve(g, SupportFunction(H)).values
            inside = H(X) <= 0
            assert np.max(np.abs(out - g.values)[inside]) <= grid.hmax**2

    def test_closed_form_envelope_is_lower(self):
        grid = Grid.cube(2.0, 2, 0.1)
        g = Field(grid, 0.5 * np.sum(grid.points() ** 2, axis=-1))
        ell = SupportFunction(ConstraintH.box(2))
        np.testing.assert_allclose(inf_convolve(g, ell).values, half_square_envelope(ell, grid.points()),
                                   atol=1e-12)

    def test_sweep_matches_scan_for_box(self):
        grid = Grid.cube(1.0, 2, 0.1)
        rng = np.random.default_rng(2)
        g = Field(grid, rng.uniform(0, 3, size=grid.shape))
        ell = SupportFunction(ConstraintH.box(2))
        exact = inf_convolve(g, ell).values
        relaxed = inf_convolve(g, ell, scan_limit=10).values
        np.testing.assert_allclose(relaxed, exact, atol=1e-12)

    def test_query_mask(self):
        grid = Grid.cube(1.0, 1, 0.1)
        g = Field(grid, np.abs(grid.points()[..., 0]) * 5)
        q = np.zeros(grid.shape, bool)
        q[:3] = True
        out = inf_convolve(g, SupportFunction(ConstraintH.ball(1)), query=q).values
        np.testing.assert_array_equal(out[3:], g.values[3:])


class TestProjection:
    def test_ellipse_projection_is_on_boundary(self):
        H = ConstraintH.ellipsoid(ELLIPSE)
        x = np.array([[3.0, 1.0], [0.1, 0.1], [0.0, 2.0]])
        y = project_onto_set(H, x)
        np.testing.assert_allclose(H(y[[0, 2]]), 0.0, atol=1e-10)
        np.testing.assert_allclose(y[1], x[1])


def test_direction_mesh_unit():
    for n in (1, 2, 3):
        d = direction_mesh(n)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
