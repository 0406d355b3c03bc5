"""Operators, costs, problem records and assumption validation."""

import numpy as np
import pytest

from gceigen.geometry import ConstraintH
from gceigen.problems import (
    BUILTINS,
    CostF,
    OperatorF,
    ProblemSpec,
    builtin,
    from_dict,
    scaled_cost,
    validate,
)


class TestOperatorF:
    def test_laplacian_is_minus_trace(self):
        F = OperatorF.laplacian(3)
        M = np.diag([1.0, 2.0, 3.0])
        assert F(M) == pytest.approx(-6.0)
        assert (F.theta, F.Theta) == (1.0, 1.0)

    def test_pucci_min_takes_smallest_branch(self):
        F = OperatorF.pucci_min([[1.0, 2.0], [2.0, 1.0]])
        M = np.diag([1.0, 0.0])
        assert F(M) == pytest.approx(-2.0)
        assert (F.theta, F.Theta) == (1.0, 2.0)

    def test_vectorized(self):
        F = OperatorF.linear([[2.0, 0.5], [0.5, 1.0]])
        M = np.random.default_rng(0).normal(size=(7, 2, 2))
        M = M + np.swapaxes(M, 1, 2)
        np.testing.assert_allclose(F(M), [F(m) for m in M])

    @pytest.mark.parametrize("A", [[[1.0, 2.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, -1.0]]],
                             ids=["asymmetric", "indefinite"])
    def test_rejects_bad_matrices(self, A):
        with pytest.raises(ValueError):
            OperatorF.linear(A)

    def test_zero_operator(self):
        F = OperatorF.zero(2)
        assert F.theta == 0.0
        assert F(np.eye(2)) == 0.0
        assert F.rotational


class TestCostF:
    def test_quadratic_and_scaling(self):
        f = CostF.quadratic(2, center=[1.0, 0.0], scale=2.0, offset=1.0)
        assert float(f(np.array([1.0, 1.0]))) == pytest.approx(3.0)
        g = f.scaled(3.0)
        assert float(g(np.array([1.0, 1.0]))) == pytest.approx(9.0)
        assert g.params["scale"] == 6.0 and g.inf == 3.0

    def test_radial_flag(self):
        assert CostF.quadratic(2).radial
        assert not CostF.quadratic(2, center=[0.1, 0.0]).radial
        assert not CostF.quadform(np.diag([1.0, 2.0])).radial


class TestProblemSpec:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ProblemSpec(2, OperatorF.laplacian(2), ConstraintH.ball(1), CostF.quadratic(2))

    def test_K1_quartic(self):
        # -F(I) = 1 and the largest |x|^2 on the unit ball is 1
        assert builtin("quartic1d").K1() == pytest.approx(2.0)

    def test_K1_box(self):
        # -F(I) = 2 and the box corner has |x|^2 = 2
        assert builtin("separable2d").K1() == pytest.approx(4.0)

    def test_unknown_builtin(self):
        with pytest.raises(KeyError):
            builtin("nope")

    def test_scaled_cost_name(self):
        assert scaled_cost(builtin("quartic1d"), 2.0).name == "quartic1d*2"


class TestValidate:
    @pytest.mark.parametrize("name", sorted(BUILTINS))
    def test_builtins_pass(self, name):
        report = validate(builtin(name))
        assert report.ok, [c.name for c in report.failures()]

    def test_constant_H_fails_compactness(self):
        H = ConstraintH.custom(lambda p: -np.ones(p.shape[:-1]), 2)
        spec = ProblemSpec(2, OperatorF.laplacian(2), H, CostF.quadratic(2))
        report = validate(spec)
        assert not report["H_compact_sublevel"].passed
        assert report["H_compact_sublevel"].witness is not None

    def test_linear_growth_fails_superlinearity(self):
        f = CostF.custom(lambda x: np.linalg.norm(x, axis=-1), 1)
        spec = ProblemSpec(1, OperatorF.laplacian(1), ConstraintH.ball(1), f)
        assert not validate(spec)["f_superlinear"].passed

    def test_nonconvex_cost_fails(self):
        f = CostF.custom(lambda x: np.sum(x**2, axis=-1) + 3 * np.cos(3 * x[..., 0]), 1)
        spec = ProblemSpec(1, OperatorF.laplacian(1), ConstraintH.ball(1), f)
        report = validate(spec)
        assert not report["f_convex"].passed

    def test_wrong_symmetry_tag(self):
        spec = ProblemSpec(2, OperatorF.laplacian(2), ConstraintH.box(2), CostF.quadratic(2),
                           symmetry="rotational")
        assert not validate(spec)["rotational_symmetry"].passed

    def test_deterministic(self):
        a = validate(builtin("ellipse2d"), seed=7).as_dict()
        b = validate(builtin("ellipse2d"), seed=7).as_dict()
        assert a == b


class TestFromDict:
    def test_inline_problem(self):
        spec = from_dict({"n": 2, "F": {"kind": "laplacian"}, "H": {"form": "ellipsoid", "A": [[1, 0], [0, 4]]},
                          "f": {"kind": "quadratic", "center": [0.1, 0.0]}})
        assert spec.H.form == "ellipsoid" and spec.n == 2
        assert validate(spec).ok

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="F.kind"):
            from_dict({"n": 1, "F": {"kind": "max"}})
