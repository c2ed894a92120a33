import numpy as np
import pytest

from saddlenet.game_model import Box, ConcaveConvexOracle, OutOfBox
from saddlenet.verification import (
    DimensionTooLarge,
    best_response_gap,
    brute_force_saddle,
    cocoercivity_check,
    cocoercivity_terms,
    descent_gap,
    finite_diff_check,
    midpoint_concavity_violation,
    saddle_inequality_check,
)

unit = Box([-1.0], [1.0])
tight = ConcaveConvexOracle(
    value=lambda x, y: float(-0.5 * x @ x + 0.5 * y @ y),
    grad_x1=lambda x, y: -x,
    grad_x2=lambda x, y: y,
)


def test_tight_case_has_zero_slack():
    rep = cocoercivity_check(tight, 1.0, 2000, unit, unit, seed=1)
    assert np.max(np.abs(rep.slack)) < 1e-12
    assert rep.passed


def test_underestimated_K_is_caught():
    rep = cocoercivity_check(tight, 0.5, 200, unit, unit)
    assert not rep.passed
    assert rep.min_slack < 0


def test_cocoercivity_terms_by_hand():
    x, y, xp, yp = (np.array([v]) for v in (1.0, 0.5, -1.0, 0.0))
    lhs, rhs = cocoercivity_terms(tight, 1.0, x, y, xp, yp)
    # lhs = (2)(-2) + (0.5)(0 - 0.5) = -4.25; rhs = -(4 + 0.25 + 4 + 0.25)/2
    assert lhs == pytest.approx(-4.25)
    assert rhs == pytest.approx(-4.25)


def test_cocoercivity_bilinear_term():
    f = ConcaveConvexOracle(
        value=lambda x, y: float(-x @ x + y @ y + 2 * x @ y),
        grad_x1=lambda x, y: -2 * x + 2 * y,
        grad_x2=lambda x, y: 2 * y + 2 * x,
    )
    box = Box([-2.0, -2.0], [2.0, 2.0])
    assert cocoercivity_check(f, 2 * np.sqrt(2), 500, box, box).passed


def test_cocoercivity_bad_args():
    with pytest.raises(ValueError):
        cocoercivity_check(tight, 0.0, 10, unit, unit)
    with pytest.raises(ValueError):
        cocoercivity_check(tight, 1.0, 0, unit, unit)


def test_descent_gap_concave():
    j = lambda x: float(-(x @ x))
    g = lambda x: -2 * x
    pts = np.random.default_rng(0).uniform(-3, 3, (100, 2))
    gaps = descent_gap(j, g, 2.0, 0.0, pts)
    np.testing.assert_allclose(gaps, 0.0, atol=1e-12)  # tight for a quadratic
    assert np.min(descent_gap(j, g, 1.0, 0.0, pts)) < 0


def test_finite_diff_check():
    assert finite_diff_check(tight, 20, 1e-5, unit, unit) < 1e-9
    wrong = ConcaveConvexOracle(tight.value, lambda x, y: x, tight.grad_x2)
    assert finite_diff_check(wrong, 20, 1e-5, unit, unit) > 0.1
    with pytest.raises(ValueError):
        finite_diff_check(tight, 5, 0.0, unit, unit)


def U_bilinear(x, y):
    return -x[..., 0] ** 2 + y[..., 0] ** 2 + x[..., 0] * y[..., 0]


def test_brute_force_bilinear():
    bf = brute_force_saddle(U_bilinear, Box([-1.0], [1.0]), Box([-1.0], [1.0]), grid=41)
    assert bf.maxmin <= bf.minmax + 1e-12
    np.testing.assert_allclose(bf.x1, [0.0], atol=bf.cell1[0])
    np.testing.assert_allclose(bf.x2, [0.0], atol=bf.cell2[0])


def test_brute_force_offcentre():
    def U(x, y):
        return -(x[..., 0] - 0.3) ** 2 + (y[..., 0] + 0.2) ** 2
    bf = brute_force_saddle(U, unit, unit, grid=21)
    assert abs(bf.x1[0] - 0.3) <= bf.cell1[0]
    assert abs(bf.x2[0] + 0.2) <= bf.cell2[0]
    assert bf.maxmin == pytest.approx(bf.minmax)


def test_brute_force_nonconcave_gap():
    # convex in x: no saddle, so max-min stays strictly below min-max
    def U(x, y):
        return (x[..., 0] - y[..., 0]) ** 2
    bf = brute_force_saddle(U, unit, unit, grid=21)
    assert bf.maxmin < bf.minmax


def test_brute_force_dimension_limit():
    big = Box(np.zeros(4), np.ones(4))
    with pytest.raises(DimensionTooLarge):
        brute_force_saddle(lambda a, b: 0, big, unit)


def test_saddle_inequality():
    f = lambda x, y: float(U_bilinear(np.asarray(x), np.asarray(y)))
    assert saddle_inequality_check(f, ([0.0], [0.0]), unit, unit, 500) <= 1e-15
    assert saddle_inequality_check(f, ([0.5], [0.0]), unit, unit, 500) > 0
    with pytest.raises(OutOfBox):
        saddle_inequality_check(f, ([5.0], [0.0]), unit, unit)


def test_midpoint_probe():
    assert midpoint_concavity_violation(tight, unit, unit) <= 0
    convex_x = ConcaveConvexOracle(lambda x, y: float(x @ x), lambda x, y: 2 * x, lambda x, y: 0 * y)
    assert midpoint_concavity_violation(convex_x, unit, unit) > 0


def test_best_response_gap():
    assert best_response_gap(U_bilinear, [0.0], [0.0], unit, unit) == pytest.approx(0.0, abs=1e-12)
    assert best_response_gap(U_bilinear, [0.5], [0.5], unit, unit) > 0
