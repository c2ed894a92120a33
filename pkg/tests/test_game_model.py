import numpy as np
import pytest

from saddlenet.game_model import (
    Box,
    DimensionMismatch,
    EngagementGraph,
    GameError,
    NotLiftable,
    OutOfBox,
    aggregate_U,
    aggregate_grad,
    check_extension_properties,
    evaluate_F,
    nash_residual,
)
from saddlenet.graph_core import undirected_cycle, undirected_path
from saddlenet.scenarios import QuadraticGame, build_quadratic_game


@pytest.fixture
def quad():
    spec = QuadraticGame(np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]),
                         np.array([0.5]), np.array([-0.25]))
    game, saddle = build_quadratic_game(spec, undirected_cycle(3), undirected_path(2))
    return spec, game, saddle


def test_box_contains_and_feasible():
    b = Box([0, 0], [2, 2], lambda P: P[:, 0] + P[:, 1] <= 2)
    assert b.contains([0.5, 0.5])
    assert not b.contains([1.5, 1.5])
    assert not b.contains([3, 0])
    np.testing.assert_array_equal(b.mask(np.array([[0.5, 0.5], [1.5, 1.5]])), [True, False])


def test_box_sampling_respects_feasibility(rng):
    b = Box([0, 0], [2, 2], lambda P: P[:, 0] + P[:, 1] <= 2)
    S = b.sample(rng, 500)
    assert S.shape == (500, 2)
    assert np.all(S.sum(axis=1) <= 2)
    with pytest.raises(GameError):
        Box([1.0], [0.0])


def test_engagement_constructors():
    e = EngagementGraph.one_to_one(3, 2)
    assert e.reads1 == ((0,), (1,), (0,))
    assert e.reads2 == ((0, 2), (1,))
    c = EngagementGraph.complete(2, 2)
    assert c.reads1 == ((0, 1), (0, 1))
    with pytest.raises(GameError):
        EngagementGraph(((),), ((0,),))
    with pytest.raises(GameError):
        EngagementGraph(((3,),), ((0,),))


def test_consensus_collapse(quad):
    spec, game, _ = quad
    for x, y in [(0.3, -0.7), (1.0, 2.0), (-2.0, 0.0)]:
        bx1, bx2 = game.consensus([x], [y])
        assert aggregate_U(game, 1, bx1, bx2) == pytest.approx(float(spec.U([x], [y])), abs=1e-12)
        assert aggregate_U(game, 2, bx1, bx2) == pytest.approx(float(spec.U([x], [y])), abs=1e-12)


def test_lifted_payoffs_equal_off_consensus(quad, rng):
    _, game, _ = quad
    for _ in range(20):
        a, b = rng.standard_normal(3), rng.standard_normal(2)
        assert aggregate_U(game, 1, a, b) == pytest.approx(aggregate_U(game, 2, a, b), abs=1e-12)


def test_aggregate_grad_is_gradient_of_lift(quad, rng):
    _, game, _ = quad
    a, b = rng.standard_normal(3), rng.standard_normal(2)
    eps = 1e-6
    g1 = aggregate_grad(game, 1, a, b)
    for k in range(3):
        e = np.zeros(3)
        e[k] = eps
        fd = (aggregate_U(game, 1, a + e, b) - aggregate_U(game, 1, a - e, b)) / (2 * eps)
        assert g1[k] == pytest.approx(fd, abs=1e-7)
    g2 = aggregate_grad(game, 2, a, b)
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        fd = (aggregate_U(game, 1, a, b + e) - aggregate_U(game, 1, a, b - e)) / (2 * eps)
        assert g2[k] == pytest.approx(fd, abs=1e-7)


def test_extension_properties(quad):
    _, game, _ = quad
    rep = check_extension_properties(game, samples=30)
    assert rep.max_violation < 1e-12
    assert rep.lift_violation < 1e-12


def test_dimension_mismatch(quad):
    _, game, _ = quad
    with pytest.raises(DimensionMismatch):
        aggregate_U(game, 1, np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        aggregate_U(game, 3, np.zeros(3), np.zeros(2))


def test_nash_residual_at_saddle_is_zero(quad):
    _, game, (x1, x2) = quad
    r1, r2 = nash_residual(game, x1, x2)
    assert r1 < 1e-14 and r2 < 1e-14
    assert max(nash_residual(game, x1 + 0.1, x2)) > 0.05
    with pytest.raises(OutOfBox):
        nash_residual(game, x1 + 100, x2)


def test_evaluate_F_at_consensus(quad):
    _, game, (x1, x2) = quad
    bx1, bx2 = game.consensus(x1, x2)
    z1 = np.arange(3.0)
    # L1 bx1 = 0 at consensus, so F1 = -U
    assert evaluate_F(game, 1, bx1, z1, bx2) == pytest.approx(-game.U(x1, x2))
    assert evaluate_F(game, 2, bx2, np.zeros(2), bx1) == pytest.approx(game.U(x1, x2))


def test_not_liftable_flags():
    from dataclasses import replace
    spec = QuadraticGame.scalar()
    game, _ = build_quadratic_game(spec, undirected_path(2), undirected_path(2))
    bad = replace(game, liftable=False)
    with pytest.raises(NotLiftable):
        bad.lifted_oracle()
    with pytest.raises(NotLiftable):
        evaluate_F(bad, 1, np.zeros(2), np.zeros(2), np.zeros(2))
