import numpy as np
import pytest

from saddlenet.game_model import GameError, aggregate_U, check_extension_properties
from saddlenet.graph_core import (
    directed_cycle,
    is_strongly_connected,
    is_weight_balanced,
    undirected_cycle,
    undirected_path,
)
from saddlenet.scenarios import (
    ChannelScenario,
    InvalidParams,
    LogDomainError,
    NotStrictlyConcaveConvex,
    QuadraticGame,
    build_channel_game,
    build_quadratic_game,
    build_zero_game,
    channel_terms,
    channel_topology,
    channel_U_at,
    example1_reference,
)
from saddlenet.verification import midpoint_concavity_violation, stationary_point


@pytest.fixture(scope="module")
def channel_game():
    return build_channel_game()


def test_channel_game_builds_with_exact_extensions(channel_game):
    rep = check_extension_properties(channel_game, samples=40, seed=3)
    assert rep.max_violation < 1e-12
    assert rep.lift_violation < 1e-9


def test_channel_engagement():
    g = build_channel_game(check_samples=0)
    assert g.engagement.reads1 == ((0,), (1, 3), (2,), (1, 3), (4,))
    assert g.engagement.reads2 == ((0,), (1, 3), (2,), (1, 3), (4,))


def test_total_capacity_formula():
    p = ChannelScenario()
    x, y = np.array([1.0, 0.5]), np.array([0.4, 0.2])
    powers = [1.0, 0.5, 1.0, 0.5, 6 - 2 - 1]
    noise = [0.4, 0.2, 0.2, 0.2, 4 - 0.4 - 0.6]
    sig = [1, 4, 1, 4, 1]
    expected = sum(np.log(1 + 8 * pw / (s + n)) for pw, s, n in zip(powers, sig, noise))
    assert p.total_capacity(x, y) == pytest.approx(expected, rel=1e-14)


def test_consensus_equals_total_capacity(channel_game, rng):
    p = ChannelScenario()
    for _ in range(10):
        x = channel_game.box1.sample(rng, 1)[0]
        y = channel_game.box2.sample(rng, 1)[0]
        assert channel_U_at(channel_game, x, y) == pytest.approx(p.total_capacity(x, y), abs=1e-12)


def test_base_payoffs_sum_to_capacity(rng):
    p = ChannelScenario()
    side1, side2 = channel_terms(p)
    x, y = np.array([1.2, 0.8]), np.array([1.0, 0.5])
    for side in (side1, side2):
        tot = sum(t.value(p.beta_chan, x, y) for terms in side for t in terms)
        assert tot == pytest.approx(p.total_capacity(x, y), rel=1e-13)


def test_channel_payoffs_concave_convex(channel_game):
    oracle = channel_game.lifted_oracle()
    b1, b2 = channel_game.stacked_boxes()
    assert midpoint_concavity_violation(oracle, b1, b2, samples=200) <= 1e-12


def test_invalid_params():
    with pytest.raises(InvalidParams):
        build_channel_game(ChannelScenario.from_pair(P=0.0))
    with pytest.raises(InvalidParams):
        build_channel_game(ChannelScenario.from_pair(C=-1.0))
    with pytest.raises(InvalidParams):
        build_channel_game(ChannelScenario.from_pair(sigma1=0.0))
    with pytest.raises(InvalidParams):
        build_channel_game(topology="star")


def test_log_guard(channel_game):
    bx1, bx2 = channel_game.consensus([3.0, 3.0], [0.0, 0.0])  # ch5 power = -6
    with pytest.raises(LogDomainError):
        aggregate_U(channel_game, 1, bx1, bx2)


def test_feasible_sets():
    p = ChannelScenario()
    np.testing.assert_array_equal(p.feasible_x(np.array([[1, 1], [2, 1.5]])), [True, False])
    np.testing.assert_array_equal(p.feasible_y(np.array([[1, 1], [1, 0.5]])), [True, True])
    np.testing.assert_array_equal(p.feasible_y(np.array([[2, 1]])), [False])


@pytest.mark.parametrize("name", ["reference", "bidirected-cycle", "directed-cycle"])
def test_topologies_balanced_and_connected(name):
    for g in channel_topology(name):
        assert is_weight_balanced(g) and is_strongly_connected(g)


def test_example1_reference():
    ref = example1_reference()
    assert ref.state0.x1.size == 10 and ref.state0.x2.size == 10
    np.testing.assert_array_equal(ref.state0.z1, 0)
    np.testing.assert_array_equal(ref.state0.z2, 0)
    np.testing.assert_array_equal(ref.state0.x1[:4], [1, 0.5, 0.5, 1])
    np.testing.assert_array_equal(ref.state0.x2[-2:], [1, 0.5])
    np.testing.assert_array_equal(ref.x_star, [1.3371, 1.0315])
    np.testing.assert_array_equal(ref.y_star, [1.5027, 0.3366])
    assert ref.z1_star.size == 10 and ref.z2_star.size == 10
    assert {"z1_star", "z2_star", "x_star", "y_star"} <= set(ref.caveats)


def test_reported_z_consistent_with_reference_topology(channel_game):
    # L z* reproduces the payoff gradients at the reported point to print precision
    ref = example1_reference()
    bx1, bx2 = channel_game.consensus(ref.x_star, ref.y_star)
    from saddlenet.game_model import aggregate_grad
    g1 = aggregate_grad(channel_game, 1, bx1, bx2)
    g2 = aggregate_grad(channel_game, 2, bx1, bx2)
    assert np.max(np.abs(channel_game.L1 @ ref.z1_star - g1)) < 1e-3
    assert np.max(np.abs(channel_game.L2 @ ref.z2_star + g2)) < 1e-3


def test_exact_channel_saddle(channel_game):
    x, y = stationary_point(channel_game, [1.3, 1.0], [1.5, 0.3])
    np.testing.assert_allclose(x, [1.33679603, 1.03176302], atol=1e-7)
    np.testing.assert_allclose(y, [1.50907334, 0.33496944], atol=1e-7)


def test_quadratic_scalar_saddle():
    game, (x, y) = build_quadratic_game(QuadraticGame.scalar(), undirected_cycle(3), undirected_cycle(3))
    np.testing.assert_allclose([x[0], y[0]], [0.0, 0.0])
    game, (x, y) = build_quadratic_game(QuadraticGame.scalar(c=1.0), undirected_cycle(3),
                                        undirected_cycle(3))
    np.testing.assert_allclose([x[0], y[0]], [0.0, 0.0])


def test_quadratic_saddle_solves_stationarity(rng):
    spec = QuadraticGame.random(rng, 2, 3)
    x, y = spec.saddle()
    np.testing.assert_allclose(spec.grad_x1(x, y), 0, atol=1e-12)
    np.testing.assert_allclose(spec.grad_x2(x, y), 0, atol=1e-12)


def test_quadratic_definiteness():
    with pytest.raises(NotStrictlyConcaveConvex):
        QuadraticGame.scalar(a=1.0)
    with pytest.raises(NotStrictlyConcaveConvex):
        QuadraticGame.scalar(b=0.0)
    with pytest.raises(GameError):
        QuadraticGame(np.array([[-1, 0.5], [0, -1]]), np.eye(1), np.zeros((2, 1)), np.zeros(2), np.zeros(1))


def test_quadratic_lift_unequal_sizes(rng):
    spec = QuadraticGame.random(rng, 2, 1)
    game, _ = build_quadratic_game(spec, directed_cycle(4), undirected_path(3))
    rep = check_extension_properties(game, samples=20)
    assert rep.max_violation < 1e-12 and rep.lift_violation < 1e-10


def test_zero_game():
    g = build_zero_game(directed_cycle(3), directed_cycle(3))
    assert g.U([0.3], [0.1]) == 0.0
