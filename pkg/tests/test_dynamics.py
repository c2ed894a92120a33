import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddlenet.dynamics import (
    DynamicsError,
    IntegratorSettings,
    NonFiniteState,
    NonpositiveAlpha,
    StackedState,
    conservation_residual,
    equilibrium_reference,
    field_directed,
    field_undirected,
    integrate,
    linear_system_matrix,
    lyapunov_directed,
    lyapunov_undirected,
)
from saddlenet.game_model import DimensionMismatch
from saddlenet.graph_core import directed_cycle, undirected_cycle, undirected_path
from saddlenet.scenarios import (
    QuadraticGame,
    build_quadratic_game,
    build_zero_game,
    random_state,
)


@pytest.fixture
def quad():
    spec = QuadraticGame.scalar(-1.0, 1.0, 0.5)
    return build_quadratic_game(spec, undirected_cycle(3), undirected_path(2))


def test_state_vector_roundtrip(rng):
    s = StackedState(rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal(2),
                     rng.standard_normal(2), 1.5)
    s2 = StackedState.from_vector(s.vector(), 3, 2, 1.5)
    np.testing.assert_array_equal(s.vector(), s2.vector())
    with pytest.raises(DimensionMismatch):
        StackedState(np.zeros(3), np.zeros(2), np.zeros(1), np.zeros(1))


def test_field_at_equilibrium_is_zero(quad):
    game, saddle = quad
    ref = equilibrium_reference(game, *saddle)
    for f in (field_undirected(game, ref.state()), field_directed(game, ref.state(), 2.0)):
        assert np.max(np.abs(f.vector())) < 1e-14


def test_field_by_hand():
    # zero payoffs, 2-path: x1' = -alpha L x1 - L z1, z1' = L x1
    game = build_zero_game(undirected_path(2), undirected_path(2))
    s = StackedState([1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0])
    f = field_directed(game, s, 2.0)
    L = np.array([[1, -1], [-1, 1.0]])
    np.testing.assert_allclose(f.x1, -2 * L @ [1, 0] - L @ [0, 1])
    np.testing.assert_allclose(f.z1, L @ [1, 0])
    np.testing.assert_allclose(field_undirected(game, s).x1, -L @ [1, 0] - L @ [0, 1])


def test_field_matches_linear_matrix_for_zero_game(rng):
    game = build_zero_game(directed_cycle(4), undirected_cycle(3))
    s = random_state(game, rng)
    M = linear_system_matrix(game, 1.7)
    # the matrix uses (x_l, z_l) ordering per network: same as the state vector
    np.testing.assert_allclose(M @ s.vector(), field_directed(game, s, 1.7).vector(), atol=1e-12)


def test_field_errors(quad):
    game, _ = quad
    s = StackedState(np.zeros(3), np.zeros(3), np.zeros(2), np.zeros(2))
    with pytest.raises(NonpositiveAlpha):
        field_directed(game, s, 0.0)
    with pytest.raises(DimensionMismatch):
        field_undirected(game, StackedState(np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2)))
    with pytest.raises(NonpositiveAlpha):
        integrate(game, s, alpha=-1.0)


def test_nonsmooth_rejected_by_directed_flow(quad):
    from dataclasses import replace
    game, _ = quad
    p = replace(game.payoffs1[0], nonsmooth=True)
    ns = replace(game, payoffs1=(p,) + game.payoffs1[1:])
    s = StackedState(np.zeros(3), np.zeros(3), np.zeros(2), np.zeros(2))
    with pytest.raises(DynamicsError):
        field_directed(ns, s, 1.0)
    field_undirected(ns, s)


def test_lyapunov_values():
    z = np.zeros(2)
    ref = StackedState(z, z, z, z)
    from saddlenet.dynamics import ReferencePoint
    r = ReferencePoint(z, z, z, z)
    s = StackedState([1.0, 0.0], [0.0, 2.0], z, z)
    assert lyapunov_undirected(s, r) == pytest.approx(0.5 * (1 + 4))
    # y = beta x + z = (2, 2) for beta = 2
    assert lyapunov_directed(s, r, 2.0) == pytest.approx(0.5 * (1 + 8))
    with pytest.raises(ValueError):
        lyapunov_directed(s, r, 0.0)
    assert lyapunov_undirected(ref, r) == 0.0


def test_equilibrium_reference_sums(quad):
    game, saddle = quad
    ref = equilibrium_reference(game, *saddle, z_sums=(np.array([0.7]), np.array([-0.2])))
    assert ref.z1.sum() == pytest.approx(0.7)
    assert ref.z2.sum() == pytest.approx(-0.2)


def test_settings_validation():
    for kw in ({"h": 0}, {"T": -1}, {"record_every": 0}, {"patience": 0}):
        with pytest.raises(ValueError):
            IntegratorSettings(**kw)


def test_undirected_flow_converges(quad, rng):
    game, saddle = quad
    s0 = random_state(game, rng)
    ref = equilibrium_reference(game, *saddle,
                                z_sums=(s0.z1.reshape(3, 1).sum(0), s0.z2.reshape(2, 1).sum(0)))
    rec = integrate(game, s0, settings=IntegratorSettings(h=0.02, T=60, record_every=10), monitor=ref)
    x1, x2 = rec.final_consensus
    assert abs(x1[0] - saddle[0][0]) < 1e-6 and abs(x2[0] - saddle[1][0]) < 1e-6
    assert rec.lyapunov_increases(1e-9) == 0
    assert rec.max_conservation_drift() < 1e-12
    assert np.max(np.abs(rec.final.vector() - ref.state().vector())) < 1e-5


def test_integration_deterministic(quad, rng):
    game, _ = quad
    s0 = random_state(game, rng)
    st_ = IntegratorSettings(h=0.05, T=5, record_every=3)
    a = integrate(game, s0, 2.0, st_)
    b = integrate(game, s0, 2.0, st_)
    np.testing.assert_array_equal(a.state_array(), b.state_array())


def test_early_stop(quad):
    game, saddle = quad
    s0 = equilibrium_reference(game, *saddle).state()
    rec = integrate(game, s0, 3.0, IntegratorSettings(h=0.01, T=100, record_every=5, patience=3))
    assert rec.converged and rec.steps == 15


def test_divergence_carries_partial_record(rng):
    game = build_zero_game(directed_cycle(5), directed_cycle(5))
    s0 = random_state(game, rng)
    with pytest.raises(NonFiniteState) as exc:
        integrate(game, s0, 1.0, IntegratorSettings(h=0.05, T=200, record_every=10, blowup_bound=1e6))
    rec = exc.value.record
    assert rec.diverged and len(rec.times) > 1
    assert np.max(np.abs(rec.states[-1])) > 1e6


def test_rk4_order(quad, rng):
    game, _ = quad
    s0 = random_state(game, rng)

    def final(h):
        return integrate(game, s0, 2.0, IntegratorSettings(h=h, T=1.0, record_every=10**6,
                                                           stop_tol=None)).final.vector()

    ref = final(1e-3)
    e1 = np.max(np.abs(final(0.1) - ref))
    e2 = np.max(np.abs(final(0.05) - ref))
    assert 12 < e1 / e2 < 20  # fourth order: ratio near 16


def test_csv_and_summary(tmp_path, quad, rng):
    game, _ = quad
    rec = integrate(game, random_state(game, rng), 2.0, IntegratorSettings(h=0.1, T=1, record_every=2))
    rec.write_csv(tmp_path / "t.csv", game)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].split(",")[:2] == ["t", "x1_0_0"]
    assert len(lines) == len(rec.times) + 1
    rec.write_summary(tmp_path / "s.json")
    assert "converged" in (tmp_path / "s.json").read_text()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(0.5, 5.0))
def test_conservation_property(seed, alpha):
    rng = np.random.default_rng(seed)
    spec = QuadraticGame.random(rng, 2, 1)
    game, _ = build_quadratic_game(spec, directed_cycle(4), undirected_cycle(3))
    s0 = random_state(game, rng)
    rec = integrate(game, s0, alpha, IntegratorSettings(h=0.01, T=3, record_every=20))
    assert rec.max_conservation_drift() < 1e-10
    r = conservation_residual(rec.final, s0, game)
    assert max(r) < 1e-10
