"""Two-network zero-sum games, extended payoffs and the lifted payoff.

Conventions
-----------
Network 1 (agents ``v_i``) maximizes, network 2 (agents ``w_j``) minimizes.
Stacked estimates are flat arrays: ``bx1`` has length ``n1 * d1`` with agent
``i`` occupying ``bx1[i*d1:(i+1)*d1]``; likewise ``bx2``.

An :class:`ExtendedPayoff` is always called as ``payoff(own, opponent_stack)``
where ``own`` is the agent's own estimate of its network state and
``opponent_stack`` is the full opponent stack (of which it may only read the
blocks listed in ``reads``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .graph_core import WeightedDigraph, kron_lift

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class GameError(ValueError):
    pass


class DimensionMismatch(GameError):
    pass


class NotLiftable(GameError):
    pass


class OutOfBox(GameError):
    pass


@dataclass(frozen=True)
class ConcaveConvexOracle:
    """Value and partial gradients of ``f(x1, x2)``, concave in x1, convex in x2.

    When ``nonsmooth`` is set, ``grad_x1``/``grad_x2`` are understood to return
    one element of the generalized gradient (a fixed selection).
    """

    value: Callable[[np.ndarray, np.ndarray], float]
    grad_x1: ArrayFn
    grad_x2: ArrayFn
    nonsmooth: bool = False


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]`` with an optional feasibility predicate.

    ``feasible`` further restricts the box (e.g. a budget constraint); it is
    used only for sampling and grid search, never during integration.
    """

    lo: np.ndarray
    hi: np.ndarray
    feasible: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # (n, base) when this box is the n-fold product of ``base``; lets sampling
    # work block by block instead of rejecting whole stacks
    blocks: Optional[tuple[int, "Box"]] = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise GameError(f"bad box bounds lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        inside = np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol)
        if inside and self.feasible is not None:
            inside = bool(self.feasible(x[None, :])[0])
        return bool(inside)

    def mask(self, pts: np.ndarray) -> np.ndarray:
        """Feasibility mask for an ``(m, dim)`` array of points."""
        pts = np.asarray(pts, dtype=float)
        ok = np.all((pts >= self.lo) & (pts <= self.hi), axis=-1)
        if self.feasible is not None:
            ok &= np.asarray(self.feasible(pts), dtype=bool)
        return ok

    def sample(self, rng: np.random.Generator, m: int, shrink: float = 0.0) -> np.ndarray:
        """Draw ``m`` feasible points uniformly (rejection sampling).

        ``shrink`` pulls the sampling box toward its centre by that fraction
        of the half-width, to stay off the boundary.
        """
        if self.blocks is not None:
            n, base = self.blocks
            return base.sample(rng, m * n, shrink).reshape(m, n * base.dim)
        centre = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo) * (1.0 - shrink)
        lo, hi = centre - half, centre + half
        out = np.empty((0, self.dim))
        for _ in range(1000):
            need = m - len(out)
            if need <= 0:
                break
            cand = rng.uniform(lo, hi, size=(max(2 * need, 16), self.dim))
            if self.feasible is not None:
                cand = cand[np.asarray(self.feasible(cand), dtype=bool)]
            out = np.vstack([out, cand[:need]])
        if len(out) < m:
            raise GameError("feasible region too small to sample")
        return out


@dataclass(frozen=True)
class EngagementGraph:
    """Bipartite out-neighbour lists.

    ``reads1[i]`` are the indices ``j`` of the agents ``w_j`` whose estimates
    agent ``v_i`` receives; ``reads2[j]`` the indices ``i`` read by ``w_j``.
    """

    reads1: tuple[tuple[int, ...], ...]
    reads2: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n1, n2 = len(self.reads1), len(self.reads2)
        for side, reads, other in ((1, self.reads1, n2), (2, self.reads2, n1)):
            for k, nb in enumerate(reads):
                if len(nb) == 0:
                    raise GameError(f"agent {k} of network {side} has no out-neighbour")
                if any(not 0 <= j < other for j in nb):
                    raise GameError(f"agent {k} of network {side} reads {nb}, out of range")

    @classmethod
    def from_pairs(cls, n1: int, n2: int, pairs: Sequence[tuple[int, int]]) -> "EngagementGraph":
        """Symmetric engagement: each ``(i, j)`` lets ``v_i`` and ``w_j`` see each other."""
        r1: list[set[int]] = [set() for _ in range(n1)]
        r2: list[set[int]] = [set() for _ in range(n2)]
        for i, j in pairs:
            r1[i].add(j)
            r2[j].add(i)
        return cls(tuple(tuple(sorted(s)) for s in r1), tuple(tuple(sorted(s)) for s in r2))

    @classmethod
    def one_to_one(cls, n1: int, n2: int) -> "EngagementGraph":
        """Agent ``v_i`` paired with ``w_{i mod n2}`` (and the reverse cover)."""
        pairs = {(i, i % n2) for i in range(n1)} | {(j % n1, j) for j in range(n2)}
        return cls.from_pairs(n1, n2, sorted(pairs))

    @classmethod
    def complete(cls, n1: int, n2: int) -> "EngagementGraph":
        return cls.from_pairs(n1, n2, [(i, j) for i in range(n1) for j in range(n2)])

    @property
    def n1(self) -> int:
        return len(self.reads1)

    @property
    def n2(self) -> int:
        return len(self.reads2)


@dataclass(frozen=True)
class ExtendedPayoff:
    """One agent's payoff over its own estimate and the opponent stack.

    ``base``, when given, is the agent's original payoff ``f(x1, x2)`` in
    network order (first argument always the maximizer's state); it is only
    used to check the consensus-restriction property.
    """

    value: Callable[[np.ndarray, np.ndarray], float]
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    reads: tuple[int, ...]
    base: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    nonsmooth: bool = False


@dataclass(frozen=True)
class TwoNetworkGame:
    g1: WeightedDigraph
    g2: WeightedDigraph
    engagement: EngagementGraph
    d1: int
    d2: int
    payoffs1: tuple[ExtendedPayoff, ...]
    payoffs2: tuple[ExtendedPayoff, ...]
    box1: Box
    box2: Box
    liftable: bool = True
    # vectorised reduced payoff U(x1, x2) over (..., d1), (..., d2); optional
    reduced_U: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "game"
    L1: np.ndarray = field(init=False, repr=False, compare=False)
    L2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.payoffs1) != self.g1.n or len(self.payoffs2) != self.g2.n:
            raise DimensionMismatch("one extended payoff per agent is required")
        if self.engagement.n1 != self.g1.n or self.engagement.n2 != self.g2.n:
            raise DimensionMismatch("engagement graph size differs from the networks")
        if self.box1.dim != self.d1 or self.box2.dim != self.d2:
            raise DimensionMismatch("state box dimension differs from d1/d2")
        for i, p in enumerate(self.payoffs1):
            if tuple(p.reads) != tuple(self.engagement.reads1[i]):
                raise GameError(f"payoff of v_{i} reads {p.reads}, engagement says "
                                f"{self.engagement.reads1[i]}")
        for j, p in enumerate(self.payoffs2):
            if tuple(p.reads) != tuple(self.engagement.reads2[j]):
                raise GameError(f"payoff of w_{j} reads {p.reads}, engagement says "
                                f"{self.engagement.reads2[j]}")
        object.__setattr__(self, "L1", kron_lift(self.g1, self.d1))
        object.__setattr__(self, "L2", kron_lift(self.g2, self.d2))

    @property
    def n1(self) -> int:
        return self.g1.n

    @property
    def n2(self) -> int:
        return self.g2.n

    @property
    def nonsmooth(self) -> bool:
        return any(p.nonsmooth for p in self.payoffs1 + self.payoffs2)

    def check_stacks(self, bx1: np.ndarray, bx2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        bx1 = np.asarray(bx1, dtype=float)
        bx2 = np.asarray(bx2, dtype=float)
        if bx1.shape != (self.n1 * self.d1,) or bx2.shape != (self.n2 * self.d2,):
            raise DimensionMismatch(
                f"stacks must have shapes ({self.n1 * self.d1},), ({self.n2 * self.d2},); "
                f"got {bx1.shape}, {bx2.shape}"
            )
        return bx1, bx2

    def consensus(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.tile(np.asarray(x1, float), self.n1), np.tile(np.asarray(x2, float), self.n2)

    def U(self, x1: np.ndarray, x2: np.ndarray) -> float:
        """The game payoff ``U(x1, x2)``, evaluated through consensus stacks."""
        if self.reduced_U is not None:
            return float(self.reduced_U(np.asarray(x1, float), np.asarray(x2, float)))
        return aggregate_U(self, 1, *self.consensus(x1, x2))

    def U_batched(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        """``U`` over broadcastable batches ``(..., d1)`` and ``(..., d2)``."""
        X1 = np.asarray(X1, float)
        X2 = np.asarray(X2, float)
        if self.reduced_U is not None:
            return np.asarray(self.reduced_U(X1, X2))
        shape = np.broadcast_shapes(X1.shape[:-1], X2.shape[:-1])
        A = np.broadcast_to(X1, shape + (self.d1,)).reshape(-1, self.d1)
        B = np.broadcast_to(X2, shape + (self.d2,)).reshape(-1, self.d2)
        return np.array([self.U(a, b) for a, b in zip(A, B)]).reshape(shape)

    def lifted_oracle(self) -> ConcaveConvexOracle:
        """``U~`` over stacked estimates as a concave-convex oracle."""
        if not self.liftable:
            raise NotLiftable(f"{self.name}: U~1 and U~2 are not declared equal")
        return ConcaveConvexOracle(
            value=lambda a, b: aggregate_U(self, 1, a, b),
            grad_x1=lambda a, b: aggregate_grad(self, 1, a, b),
            grad_x2=lambda a, b: aggregate_grad(self, 2, a, b),
            nonsmooth=self.nonsmooth,
        )

    def stacked_boxes(self) -> tuple[Box, Box]:
        """Product boxes for the stacks; feasibility applies blockwise."""
        def blockwise(box: Box, n: int, d: int):
            if box.feasible is None:
                return None
            return lambda P: np.all(box.feasible(P.reshape(-1, d)).reshape(len(P), n), axis=1)

        b1 = Box(np.tile(self.box1.lo, self.n1), np.tile(self.box1.hi, self.n1),
                 blockwise(self.box1, self.n1, self.d1), (self.n1, self.box1))
        b2 = Box(np.tile(self.box2.lo, self.n2), np.tile(self.box2.hi, self.n2),
                 blockwise(self.box2, self.n2, self.d2), (self.n2, self.box2))
        return b1, b2


def _blocks(stack: np.ndarray, n: int, d: int) -> np.ndarray:
    return stack.reshape(n, d)


def aggregate_U(game: TwoNetworkGame, side: int, bx1: np.ndarray, bx2: np.ndarray) -> float:
    """Network payoff ``U~_side``: the sum of that network's extended payoffs."""
    bx1, bx2 = game.check_stacks(bx1, bx2)
    if side == 1:
        X1 = _blocks(bx1, game.n1, game.d1)
        return float(sum(p.value(X1[i], bx2) for i, p in enumerate(game.payoffs1)))
    if side == 2:
        X2 = _blocks(bx2, game.n2, game.d2)
        return float(sum(p.value(X2[j], bx1) for j, p in enumerate(game.payoffs2)))
    raise ValueError(f"side must be 1 or 2, got {side}")


def aggregate_grad(game: TwoNetworkGame, side: int, bx1: np.ndarray, bx2: np.ndarray) -> np.ndarray:
    """Stack of each agent's gradient with respect to its own estimate.

    For a liftable game this is ``grad_{x_side} U~``.
    """
    bx1, bx2 = game.check_stacks(bx1, bx2)
    if side == 1:
        X1 = _blocks(bx1, game.n1, game.d1)
        return np.concatenate([np.atleast_1d(p.grad(X1[i], bx2))
                               for i, p in enumerate(game.payoffs1)])
    if side == 2:
        X2 = _blocks(bx2, game.n2, game.d2)
        return np.concatenate([np.atleast_1d(p.grad(X2[j], bx1))
                               for j, p in enumerate(game.payoffs2)])
    raise ValueError(f"side must be 1 or 2, got {side}")


def evaluate_F(
    game: TwoNetworkGame, side: int, bx: np.ndarray, bz: np.ndarray, bx_other: np.ndarray
) -> float:
    """Saddle-characterisation functions.

    ``F1(x1, z1, x2) = -U~(x1, x2) + x1' L1 z1 + 1/2 x1' L1 x1`` and
    ``F2(x2, z2, x1) = U~(x1, x2) + x2' L2 z2 + 1/2 x2' L2 x2``.
    """
    if not game.liftable:
        raise NotLiftable(f"{game.name}: F is defined only when U~1 = U~2")
    bx = np.asarray(bx, float)
    bz = np.asarray(bz, float)
    if side == 1:
        bx1, bx2 = game.check_stacks(bx, bx_other)
        L, sign = game.L1, -1.0
    elif side == 2:
        bx1, bx2 = game.check_stacks(bx_other, bx)
        L, sign = game.L2, 1.0
    else:
        raise ValueError(f"side must be 1 or 2, got {side}")
    if bz.shape != bx.shape:
        raise DimensionMismatch("z stack must match x stack")
    return float(sign * aggregate_U(game, 1, bx1, bx2) + bx @ L @ bz + 0.5 * bx @ L @ bx)


def nash_residual(game: TwoNetworkGame, x1: np.ndarray, x2: np.ndarray,
                  check_box: bool = True) -> tuple[float, float]:
    """Norms of ``grad_{x1} U`` and ``grad_{x2} U`` at ``(x1, x2)``.

    Each agent's gradient at a consensus stack equals the gradient of its
    base payoff, so the blocks are summed to get the gradient of ``U``.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    if check_box and not (game.box1.contains(x1) and game.box2.contains(x2)):
        raise OutOfBox(f"({x1}, {x2}) lies outside the state boxes")
    bx1, bx2 = game.consensus(x1, x2)
    g1 = aggregate_grad(game, 1, bx1, bx2).reshape(game.n1, game.d1).sum(axis=0)
    g2 = aggregate_grad(game, 2, bx1, bx2).reshape(game.n2, game.d2).sum(axis=0)
    return float(np.linalg.norm(g1)), float(np.linalg.norm(g2))


@dataclass
class ExtensionReport:
    consensus_violation1: np.ndarray  # per agent of network 1
    consensus_violation2: np.ndarray
    locality_violation1: np.ndarray
    locality_violation2: np.ndarray
    lift_violation: float  # max |U~1 - U~2| on random stacks

    @property
    def max_violation(self) -> float:
        parts = [self.consensus_violation1, self.consensus_violation2,
                 self.locality_violation1, self.locality_violation2]
        return float(max(np.max(np.nan_to_num(p, nan=0.0), initial=0.0) for p in parts))

    def to_dict(self) -> dict:
        return {
            "consensus_violation1": self.consensus_violation1.tolist(),
            "consensus_violation2": self.consensus_violation2.tolist(),
            "locality_violation1": self.locality_violation1.tolist(),
            "locality_violation2": self.locality_violation2.tolist(),
            "lift_violation": self.lift_violation,
            "max_violation": self.max_violation,
        }


def check_extension_properties(
    game: TwoNetworkGame, samples: int = 100, seed: int = 0
) -> ExtensionReport:
    """Sample the consensus-restriction and locality properties of every agent.

    Consensus restriction: ``f~(x, 1 kron y) == f(x, y)`` (skipped, reported
    as nan, for agents without a ``base``). Locality: perturbing opponent
    blocks the agent does not read leaves its value unchanged.
    """
    rng = np.random.default_rng(seed)
    b1, b2 = game.stacked_boxes()

    def run(payoffs, own_box, opp_box, n_opp, d_opp, own_is_x1):
        cons = np.full(len(payoffs), np.nan)
        loc = np.zeros(len(payoffs))
        for k, p in enumerate(payoffs):
            owns = own_box.sample(rng, samples)
            opps = opp_box.sample(rng, samples)
            if p.base is not None:
                worst = 0.0
                for x, y in zip(owns, opps):
                    ext = p.value(x, np.tile(y, n_opp))
                    ref = p.base(x, y) if own_is_x1 else p.base(y, x)
                    worst = max(worst, abs(ext - ref))
                cons[k] = worst
            hidden = [m for m in range(n_opp) if m not in p.reads]
            if hidden:
                stacks = (b2 if own_is_x1 else b1).sample(rng, 2 * samples)
                worst = 0.0
                for s in range(samples):
                    x = owns[s]
                    a, b = stacks[2 * s].copy(), stacks[2 * s + 1]
                    pert = a.copy()
                    for m in hidden:
                        pert[m * d_opp:(m + 1) * d_opp] = b[m * d_opp:(m + 1) * d_opp]
                    worst = max(worst, abs(p.value(x, a) - p.value(x, pert)))
                loc[k] = worst
        return cons, loc

    c1, l1 = run(game.payoffs1, game.box1, game.box2, game.n2, game.d2, True)
    c2, l2 = run(game.payoffs2, game.box2, game.box1, game.n1, game.d1, False)

    lift = 0.0
    X1, X2 = b1.sample(rng, samples), b2.sample(rng, samples)
    for a, b in zip(X1, X2):
        lift = max(lift, abs(aggregate_U(game, 1, a, b) - aggregate_U(game, 2, a, b)))
    return ExtensionReport(c1, c2, l1, l2, lift)
