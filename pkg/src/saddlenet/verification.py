"""Independent oracles: cocoercivity, grid-search saddles, gradient checks.

Violations are returned as data; callers decide what counts as failure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import root

from .game_model import Box, ConcaveConvexOracle, OutOfBox, TwoNetworkGame, aggregate_grad


class DimensionTooLarge(ValueError):
    pass


@dataclass
class CocoercivityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    K: float
    tol: float = 1e-9

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack))

    @property
    def violations(self) -> np.ndarray:
        """Indices of samples with ``lhs > rhs + tol``."""
        return np.nonzero(self.slack < -self.tol)[0]

    @property
    def passed(self) -> bool:
        return self.violations.size == 0

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "samples": int(self.lhs.size),
            "min_slack": self.min_slack,
            "violations": int(self.violations.size),
            "tol": self.tol,
            "passed": self.passed,
        }


def cocoercivity_terms(f: ConcaveConvexOracle, K: float, x, y, xp, yp) -> tuple[float, float]:
    """Both sides of the cocoercivity inequality for one pair of points."""
    gx = f.grad_x1
    gy = f.grad_x2
    lhs = (x - xp) @ (gx(x, y) - gx(xp, yp)) + (y - yp) @ (gy(xp, yp) - gy(x, y))
    sq = (
        np.sum((gx(x, yp) - gx(xp, yp)) ** 2)
        + np.sum((gy(xp, y) - gy(xp, yp)) ** 2)
        + np.sum((gx(xp, y) - gx(x, y)) ** 2)
        + np.sum((gy(x, yp) - gy(x, y)) ** 2)
    )
    return float(lhs), float(-sq / (2.0 * K))


def cocoercivity_check(
    f: ConcaveConvexOracle, K: float, samples: int, box1: Box, box2: Box,
    seed: int = 0, tol: float = 1e-9,
) -> CocoercivityReport:
    """Sample random pairs ``(x, y), (x', y')`` from the boxes and evaluate
    the gradient cocoercivity inequality for concave-convex functions."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    rng = np.random.default_rng(seed)
    X = box1.sample(rng, 2 * samples)
    Y = box2.sample(rng, 2 * samples)
    lhs = np.empty(samples)
    rhs = np.empty(samples)
    for k in range(samples):
        lhs[k], rhs[k] = cocoercivity_terms(f, K, X[2 * k], Y[2 * k], X[2 * k + 1], Y[2 * k + 1])
    return CocoercivityReport(lhs, rhs, K, tol)


def descent_gap(j: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
                M: float, j_star: float, points: np.ndarray) -> np.ndarray:
    """``j* - (1/2M)|grad j(x)|^2 - j(x)`` at each point; nonnegative for a
    concave ``j`` with M-Lipschitz gradient and supremum ``j*``."""
    return np.array([j_star - np.sum(grad(x) ** 2) / (2 * M) - j(x) for x in points])


def finite_diff_check(
    oracle: ConcaveConvexOracle, points: int, h: float, box1: Box, box2: Box,
    seed: int = 0, shrink: float = 0.1,
) -> float:
    """Worst relative error between the gradient callbacks and centred differences.

    The relative error at a point is ``|g - g_fd|_inf / max(1, |g|_inf)``.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    rng = np.random.default_rng(seed)
    X = box1.sample(rng, points, shrink)
    Y = box2.sample(rng, points, shrink)
    worst = 0.0
    for x, y in zip(X, Y):
        g = np.concatenate([np.atleast_1d(oracle.grad_x1(x, y)), np.atleast_1d(oracle.grad_x2(x, y))])
        fd = np.empty_like(g)
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            fd[k] = (oracle.value(x + e, y) - oracle.value(x - e, y)) / (2 * h)
        for k in range(y.size):
            e = np.zeros_like(y)
            e[k] = h
            fd[x.size + k] = (oracle.value(x, y + e) - oracle.value(x, y - e)) / (2 * h)
        err = np.max(np.abs(g - fd)) / max(1.0, float(np.max(np.abs(g))))
        worst = max(worst, float(err))
    return worst


@dataclass
class BruteForceSaddle:
    x1: np.ndarray  # arg max_x min_y
    x2: np.ndarray  # arg min_y max_x
    maxmin: float
    minmax: float
    cell1: np.ndarray  # grid spacing per axis
    cell2: np.ndarray

    def to_dict(self) -> dict:
        return {"x1": self.x1.tolist(), "x2": self.x2.tolist(), "maxmin": self.maxmin,
                "minmax": self.minmax, "cell1": self.cell1.tolist(), "cell2": self.cell2.tolist()}


def _grid(box: Box, m: int) -> tuple[np.ndarray, np.ndarray]:
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(box.lo, box.hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    cell = (box.hi - box.lo) / (m - 1)
    return pts, cell


def brute_force_saddle(
    U: Callable[[np.ndarray, np.ndarray], np.ndarray], box1: Box, box2: Box, grid: int = 41,
    chunk: int = 256,
) -> BruteForceSaddle:
    """Exhaustive max-min and min-max of ``U`` on a product grid.

    ``U`` must accept broadcast batches ``(..., d1)``, ``(..., d2)``. Grid
    points failing a box's feasibility predicate are excluded from that
    player's choices.
    """
    if box1.dim > 3 or box2.dim > 3:
        raise DimensionTooLarge(f"grid search limited to d <= 3, got {box1.dim}, {box2.dim}")
    if grid < 2:
        raise ValueError("grid needs at least 2 points per axis")
    P1, c1 = _grid(box1, grid)
    P2, c2 = _grid(box2, grid)
    P1 = P1[box1.mask(P1)]
    P2 = P2[box2.mask(P2)]
    row_min = np.empty(len(P1))
    col_max = np.full(len(P2), -np.inf)
    for s in range(0, len(P1), chunk):
        block = np.asarray(U(P1[s:s + chunk, None, :], P2[None, :, :]), dtype=float)
        row_min[s:s + chunk] = block.min(axis=1)
        np.maximum(col_max, block.max(axis=0), out=col_max)
    i = int(np.argmax(row_min))
    j = int(np.argmin(col_max))
    return BruteForceSaddle(P1[i], P2[j], float(row_min[i]), float(col_max[j]), c1, c2)


def saddle_inequality_check(
    U: Callable[[np.ndarray, np.ndarray], float], candidate: tuple[np.ndarray, np.ndarray],
    box1: Box, box2: Box, samples: int = 1000, seed: int = 0,
) -> float:
    """Largest gain from a unilateral deviation away from ``candidate``.

    Returns ``max(U(x1', x2*) - U(x1*, x2*), U(x1*, x2*) - U(x1*, x2'))`` over
    random deviations; values at or below zero certify the saddle property
    on the sample.
    """
    x1s, x2s = (np.asarray(c, dtype=float) for c in candidate)
    if not box1.contains(x1s) or not box2.contains(x2s):
        raise OutOfBox(f"candidate ({x1s}, {x2s}) outside the boxes")
    rng = np.random.default_rng(seed)
    D1 = box1.sample(rng, samples)
    D2 = box2.sample(rng, samples)
    u0 = float(U(x1s, x2s))
    worst = -np.inf
    for a, b in zip(D1, D2):
        worst = max(worst, float(U(a, x2s)) - u0, u0 - float(U(x1s, b)))
    return worst


def midpoint_concavity_violation(
    oracle: ConcaveConvexOracle, box1: Box, box2: Box, samples: int = 200, seed: int = 0
) -> float:
    """Largest failure of the midpoint concavity (in x1) / convexity (in x2) tests.

    A necessary-but-not-sufficient probe: zero or negative means no
    violation was found.
    """
    rng = np.random.default_rng(seed)
    A = box1.sample(rng, 2 * samples)
    B = box2.sample(rng, 2 * samples)
    worst = -np.inf
    for k in range(samples):
        a, a2 = A[2 * k], A[2 * k + 1]
        b, b2 = B[2 * k], B[2 * k + 1]
        f = oracle.value
        conc = 0.5 * (f(a, b) + f(a2, b)) - f(0.5 * (a + a2), b)
        conv = f(a, 0.5 * (b + b2)) - 0.5 * (f(a, b) + f(a, b2))
        worst = max(worst, conc, conv)
    return float(worst)


def best_response_gap(U, x1, x2, box1: Box, box2: Box, grid: int = 81) -> Optional[float]:
    """Grid-based duality gap ``max_x U(x, x2) - min_y U(x1, y)`` for d <= 2."""
    if box1.dim > 2 or box2.dim > 2:
        return None
    P1, _ = _grid(box1, grid)
    P2, _ = _grid(box2, grid)
    P1 = P1[box1.mask(P1)]
    P2 = P2[box2.mask(P2)]
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    return float(np.max(U(P1, x2[None, :])) - np.min(U(x1[None, :], P2)))


def stationary_point(game: TwoNetworkGame, x1_0, x2_0, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``grad U(x1, x2) = 0`` from a starting guess.

    For a strictly concave-convex ``U`` with an interior saddle, the
    stationary point is that saddle. Raises ``RuntimeError`` if the solver
    does not converge.
    """
    d1 = game.d1

    def G(p):
        bx1, bx2 = game.consensus(p[:d1], p[d1:])
        g1 = aggregate_grad(game, 1, bx1, bx2).reshape(game.n1, d1).sum(axis=0)
        g2 = aggregate_grad(game, 2, bx1, bx2).reshape(game.n2, game.d2).sum(axis=0)
        return np.concatenate([g1, g2])

    sol = root(G, np.concatenate([np.ravel(x1_0), np.ravel(x2_0)]), tol=tol)
    if not sol.success:
        raise RuntimeError(f"stationary point solve failed: {sol.message}")
    return sol.x[:d1], sol.x[d1:]
