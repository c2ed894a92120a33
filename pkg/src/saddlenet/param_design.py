"""Choosing the gain alpha for the directed flow.

The pipeline: spectral gap ``Lambda_*^min`` and gradient Lipschitz constant
``K`` -> first positive root ``beta*`` of ``h`` -> some ``beta`` in
``(0, beta*)`` -> ``alpha = (beta**2 + 2) / beta``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .game_model import TwoNetworkGame, aggregate_grad
from .graph_core import WeightedDigraph, lambda_star_min, spectral_summary

log = logging.getLogger(__name__)


class DesignError(ValueError):
    pass


class NonpositiveR(DesignError):
    pass


class NonpositiveBeta(DesignError):
    pass


class BracketFailure(DesignError):
    pass


@dataclass(frozen=True)
class DesignInputs:
    lambda_star_min: float
    K: float

    def __post_init__(self):
        if not (self.lambda_star_min > 0 and self.K > 0):
            raise DesignError(
                f"lambda_star_min and K must be positive, got {self.lambda_star_min}, {self.K}"
            )

    @classmethod
    def from_graphs(cls, g1: WeightedDigraph, g2: WeightedDigraph, K: float) -> "DesignInputs":
        return cls(lambda_star_min(g1, g2), K)


@dataclass(frozen=True)
class DesignResult:
    lambda_star_min: float
    K: float
    beta_star: float
    beta: float
    alpha: float
    h_at_beta: float
    source: str = "designed"
    extra_roots: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extra_roots"] = list(self.extra_roots)
        return d


def _poly(r: float) -> float:
    return (r**4 + 3 * r**2 + 2) / r


def h(r: float, inputs: DesignInputs) -> float:
    """Upper bound on the nonzero eigenvalues of the Lyapunov-derivative form at ``beta = r``.

    ``1/2 Lam (sqrt(a^2 - 4) - a) + K r^2 / (1 + r^2)`` with
    ``a = (r^4 + 3 r^2 + 2) / r``; the difference is evaluated as
    ``-4 / (sqrt(a^2 - 4) + a)`` to avoid cancellation at both ends.
    """
    if not r > 0:
        raise NonpositiveR(f"h is defined for r > 0, got {r}")
    a = _poly(r)
    rad = a * a - 4.0
    assert rad > 0, f"radicand {rad} must be positive for r={r}"
    return 0.5 * inputs.lambda_star_min * (-4.0 / (math.sqrt(rad) + a)) + inputs.K * r * r / (1 + r * r)


def _sign_changes(inputs: DesignInputs, lo: float, hi: float, points: int = 1000) -> list[tuple[float, float]]:
    rs = np.geomspace(lo, hi, points)
    vals = np.array([h(r, inputs) for r in rs])
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    return [(float(rs[i]), float(rs[i + 1])) for i in idx]


def _bisect(inputs: DesignInputs, lo: float, hi: float, tol: float) -> float:
    flo = h(lo, inputs)
    mid = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = h(mid, inputs)
        if abs(fm) < tol or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return mid


def find_beta_star(
    inputs: DesignInputs, tol: float = 1e-10, r_min: float = 1e-6, r_cap: float = 1e6
) -> float:
    """Smallest positive root of ``h`` by doubling then bisection.

    Raises
    ------
    BracketFailure
        ``h(r_min) >= 0`` or no sign change before ``r_cap``.
    """
    root, _ = _find_roots(inputs, tol, r_min, r_cap)
    return root


def _find_roots(inputs, tol, r_min, r_cap):
    lo = r_min
    if h(lo, inputs) >= 0:
        raise BracketFailure(f"h({r_min:g}) >= 0; inputs degenerate: {inputs}")
    hi = lo
    while h(hi, inputs) < 0:
        lo = hi
        hi *= 2.0
        if hi > r_cap:
            raise BracketFailure(f"no sign change of h below r = {r_cap:g}; inputs: {inputs}")
    # a doubling step may straddle several roots; refine on a fine grid first
    changes = _sign_changes(inputs, lo, hi, 200)
    if changes:
        lo, hi = changes[0]
    root = _bisect(inputs, lo, hi, tol)
    extra = [a for a, _ in _sign_changes(inputs, r_min, 10 * root)[1:]]
    if extra:
        log.warning("h changes sign more than once below 10*beta*: %s", extra)
    return root, tuple(extra)


def alpha_from_beta(beta: float) -> float:
    if not beta > 0:
        raise NonpositiveBeta(f"beta must be positive, got {beta}")
    return (beta * beta + 2.0) / beta


def beta_from_alpha(alpha: float) -> tuple[float, float]:
    """Both roots of ``beta^2 - alpha beta + 2 = 0`` (needs ``alpha >= 2 sqrt 2``)."""
    disc = alpha * alpha - 8.0
    if disc < 0:
        raise DesignError(f"alpha = {alpha} < 2*sqrt(2) has no real beta")
    s = math.sqrt(disc)
    return (alpha - s) / 2.0, (alpha + s) / 2.0


def design(inputs: DesignInputs, beta: Optional[float] = None, fraction: float = 0.5,
           tol: float = 1e-10) -> DesignResult:
    """Run the pipeline. ``beta`` defaults to ``fraction * beta*``."""
    beta_star, extra = _find_roots(inputs, tol, 1e-6, 1e6)
    if beta is None:
        beta = fraction * beta_star
    if not 0 < beta < beta_star:
        raise DesignError(f"beta = {beta} outside (0, beta* = {beta_star})")
    return DesignResult(
        lambda_star_min=inputs.lambda_star_min,
        K=inputs.K,
        beta_star=beta_star,
        beta=beta,
        alpha=alpha_from_beta(beta),
        h_at_beta=h(beta, inputs),
        extra_roots=extra,
    )


def tildeQ_spectrum(g: WeightedDigraph, beta: float) -> np.ndarray:
    """Eigenvalues of the (x, z) quadratic form appearing in the directed analysis.

    Each eigenvalue ``lam`` of ``L + L^T`` contributes
    ``lam * (-(b^4+3b^2+2) +- sqrt((b^4+3b^2+2)^2 - 4 b^2)) / (2 b)``.
    """
    if not beta > 0:
        raise NonpositiveBeta(f"beta must be positive, got {beta}")
    lam = spectral_summary(g).symmetric_eigenvalues
    p = beta**4 + 3 * beta**2 + 2
    root = math.sqrt(p * p - 4 * beta * beta)
    plus = (-p + root) / (2 * beta)
    minus = (-p - root) / (2 * beta)
    return np.concatenate([lam * plus, lam * minus]).astype(complex)


def tildeQ_matrix(g: WeightedDigraph, beta: float) -> np.ndarray:
    """The matrix itself, ``[[-b^3 - (b^2+2)/b - b, -(1+b^2)], [-(1+b^2), -b]] kron (L + L^T)``."""
    L = g.laplacian
    alpha = alpha_from_beta(beta)
    M = np.array([[-beta**3 - alpha - beta, -(1 + beta**2)],
                  [-(1 + beta**2), -beta]])
    return np.kron(M, L + L.T)


def _full_gradient(game: TwoNetworkGame, p: np.ndarray) -> np.ndarray:
    m1 = game.n1 * game.d1
    a, b = p[:m1], p[m1:]
    return np.concatenate([aggregate_grad(game, 1, a, b), aggregate_grad(game, 2, a, b)])


def estimate_lipschitz_K(
    game: TwoNetworkGame,
    samples: int = 200,
    seed: int = 0,
    safety: float = 1.5,
    power_iters: int = 20,
    shrink: float = 0.0,
) -> float:
    """Sampled lower bound on the Lipschitz constant of ``grad U~``, times ``safety``.

    Combines ratios ``|G(p) - G(q)| / |p - q|`` over random pairs in the
    stacked boxes with a finite-difference power iteration on the Hessian at
    a few sample points (which finds the local maximal curvature). This is a
    heuristic; supply an analytic K when one is known.
    """
    rng = np.random.default_rng(seed)
    b1, b2 = game.stacked_boxes()
    P1, P2 = b1.sample(rng, 2 * samples, shrink), b2.sample(rng, 2 * samples, shrink)
    pts = np.hstack([P1, P2])
    best = 0.0
    for k in range(samples):
        p, q = pts[2 * k], pts[2 * k + 1]
        dist = np.linalg.norm(p - q)
        if dist > 0:
            best = max(best, np.linalg.norm(_full_gradient(game, p) - _full_gradient(game, q)) / dist)

    # local curvature by power iteration on gradient differences; stops early
    # if a perturbed point leaves the payoff's domain
    n_power = min(samples, 20)
    for k in range(n_power):
        p = pts[k]
        gp = _full_gradient(game, p)
        v = rng.standard_normal(p.size)
        v /= np.linalg.norm(v)
        eps = 1e-5
        est = 0.0
        for _ in range(power_iters):
            try:
                with np.errstate(all="ignore"):
                    w = (_full_gradient(game, p + eps * v) - gp) / eps
            except ValueError:
                break
            if not np.all(np.isfinite(w)):
                break
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            est = nw
            v = w / nw
        best = max(best, est)
    return safety * best
