"""Distributed saddle-point flows and their numerical integration.

Two flows act on the stacked state ``(x1, z1, x2, z2)``::

    x1' = -alpha L1 x1 - L1 z1 + grad_{x1} U~
    z1' =  L1 x1
    x2' = -alpha L2 x2 - L2 z2 - grad_{x2} U~
    z2' =  L2 x2

``alpha = 1`` is the undirected flow; ``alpha > 0`` tuned by the parameter
design makes the flow converge on weight-balanced digraphs as well.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .game_model import (
    DimensionMismatch,
    TwoNetworkGame,
    aggregate_grad,
    nash_residual,
)


class DynamicsError(RuntimeError):
    pass


class NonpositiveAlpha(ValueError):
    pass


class NonFiniteState(DynamicsError):
    """Raised when the integration diverges; carries the partial record."""

    def __init__(self, message: str, record: "TrajectoryRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class StackedState:
    x1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    z2: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("x1", "z1", "x2", "z2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.x1.shape != self.z1.shape or self.x2.shape != self.z2.shape:
            raise DimensionMismatch("x and z stacks of a network must have equal length")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x1, self.z1, self.x2, self.z2])

    @classmethod
    def from_vector(cls, v: np.ndarray, m1: int, m2: int, t: float = 0.0) -> "StackedState":
        v = np.asarray(v, dtype=float)
        return cls(v[:m1], v[m1:2 * m1], v[2 * m1:2 * m1 + m2], v[2 * m1 + m2:], t)

    def check(self, game: TwoNetworkGame) -> None:
        m1, m2 = game.n1 * game.d1, game.n2 * game.d2
        if self.x1.size != m1 or self.x2.size != m2:
            raise DimensionMismatch(
                f"state has stacks of length {self.x1.size}/{self.x2.size}, "
                f"game expects {m1}/{m2}"
            )

    def consensus_values(self, game: TwoNetworkGame) -> tuple[np.ndarray, np.ndarray]:
        """Block averages of the estimate stacks."""
        return (self.x1.reshape(game.n1, game.d1).mean(axis=0),
                self.x2.reshape(game.n2, game.d2).mean(axis=0))

    def disagreement(self, game: TwoNetworkGame) -> float:
        """Largest pairwise difference between the estimate blocks of a network."""
        out = 0.0
        for x, n, d in ((self.x1, game.n1, game.d1), (self.x2, game.n2, game.d2)):
            B = x.reshape(n, d)
            out = max(out, float(np.max(B.max(axis=0) - B.min(axis=0))))
        return out


@dataclass
class ReferencePoint:
    """Equilibrium used by the Lyapunov monitors."""

    x1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    z2: np.ndarray
    provenance: str = "analytic"  # analytic | brute-force | converged-run

    def state(self) -> StackedState:
        return StackedState(self.x1, self.z1, self.x2, self.z2)


def _vector_field(game: TwoNetworkGame, v: np.ndarray, alpha: float) -> np.ndarray:
    m1 = game.n1 * game.d1
    m2 = game.n2 * game.d2
    x1, z1 = v[:m1], v[m1:2 * m1]
    x2, z2 = v[2 * m1:2 * m1 + m2], v[2 * m1 + m2:]
    L1x1 = game.L1 @ x1
    L2x2 = game.L2 @ x2
    g1 = aggregate_grad(game, 1, x1, x2)
    g2 = aggregate_grad(game, 2, x1, x2)
    return np.concatenate([
        -alpha * L1x1 - game.L1 @ z1 + g1,
        L1x1,
        -alpha * L2x2 - game.L2 @ z2 - g2,
        L2x2,
    ])


def field_undirected(game: TwoNetworkGame, s: StackedState) -> StackedState:
    """Time derivative under the undirected saddle-point flow."""
    s.check(game)
    m1, m2 = s.x1.size, s.x2.size
    return StackedState.from_vector(_vector_field(game, s.vector(), 1.0), m1, m2, s.t)


def field_directed(game: TwoNetworkGame, s: StackedState, alpha: float) -> StackedState:
    """Time derivative under the alpha-parameterised flow (differentiable payoffs)."""
    if not alpha > 0:
        raise NonpositiveAlpha(f"alpha must be positive, got {alpha}")
    if game.nonsmooth:
        raise DynamicsError("the directed flow requires differentiable payoffs")
    s.check(game)
    m1, m2 = s.x1.size, s.x2.size
    return StackedState.from_vector(_vector_field(game, s.vector(), alpha), m1, m2, s.t)


def linear_system_matrix(game: TwoNetworkGame, alpha: float = 1.0) -> np.ndarray:
    """Matrix of the flow when every payoff is zero.

    Blocks ``[[-alpha, -1], [1, 0]] kron L_l`` in the (x_l, z_l) ordering.
    """
    blocks = [np.kron(np.array([[-alpha, -1.0], [1.0, 0.0]]), L) for L in (game.L1, game.L2)]
    m1, m2 = blocks[0].shape[0], blocks[1].shape[0]
    M = np.zeros((m1 + m2, m1 + m2))
    M[:m1, :m1] = blocks[0]
    M[m1:, m1:] = blocks[1]
    return M


# ---------------------------------------------------------------------------
# Lyapunov functions and invariants


def lyapunov_undirected(s: StackedState, ref: ReferencePoint) -> float:
    return 0.5 * float(
        np.sum((s.x1 - ref.x1) ** 2) + np.sum((s.z1 - ref.z1) ** 2)
        + np.sum((s.x2 - ref.x2) ** 2) + np.sum((s.z2 - ref.z2) ** 2)
    )


def lyapunov_directed(s: StackedState, ref: ReferencePoint, beta: float) -> float:
    """Quadratic function in ``x`` and ``y = beta x + z``."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    dx1, dx2 = s.x1 - ref.x1, s.x2 - ref.x2
    dy1 = beta * dx1 + (s.z1 - ref.z1)
    dy2 = beta * dx2 + (s.z2 - ref.z2)
    return 0.5 * float(dx1 @ dx1 + dx2 @ dx2 + dy1 @ dy1 + dy2 @ dy2)


def conservation_residual(
    s: StackedState, s0: StackedState, game: TwoNetworkGame
) -> tuple[float, float]:
    """Drift of the blockwise sums of ``z1`` and ``z2`` relative to ``s0``."""
    r1 = (s.z1 - s0.z1).reshape(game.n1, game.d1).sum(axis=0)
    r2 = (s.z2 - s0.z2).reshape(game.n2, game.d2).sum(axis=0)
    return float(np.linalg.norm(r1)), float(np.linalg.norm(r2))


def equilibrium_reference(
    game: TwoNetworkGame,
    x1: np.ndarray,
    x2: np.ndarray,
    z_sums: Optional[tuple[np.ndarray, np.ndarray]] = None,
    provenance: str = "analytic",
) -> ReferencePoint:
    """Complete a Nash point ``(x1, x2)`` to an equilibrium of the flow.

    Solves ``L1 z1 = grad_{x1} U~`` and ``L2 z2 = -grad_{x2} U~`` at the
    consensus stacks in the least-squares sense, then shifts each ``z`` along
    ``1 kron a`` so its blockwise sum equals ``z_sums`` (default zero), which
    places the reference in the invariant set of the trajectory.
    """
    bx1, bx2 = game.consensus(x1, x2)
    g1 = aggregate_grad(game, 1, bx1, bx2)
    g2 = aggregate_grad(game, 2, bx1, bx2)
    z1 = np.linalg.lstsq(game.L1, g1, rcond=None)[0]
    z2 = np.linalg.lstsq(game.L2, -g2, rcond=None)[0]
    if z_sums is None:
        z_sums = (np.zeros(game.d1), np.zeros(game.d2))
    for z, n, d, target in ((z1, game.n1, game.d1, z_sums[0]), (z2, game.n2, game.d2, z_sums[1])):
        B = z.reshape(n, d)
        B += (np.asarray(target, float) - B.sum(axis=0)) / n
    return ReferencePoint(bx1, z1, bx2, z2, provenance)


# ---------------------------------------------------------------------------
# integration


@dataclass
class IntegratorSettings:
    h: float = 1e-3
    T: float = 100.0
    record_every: int = 100
    stop_tol: Optional[float] = 1e-8
    patience: int = 50
    blowup_bound: float = 1e8

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class TrajectoryRecord:
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    V: list[float] = field(default_factory=list)
    conservation: list[tuple[float, float]] = field(default_factory=list)
    field_norms: list[float] = field(default_factory=list)
    m1: int = 0
    m2: int = 0
    converged: bool = False
    diverged: bool = False
    steps: int = 0
    final_nash_residual: Optional[tuple[float, float]] = None
    final_consensus: Optional[tuple[np.ndarray, np.ndarray]] = None

    def state(self, k: int = -1) -> StackedState:
        return StackedState.from_vector(self.states[k], self.m1, self.m2, self.times[k])

    @property
    def final(self) -> StackedState:
        return self.state(-1)

    def state_array(self) -> np.ndarray:
        return np.array(self.states)

    def max_conservation_drift(self) -> float:
        return max((max(r) for r in self.conservation), default=0.0)

    def lyapunov_increases(self, tol: float = 1e-7) -> int:
        """Number of sample-to-sample increases of V larger than ``tol``."""
        V = np.asarray(self.V)
        if V.size < 2:
            return 0
        return int(np.sum(np.diff(V) > tol))

    def column_names(self, game: TwoNetworkGame) -> list[str]:
        names = ["t"]
        for label, n, d in (("x1", game.n1, game.d1), ("z1", game.n1, game.d1),
                            ("x2", game.n2, game.d2), ("z2", game.n2, game.d2)):
            names += [f"{label}_{i}_{k}" for i in range(n) for k in range(d)]
        return names + ["V", "r1", "r2"]

    def write_csv(self, path: Path, game: TwoNetworkGame) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.column_names(game))
            for k, (t, v) in enumerate(zip(self.times, self.states)):
                V = self.V[k] if self.V else float("nan")
                r1, r2 = self.conservation[k]
                w.writerow([repr(float(t))] + [repr(float(a)) for a in v]
                           + [repr(float(V)), repr(float(r1)), repr(float(r2))])

    def summary(self) -> dict:
        out = {
            "converged": self.converged,
            "diverged": self.diverged,
            "steps": self.steps,
            "samples": len(self.times),
            "t_final": self.times[-1] if self.times else None,
            "final_field_norm": self.field_norms[-1] if self.field_norms else None,
            "max_conservation_drift": self.max_conservation_drift(),
            "lyapunov_increases": self.lyapunov_increases() if self.V else None,
        }
        if self.final_nash_residual is not None:
            out["final_nash_residual"] = list(self.final_nash_residual)
        if self.final_consensus is not None:
            out["final_consensus"] = [c.tolist() for c in self.final_consensus]
        return out

    def write_summary(self, path: Path) -> None:
        path.write_text(json.dumps(self.summary(), indent=2))


def integrate(
    game: TwoNetworkGame,
    s0: StackedState,
    alpha: Optional[float] = None,
    settings: Optional[IntegratorSettings] = None,
    monitor: Optional[ReferencePoint] = None,
    beta: Optional[float] = None,
) -> TrajectoryRecord:
    """Classic fixed-step RK4 integration of either flow.

    Parameters
    ----------
    alpha : float, optional
        ``None`` integrates the undirected flow; a positive value the
        directed flow with that gain.
    monitor : ReferencePoint, optional
        If given, a Lyapunov value is recorded at each sample: the directed
        function when ``beta`` is given, the undirected one otherwise.
    beta : float, optional
        Parameter of the directed Lyapunov function.

    Raises
    ------
    NonFiniteState
        A coordinate became non-finite or exceeded ``blowup_bound``. The
        exception carries the partial record.
    """
    settings = settings or IntegratorSettings()
    s0.check(game)
    if alpha is None:
        gain = 1.0
    else:
        if not alpha > 0:
            raise NonpositiveAlpha(f"alpha must be positive, got {alpha}")
        if game.nonsmooth:
            raise DynamicsError("the directed flow requires differentiable payoffs")
        gain = float(alpha)

    m1, m2 = s0.x1.size, s0.x2.size
    rec = TrajectoryRecord(m1=m1, m2=m2)
    h = settings.h
    nsteps = int(round(settings.T / h))

    def f(v):
        return _vector_field(game, v, gain)

    def record(v, t, k1):
        s = StackedState.from_vector(v, m1, m2, t)
        rec.times.append(t)
        rec.states.append(v.copy())
        rec.conservation.append(conservation_residual(s, s0, game))
        rec.field_norms.append(float(np.max(np.abs(k1))))
        if monitor is not None:
            if beta is not None:
                rec.V.append(lyapunov_directed(s, monitor, beta))
            else:
                rec.V.append(lyapunov_undirected(s, monitor))

    v = s0.vector()
    t0 = s0.t
    k1 = f(v)
    record(v, t0, k1)
    calm = 0
    step = 0
    for step in range(1, nsteps + 1):
        t = t0 + step * h
        try:
            k2 = f(v + 0.5 * h * k1)
            k3 = f(v + 0.5 * h * k2)
            k4 = f(v + h * k3)
        except ValueError as exc:
            # a payoff rejected its argument (e.g. left the log domain)
            rec.steps = step - 1
            rec.diverged = True
            raise NonFiniteState(f"payoff evaluation failed near t={t:.6g}: {exc}", rec) from exc
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bad = not np.all(np.isfinite(v)) or np.max(np.abs(v)) > settings.blowup_bound
        if bad:
            rec.steps = step
            rec.diverged = True
            if np.all(np.isfinite(v)):
                record(v, t, np.zeros_like(v))
            raise NonFiniteState(
                f"state left the bound {settings.blowup_bound:g} at t={t:.6g}", rec
            )
        try:
            k1 = f(v)
        except ValueError as exc:
            rec.steps = step
            rec.diverged = True
            raise NonFiniteState(f"payoff evaluation failed at t={t:.6g}: {exc}", rec) from exc
        if step % settings.record_every == 0 or step == nsteps:
            record(v, t, k1)
            if settings.stop_tol is not None and rec.field_norms[-1] < settings.stop_tol:
                calm += 1
                if calm >= settings.patience:
                    rec.converged = True
                    break
            else:
                calm = 0
    rec.steps = step
    final = rec.final
    rec.final_consensus = final.consensus_values(game)
    try:
        rec.final_nash_residual = nash_residual(game, *rec.final_consensus, check_box=False)
    except (ValueError, FloatingPointError):
        rec.final_nash_residual = None
    return rec
