"""Command-line entry point: build a game, design alpha, integrate, verify.

Subcommands ``run``, ``design``, ``verify`` and ``sweep`` read one TOML
config (see README for the schema). Exit codes: 0 success, 2 configuration
error, 3 divergence, 4 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import (
    IntegratorSettings,
    NonFiniteState,
    ReferencePoint,
    StackedState,
    TrajectoryRecord,
    equilibrium_reference,
    integrate,
)
from .game_model import EngagementGraph, GameError, TwoNetworkGame
from .graph_core import (
    GraphError,
    WeightedDigraph,
    complete_graph,
    directed_cycle,
    graph_from_config,
    lambda_star_min,
    undirected_cycle,
    undirected_path,
)
from .param_design import (
    DesignError,
    DesignInputs,
    beta_from_alpha,
    design,
    estimate_lipschitz_K,
)
from .scenarios import (
    CHANNEL_TOPOLOGIES,
    ChannelScenario,
    QuadraticGame,
    build_channel_game,
    build_quadratic_game,
    build_zero_game,
    example1_reference,
    quadratic_lipschitz,
    random_state,
)
from .verification import (
    DimensionTooLarge,
    brute_force_saddle,
    cocoercivity_check,
    finite_diff_check,
    saddle_inequality_check,
    stationary_point,
)

log = logging.getLogger("saddlenet")

CONFIG_VERSION = 1
SUMMARY_SCHEMA = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, message: str, record: Optional[TrajectoryRecord] = None):
        super().__init__(message)
        self.record = record


class VerificationFailure(RuntimeError):
    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# configuration


SCENARIOS = ("channels-example1", "quadratic", "zero-payoff")
FLOWS = ("undirected", "directed")
ALPHA_SOURCES = ("explicit", "designed-from-beta", "designed-auto")
K_SOURCES = ("explicit", "analytic", "estimate")
CHECKS = ("cocoercivity", "saddle", "gradients")


@dataclass
class FlowConfig:
    kind: str = "directed"
    alpha_source: Optional[str] = "explicit"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    beta_fraction: float = 0.5
    K: Optional[float] = None
    K_source: Optional[str] = None
    K_samples: int = 200
    K_safety: float = 1.5


@dataclass
class VerifyConfig:
    checks: tuple[str, ...] = ()
    samples: int = 1000
    grid: int = 41
    fd_step: float = 1e-6
    fd_tol: float = 1e-5
    tol: float = 1e-9


@dataclass
class RunConfig:
    scenario: dict
    flow: FlowConfig
    integrator: IntegratorSettings
    verify: VerifyConfig
    initial: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    version: int = CONFIG_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "out": self.out,
            "scenario": self.scenario,
            "initial": self.initial,
            "flow": asdict(self.flow),
            "integrator": asdict(self.integrator),
            "verify": {**asdict(self.verify), "checks": list(self.verify.checks)},
        }


def _number(table: dict, key: str, where: str, kind=float, default=None, positive=False):
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {val!r}")
    val = kind(val)
    if positive and not val > 0:
        raise ConfigError(f"{where}.{key} must be positive, got {val}")
    return val


def _choice(table: dict, key: str, where: str, options, default=None):
    val = table.get(key, default)
    if val is not None and val not in options:
        raise ConfigError(f"{where}.{key} must be one of {list(options)}, got {val!r}")
    return val


def _unknown(table: dict, allowed, where: str) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {extra}")


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed TOML document into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        Naming the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    _unknown(raw, {"version", "seed", "out", "scenario", "initial", "flow", "integrator", "verify"},
             "root")
    version = raw.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"version must be {CONFIG_VERSION}, got {version!r}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    scen = raw.get("scenario")
    if not isinstance(scen, dict):
        raise ConfigError("missing [scenario] table")
    _choice(scen, "name", "scenario", SCENARIOS)
    if "name" not in scen:
        raise ConfigError(f"scenario.name is required; one of {list(SCENARIOS)}")

    fl = raw.get("flow", {})
    _unknown(fl, {f for f in FlowConfig.__dataclass_fields__}, "flow")
    flow = FlowConfig(
        kind=_choice(fl, "kind", "flow", FLOWS, "directed"),
        alpha_source=_choice(fl, "alpha_source", "flow", ALPHA_SOURCES, None),
        alpha=_number(fl, "alpha", "flow", positive=True),
        beta=_number(fl, "beta", "flow", positive=True),
        beta_fraction=_number(fl, "beta_fraction", "flow", default=0.5, positive=True),
        K=_number(fl, "K", "flow", positive=True),
        K_source=_choice(fl, "K_source", "flow", K_SOURCES, None),
        K_samples=_number(fl, "K_samples", "flow", int, 200, positive=True),
        K_safety=_number(fl, "K_safety", "flow", default=1.5, positive=True),
    )
    if flow.alpha_source is None and flow.kind == "directed":
        flow.alpha_source = "explicit" if flow.alpha is not None else "designed-auto"
    if flow.kind == "undirected" and flow.alpha_source is not None:
        raise ConfigError("flow.alpha_source applies to the directed flow only")
    if flow.alpha_source == "explicit" and flow.alpha is None:
        raise ConfigError("flow.alpha is required when flow.alpha_source = 'explicit'")
    if flow.alpha_source == "designed-from-beta" and flow.beta is None:
        raise ConfigError("flow.beta is required when flow.alpha_source = 'designed-from-beta'")
    if not flow.beta_fraction < 1:
        raise ConfigError(f"flow.beta_fraction must lie in (0, 1), got {flow.beta_fraction}")
    if flow.K_source == "explicit" and flow.K is None:
        raise ConfigError("flow.K is required when flow.K_source = 'explicit'")
    if flow.K is not None and flow.K_source is None:
        flow.K_source = "explicit"

    it = raw.get("integrator", {})
    _unknown(it, {"h", "T", "record_every", "stop_tol", "patience", "blowup_bound"}, "integrator")
    try:
        integ = IntegratorSettings(
            h=_number(it, "h", "integrator", default=1e-3, positive=True),
            T=_number(it, "T", "integrator", default=100.0, positive=True),
            record_every=_number(it, "record_every", "integrator", int, 100, positive=True),
            stop_tol=_number(it, "stop_tol", "integrator", default=1e-8),
            patience=_number(it, "patience", "integrator", int, 50, positive=True),
            blowup_bound=_number(it, "blowup_bound", "integrator", default=1e8, positive=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from exc
    if integ.stop_tol is not None and integ.stop_tol <= 0:
        integ.stop_tol = None

    ve = raw.get("verify", {})
    _unknown(ve, {"checks", "samples", "grid", "fd_step", "fd_tol", "tol"}, "verify")
    checks = ve.get("checks", [])
    if isinstance(checks, str):
        checks = [checks]
    for c in checks:
        if c not in CHECKS:
            raise ConfigError(f"verify.checks entries must be among {list(CHECKS)}, got {c!r}")
    verify = VerifyConfig(
        checks=tuple(checks),
        samples=_number(ve, "samples", "verify", int, 1000, positive=True),
        grid=_number(ve, "grid", "verify", int, 41, positive=True),
        fd_step=_number(ve, "fd_step", "verify", default=1e-6, positive=True),
        fd_tol=_number(ve, "fd_tol", "verify", default=1e-5, positive=True),
        tol=_number(ve, "tol", "verify", default=1e-9, positive=True),
    )
    out = raw.get("out", "out")
    if not isinstance(out, str):
        raise ConfigError(f"out must be a path string, got {out!r}")
    initial = raw.get("initial", {})
    if not isinstance(initial, dict):
        raise ConfigError("[initial] must be a table")
    return RunConfig(scen, flow, integ, verify, initial, out, seed)


def _coerce(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as TOML literals."""
    raw = copy.deepcopy(raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _coerce(text.strip())
    return raw


def load_config(path: Optional[str], overrides: list[str] = (), seed: Optional[int] = None,
                out: Optional[str] = None) -> RunConfig:
    if path is None:
        raise ConfigError("--config is required")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    raw = apply_overrides(raw, list(overrides))
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return parse_config(raw)


# ---------------------------------------------------------------------------
# scenario assembly


NAMED_GRAPHS = {
    "directed-cycle": directed_cycle,
    "undirected-cycle": undirected_cycle,
    "bidirected-cycle": undirected_cycle,
    "path": undirected_path,
    "complete": complete_graph,
}


def graph_from_block(block: Any, where: str) -> WeightedDigraph:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a table")
    try:
        if "topology" in block:
            name = block["topology"]
            if name not in NAMED_GRAPHS:
                raise ConfigError(f"{where}.topology must be one of {list(NAMED_GRAPHS)}, got {name!r}")
            return NAMED_GRAPHS[name](int(block["n"]))
        return graph_from_config(block)
    except (GraphError, KeyError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _engagement(scen: dict, n1: int, n2: int) -> EngagementGraph:
    spec = scen.get("engagement", "one-to-one")
    if spec == "one-to-one":
        return EngagementGraph.one_to_one(n1, n2)
    if spec == "complete":
        return EngagementGraph.complete(n1, n2)
    if isinstance(spec, list):
        return EngagementGraph.from_pairs(n1, n2, [tuple(p) for p in spec])
    raise ConfigError(f"scenario.engagement must be 'one-to-one', 'complete' or a pair list, got {spec!r}")


@dataclass
class Built:
    game: TwoNetworkGame
    s0: StackedState
    saddle: Optional[tuple[np.ndarray, np.ndarray]] = None
    saddle_provenance: str = ""
    K_analytic: Optional[float] = None
    reference_values: dict = field(default_factory=dict)


def _initial_state(cfg: RunConfig, game: TwoNetworkGame, default: Optional[StackedState]) -> StackedState:
    init = cfg.initial
    kind = init.get("kind", "default" if default is not None else "random")
    if kind == "default" and default is not None:
        return default
    if kind == "random":
        scale = _number(init, "scale", "initial", default=1.0, positive=True)
        s = random_state(game, np.random.default_rng(cfg.seed), scale)
        if init.get("zero_z", False):
            s = StackedState(s.x1, np.zeros_like(s.z1), s.x2, np.zeros_like(s.z2))
        return s
    if kind == "explicit":
        try:
            s = StackedState(*(np.asarray(init[k], float) for k in ("x1", "z1", "x2", "z2")))
            s.check(game)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"initial: explicit state needs x1, z1, x2, z2 of matching size ({exc})") from exc
        return s
    raise ConfigError(f"initial.kind must be 'default', 'random' or 'explicit', got {kind!r}")


def build(cfg: RunConfig) -> Built:
    scen = cfg.scenario
    name = scen["name"]
    try:
        if name == "channels-example1":
            _unknown(scen, {"name", "topology", "graph1", "graph2", "beta_chan", "sigma1", "sigma2",
                            "sigma", "P", "C"}, "scenario")
            params = ChannelScenario.from_pair(
                _number(scen, "beta_chan", "scenario", default=8.0),
                _number(scen, "sigma1", "scenario", default=1.0),
                _number(scen, "sigma2", "scenario", default=4.0),
                _number(scen, "P", "scenario", default=6.0),
                _number(scen, "C", "scenario", default=4.0),
            )
            if "sigma" in scen:
                params = ChannelScenario(params.beta_chan, tuple(float(s) for s in scen["sigma"]),
                                         params.P, params.C)
            if "graph1" in scen or "graph2" in scen:
                topo = (graph_from_block(scen.get("graph1"), "scenario.graph1"),
                        graph_from_block(scen.get("graph2"), "scenario.graph2"))
            else:
                topo = _choice(scen, "topology", "scenario", CHANNEL_TOPOLOGIES, "reference")
            game = build_channel_game(params, topo, seed=cfg.seed)
            ref = example1_reference()
            s0 = _initial_state(cfg, game, ref.state0)
            x0 = np.concatenate([ref.x_star, ref.y_star])
            x1s, x2s = stationary_point(game, x0[:2], x0[2:])
            return Built(game, s0, (x1s, x2s), "stationary-point solve", None,
                         {"x_star": ref.x_star.tolist(), "y_star": ref.y_star.tolist()})
        if name == "quadratic":
            _unknown(scen, {"name", "A", "B", "C", "a", "b", "random", "graph1", "graph2",
                            "engagement", "box_halfwidth"}, "scenario")
            if "random" in scen:
                r = scen["random"]
                spec = QuadraticGame.random(np.random.default_rng(cfg.seed), int(r.get("d1", 1)),
                                            int(r.get("d2", 1)), float(r.get("scale", 1.0)))
            else:
                try:
                    spec = QuadraticGame(*(np.asarray(scen[k], float) for k in ("A", "B", "C", "a", "b")))
                except KeyError as exc:
                    raise ConfigError(f"scenario.{exc.args[0]} is required for a quadratic game") from exc
            g1 = graph_from_block(scen.get("graph1"), "scenario.graph1")
            g2 = graph_from_block(scen.get("graph2"), "scenario.graph2")
            game, saddle = build_quadratic_game(
                spec, g1, g2, _engagement(scen, g1.n, g2.n),
                _number(scen, "box_halfwidth", "scenario", default=5.0, positive=True),
            )
            return Built(game, _initial_state(cfg, game, None), saddle, "analytic",
                         quadratic_lipschitz(spec, game))
        if name == "zero-payoff":
            _unknown(scen, {"name", "graph1", "graph2", "d1", "d2"}, "scenario")
            g1 = graph_from_block(scen.get("graph1"), "scenario.graph1")
            g2 = graph_from_block(scen.get("graph2"), "scenario.graph2")
            game = build_zero_game(g1, g2, int(scen.get("d1", 1)), int(scen.get("d2", 1)))
            return Built(game, _initial_state(cfg, game, None), None, "", None)
    except (GameError, GraphError) as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    raise ConfigError(f"scenario.name {name!r} not handled")


# ---------------------------------------------------------------------------
# design


def resolve_K(cfg: RunConfig, b: Built) -> tuple[float, str]:
    src = cfg.flow.K_source
    if src is None:
        src = "analytic" if b.K_analytic is not None else "estimate"
    if src == "explicit":
        return float(cfg.flow.K), "explicit"
    if src == "analytic":
        if b.K_analytic is None:
            raise ConfigError(f"flow.K_source = 'analytic' unavailable for scenario {cfg.scenario['name']!r}")
        return b.K_analytic, "analytic"
    K = estimate_lipschitz_K(b.game, cfg.flow.K_samples, cfg.seed, cfg.flow.K_safety)
    if not K > 0:
        raise ConfigError("estimated K is zero; supply flow.K explicitly")
    return K, "estimate"


def design_report(cfg: RunConfig, b: Built) -> dict:
    """Resolve alpha and, when designed, report the whole chain."""
    fl = cfg.flow
    if fl.kind == "undirected":
        return {"source": "undirected", "alpha": 1.0}
    if fl.alpha_source == "explicit":
        rep = {"source": "explicit", "alpha": fl.alpha}
        try:
            rep["beta"] = beta_from_alpha(fl.alpha)[0]
        except DesignError:
            rep["beta"] = None
        return rep
    K, ksrc = resolve_K(cfg, b)
    try:
        inputs = DesignInputs(lambda_star_min(b.game.g1, b.game.g2), K)
        res = design(inputs, beta=fl.beta if fl.alpha_source == "designed-from-beta" else None,
                     fraction=fl.beta_fraction)
    except DesignError as exc:
        raise ConfigError(f"flow: {exc}") from exc
    rep = res.to_dict()
    rep["source"] = fl.alpha_source
    rep["K_source"] = ksrc
    return rep


# ---------------------------------------------------------------------------
# artifacts


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def write_plot_data(rec: TrajectoryRecord, game: TwoNetworkGame, folder: Path) -> list[str]:
    """One CSV per figure: each stack's coordinates over time, plus diagnostics."""
    folder.mkdir(parents=True, exist_ok=True)
    S = rec.state_array()
    m1, m2 = rec.m1, rec.m2
    parts = {"x1": S[:, :m1], "z1": S[:, m1:2 * m1], "x2": S[:, 2 * m1:2 * m1 + m2],
             "z2": S[:, 2 * m1 + m2:]}
    written = []
    for label, block in parts.items():
        n, d = (game.n1, game.d1) if label.endswith("1") else (game.n2, game.d2)
        path = folder / f"{label}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"agent{i}_{k}" for i in range(n) for k in range(d)])
            for t, row in zip(rec.times, block):
                w.writerow([repr(float(t))] + [repr(float(a)) for a in row])
        written.append(path.name)
    path = folder / "diagnostics.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "V", "r1", "r2", "field_norm", "disagreement"])
        for k, t in enumerate(rec.times):
            s = rec.state(k)
            V = rec.V[k] if rec.V else float("nan")
            r1, r2 = rec.conservation[k]
            w.writerow([repr(float(x)) for x in (t, V, r1, r2, rec.field_norms[k], s.disagreement(game))])
    written.append(path.name)
    return written


def _base_summary(cfg: Optional[RunConfig], command: str, status: str) -> dict:
    return {
        "schema_version": SUMMARY_SCHEMA,
        "command": command,
        "status": status,
        "config": cfg.to_dict() if cfg is not None else None,
    }


def _reference(cfg: RunConfig, b: Built, beta: Optional[float]) -> Optional[ReferencePoint]:
    if b.saddle is None:
        return None
    sums = (b.s0.z1.reshape(b.game.n1, b.game.d1).sum(axis=0),
            b.s0.z2.reshape(b.game.n2, b.game.d2).sum(axis=0))
    return equilibrium_reference(b.game, *b.saddle, z_sums=sums, provenance=b.saddle_provenance)


def cmd_run(cfg: RunConfig) -> tuple[int, dict]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    b = build(cfg)
    drep = design_report(cfg, b)
    if cfg.flow.kind == "directed" and drep["source"] != "explicit":
        _write_json(out / "design.json", {"schema_version": SUMMARY_SCHEMA, "status": "ok", **drep})
    alpha = None if cfg.flow.kind == "undirected" else float(drep["alpha"])
    beta = drep.get("beta") if alpha is not None else None
    ref = _reference(cfg, b, beta)
    summary = _base_summary(cfg, "run", "ok")
    summary["design"] = drep
    summary["reference"] = None if ref is None else {
        "x1": b.saddle[0].tolist(), "x2": b.saddle[1].tolist(), "provenance": ref.provenance}
    if b.reference_values:
        summary["reported_equilibrium"] = b.reference_values
    try:
        # the directed Lyapunov function needs a beta; without one, skip V
        mon = ref if (alpha is None or beta is not None) else None
        rec = integrate(b.game, b.s0, alpha, cfg.integrator, monitor=mon, beta=beta)
        code = EXIT_OK
    except NonFiniteState as exc:
        rec = exc.record
        summary["status"] = "diverged"
        summary["error"] = str(exc)
        code = EXIT_DIVERGED
    rec.write_csv(out / "trajectory.csv", b.game)
    summary["plots"] = write_plot_data(rec, b.game, out / "plots") if rec.times else []
    summary["trajectory"] = rec.summary()
    if rec.times:
        summary["trajectory"]["max_abs_state"] = float(np.max(np.abs(rec.states[-1])))
        summary["trajectory"]["growth_factor"] = float(
            np.linalg.norm(rec.states[-1]) / max(np.linalg.norm(rec.states[0]), 1e-300))
    if ref is not None and rec.times and code == EXIT_OK:
        fc = rec.final_consensus
        summary["distance_to_reference"] = float(max(np.max(np.abs(fc[0] - b.saddle[0])),
                                                     np.max(np.abs(fc[1] - b.saddle[1]))))
    _write_json(out / "summary.json", summary)
    if code == EXIT_DIVERGED:
        raise DivergenceError(summary["error"], rec)
    return code, summary


def run_checks(cfg: RunConfig, b: Built, checks: tuple[str, ...]) -> dict:
    game = b.game
    v = cfg.verify
    report: dict = {}
    if "cocoercivity" in checks:
        K, src = resolve_K(cfg, b)
        b1, b2 = game.stacked_boxes()
        rep = cocoercivity_check(game.lifted_oracle(), K, v.samples, b1, b2, cfg.seed, v.tol)
        report["cocoercivity"] = {**rep.to_dict(), "K_source": src}
    if "gradients" in checks:
        b1, b2 = game.stacked_boxes()
        err = finite_diff_check(game.lifted_oracle(), min(v.samples, 100), v.fd_step, b1, b2, cfg.seed)
        report["gradients"] = {"max_rel_error": err, "tol": v.fd_tol, "passed": err <= v.fd_tol}
    if "saddle" in checks:
        entry: dict = {}
        try:
            bf = brute_force_saddle(game.U_batched, game.box1, game.box2, v.grid)
            entry["grid"] = bf.to_dict()
            entry["ordered"] = bf.maxmin <= bf.minmax + 1e-12
        except DimensionTooLarge as exc:
            bf = None
            entry["grid"] = {"skipped": str(exc)}
            entry["ordered"] = True
        if b.saddle is not None:
            gain = saddle_inequality_check(game.U, b.saddle, game.box1, game.box2, v.samples, cfg.seed)
            entry["candidate"] = {"x1": b.saddle[0].tolist(), "x2": b.saddle[1].tolist(),
                                  "provenance": b.saddle_provenance}
            entry["max_deviation_gain"] = gain
            entry["deviation_ok"] = gain <= 1e-9
            if bf is not None:
                inside = (np.all(np.abs(bf.x1 - b.saddle[0]) <= bf.cell1 + 1e-12)
                          and np.all(np.abs(bf.x2 - b.saddle[1]) <= bf.cell2 + 1e-12))
                entry["within_one_cell"] = bool(inside)
        entry["passed"] = bool(entry["ordered"] and entry.get("deviation_ok", True)
                               and entry.get("within_one_cell", True))
        report["saddle"] = entry
    return report


def cmd_verify(cfg: RunConfig, checks: tuple[str, ...]) -> tuple[int, dict]:
    out = Path(cfg.out)
    b = build(cfg)
    checks = checks or cfg.verify.checks or CHECKS
    report = run_checks(cfg, b, tuple(checks))
    failed = [k for k, r in report.items() if not r["passed"]]
    summary = _base_summary(cfg, "verify", "verification_failed" if failed else "ok")
    summary["checks"] = report
    _write_json(out / "verify.json", summary)
    _write_json(out / "summary.json", summary)
    if failed:
        raise VerificationFailure(f"checks failed: {failed}", summary)
    return EXIT_OK, summary


def cmd_design(cfg: RunConfig) -> tuple[int, dict]:
    out = Path(cfg.out)
    b = build(cfg)
    rep = design_report(cfg, b)
    summary = {**_base_summary(cfg, "design", "ok"), **rep}
    _write_json(out / "design.json", summary)
    _write_json(out / "summary.json", summary)
    return EXIT_OK, summary


# ---------------------------------------------------------------------------
# sweep


def _sweep_one(job: tuple[str, list[str], int, str]) -> dict:
    path, overrides, seed, out = job
    code = main(["run", "--config", path, "--out", out, "--seed", str(seed), "--quiet"]
                + [a for o in overrides for a in ("--override", o)])
    return {"out": out, "overrides": overrides, "seed": seed, "exit_code": code}


def sweep_jobs(config: str, vary: list[str], seeds: list[int], out: str) -> list[tuple]:
    axes = []
    for item in vary or []:
        if "=" not in item:
            raise ConfigError(f"--vary {item!r} is not key=v1,v2,...")
        key, vals = item.split("=", 1)
        axes.append([f"{key}={v}" for v in vals.split(",")])
    combos = list(itertools.product(*axes)) if axes else [()]
    jobs = []
    for k, (combo, seed) in enumerate(itertools.product(combos, seeds)):
        jobs.append((config, list(combo), seed, str(Path(out) / f"run_{k:03d}")))
    return jobs


def cmd_sweep(args) -> tuple[int, dict]:
    base = load_config(args.config, args.override, args.seed, args.out)
    seeds = args.seeds or [base.seed]
    jobs = sweep_jobs(args.config, args.vary, seeds, base.out)
    # validate every combination up front so a typo fails before any work
    for _, ov, seed, out in jobs:
        load_config(args.config, list(args.override) + ov, seed, out)
    jobs = [(c, list(args.override) + ov, s, o) for c, ov, s, o in jobs]
    if args.jobs == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    status = "ok" if all(r["exit_code"] == 0 for r in results) else "partial"
    summary = {**_base_summary(base, "sweep", status), "runs": results}
    _write_json(Path(base.out) / "sweep.json", summary)
    _write_json(Path(base.out) / "summary.json", summary)
    return EXIT_OK, summary


# ---------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saddlenet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--out", help="output directory (overrides config 'out')")
        sp.add_argument("--seed", type=int, help="RNG seed (overrides config 'seed')")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config key, value parsed as TOML; repeatable")
        sp.add_argument("--quiet", action="store_true")

    common(sub.add_parser("run", help="integrate the flow and write artifacts"))
    common(sub.add_parser("design", help="compute alpha from the spectral gap and K"))
    vp = sub.add_parser("verify", help="run oracle checks on the configured game")
    common(vp)
    vp.add_argument("--check", action="append", choices=CHECKS, default=[])
    sp = sub.add_parser("sweep", help="run a grid of configs in parallel")
    common(sp)
    sp.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2,...")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: cpu count)")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    out = Path(args.out or "out")
    cfg = None
    try:
        if args.command == "sweep":
            code, summary = cmd_sweep(args)
        else:
            cfg = load_config(args.config, args.override, args.seed, args.out)
            out = Path(cfg.out)
            if args.command == "run":
                code, summary = cmd_run(cfg)
            elif args.command == "design":
                code, summary = cmd_design(cfg)
            else:
                code, summary = cmd_verify(cfg, tuple(args.check))
        log.info("%s finished: status %s, artifacts in %s", args.command, summary["status"], out)
        return code
    except ConfigError as exc:
        log.error("config error: %s", exc)
        summary = _base_summary(cfg, args.command, "config_error")
        summary["error"] = str(exc)
        _write_json(out / "summary.json", summary)
        return EXIT_CONFIG
    except DivergenceError as exc:
        log.error("diverged: %s (partial trajectory in %s)", exc, out)
        return EXIT_DIVERGED
    except VerificationFailure as exc:
        log.error("verification failed: %s", exc)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
