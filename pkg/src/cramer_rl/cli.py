"""Command-line entry point: ``cramer-rl {verify,evaluate,control}``.

Exit codes: 0 success, 1 a claim or check failed, 2 invalid configuration.
Result files are deterministic for a given config and seed; the wall-clock
timestamp lives only in ``metadata.json``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import inspect
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .control import (ACTIONS, GridWorld, S51Config, optimal_actions, train_s51,
                      value_iteration)
from .errors import ConvergenceError, DivergenceError, SupportTooNarrowError
from .geometry import build_geometry, expected_return, xi_norm_sq
from .linear_fa import StepSchedule, make_features, projected_process, sgd_policy_evaluation
from .mdp import (FiniteMDP, random_mdp, reference_value_distribution, return_bounds,
                  stationary_distribution, value_function)
from .verification import CLAIMS, InstanceGrid, run_claims, write_reports

OUT_ENV = "CRAMER_RL_OUT"
COMMANDS = ("verify", "evaluate", "control")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryConfig:
    k: int | None = None
    lam: float | None = None
    v_min: float | None = None
    v_max: float | None = None


@dataclass(frozen=True)
class FeatureConfig:
    kind: str = "tabular"
    m: int | None = None
    seed: int = 0


@dataclass(frozen=True)
class ScheduleConfig:
    alpha0: float = 0.06
    tau: float = 1000.0
    steps: int = 200_000


@dataclass(frozen=True)
class ProcessConfig:
    tol: float = 1e-10
    budget: int = 10_000


@dataclass(frozen=True)
class VerifyConfig:
    claims: tuple = tuple(CLAIMS)
    grid: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ControlConfig:
    gridworld: object = None
    alpha: float = 1e-3
    epsilon: float = 0.05
    steps: int = 100_000
    max_episode_steps: int = 100
    snapshot_every: int = 10_000


@dataclass(frozen=True)
class RunConfig:
    command: str = "verify"
    seed: int = 0
    output_dir: str = "results"
    geometry: GeometryConfig = GeometryConfig()
    mdp: object = None
    features: FeatureConfig = FeatureConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    process: ProcessConfig = ProcessConfig()
    verify: VerifyConfig = VerifyConfig()
    control: ControlConfig = ControlConfig()

    def to_dict(self):
        return json.loads(json.dumps(dataclasses.asdict(self), default=list))


# defaults that depend on the command
EVALUATE_GEOMETRY = {"k": 11, "lam": 1.0}
CONTROL_GEOMETRY = {"k": 51, "lam": 10.0, "v_min": -10.0, "v_max": 10.0}
DEFAULT_MDP = {"random": {"n": 5, "gamma": 0.9}}


def _section(cls, doc, name):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"'{name}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    if name == "geometry" and "lambda" in doc:
        doc = {("lam" if key == "lambda" else key): v for key, v in doc.items()}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(unknown))}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad '{name}' section: {exc}") from exc


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    verify = dict(doc.get("verify") or {})
    if "claims" in verify:
        verify["claims"] = tuple(verify["claims"])
    cfg = RunConfig(
        command=doc.get("command", "verify"),
        seed=doc.get("seed", 0),
        output_dir=doc.get("output_dir", "results"),
        geometry=_section(GeometryConfig, doc.get("geometry"), "geometry"),
        mdp=doc.get("mdp"),
        features=_section(FeatureConfig, doc.get("features"), "features"),
        schedule=_section(ScheduleConfig, doc.get("schedule"), "schedule"),
        process=_section(ProcessConfig, doc.get("process"), "process"),
        verify=_section(VerifyConfig, verify, "verify"),
        control=_section(ControlConfig, doc.get("control"), "control"),
    )
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cfg.command!r}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    g = cfg.geometry
    if g.k is not None and (not isinstance(g.k, int) or g.k < 3 or g.k % 2 == 0):
        raise ConfigError(f"geometry.k must be an odd integer >= 3, got {g.k!r}")
    if g.lam is not None and (not isinstance(g.lam, (int, float)) or g.lam < 0):
        raise ConfigError(f"geometry.lambda must be >= 0, got {g.lam!r}")
    if (g.v_min is None) != (g.v_max is None):
        raise ConfigError("give both geometry.v_min and geometry.v_max, or neither")
    if g.v_min is not None and not g.v_max > g.v_min:
        raise ConfigError("geometry.v_max must exceed geometry.v_min")
    if cfg.features.kind not in ("tabular", "random", "fourier"):
        raise ConfigError(f"unknown feature kind {cfg.features.kind!r}")
    s = cfg.schedule
    if not s.alpha0 > 0 or not s.tau > 0 or not isinstance(s.steps, int) or s.steps < 0:
        raise ConfigError("schedule needs alpha0 > 0, tau > 0 and integer steps >= 0")
    if not cfg.process.tol > 0 or not isinstance(cfg.process.budget, int) or cfg.process.budget < 1:
        raise ConfigError("process needs tol > 0 and an integer budget >= 1")
    bad = [c for c in cfg.verify.claims if c not in CLAIMS]
    if bad:
        raise ConfigError(f"unknown claim(s): {', '.join(bad)}; choose from {', '.join(CLAIMS)}")
    grid_fields = {f.name for f in dataclasses.fields(InstanceGrid)}
    if set(cfg.verify.grid) - grid_fields:
        raise ConfigError(f"unknown grid key(s): {sorted(set(cfg.verify.grid) - grid_fields)}")
    c = cfg.control
    if not c.alpha > 0 or not 0 <= c.epsilon <= 1 or not isinstance(c.steps, int) or c.steps < 1:
        raise ConfigError("control needs alpha > 0, 0 <= epsilon <= 1 and integer steps >= 1")
    try:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir {cfg.output_dir!r} is not writable: {exc}") from exc
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output_dir {cfg.output_dir!r} is not writable")


def build_mdp(spec, seed):
    """An MDP from an inline document, a JSON path, or ``{"random": {...}}``."""
    spec = DEFAULT_MDP if spec is None else spec
    try:
        if isinstance(spec, str):
            return FiniteMDP.load(spec)
        if isinstance(spec, dict) and "random" in spec:
            opts = dict(spec["random"])
            return random_mdp(int(opts.pop("n")), int(opts.pop("seed", seed)), **opts)
        return FiniteMDP.from_dict(spec)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid mdp: {exc}") from exc


def build_world(spec):
    if spec is None:
        return GridWorld()
    try:
        if isinstance(spec, str):
            return GridWorld.load(spec)
        return GridWorld.from_dict(spec)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid gridworld: {exc}") from exc


# -- output helpers --------------------------------------------------------------------------

def _num(x):
    return format(float(x), ".17g")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_table(path, g, table):
    """n x k grid with a header row of atom values in original units."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([_num(a) for a in g.atoms_original])
        for row in np.atleast_2d(table):
            w.writerow([_num(v) for v in row])


def write_curve(path, pairs, header=("step", "value")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for step, value in pairs:
            w.writerow([int(step), _num(value)])


def write_metadata(out, cfg, argv):
    write_json(Path(out) / "metadata.json", {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
        "argv": list(argv),
        "config": cfg.to_dict(),
    })


# -- commands ------------------------------------------------------------------------------

def run_verify(cfg, out, claims=None):
    names = list(claims) if claims else list(cfg.verify.claims)
    grid = InstanceGrid(**{key: tuple(v) if isinstance(v, list) else v
                           for key, v in cfg.verify.grid.items()})
    overrides = {}
    for name in names:
        opts = {}
        count = cfg.verify.counts.get(name)
        if name in ("theorem_convergence", "theorem_expectation_bound"):
            if count is not None:
                grid = dataclasses.replace(grid, seeds=int(count))
            opts["grid"] = dataclasses.replace(grid, seed0=cfg.seed)
        else:
            if count is not None or cfg.seed:
                n = int(count) if count is not None else _default_seed_count(name)
                opts["seeds"] = range(cfg.seed, cfg.seed + n)
        overrides[name] = opts
    reports = run_claims(names, **overrides)
    write_reports(reports, out)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} worst_margin={r.worst_margin:.3e}")
    return 0 if all(r.passed for r in reports) else 1


def _default_seed_count(name):
    return len(inspect.signature(CLAIMS[name]).parameters["seeds"].default)


def run_evaluate(cfg, out):
    m = build_mdp(cfg.mdp, cfg.seed)
    gc = cfg.geometry
    k = gc.k if gc.k is not None else EVALUATE_GEOMETRY["k"]
    lam = gc.lam if gc.lam is not None else EVALUATE_GEOMETRY["lam"]
    lo, hi = (gc.v_min, gc.v_max) if gc.v_min is not None else return_bounds(m)
    g = build_geometry(k, lam, lo, hi)
    fc = cfg.features
    try:
        Phi = make_features(fc.kind, m.n, fc.m, seed=fc.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    xi = stationary_distribution(m)
    P_pi = reference_value_distribution(m, g, tol=cfg.process.tol, xi=xi)
    rep = projected_process(m, g, Phi, np.zeros((Phi.shape[1], k)), tol=cfg.process.tol,
                            budget=cfg.process.budget, xi=xi, P_pi=P_pi)
    summary = rep.summary(**{"lambda": lam, "gamma": m.gamma, "k": k, "m": Phi.shape[1],
                             "n": m.n, "seed": cfg.seed})
    write_json(out / "fixed_point.json", summary)
    write_table(out / "p_tilde.csv", g, rep.P_tilde)
    write_table(out / "p_pi.csv", g, P_pi)
    V = value_function(m)
    rows = [[x, _num(V[x]), _num(expected_return(g, P_pi[x])),
             _num(expected_return(g, rep.P_tilde[x]))] for x in range(m.n)]
    ok = rep.converged and rep.bound_holds is not False
    if lam > 0 and cfg.schedule.steps > 0:
        sched = StepSchedule(cfg.schedule.alpha0, cfg.schedule.tau)
        Q = sgd_policy_evaluation(m, g, Phi, np.zeros((Phi.shape[1], k)), sched,
                                  cfg.schedule.steps, cfg.seed, xi=xi)
        write_table(out / "sgd.csv", g, Q)
        dist = float(np.sqrt(xi_norm_sq(xi, Q - rep.P_tilde, g.C_lambda)))
        write_json(out / "sgd.json", {"distance_to_fixed_point": dist,
                                      "steps": cfg.schedule.steps, "seed": cfg.seed})
        for row, x in zip(rows, range(m.n)):
            row.append(_num(expected_return(g, Q[x])))
    with open(out / "values.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["state", "V", "reference", "fixed_point"]
        w.writerow(header + (["sgd"] if len(rows[0]) > 4 else []))
        w.writerows(rows)
    print(f"{'PASS' if ok else 'FAIL'} evaluate iterations={rep.iterations} "
          f"lhs={rep.lhs_bound:.4e} rhs={rep.rhs_bound:.4e}")
    return 0 if ok else 1


def run_control(cfg, out):
    world = build_world(cfg.control.gridworld)
    gc = cfg.geometry
    geo = {key: getattr(gc, key) for key in ("k", "lam", "v_min", "v_max")
           if getattr(gc, key) is not None}
    c = cfg.control
    s51 = S51Config(**{**CONTROL_GEOMETRY, **geo}, alpha=c.alpha, epsilon=c.epsilon,
                    steps=c.steps, max_episode_steps=c.max_episode_steps, seed=cfg.seed,
                    snapshot_every=c.snapshot_every)
    res = train_s51(world, s51)
    g = res.geometry
    Q_star = value_iteration(world)
    policy = res.greedy_policy()
    visited = res.visits.sum(axis=1) > 0
    masses = res.masses()[res.visits > 0]
    match = True
    with open(out / "policy.csv", "w", newline="") as fh, \
            open(out / "oracle_policy.csv", "w", newline="") as fo:
        w, wo = csv.writer(fh, lineterminator="\n"), csv.writer(fo, lineterminator="\n")
        w.writerow(["state", "row", "col", "greedy", "visited", "in_optimal_set"])
        wo.writerow(["state", "row", "col", "optimal"])
        for x in world.start_states:
            best = sorted(optimal_actions(Q_star, x))
            hit = int(policy[x]) in best
            match &= hit or not visited[x]
            r, col = world.cells[x]
            w.writerow([x, r, col, ACTIONS[policy[x]], int(visited[x]), int(hit)])
            wo.writerow([x, r, col, "|".join(ACTIONS[a] for a in best)])
    write_curve(out / "returns.csv", res.episode_returns, ("step", "return"))
    with open(out / "snapshots.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "state", "action"] + [_num(a) for a in g.atoms_original])
        for step, table in res.snapshots:
            for x in range(table.shape[0]):
                for a in range(table.shape[1]):
                    w.writerow([step, x, ACTIONS[a]] + [_num(v) for v in table[x, a]])
    mass_ok = bool(masses.size == 0 or (masses.min() >= 0.9 and masses.max() <= 1.1))
    write_json(out / "control.json", {
        "policy_matches_oracle": bool(match), "mass_in_range": mass_ok,
        "mass_min": float(masses.min()), "mass_max": float(masses.max()),
        "episodes": len(res.episode_returns), "steps": c.steps, "seed": cfg.seed})
    ok = match and mass_ok
    print(f"{'PASS' if ok else 'FAIL'} control policy_match={match} "
          f"mass=[{masses.min():.4f}, {masses.max():.4f}]")
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="cramer-rl", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--claim", action="append", help="verify only this claim (repeatable)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (beats the config and $%s)" % OUT_ENV)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        doc = {}
        if args.config:
            try:
                doc = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
            if isinstance(doc, dict) and doc.get("command", args.command) != args.command:
                raise ConfigError(f"config is for {doc['command']!r}, not {args.command!r}")
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = {**doc, "command": args.command}
        if args.seed is not None:
            doc["seed"] = args.seed
        if os.environ.get(OUT_ENV):
            doc["output_dir"] = os.environ[OUT_ENV]
        if args.out:
            doc["output_dir"] = args.out
        cfg = parse_config(doc)
        if args.claim:
            bad = [c for c in args.claim if c not in CLAIMS]
            if bad:
                raise ConfigError(f"unknown claim(s): {', '.join(bad)}")
        out = Path(cfg.output_dir)
        if cfg.command == "verify":
            status = run_verify(cfg, out, args.claim)
        elif cfg.command == "evaluate":
            status = run_evaluate(cfg, out)
        else:
            status = run_control(cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SupportTooNarrowError, ConvergenceError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_metadata(out, cfg, argv)
    return status


if __name__ == "__main__":
    sys.exit(main())
