"""JSON run configurations and the objects they describe.

A configuration is one JSON document with ``"schema": "monoflow-config/v1"``.
Relative file paths inside it are resolved against the config's directory.
See the README for the full key reference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import OptimizeOptions, RegSchedule
from .errors import ConfigError
from .evolution import ProblemData, TimeGrid, Trajectory
from .flow_rule import Box, Linear, RegParams, VonMises
from .homogenized import assemble, make_toy_instance
from .objective import ObjectiveSpec

__all__ = ["CONFIG_SCHEMA", "RunConfig", "Experiment", "load_config", "build"]

CONFIG_SCHEMA = "monoflow-config/v1"


def _require(section, key, where):
    if key not in section:
        raise ConfigError(f"{where}: missing key {key!r}")
    return section[key]


def _num(section, key, where, default=None, lo=None, hi=None, integer=False):
    val = section.get(key, default)
    if val is None:
        raise ConfigError(f"{where}: missing key {key!r}")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
    if not math.isfinite(val):
        raise ConfigError(f"{where}.{key}: must be finite")
    if (lo is not None and val < lo) or (hi is not None and val > hi):
        raise ConfigError(f"{where}.{key}={val} outside [{lo}, {hi}]")
    return int(val) if integer else float(val)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    path: Path | None = None
    seed: int = 0

    def section(self, name, required=True):
        sec = self.raw.get(name)
        if sec is None:
            if required:
                raise ConfigError(f"{self.path or 'config'}: missing section {name!r}")
            return {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{name}: expected an object")
        return sec

    def resolve(self, rel):
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path, seed=None):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if raw.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"{path}: expected schema {CONFIG_SCHEMA!r}, got {raw.get('schema')!r}")
    cfg_seed = seed if seed is not None else _num(raw, "seed", "config", default=0, lo=0, integer=True)
    return RunConfig(raw, path.parent, path, int(cfg_seed))


@dataclass
class Experiment:
    """Everything a command needs, built from a :class:`RunConfig`."""

    config: RunConfig
    pd: ProblemData
    grid: TimeGrid
    load_fn: object
    data: object = None
    ops: object = None
    objective: ObjectiveSpec | None = None
    reg: RegParams | None = None
    extras: dict = field(default_factory=dict)

    def load(self, grid=None):
        return Trajectory.from_function(grid or self.grid, self.load_fn)

    def schedule(self):
        sec = self.config.section("schedule")
        T = self.grid.T
        q_norm = self.pd.Q.opnorm()
        try:
            if "stages" in sec:
                st = sec["stages"]
                return RegSchedule([s["lambda"] for s in st], [s["epsilon"] for s in st],
                                   [s["theta"] for s in st], T, q_norm)
            kind = sec.get("kind", "default")
            if kind != "default":
                raise ConfigError(f"schedule.kind: unknown value {kind!r}")
            return RegSchedule.default(T, q_norm,
                                       _num(sec, "n_stages", "schedule", 5, lo=1, integer=True),
                                       _num(sec, "lambda0", "schedule", 0.5, lo=0))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"schedule: malformed stage list ({exc})") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"schedule: {exc}") from exc

    def optimize_options(self):
        sec = self.config.section("optimize", required=False)
        try:
            return OptimizeOptions(
                tol=_num(sec, "tol", "optimize", 1e-8, lo=0),
                max_iter=_num(sec, "max_iter", "optimize", 500, lo=0, integer=True),
                metric=sec.get("metric", "h1"),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"optimize: {exc}") from exc

    def initial_control(self):
        sec = self.config.section("optimize", required=False)
        init = sec.get("init", "zero")
        if init == "zero":
            return Trajectory.zeros(self.grid, self.pd.p)
        if init == "load":
            l = self.load()
            if np.max(np.abs(l.values[0])) > 1e-14:
                raise ConfigError("optimize.init='load' needs a load with l(0) = 0")
            return l
        raise ConfigError(f"optimize.init: unknown value {init!r}")


def _direction(sec, where, p):
    if "direction" in sec:
        v = np.asarray(sec["direction"], dtype=float).reshape(-1)
        if v.size != p:
            raise ConfigError(f"{where}.direction: expected {p} entries, got {v.size}")
        return v
    seed = _num(sec, "direction_seed", where, 0, lo=0, integer=True)
    v = np.random.default_rng(seed).standard_normal(p)
    return v / np.linalg.norm(v)


def _load_fn(sec, p, T):
    kind = sec.get("kind", "sine")
    if kind == "zero":
        return lambda t: np.zeros(p)
    amp = _num(sec, "amplitude", "load", 1.0)
    v = _direction(sec, "load", p)
    if kind == "sine":
        freq = _num(sec, "frequency", "load", 1.0 / T, lo=0)
        return lambda t: amp * np.sin(np.pi * freq * t) * v
    if kind == "ramp":
        return lambda t: amp * (t / T) * v
    if kind == "constant":
        return lambda t: amp * v
    raise ConfigError(f"load.kind: unknown value {kind!r}")


def _instance(cfg):
    sec = cfg.section("instance")
    src = _require(sec, "source", "instance")
    where = "instance"
    if src == "toy":
        data = make_toy_instance(
            _num(sec, "seed", where, 0, lo=0, integer=True),
            d=_num(sec, "d", where, 3, lo=1, integer=True),
            n_pts=_num(sec, "n_pts", where, 2, lo=1, integer=True),
            n=_num(sec, "n", where, 12, lo=1, integer=True),
            n_macro=sec.get("n_macro"),
            m=sec.get("m"),
            kind=sec.get("kind", "vonmises"),
            c_floor=_num(sec, "c_floor", where, 1.0, lo=0),
            b_floor=_num(sec, "b_floor", where, 0.5, lo=0),
        )
        return data, assemble(data)
    if src == "file":
        from .io import read_instance

        path = cfg.resolve(_require(sec, "path", where))
        if not path.is_file():
            raise ConfigError(f"instance file not found: {path}")
        try:
            data = read_instance(path)
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{path}: malformed instance ({exc})") from exc
        return data, assemble(data)
    if src == "scalar":
        q = _num(sec, "q", where, lo=0)
        r = _num(sec, "r", where, 1.0)
        return None, (np.array([[q]]), np.array([[r]]))
    raise ConfigError(f"instance.source: unknown value {src!r}")


def _rule(cfg, data, m):
    sec = cfg.section("flow_rule")
    kind = _require(sec, "kind", "flow_rule")
    if kind == "vonmises":
        d = data.d if data is not None else 1
        n_pts = data.n_pts if data is not None else m
        return VonMises(_num(sec, "sigma0", "flow_rule", 1.0), d, n_pts)
    if kind == "box":
        lo = np.broadcast_to(np.asarray(sec.get("lo", -1.0), dtype=float), (m,)).copy()
        hi = np.broadcast_to(np.asarray(sec.get("hi", 1.0), dtype=float), (m,)).copy()
        return Box(lo, hi)
    if kind == "linear":
        return Linear(_num(sec, "kappa", "flow_rule", 1.0, lo=0))
    raise ConfigError(f"flow_rule.kind: unknown value {kind!r}")


def _vector(val, size, where):
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    arr = arr.reshape(-1)
    if arr.size != size:
        raise ConfigError(f"{where}: expected {size} entries, got {arr.size}")
    return arr


def _objective(cfg, data, ops, m, p):
    sec = cfg.section("objective", required=False)
    if not sec:
        return None
    kind = sec.get("kind", "plasticity")
    gamma = _num(sec, "gamma", "objective", lo=0)
    if gamma <= 0:
        raise ConfigError("objective.gamma must be positive")
    if kind == "plasticity":
        if data is None:
            raise ConfigError("objective.kind='plasticity' needs a plasticity instance")
        alpha = _num(sec, "alpha", "objective", 0.0, lo=0)
        beta = _num(sec, "beta", "objective", 0.0, lo=0)
        dd = data.d * data.d
        u_d = _vector(sec.get("u_d", 0.0), data.n_macro, "objective.u_d")
        sigma_d = _vector(sec.get("sigma_d", 0.0), dd, "objective.sigma_d")
        return ObjectiveSpec.plasticity(ops, data, alpha, beta, gamma, u_d, sigma_d)
    if kind == "state":
        weight = _num(sec, "weight", "objective", 0.0, lo=0)
        target = _vector(sec.get("target", 0.0), m, "objective.target")
        return ObjectiveSpec.state_tracking(gamma, m, p, weight, target, bool(sec.get("running", False)))
    raise ConfigError(f"objective.kind: unknown value {kind!r}")


def build(cfg):
    """Materialize the instance, problem data, load and objective of a config."""
    try:
        data, ops = _instance(cfg)
        if data is None:
            Q, R = ops
            ops = None
        else:
            Q, R = ops.Q, ops.R
        m = Q.shape[0] if isinstance(Q, np.ndarray) else Q.dim
        p = R.shape[1] if isinstance(R, np.ndarray) else R.cols
        rule = _rule(cfg, data, m)
        z0 = _vector(cfg.raw.get("z0", 0.0), m, "z0")
        gsec = cfg.section("grid")
        grid = TimeGrid(_num(gsec, "T", "grid", 1.0), _num(gsec, "N", "grid", lo=1, integer=True))
        pd = ProblemData(Q, R, z0, rule, cfg.raw.get("gamma_q"))
        load_fn = _load_fn(cfg.section("load", required=False) or {"kind": "zero"}, p, grid.T)
        objective = _objective(cfg, data, ops, m, p)
        reg = None
        rsec = cfg.section("reg", required=False)
        if rsec:
            reg = RegParams(_num(rsec, "lambda", "reg"), _num(rsec, "epsilon", "reg", 0.05))
    except ConfigError:
        raise
    except ValueError as exc:
        # invalid numeric parameters surface as ValueError subclasses
        raise ConfigError(f"{cfg.path or 'config'}: {exc}") from exc
    return Experiment(cfg, pd, grid, load_fn, data, ops, objective, reg)
