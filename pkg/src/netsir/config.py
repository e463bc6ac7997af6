"""JSON experiment configuration: loading, validation, defaults and records.

A config file holds one object.  ``topology`` is the only required key;
every section is optional and falls back to the defaults below.  Unknown
keys are rejected by name.  :func:`config_schema` returns the matching JSON
Schema document.
"""
from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from netsir.contact_graph import Topology, TopologyConfig
from netsir.errors import ConfigurationError
from netsir.scenarios import ControlStrategy, Kind, Timing, fingerprint
from netsir.sir_dynamics import EpidemicParams

SEED_ENV = "NETSIR_SEED"
DESK_SCALE_ITER = 10

# Acceptance bands for Experiment-1 style comparisons.  Desk scale uses
# fewer replications, so its bands are wider and are recorded with outputs.
TOLERANCES = {
    "full": {"infection_load": 0.01, "late_vs_uncontrolled": 0.005},
    "desk": {"infection_load": 0.03, "late_vs_uncontrolled": 0.01},
}


@dataclass(frozen=True)
class GraphSection:
    n: int = 1000
    n_groups: int = 2
    orderliness: float = 0.1
    n_connect: int = 50
    skew: float = 0.5


@dataclass(frozen=True)
class ControlSection:
    timing: str = "EARLY"
    strategies: tuple = ("No", "No")
    conf_duration: int = 200
    conf_threshold: int = 20
    vacc_lag: int = 6
    vacc_batch: int = 10
    vacc_total: int = 1000
    vacc_efficiency: float = 0.9


@dataclass(frozen=True)
class GameSection:
    scheme: str = "published"
    rankings: tuple = ((1, 2, 3, 4), (4, 2, 1, 3))
    objectives: tuple = ((1, 2), (1, 1))
    intensities: tuple = tuple(range(1, 10))
    objective_intensity: float = 5.0


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str
    graph: GraphSection = field(default_factory=GraphSection)
    epidemic: EpidemicParams = field(default_factory=EpidemicParams)
    control: ControlSection = field(default_factory=ControlSection)
    game: GameSection = field(default_factory=GameSection)
    n_iter: int = 50
    # None until resolved: command line, config file, NETSIR_SEED, then 0
    seed: int | None = None
    out: str = "runs"
    desk_scale: bool = False
    independent_seeds: bool = False
    threads: int = 1

    def topology_config(self, topology=None, seed=None):
        g = self.graph
        return TopologyConfig(
            n=g.n, n_groups=g.n_groups,
            topology=Topology.parse(topology or self.topology),
            orderliness=g.orderliness, n_connect=g.n_connect, skew=g.skew,
            seed=(self.seed or 0) if seed is None else seed,
        )

    def strategy(self, kind, timing=None):
        c = self.control
        return ControlStrategy(
            Kind.parse(kind), Timing.parse(timing or c.timing),
            c.conf_duration, c.conf_threshold, c.vacc_lag, c.vacc_batch,
            c.vacc_total, c.vacc_efficiency,
        )

    def strategies(self):
        kinds = list(self.control.strategies)
        if len(kinds) == 1:
            kinds = kinds * self.graph.n_groups
        if len(kinds) != self.graph.n_groups:
            raise ConfigurationError(
                f"control.strategies has {len(kinds)} entries for {self.graph.n_groups} groups"
            )
        return tuple(self.strategy(k) for k in kinds)

    @property
    def tolerances(self):
        return TOLERANCES["desk" if self.desk_scale else "full"]

    def to_dict(self):
        d = asdict(self)
        d["tolerances"] = dict(self.tolerances)
        return _plain(d)

    def fingerprint(self):
        d = self.to_dict()
        for key in ("out", "threads"):  # do not change the numbers
            d.pop(key)
        return fingerprint(d)


SECTIONS = {"graph": GraphSection, "epidemic": EpidemicParams,
            "control": ControlSection, "game": GameSection}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _type_name(f):
    return f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")


def _check_value(where, f, value):
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(_type_name(f))
    if kind is None:
        return value
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigurationError(f"{where}: expected {_type_name(f)}, got {value!r}")
    return value


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"unknown key: {where + '.' if where else ''}{key}")
    kw = {}
    for name, value in data.items():
        f = known[name]
        path = f"{where}.{name}" if where else name
        if name in SECTIONS and cls is ExperimentConfig:
            kw[name] = _build(SECTIONS[name], value, name)
        else:
            kw[name] = _tuplify(_check_value(path, f, value))
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigurationError(f"{where or 'config'}: {exc}") from None


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    if "topology" not in data:
        raise ConfigurationError("missing required key: topology")
    # persisted configs carry the derived tolerance bands; they are recomputed
    data = {k: v for k, v in data.items() if k != "tolerances"}
    cfg = _build(ExperimentConfig, data, "")
    return validate(cfg)


def validate(cfg):
    Topology.parse(cfg.topology)
    cfg.topology_config()
    cfg.strategies()
    if cfg.seed is not None and (not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool)
                                 or cfg.seed < 0):
        raise ConfigurationError(f"seed: expected a non-negative int, got {cfg.seed!r}")
    if cfg.n_iter < 1:
        raise ConfigurationError("n_iter must be >= 1")
    if cfg.threads < 1:
        raise ConfigurationError("threads must be >= 1")
    from netsir.games import PreferenceProfile, get_scheme

    get_scheme(cfg.game.scheme)
    for r in cfg.game.rankings:
        PreferenceProfile(r, 1)
    for o in cfg.game.objectives:
        PreferenceProfile(o, 1)
    for i in cfg.game.intensities:
        PreferenceProfile((1, 2), i)
    return cfg


def load_config(path):
    """Read and validate a JSON config file."""
    text = Path(path).read_text()
    if not text.strip():
        raise ConfigurationError("missing required key: topology")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def default_config(topology="hom"):
    return validate(ExperimentConfig(topology=topology))


def apply_overrides(cfg, **overrides):
    """Command-line values win over file values; ``None`` means not given."""
    kw = {k: v for k, v in overrides.items() if v is not None}
    if kw.get("desk_scale"):
        kw.setdefault("n_iter", DESK_SCALE_ITER)
    return validate(replace(cfg, **kw)) if kw else cfg


def resolve_seed(cfg, cli_seed=None):
    """Return ``cfg`` with its seed fixed: command line, file, ``NETSIR_SEED``, 0."""
    if cli_seed is not None:
        seed = int(cli_seed)
    elif cfg.seed is not None:
        seed = cfg.seed
    else:
        env = os.environ.get(SEED_ENV)
        try:
            seed = int(env) if env is not None else 0
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return validate(replace(cfg, seed=seed))


def config_schema():
    """JSON Schema (draft 2020-12) describing the config file."""
    def props(cls):
        out = {}
        for f in fields(cls):
            t = {"int": "integer", "float": "number", "bool": "boolean",
                 "str": "string"}.get(_type_name(f))
            if f.name == "seed":
                out[f.name] = {"type": ["integer", "null"], "minimum": 0}
            else:
                out[f.name] = {"type": t} if t else {"type": "array"}
        return out

    top = props(ExperimentConfig)
    top["topology"] = {"type": "string", "enum": ["hom", "homogeneous", "block"]}
    for name, cls in SECTIONS.items():
        top[name] = {"type": "object", "additionalProperties": False,
                     "properties": props(cls)}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "netsir experiment config",
        "type": "object",
        "required": ["topology"],
        "additionalProperties": False,
        "properties": top,
    }


@dataclass
class RunRecord:
    """Provenance for one replication or one aggregate result."""

    config_fingerprint: str
    seed: int
    metrics: dict
    conservation: float
    wall_clock: float
    version: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self):
        d = _plain(asdict(self))
        return json.dumps(d, indent=1, sort_keys=True)


def run_record(cfg, seed, metrics, conservation, started, **extra):
    from netsir import __version__

    return RunRecord(cfg.fingerprint(), int(seed), _plain(metrics), float(conservation),
                     round(time.time() - started, 3), __version__,
                     {"python": platform.python_version(), **extra})
