"""Control strategies, schedules and replicated scenario runs.

Replication ``r`` of a run draws everything random (weights, labels, rates,
initial infections, vaccination picks) from a seed derived from
``(master_seed, cell, r)``.  By default every cell of a payoff matrix shares
the replication seeds (``cell = 0``), so cells are compared on the same
graph ensemble; ``independent_seeds=True`` gives each cell its own stream.
"""
from __future__ import annotations

import enum
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from netsir import metrics
from netsir.contact_graph import (
    TopologyConfig,
    assign_labels,
    binarize,
    generate_weights,
    lambda_factor,
)
from netsir.errors import ConfigurationError, NetsirError
from netsir.sir_dynamics import (
    EpidemicParams,
    init_state,
    run_epidemic,
    sample_rates,
)

log = logging.getLogger(__name__)


class Kind(enum.IntEnum):
    NONE = 0
    CONF = 1
    VACC = 2
    CONF_VACC = 3

    @property
    def label(self):
        return STRATEGY_LABELS[self]

    @property
    def confines(self):
        return self in (Kind.CONF, Kind.CONF_VACC)

    @property
    def vaccinates(self):
        return self in (Kind.VACC, Kind.CONF_VACC)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).lower().replace("-", "").replace("_", "")
        table = {"no": cls.NONE, "none": cls.NONE, "conf": cls.CONF,
                 "vacc": cls.VACC, "confvacc": cls.CONF_VACC}
        try:
            return table[key]
        except KeyError:
            raise ConfigurationError(f"unknown strategy: {value!r}") from None


STRATEGY_LABELS = ("No", "Conf", "Vacc", "ConfVacc")


class Timing(enum.Enum):
    EARLY = 100
    MID = 200
    LATE = 300

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ConfigurationError(f"unknown timing: {value!r}") from None


@dataclass(frozen=True)
class ControlStrategy:
    kind: Kind = Kind.NONE
    timing: Timing = Timing.EARLY
    conf_duration: int = 200
    conf_threshold: int = 20
    vacc_lag: int = 6
    vacc_batch: int = 10
    vacc_total: int = 1000
    vacc_efficiency: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "timing", Timing.parse(self.timing))
        if self.conf_duration < 0:
            raise ConfigurationError("conf_duration must be >= 0")
        if self.vacc_lag < 1 or self.vacc_batch < 1 or self.vacc_total < 0:
            raise ConfigurationError("invalid vaccination plan")
        if not 0.0 <= self.vacc_efficiency <= 1.0:
            raise ConfigurationError("vacc_efficiency must lie in [0, 1]")

    @property
    def start(self):
        return self.timing.value

    @classmethod
    def of(cls, kind, timing=Timing.EARLY, **kw):
        return cls(Kind.parse(kind), Timing.parse(timing), **kw)


@dataclass(frozen=True)
class VaccinationEvent:
    step: int
    groups: frozenset
    batch: int
    efficiency: float


@dataclass(frozen=True)
class ControlSchedule:
    n_groups: int
    steps: int
    # (start, stop, per-group confinement parameter or None)
    epochs: tuple
    vaccination_events: tuple
    vaccine_supply: int

    @classmethod
    def uncontrolled(cls, steps, n_groups=1):
        return cls(n_groups, steps, ((0, steps, (None,) * n_groups),), (), 0)


def resolve_schedule(strategies, steps=1000):
    """Turn per-group strategies into adjacency epochs and vaccination events.

    Confinement windows become epochs over ``[0, steps)`` whose per-group
    parameter is the confined value inside the group's window.  Vaccination
    plans of all vaccinating groups are merged by step: groups whose events
    coincide share one batch drawn from their joint pool, and the dose stock
    is global.
    """
    strategies = [s if isinstance(s, ControlStrategy) else ControlStrategy.of(s)
                  for s in strategies]
    n_groups = len(strategies)
    windows = []
    for g, s in enumerate(strategies):
        if s.kind.confines and s.conf_duration > 0:
            a, b = s.start, s.start + s.conf_duration
            if a < 0:
                raise ConfigurationError(f"group {g}: confinement starts before 0")
            windows.append((g, a, b, s.conf_threshold))
    cuts = {0, steps}
    for _, a, b, _ in windows:
        cuts.update(x for x in (a, b) if 0 < x < steps)
    cuts = sorted(cuts)
    epochs = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        params = [None] * n_groups
        for g, wa, wb, thr in windows:
            if wa <= a and b <= wb:
                if params[g] is not None and params[g] != thr:
                    raise ConfigurationError(f"group {g}: inconsistent confinement windows")
                params[g] = thr
        params = tuple(params)
        if epochs and epochs[-1][2] == params:
            epochs[-1] = (epochs[-1][0], b, params)
        else:
            epochs.append((a, b, params))
    if not epochs:
        epochs = [(0, steps, (None,) * n_groups)]

    by_step = {}
    supply = 0
    for g, s in enumerate(strategies):
        if not s.kind.vaccinates:
            continue
        supply = max(supply, s.vacc_total)
        n_events = -(-s.vacc_total // s.vacc_batch)
        for k in range(n_events):
            step = s.start + k * s.vacc_lag
            if step >= steps:
                break
            groups, batch, eff = by_step.get(step, (frozenset(), 0, s.vacc_efficiency))
            if groups and eff != s.vacc_efficiency:
                raise ConfigurationError("groups sharing a batch disagree on efficiency")
            by_step[step] = (groups | {g}, max(batch, s.vacc_batch), eff)
    events = tuple(
        VaccinationEvent(step, groups, batch, eff)
        for step, (groups, batch, eff) in sorted(by_step.items())
    )
    return ControlSchedule(n_groups, steps, tuple(epochs), events, supply)


def replication_seed(master_seed, r, cell=0):
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(cell), int(r)))


def _int_seed(ss):
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class Replication:
    """Everything random in one replication, shared by the cells run on it."""

    weights: object
    labels: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    lam: float
    init: object
    vacc_seed: object
    seed: int


def draw_replication(topology: TopologyConfig, params: EpidemicParams, ss) -> Replication:
    s_graph, s_rates, s_init, s_vacc = ss.spawn(4)
    cfg = TopologyConfig(**{**asdict(topology), "seed": _int_seed(s_graph)})
    weights = generate_weights(cfg)
    labels = assign_labels(cfg)
    lam = lambda_factor(binarize(weights, topology.n_connect))
    beta, delta = sample_rates(topology.n, params.beta_avg, params.beta_sd,
                               params.delta_avg, params.delta_sd,
                               np.random.default_rng(s_rates))
    if params.rescale_to_graph:
        beta = beta / lam if lam > 0 else np.zeros_like(beta)
    init = init_state(topology.n, params.init_infected, np.random.default_rng(s_init))
    return Replication(weights, labels, beta, delta, lam, init, s_vacc,
                       _int_seed(ss))


def run_cell(rep: Replication, topology, params, strategies, normalise_on="base"):
    schedule = resolve_schedule(strategies, params.steps)
    traj = run_epidemic(
        rep.weights, rep.labels, params, schedule, rep.beta, rep.delta,
        state=rep.init, rng=np.random.default_rng(rep.vacc_seed),
        n_connect=topology.n_connect, normalise_on=normalise_on,
    )
    n_groups = topology.n_groups
    out = {
        "infection_load": metrics.infection_load(traj),
        "activation_margin": metrics.activation_margin(traj),
        "group_infection_load": [
            metrics.infection_load(traj, rep.labels == g) for g in range(n_groups)
        ],
        "peak_mean_infection": metrics.peak_mean_infection(traj)[0],
        "peak_step": metrics.peak_mean_infection(traj)[1],
        "conservation": metrics.conservation_error(traj),
        "n_vaccinated": int(sum(len(v) for _, v in traj.events)),
        "lambda": rep.lam,
        "warnings": list(traj.warnings),
    }
    return out


def _replication_job(args):
    topology, params, pairs, ss, normalise_on = args
    rep = draw_replication(topology, params, ss)
    results = {}
    for key, strategies in pairs.items():
        try:
            results[key] = run_cell(rep, topology, params, strategies, normalise_on)
        except NetsirError as exc:
            raise ReplicationFailed(rep.seed, key, exc) from exc
        results[key]["seed"] = rep.seed
    return results


class ReplicationFailed(NetsirError, RuntimeError):
    def __init__(self, seed, cell, cause):
        super().__init__(f"replication with seed {seed} failed in cell {cell}: {cause}")
        self.seed = seed
        self.cell = cell


class ReplicationsIncomplete(NetsirError, RuntimeError):
    """Some replications failed; ``partial`` holds the records that finished."""

    def __init__(self, partial, failures):
        seeds = ", ".join(str(f.seed) for f in failures)
        super().__init__(f"{len(failures)} replication(s) failed (seeds: {seeds})")
        self.partial = partial
        self.failures = failures


def _guarded(fn, job):
    try:
        return fn(job)
    except ReplicationFailed as exc:
        return exc


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_guarded, fn, j) for j in jobs]
            return [f.result() for f in futures]
    return [_guarded(fn, j) for j in jobs]


def run_replications(topology, params, pairs, n_iter, seed, independent_seeds=False,
                     workers=1, normalise_on="base"):
    """Run every strategy tuple in ``pairs`` (a dict) over ``n_iter`` replications.

    Returns ``{key: [per-replication record, ...]}`` ordered by replication.
    Results do not depend on ``workers``: each job owns its seed.  If any
    replication fails, :class:`ReplicationsIncomplete` carries the rest.
    """
    if n_iter < 1:
        raise ConfigurationError("n_iter must be >= 1")
    if independent_seeds:
        jobs = []
        for cell, (key, strategies) in enumerate(pairs.items(), start=1):
            jobs += [(topology, params, {key: strategies}, replication_seed(seed, r, cell),
                      normalise_on) for r in range(n_iter)]
    else:
        jobs = [(topology, params, dict(pairs), replication_seed(seed, r), normalise_on)
                for r in range(n_iter)]
    out = {key: [] for key in pairs}
    failures = []
    for res in _map(_replication_job, jobs, workers):
        if isinstance(res, ReplicationFailed):
            log.error("%s", res)
            failures.append(res)
            continue
        for key, rec in res.items():
            out[key].append(rec)
    if failures:
        raise ReplicationsIncomplete(out, failures)
    return out


@dataclass
class ScenarioResult:
    strategies: tuple
    n_iter: int
    infection_load: float
    infection_load_sd: float
    group_infection_load: np.ndarray
    group_infection_load_sd: np.ndarray
    activation_margin: float
    peak_step: float
    conservation: float
    seeds: list
    fingerprint: str = ""
    records: list = field(default_factory=list, repr=False)

    @classmethod
    def from_records(cls, strategies, records, fingerprint=""):
        il = np.array([r["infection_load"] for r in records])
        gil = np.array([r["group_infection_load"] for r in records])
        return cls(
            strategies=tuple(strategies),
            n_iter=len(records),
            infection_load=float(il.mean()),
            infection_load_sd=float(il.std(ddof=1)) if len(il) > 1 else 0.0,
            group_infection_load=gil.mean(axis=0),
            group_infection_load_sd=gil.std(axis=0, ddof=1) if len(il) > 1 else np.zeros(gil.shape[1]),
            activation_margin=float(np.mean([r["activation_margin"] for r in records])),
            peak_step=float(np.mean([r["peak_step"] for r in records])),
            conservation=float(max(r["conservation"] for r in records)),
            seeds=[r["seed"] for r in records],
            fingerprint=fingerprint,
            records=records,
        )


def fingerprint(*parts):
    """Content hash of JSON-serialisable parts, stable under key reordering."""
    blob = json.dumps(parts, sort_keys=True, default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.name
    if isinstance(obj, (frozenset, set)):
        return sorted(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def run_scenario(topology, params, strategy0, strategy1=None, n_iter=10, seed=0,
                 independent_seeds=False, workers=1, normalise_on="base"):
    strategies = (strategy0,) if strategy1 is None else (strategy0, strategy1)
    strategies = tuple(s if isinstance(s, ControlStrategy) else ControlStrategy.of(s)
                       for s in strategies)
    if len(strategies) != topology.n_groups:
        strategies = strategies + (strategies[-1],) * (topology.n_groups - len(strategies))
    recs = run_replications(topology, params, {"cell": strategies}, n_iter, seed,
                            independent_seeds, workers, normalise_on)["cell"]
    fp = fingerprint(topology, params, strategies, n_iter, seed, independent_seeds)
    return ScenarioResult.from_records(strategies, recs, fp)


def experiment1(topology, params, n_iter=10, seed=0, workers=1, **kw):
    """Co-operative strategies for every timing: the 3 x 4 infection-load table."""
    pairs = {}
    for timing in Timing:
        for kind in Kind:
            s = ControlStrategy(kind, timing)
            pairs[(timing.name, kind.label)] = (s,) * topology.n_groups
    recs = run_replications(topology, params, pairs, n_iter, seed, workers=workers, **kw)
    return {key: ScenarioResult.from_records(pairs[key], r) for key, r in recs.items()}


@dataclass
class PayoffMatrix:
    """Per-group infection-load changes for every strategy pair.

    ``delta[i, j, g]`` is group ``g``'s infection load when group 0 plays
    strategy ``i`` and group 1 plays ``j``, minus group ``g``'s load in the
    uncontrolled cell of the same batch.
    """

    delta: np.ndarray
    sd: np.ndarray
    baseline: np.ndarray
    baseline_total: float
    n_iter: int = 0
    topology: str = ""
    strategies: tuple = STRATEGY_LABELS
    fingerprint: str = ""

    @property
    def load(self):
        return self.delta + self.baseline[None, None, :]

    def normalised(self):
        return self.load / self.baseline[None, None, :]

    def to_csv(self, path, values=None, header=None):
        values = self.delta if values is None else values
        write_bimatrix_csv(path, values, self.strategies, header)

    @classmethod
    def from_csv(cls, path, baseline=None, sd_path=None, topology=""):
        values, strategies, meta = read_bimatrix_csv(path)
        if baseline is None:
            baseline = meta.get("baseline")
        if baseline is None:
            raise NetsirError(f"{path}: no baseline given or recorded")
        base = np.broadcast_to(np.asarray(baseline, dtype=float), (2,)).copy()
        sd = read_bimatrix_csv(sd_path)[0] if sd_path else np.zeros_like(values)
        return cls(values, sd, base, float(base.mean()), 0, topology, strategies)


def write_bimatrix_csv(path, values, strategies=STRATEGY_LABELS, header=None):
    """Rows are group-0 strategies; each group-1 strategy has a ``_g0``/``_g1`` column pair."""
    lines = [f"# {h}" for h in str(header).splitlines()] if header else []
    cols = ["strategy"] + [f"{s}_g{g}" for s in strategies for g in (0, 1)]
    lines.append(",".join(cols))
    for i, s in enumerate(strategies):
        cells = [f"{values[i, j, g]:.6g}" for j in range(len(strategies)) for g in (0, 1)]
        lines.append(",".join([s] + cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_bimatrix_csv(path):
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("baseline"):
                    _, _, v = body.partition("=")
                    meta["baseline"] = [float(x) for x in v.split(",")]
                continue
            rows.append(line.split(","))
    head, body = rows[0], rows[1:]
    strategies = tuple(r[0] for r in body)
    k = len(strategies)
    if len(head) != 1 + 2 * k:
        raise NetsirError(f"{path}: expected {1 + 2 * k} columns, got {len(head)}")
    values = np.array([[float(x) for x in r[1:]] for r in body]).reshape(k, k, 2)
    return values, strategies, meta


def build_payoff_matrix(topology, params, n_iter=10, seed=0, timing=Timing.EARLY,
                        independent_seeds=False, workers=1, normalise_on="base",
                        return_records=False):
    if topology.n_groups != 2:
        raise ConfigurationError("payoff matrices need exactly two groups")
    pairs = {
        (i, j): (ControlStrategy(Kind(i), timing), ControlStrategy(Kind(j), timing))
        for i in range(4) for j in range(4)
    }
    recs = run_replications(topology, params, pairs, n_iter, seed, independent_seeds,
                            workers, normalise_on)
    loads = np.array([[[r["group_infection_load"] for r in recs[(i, j)]]
                       for j in range(4)] for i in range(4)])  # (4, 4, n_iter, 2)
    base_runs = loads[0, 0]
    if independent_seeds:
        delta_runs = loads - base_runs.mean(axis=0)
    else:
        delta_runs = loads - base_runs[None, None]
    ddof = 1 if n_iter > 1 else 0
    total = np.mean([r["infection_load"] for r in recs[(0, 0)]])
    pm = PayoffMatrix(
        delta=delta_runs.mean(axis=2),
        sd=loads.std(axis=2, ddof=ddof),
        baseline=base_runs.mean(axis=0),
        baseline_total=float(total),
        n_iter=n_iter,
        topology=topology.topology.value,
        fingerprint=fingerprint(topology, params, n_iter, seed, timing, independent_seeds),
    )
    return (pm, recs) if return_records else pm


def interaction_effect(payoff, mode="cooperative"):
    """Non-additivity of combining confinement and vaccination, per group.

    ``"cooperative"`` compares diagonal cells, ``"unilateral"`` compares the
    cells where the other group stays uncontrolled (group ``g`` deviating
    alone from the uncontrolled cell).
    """
    d = payoff.delta if isinstance(payoff, PayoffMatrix) else np.asarray(payoff)
    C, V, CV = Kind.CONF, Kind.VACC, Kind.CONF_VACC
    if mode == "cooperative":
        return d[CV, CV] - (d[C, C] + d[V, V])
    if mode == "unilateral":
        g0 = d[CV, 0, 0] - (d[C, 0, 0] + d[V, 0, 0])
        g1 = d[0, CV, 1] - (d[0, C, 1] + d[0, V, 1])
        return np.array([g0, g1])
    raise ConfigurationError(f"unknown mode {mode!r}")
