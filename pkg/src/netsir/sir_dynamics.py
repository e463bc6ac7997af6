"""Node-level probabilistic SIR dynamics on a contact graph.

Every node carries a probability triple ``(p_S, p_I, p_R)``.  The forward
Euler propagator moves mass S -> I through contact with infectious
neighbours (normalised by the node's contact degree) and I -> R at the
node's recovery rate.  Vaccination is a discrete convex reset toward
``(1 - e, 0, e)``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from netsir.contact_graph import ContactGraph, lambda_factor
from netsir.errors import ConfigurationError, ContractViolation, StructuralError

CONSERVATION_TOL = 0.03


@dataclass(frozen=True)
class EpidemicParams:
    beta_avg: float = 0.08
    beta_sd: float = 0.05
    delta_avg: float = 0.2
    delta_sd: float = 0.05
    init_infected: int = 50
    dt: float = 0.02
    steps: int = 1000
    # Divide sampled infection rates by the graph's edge density, turning
    # the bulk rate into a per-contact graph rate.
    rescale_to_graph: bool = True

    def __post_init__(self):
        for name in ("beta_avg", "delta_avg"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("beta_sd", "delta_sd"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        if self.steps < 0 or self.init_infected < 0:
            raise ConfigurationError("steps and init_infected must be >= 0")


@dataclass
class SirState:
    p_S: np.ndarray
    p_I: np.ndarray
    p_R: np.ndarray

    @property
    def n(self):
        return self.p_S.shape[0]

    def total(self):
        return self.p_S + self.p_I + self.p_R

    def copy(self):
        return SirState(self.p_S.copy(), self.p_I.copy(), self.p_R.copy())

    def as_array(self):
        return np.stack([self.p_S, self.p_I, self.p_R])


@dataclass(frozen=True)
class VaccinationPlan:
    start_step: int = 100
    lag: int = 6
    batch: int = 10
    total: int = 1000
    efficiency: float = 0.9
    target_groups: frozenset = frozenset({0})

    def __post_init__(self):
        if self.batch < 1 or self.lag < 1:
            raise ConfigurationError("batch and lag must be >= 1")
        if self.total < 0:
            raise ConfigurationError("total must be >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigurationError("efficiency must lie in [0, 1]")
        object.__setattr__(self, "target_groups", frozenset(self.target_groups))


@dataclass
class Trajectory:
    """Result of :func:`run_epidemic`.

    Running per-node extrema (``max_I``, ``min_SR``) are always present and
    include the initial state.  ``states`` holds the full ``(steps + 1, 3, n)``
    history only when requested.
    """

    max_I: np.ndarray
    min_SR: np.ndarray
    argmax_I: np.ndarray
    mean_I: np.ndarray
    group_means: dict
    group_vars: dict
    conservation: float
    clipped: float
    final: SirState
    labels: np.ndarray
    events: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    states: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    @property
    def steps(self):
        return self.mean_I.shape[0] - 1

    def to_csv(self, path, header=None):
        """Per-step group means and variances of each compartment."""
        cols, data = ["step"], [np.arange(self.steps + 1)]
        for g in sorted(self.group_means):
            for k, comp in enumerate("SIR"):
                cols += [f"g{g}_mean_{comp}", f"g{g}_var_{comp}"]
                data += [self.group_means[g][:, k], self.group_vars[g][:, k]]
        table = np.column_stack(data)
        fmt = ["%d"] + ["%.10g"] * (len(cols) - 1)
        comment = "".join(f"# {line}\n" for line in str(header or "").splitlines())
        with open(path, "w") as fh:
            fh.write(comment)
            np.savetxt(fh, table, delimiter=",", header=",".join(cols),
                       comments="", fmt=fmt)
        return Path(path)

    def event_log(self):
        return {
            "vaccinations": [
                {"step": s, "nodes": [int(x) for x in nodes]} for s, nodes in self.events
            ],
            "epochs": [
                {"start": a, "stop": b, "parameters": [float(x) for x in p]}
                for a, b, p in self.epochs
            ],
        }

    def write_event_log(self, path):
        Path(path).write_text(json.dumps(self.event_log(), indent=1))
        return Path(path)


def lognormal_parameters(mean, sd):
    """Underlying normal ``(mu, sigma**2)`` for a lognormal with the given moments."""
    s2 = np.log1p(sd**2 / mean**2)
    return np.log(mean) - s2 / 2.0, s2


def sample_rates(n, beta_avg, beta_sd, delta_avg, delta_sd, seed):
    if min(beta_avg, delta_avg) <= 0 or min(beta_sd, delta_sd) < 0:
        raise ConfigurationError("rate moments must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for mean, sd in ((beta_avg, beta_sd), (delta_avg, delta_sd)):
        mu, s2 = lognormal_parameters(mean, sd)
        out.append(rng.lognormal(mu, np.sqrt(s2), size=n))
    return out[0], out[1]


def init_state(n, init_infected, seed) -> SirState:
    if not 0 <= init_infected <= n:
        raise ConfigurationError(f"init_infected must lie in [0, {n}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    infected = rng.choice(n, size=init_infected, replace=False)
    p_S, p_I = np.ones(n), np.zeros(n)
    p_S[infected] = 0.0
    p_I[infected] = 1.0
    return SirState(p_S, p_I, np.zeros(n))


def _inverse(d):
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    np.divide(1.0, d, out=out, where=d > 0)
    return out


def infection_flux(p_S, p_I, adj, beta, inv_degree):
    """Per-node S -> I rate ``p_S * d^-1 * (A @ (beta * p_I))``."""
    return p_S * inv_degree * (adj @ (beta * p_I))


def euler_step(state: SirState, graph, beta, delta, dt, degrees=None) -> SirState:
    """One forward Euler step; returns a new state.

    ``graph`` is a :class:`ContactGraph` or any (sparse) square matrix.  The
    normalising ``degrees`` default to the row sums of that adjacency;
    nodes of degree zero receive no infection.
    """
    adj = graph.adj if isinstance(graph, ContactGraph) else graph
    n = state.n
    if adj.shape != (n, n) or np.shape(beta) != (n,) or np.shape(delta) != (n,):
        raise StructuralError("state, adjacency and rate vectors disagree in size")
    if degrees is None:
        degrees = np.asarray(adj.sum(axis=1)).ravel()
    f = infection_flux(state.p_S, state.p_I, adj, beta, _inverse(degrees))
    p_S = state.p_S - dt * f
    p_I = (1.0 - dt * delta) * state.p_I + dt * f
    p_R = state.p_R + dt * delta * state.p_I
    return SirState(p_S, p_I, p_R)


def vaccinate(state: SirState, node_ids, e, vaccinated=None) -> SirState:
    """Apply ``p <- e * (1 - e, 0, e) + (1 - e) * p`` to ``node_ids``.

    ``vaccinated`` is an optional boolean ledger, updated in place; asking
    for a node already marked raises :class:`ContractViolation`.
    """
    if not 0.0 <= e <= 1.0:
        raise ConfigurationError("efficiency must lie in [0, 1]")
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if vaccinated is not None:
        if vaccinated[node_ids].any():
            again = node_ids[vaccinated[node_ids]]
            raise ContractViolation(f"nodes vaccinated twice: {again.tolist()}")
        if len(np.unique(node_ids)) != len(node_ids):
            raise ContractViolation("duplicate node ids in one vaccination batch")
        vaccinated[node_ids] = True
    out = state.copy()
    keep = 1.0 - e
    out.p_S[node_ids] = e * (1.0 - e) + keep * state.p_S[node_ids]
    out.p_I[node_ids] = keep * state.p_I[node_ids]
    out.p_R[node_ids] = e * e + keep * state.p_R[node_ids]
    return out


def _epoch_adjacency(weights, labels, params, n_connect):
    from netsir.contact_graph import binarize, confine

    if all(p is None for p in params):
        g = binarize(weights, n_connect, labels)
    else:
        g = confine(weights, labels, params, n_connect)
    return sp.csr_matrix(g.adj, dtype=float), g


def run_epidemic(weights, labels, params: EpidemicParams, schedule, beta, delta,
                 state=None, rng=None, n_connect=50, keep_states=False,
                 normalise_on="base"):
    """Integrate the SIR dynamics under a resolved control schedule.

    ``schedule`` is a :class:`netsir.scenarios.ControlSchedule`.  The degree
    vector normalising the infection term comes from the unconfined graph
    (``normalise_on="base"``) or is recomputed per confinement epoch
    (``"epoch"``).  Vaccination is applied after the Euler step of the event
    step.  ``beta`` is used as given; rescaling happens in the caller.
    """
    from netsir.scenarios import ControlSchedule

    if not isinstance(schedule, ControlSchedule):
        raise StructuralError("schedule must be a ControlSchedule")
    n = weights.n
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,) or np.shape(beta) != (n,) or np.shape(delta) != (n,):
        raise StructuralError("weights, labels and rates disagree in size")
    if normalise_on not in ("base", "epoch"):
        raise ConfigurationError("normalise_on must be 'base' or 'epoch'")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    steps, dt = params.steps, params.dt
    if state is None:
        state = init_state(n, params.init_infected, rng)
    p_S, p_I, p_R = state.p_S.copy(), state.p_I.copy(), state.p_R.copy()
    beta = np.asarray(beta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    decay = 1.0 - dt * delta

    base_adj, _ = _epoch_adjacency(weights, labels, [None] * schedule.n_groups, n_connect)
    base_inv = _inverse(np.asarray(base_adj.sum(axis=1)).ravel())

    groups = [int(g) for g in np.unique(labels)]
    onehot = (labels[:, None] == np.array(groups)[None, :]).astype(float)
    sizes = onehot.sum(axis=0)
    gmean = {g: np.empty((steps + 1, 3)) for g in groups}
    gvar = {g: np.empty((steps + 1, 3)) for g in groups}
    mean_I = np.empty(steps + 1)
    history = np.empty((steps + 1, 3, n)) if keep_states else None

    def record(t):
        mean_I[t] = p_I.mean()
        stack = np.stack((p_S, p_I, p_R))
        m = (stack @ onehot) / sizes
        v = np.maximum((stack * stack) @ onehot / sizes - m * m, 0.0)
        for k, g in enumerate(groups):
            gmean[g][t] = m[:, k]
            gvar[g][t] = v[:, k]
        if history is not None:
            history[t] = stack

    max_I = p_I.copy()
    argmax_I = np.zeros(n, dtype=np.int64)
    min_SR = p_S + p_R
    drift = float(np.abs(p_S + p_I + p_R - 1.0).max()) if n else 0.0
    clipped = 0.0
    record(0)

    vaccinated = np.zeros(n, dtype=bool)
    supply = schedule.vaccine_supply
    events = []
    event_at = {ev.step: ev for ev in schedule.vaccination_events}
    epochs = []

    for start, stop, epoch_params in schedule.epochs:
        if all(p is None for p in epoch_params):
            adj, inv = base_adj, base_inv
        else:
            adj, _ = _epoch_adjacency(weights, labels, epoch_params, n_connect)
            if normalise_on == "epoch":
                inv = _inverse(np.asarray(adj.sum(axis=1)).ravel())
            else:
                inv = base_inv
        eff = [n_connect if p is None else p for p in epoch_params]
        epochs.append((start, min(stop, steps), eff))
        for t in range(start, min(stop, steps)):
            f = infection_flux(p_S, p_I, adj, beta, inv)
            new_S = p_S - dt * f
            new_I = decay * p_I + dt * f
            new_R = p_R + dt * delta * p_I
            p_S, p_I, p_R = new_S, new_I, new_R

            ev = event_at.get(t)
            if ev is not None and supply > 0:
                pool = np.flatnonzero(~vaccinated & np.isin(labels, list(ev.groups)))
                k = min(ev.batch, supply, pool.size)
                if k:
                    chosen = np.sort(rng.choice(pool, size=k, replace=False))
                    e = ev.efficiency
                    vaccinated[chosen] = True
                    supply -= k
                    p_S[chosen] = e * (1.0 - e) + (1.0 - e) * p_S[chosen]
                    p_I[chosen] = (1.0 - e) * p_I[chosen]
                    p_R[chosen] = e * e + (1.0 - e) * p_R[chosen]
                    events.append((t, chosen))

            lo = min(p_S.min(), p_I.min(), p_R.min())
            hi = max(p_S.max(), p_I.max(), p_R.max())
            if lo < 0.0 or hi > 1.0:
                cut = [np.clip(x, 0.0, 1.0) for x in (p_S, p_I, p_R)]
                moved = sum(np.abs(a - b) for a, b in zip((p_S, p_I, p_R), cut))
                clipped += float(moved.max())
                p_S, p_I, p_R = cut

            drift = max(drift, float(np.abs(p_S + p_I + p_R - 1.0).max()))
            better = p_I > max_I
            max_I[better] = p_I[better]
            argmax_I[better] = t + 1
            np.minimum(min_SR, p_S + p_R, out=min_SR)
            record(t + 1)

    notes = []
    if drift > CONSERVATION_TOL:
        msg = f"probability conservation drift {drift:.4g} exceeds {CONSERVATION_TOL}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return Trajectory(
        max_I=max_I, min_SR=min_SR, argmax_I=argmax_I, mean_I=mean_I,
        group_means=gmean, group_vars=gvar, conservation=drift, clipped=clipped,
        final=SirState(p_S, p_I, p_R), labels=labels, events=events,
        epochs=epochs, states=history, warnings=notes,
    )


def graph_beta(beta, graph):
    """Per-contact rates for ``graph`` from bulk rates: ``beta / lambda``."""
    lam = lambda_factor(graph)
    if lam == 0:
        return np.zeros_like(np.asarray(beta, dtype=float))
    return np.asarray(beta, dtype=float) / lam


def rescale_beta(graph, beta_graph):
    """Bulk-model rate matching ``beta_graph``: ``lambda * beta_graph``."""
    return lambda_factor(graph) * np.asarray(beta_graph, dtype=float)


@dataclass
class BulkTrajectory:
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray


def bulk_sir(s0, i0, r0, beta, delta, dt, steps) -> BulkTrajectory:
    """Forward Euler integration of the homogeneous-mixing SIR model."""
    if abs(s0 + i0 + r0 - 1.0) > 1e-12:
        raise ConfigurationError("s0 + i0 + r0 must equal 1")
    s, i, r = (np.empty(steps + 1) for _ in range(3))
    s[0], i[0], r[0] = s0, i0, r0
    for t in range(steps):
        inf = beta * i[t] * s[t]
        rec = delta * i[t]
        s[t + 1] = s[t] - dt * inf
        i[t + 1] = i[t] + dt * (inf - rec)
        r[t + 1] = r[t] + dt * rec
    return BulkTrajectory(s, i, r)
