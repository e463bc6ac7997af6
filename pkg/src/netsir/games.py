"""Preference rankings, compounded payoffs and pure Nash equilibria.

Each group ranks the four control strategies (rank 1 = most preferred) and
attaches an intensity ``I`` on the 1-9 pairwise-comparison scale.  A ranking
becomes a weight vector through a geometric mean of pairwise ratios
``tau_ij = I ** delta_ij`` with ``delta_ij = (O(i) - O(j)) / (n - 1)``.

Weights come in two orientations.  The *penalty* orientation hands the
largest weight to the least preferred option; the *priority* orientation
hands it to the most preferred one.  They differ only in the sign of
``delta``.  The root of the geometric mean is ``n - 1`` by default; the
published equilibrium tables are reproduced with root ``n``, see
:data:`PUBLISHED`.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from netsir.errors import ConfigurationError, StructuralError

STRATEGIES = ("No", "Conf", "Vacc", "ConfVacc")

#: none > conf > vacc > conf-vacc, a hands-off preference.
HANDS_OFF = (1, 2, 3, 4)
#: vacc > conf > conf-vacc > none, medical intervention first.
MEDICAL_FIRST = (4, 2, 1, 3)

OBJECTIVE_INTENSITY = 5.0


@dataclass(frozen=True)
class PreferenceProfile:
    ranking: tuple
    intensity: float = 1.0

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranking)
        n = len(ranks)
        if n < 2:
            raise ConfigurationError("a ranking needs at least two options")
        if any(r < 1 or r > n for r in ranks):
            raise ConfigurationError(f"ranks must lie in 1..{n}, got {ranks}")
        if not np.isfinite(self.intensity) or self.intensity < 1:
            raise ConfigurationError(f"intensity must be >= 1, got {self.intensity}")
        object.__setattr__(self, "ranking", ranks)
        object.__setattr__(self, "intensity", float(self.intensity))

    @property
    def n(self):
        return len(self.ranking)


def _profile(profile, intensity=None):
    if isinstance(profile, PreferenceProfile):
        if intensity is not None:
            return PreferenceProfile(profile.ranking, intensity)
        return profile
    return PreferenceProfile(tuple(profile), 1.0 if intensity is None else intensity)


def _root(root, n):
    if root is None or root == "n-1":
        return n - 1
    if root == "n":
        return n
    return float(root)


def _geometric_weights(ranks, intensity, orientation, root):
    o = np.asarray(ranks, dtype=float)
    n = o.size
    delta = (o[:, None] - o[None, :]) / (n - 1)
    if orientation == "priority":
        delta = -delta
    elif orientation != "penalty":
        raise ConfigurationError(f"unknown weight orientation {orientation!r}")
    # log of prod_j tau_ij ** (1/root); computed in log space, then normalised
    logw = np.log(intensity) * delta.sum(axis=1) / _root(root, n)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def ranking_weights(profile, n=None, *, orientation="penalty", root=None):
    """Unit-sum weights for a ranked profile.

    ``profile`` is a :class:`PreferenceProfile` or a bare ranking (then the
    intensity is 1).  With the default penalty orientation less preferred
    options get larger weights.

    >>> ranking_weights(PreferenceProfile((1, 2, 3, 4), 5)).round(4)
    array([0.0634, 0.1296, 0.265 , 0.542 ])
    """
    p = _profile(profile)
    if n is not None and n != p.n:
        raise StructuralError(f"ranking has {p.n} entries, expected {n}")
    return _geometric_weights(p.ranking, p.intensity, orientation, root)


def objective_weights(objective_ranking, intensity=OBJECTIVE_INTENSITY, *, root=None):
    """``(theta_1, theta_2)`` for the infection-load and preference objectives.

    Priority orientation: the objective ranked first gets the larger weight.
    """
    p = PreferenceProfile(tuple(objective_ranking), intensity)
    if p.n != 2:
        raise StructuralError("objective ranking must have two entries")
    return _geometric_weights(p.ranking, p.intensity, "priority", root)


@dataclass(frozen=True)
class CompoundingScheme:
    """How infection loads and preference weights are scalarised.

    ``cost = theta_1 * IL_norm + sign * theta_2 * w``, minimised, where ``w``
    has the given orientation and both ``w`` and ``theta`` use the given
    geometric-mean root.
    """

    name: str
    sign: float
    orientation: str
    root: str

    def policy_weights(self, profile):
        return ranking_weights(profile, orientation=self.orientation, root=self.root)

    def theta(self, objective_ranking, intensity=OBJECTIVE_INTENSITY):
        return objective_weights(objective_ranking, intensity, root=self.root)


#: Preferred options earn a bonus: ``theta_1 IL - theta_2 w`` with priority
#: weights and root ``n``.  Reproduces the published compounded table and
#: equilibrium maps from the published infection-load tables.
PUBLISHED = CompoundingScheme("published", -1.0, "priority", "n")
#: Less preferred options pay a penalty: ``theta_1 IL + theta_2 w`` with
#: penalty weights and root ``n - 1``.
ADDITIVE_PENALTY = CompoundingScheme("additive-penalty", +1.0, "penalty", "n-1")

SCHEMES = {s.name: s for s in (PUBLISHED, ADDITIVE_PENALTY)}


def get_scheme(name_or_scheme):
    if isinstance(name_or_scheme, CompoundingScheme):
        return name_or_scheme
    try:
        return SCHEMES[name_or_scheme]
    except KeyError:
        raise ConfigurationError(
            f"unknown compounding scheme {name_or_scheme!r}; choose from {sorted(SCHEMES)}"
        ) from None


@dataclass(frozen=True, eq=False)
class CompoundedPayoff:
    cells: np.ndarray
    theta: np.ndarray
    weights: tuple
    provenance: dict = field(default_factory=dict)

    def nash(self):
        return pure_nash(self.cells)


def _normalised_loads(payoff, baseline):
    """``(4, 4, 2)`` loads scaled so the uncontrolled cell is 1 for each group."""
    if hasattr(payoff, "delta"):
        delta = np.asarray(payoff.delta, dtype=float)
        if baseline is None:
            baseline = payoff.baseline
    else:
        delta = np.asarray(payoff, dtype=float)
    if delta.ndim != 3 or delta.shape[0] != delta.shape[1] or delta.shape[2] != 2:
        raise StructuralError(f"payoff must have shape (k, k, 2), got {delta.shape}")
    if baseline is None:
        raise StructuralError("normalising a payoff matrix needs its baseline load")
    base = np.broadcast_to(np.asarray(baseline, dtype=float), (2,))
    if np.any(base <= 0):
        raise StructuralError(f"baseline load must be positive, got {base}")
    return (base + delta) / base


def compound_payoff(payoff, profile0, profile1, objective_ranking=(1, 2), *,
                    baseline=None, scheme=PUBLISHED,
                    objective_intensity=OBJECTIVE_INTENSITY, theta=None):
    """Scalarise an infection-load payoff with both groups' policy preferences.

    ``payoff`` is a :class:`~netsir.scenarios.PayoffMatrix` or a ``(4, 4, 2)``
    array of load changes relative to the uncontrolled cell; for a bare
    array ``baseline`` (scalar or per group) is required.  ``theta``
    overrides the objective weights derived from ``objective_ranking``.
    """
    sch = get_scheme(scheme)
    il = _normalised_loads(payoff, baseline)
    p0, p1 = _profile(profile0), _profile(profile1)
    k = il.shape[0]
    if p0.n != k or p1.n != k:
        raise StructuralError(f"profiles must rank the {k} strategies")
    w0 = sch.policy_weights(p0)
    w1 = sch.policy_weights(p1)
    if theta is None:
        theta = sch.theta(objective_ranking, objective_intensity)
    else:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2,) or np.any(theta < 0) or not np.isclose(theta.sum(), 1.0):
            raise ConfigurationError(f"theta must be two non-negative weights summing to 1, got {theta}")
    cells = np.empty_like(il)
    cells[..., 0] = theta[0] * il[..., 0] + sch.sign * theta[1] * w0[:, None]
    cells[..., 1] = theta[0] * il[..., 1] + sch.sign * theta[1] * w1[None, :]
    prov = {
        "scheme": sch.name,
        "profile0": [list(p0.ranking), p0.intensity],
        "profile1": [list(p1.ranking), p1.intensity],
        "objective_ranking": list(objective_ranking),
        "source": getattr(payoff, "fingerprint", ""),
    }
    return CompoundedPayoff(cells, theta, (w0, w1), prov)


def pure_nash(bimatrix):
    """Pure equilibria of a cost-minimising bimatrix game.

    Cell ``(i, j)`` qualifies when group 0's cost is the smallest in column
    ``j`` and group 1's cost is the smallest in row ``i``; ties keep every
    minimiser.
    """
    b = np.asarray(getattr(bimatrix, "cells", bimatrix), dtype=float)
    if b.ndim != 3 or b.shape[2] != 2:
        raise StructuralError(f"bimatrix must have shape (m, k, 2), got {b.shape}")
    best0 = b[..., 0] <= b[..., 0].min(axis=0, keepdims=True)
    best1 = b[..., 1] <= b[..., 1].min(axis=1, keepdims=True)
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(best0 & best1))}


def cell_names(cells, strategies=STRATEGIES):
    return sorted((strategies[i], strategies[j]) for i, j in cells)


def _objective_tag(obj):
    return "".join(str(int(o)) for o in obj)


@dataclass
class NashMap:
    """Equilibrium cells for every (topology, objective, I0, I1) grid point."""

    points: dict = field(default_factory=dict)
    strategies: tuple = STRATEGIES

    def cells(self, topology, objective, i0, i1):
        key = (topology, _objective_tag(objective) if not isinstance(objective, str) else objective,
               int(i0), int(i1))
        return self.points[key]

    def rows(self):
        for (topo, obj, i0, i1), cells in sorted(self.points.items()):
            for i, j in sorted(cells):
                yield topo, obj, i0, i1, self.strategies[i], self.strategies[j]

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                for line in str(header).splitlines():
                    fh.write(f"# {line}\n")
            wr = csv.writer(fh)
            wr.writerow(["topology", "objective", "I0", "I1", "cell_row", "cell_col"])
            wr.writerows(self.rows())

    @classmethod
    def from_csv(cls, source, strategies=STRATEGIES):
        if hasattr(source, "read"):
            text = source.read()
        else:
            with open(source) as fh:
                text = fh.read()
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        index = {s: k for k, s in enumerate(strategies)}
        points = {}
        for row in csv.DictReader(io.StringIO("\n".join(lines))):
            key = (row["topology"], row["objective"], int(row["I0"]), int(row["I1"]))
            points.setdefault(key, set()).add((index[row["cell_row"]], index[row["cell_col"]]))
        return cls(points, strategies)

    def restrict(self, intensities):
        keep = set(int(i) for i in intensities)
        return NashMap({k: v for k, v in self.points.items()
                        if k[2] in keep and k[3] in keep}, self.strategies)

    def coalesced(self):
        """Group grid points into rectangles ``(I0 range, I1 range)`` per cell.

        Returns ``{(topology, objective, cell): [((a0, b0), (a1, b1)), ...]}``.
        """
        by_cell = {}
        for (topo, obj, i0, i1), cells in self.points.items():
            for c in cells:
                by_cell.setdefault((topo, obj, c), set()).add((i0, i1))
        return {key: _rectangles(pts) for key, pts in sorted(by_cell.items())}


def _runs(values):
    values = sorted(values)
    out = []
    for v in values:
        if out and v == out[-1][1] + 1:
            out[-1][1] = v
        else:
            out.append([v, v])
    return [tuple(r) for r in out]


def _rectangles(points):
    # First merge I1 into runs per I0, then merge consecutive I0 sharing a run.
    by_i0 = {}
    for i0, i1 in points:
        by_i0.setdefault(i0, set()).add(i1)
    open_rects = {}
    done = []
    for i0 in sorted(by_i0):
        runs = set(_runs(by_i0[i0]))
        for run, (start, last) in list(open_rects.items()):
            if run in runs and last == i0 - 1:
                open_rects[run] = (start, i0)
                runs.discard(run)
            else:
                done.append(((start, last), run))
                del open_rects[run]
        for run in runs:
            open_rects[run] = (i0, i0)
    done.extend(((s, e), run) for run, (s, e) in open_rects.items())
    return sorted(done)


def format_range(r):
    a, b = r
    return str(a) if a == b else f"{a}-{b}"


def intensity_sweep(payoffs, intensities=range(1, 10), objective_rankings=((1, 2), (1, 1)),
                    rankings=(HANDS_OFF, MEDICAL_FIRST), *, scheme=PUBLISHED,
                    baselines=None, objective_intensity=OBJECTIVE_INTENSITY):
    """Equilibria of the compounded game over a grid of ranking intensities.

    ``payoffs`` maps a topology name to its payoff (matrix object or array);
    ``baselines`` optionally maps the same names to baseline loads for bare
    arrays.  ``rankings`` are the group-0 and group-1 policy rankings.
    """
    if not payoffs:
        raise StructuralError("intensity_sweep needs at least one payoff matrix")
    baselines = baselines or {}
    grid = [float(i) for i in intensities]
    points = {}
    for topo, payoff in payoffs.items():
        for obj in objective_rankings:
            tag = _objective_tag(obj)
            for i0 in grid:
                for i1 in grid:
                    cp = compound_payoff(
                        payoff,
                        PreferenceProfile(rankings[0], i0),
                        PreferenceProfile(rankings[1], i1),
                        obj,
                        baseline=baselines.get(topo),
                        scheme=scheme,
                        objective_intensity=objective_intensity,
                    )
                    points[(topo, tag, int(i0), int(i1))] = pure_nash(cp.cells)
    return NashMap(points)


FIXTURES = {
    "homogeneous": "infection_load_change_homogeneous.csv",
    "block": "infection_load_change_block.csv",
    "compounded": "compounded_homogeneous_I3_3_theta5_obj11.csv",
}


def fixture_path(name):
    try:
        fname = FIXTURES[name]
    except KeyError:
        raise ConfigurationError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return resources.files("netsir") / "data" / fname


def load_fixture(name):
    """Bundled reference table as ``(values, baseline or None)``."""
    from netsir.scenarios import read_bimatrix_csv

    with resources.as_file(fixture_path(name)) as path:
        values, _, meta = read_bimatrix_csv(path)
    base = meta.get("baseline")
    return values, (np.asarray(base) if base is not None else None)


def published_nash_map():
    with resources.as_file(resources.files("netsir") / "data" / "nash_map_published.csv") as p:
        return NashMap.from_csv(p)
