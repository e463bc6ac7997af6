"""Randomised social-contact graphs with sorted/shuffled connection weights.

A graph is built in two stages.  :func:`generate_weights` produces a dense,
symmetric matrix of connection propensities in ``[0, 1]``; :func:`binarize`
and :func:`confine` threshold it into a binary adjacency.  Lowering the
connection parameter only ever removes edges, which is how confinement is
modelled.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from netsir.errors import ConfigurationError, StructuralError

BETA_A = 1.1
BETA_B = 0.9


class Topology(str, enum.Enum):
    HOMOGENEOUS = "hom"
    BLOCK = "block"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "hom": cls.HOMOGENEOUS,
            "homogeneous": cls.HOMOGENEOUS,
            "block": cls.BLOCK,
            "blocklocalised": cls.BLOCK,
            "block_localised": cls.BLOCK,
            "blocklocalized": cls.BLOCK,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown topology: {value!r}") from None


@dataclass(frozen=True)
class TopologyConfig:
    n: int = 1000
    n_groups: int = 2
    topology: Topology = Topology.HOMOGENEOUS
    orderliness: float = 0.1
    n_connect: int = 50
    skew: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology.parse(self.topology))
        if self.n < 2:
            raise ConfigurationError(f"n must be >= 2, got {self.n}")
        if self.n_groups < 1:
            raise ConfigurationError(f"n_groups must be >= 1, got {self.n_groups}")
        if self.n % self.n_groups:
            raise ConfigurationError(
                f"n={self.n} is not divisible by n_groups={self.n_groups}"
            )
        if not 0.0 <= self.skew <= 1.0:
            raise ConfigurationError(f"skew must lie in [0, 1], got {self.skew}")
        if self.orderliness < 0:
            raise ConfigurationError("orderliness must be >= 0")
        if not 0 <= self.n_connect <= self.n:
            raise ConfigurationError(f"n_connect must lie in [0, {self.n}]")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Symmetric connection propensities with a zero diagonal."""

    w: np.ndarray

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class ContactGraph:
    adj: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=np.int8)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise StructuralError("adjacency must be square")
        object.__setattr__(self, "adj", adj)
        if self.labels is None:
            labels = np.zeros(adj.shape[0], dtype=np.int64)
        else:
            labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (adj.shape[0],):
            raise StructuralError(
                f"labels have shape {labels.shape}, expected ({adj.shape[0]},)"
            )
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1, dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.adj.sum(dtype=np.int64)) // 2


def _child_rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _shuffle_upper_rows(tri, rng):
    # Permute each row's strictly-upper entries among themselves; zeros stay left.
    n = tri.shape[0]
    keys = rng.random((n, n))
    keys[np.tril_indices(n)] = -1.0
    order = np.argsort(keys, axis=1, kind="stable")
    return np.take_along_axis(tri, order, axis=1)


def _banded_sorted(samples):
    # Row i keeps its n-i-1 largest samples, largest right next to the diagonal.
    n = samples.shape[0]
    desc = -np.sort(-samples, axis=1)
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    k = np.clip(j - i - 1, 0, n - 1)
    return np.where(j > i, np.take_along_axis(desc, k, axis=1), 0.0)


def _sorted_and_shuffled(samples, rng):
    sorted_tri = _banded_sorted(samples)
    return sorted_tri, _shuffle_upper_rows(sorted_tri, rng)


def _symmetrize(upper):
    upper = np.triu(upper, 1)
    return upper + upper.T


def weight_components(n, seed):
    """Return the symmetric ``(sorted, shuffled)`` pair that :func:`generate_weights` mixes.

    Row variant: row ``i`` of one Beta(1.1, 0.9) sample matrix is sorted and
    its ``n - i - 1`` largest values fill the strict upper triangle in
    descending order outward from the diagonal, so strong propensities form
    a dense band along the diagonal.  Column variant: the same construction
    on the columns (the transpose).  One Bernoulli(0.5) mask picks per pair
    between the variants, for the sorted and the shuffled matrices alike.
    """
    r_beta, r_h, r_v, r_mask = _child_rngs(seed, 4)
    x = r_beta.beta(BETA_A, BETA_B, size=(n, n))
    sorted_h, shuffled_h = _sorted_and_shuffled(x, r_h)
    sorted_v, shuffled_v = _sorted_and_shuffled(x.T, r_v)
    pick_h = r_mask.random((n, n)) < 0.5
    a_sorted = _symmetrize(np.where(pick_h, sorted_h, sorted_v))
    a_shuffled = _symmetrize(np.where(pick_h, shuffled_h, shuffled_v))
    return a_sorted, a_shuffled


def generate_weights(cfg: TopologyConfig) -> WeightMatrix:
    a_sorted, a_shuffled = weight_components(cfg.n, cfg.seed)
    if cfg.skew == 0.0:
        w = a_sorted
    elif cfg.skew == 1.0:
        w = a_shuffled
    else:
        w = a_sorted * (1.0 - cfg.skew) + a_shuffled * cfg.skew
    np.fill_diagonal(w, 0.0)
    w.setflags(write=False)
    return WeightMatrix(w)


def threshold(n, n_connect):
    """Propensity at or above which a pair is connected."""
    return (n - n_connect) / n


def binarize(w: WeightMatrix, n_connect, labels=None) -> ContactGraph:
    n = w.n
    if not 0 <= n_connect <= n:
        raise ConfigurationError(f"n_connect must lie in [0, {n}], got {n_connect}")
    adj = w.w >= threshold(n, n_connect)
    np.fill_diagonal(adj, False)
    return ContactGraph(adj, labels)


def assign_labels(cfg: TopologyConfig, rng=None) -> np.ndarray:
    """Group labels along the node index, partially shuffled.

    Homogeneous spreading interleaves ``0, 1, .., G-1`` over the index and
    block localisation lays the groups out in contiguous blocks.  Each index
    is then jittered by ``orderliness * n * N(0, 1)`` and the base label
    sequence is dealt out again in jittered order, so group sizes are exact.
    """
    n, g = cfg.n, cfg.n_groups
    idx = np.arange(n)
    if cfg.topology is Topology.HOMOGENEOUS:
        base = idx % g
    else:
        base = idx // (n // g)
    if cfg.orderliness == 0:
        return base.astype(np.int64)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(5)[4])
    key = idx + cfg.orderliness * n * rng.standard_normal(n)
    order = np.argsort(key, kind="stable")
    labels = np.empty(n, dtype=np.int64)
    labels[order] = base
    return labels


def effective_parameters(group_thresholds, n_connect, n_groups):
    """Per-group connection parameter; ``None`` means the group does not confine."""
    if group_thresholds is None:
        group_thresholds = [None] * n_groups
    if len(group_thresholds) != n_groups:
        raise StructuralError(
            f"got {len(group_thresholds)} group thresholds for {n_groups} groups"
        )
    return np.array(
        [n_connect if t is None else t for t in group_thresholds], dtype=float
    )


def pair_parameters(labels, group_thresholds, n_connect):
    """Matrix of connection parameters: intra-group own value, inter-group the mean."""
    labels = np.asarray(labels)
    n_groups = int(labels.max()) + 1 if labels.size else 1
    if group_thresholds is not None:
        n_groups = max(n_groups, len(group_thresholds))
    p = effective_parameters(group_thresholds, n_connect, n_groups)
    return (p[:, None] + p[None, :]) / 2.0


def confine(w: WeightMatrix, labels, group_thresholds, n_connect) -> ContactGraph:
    """Threshold ``w`` with per-group connection parameters.

    ``group_thresholds[g]`` is the confined parameter of group ``g`` or
    ``None`` when the group keeps ``n_connect``.  Edges between two groups
    use the average of both parameters.
    """
    n = w.n
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise StructuralError(f"labels have shape {labels.shape}, expected ({n},)")
    for t in group_thresholds:
        if t is not None and not 0 <= t <= n:
            raise ConfigurationError(f"confinement parameter {t} outside [0, {n}]")
    if not 0 <= n_connect <= n:
        raise ConfigurationError(f"n_connect must lie in [0, {n}], got {n_connect}")
    params = pair_parameters(labels, group_thresholds, n_connect)
    cut = (n - params[labels][:, labels]) / n
    adj = w.w >= cut
    np.fill_diagonal(adj, False)
    return ContactGraph(adj, labels)


def graph_stats(g: ContactGraph) -> dict:
    deg = g.degrees
    hist = np.bincount(deg, minlength=1)
    groups = np.unique(g.labels)
    return {
        "mean_degree": float(deg.mean()) if g.n else 0.0,
        "max_degree": int(deg.max()) if g.n else 0,
        "degree_histogram": hist,
        "per_group_degree": {int(k): float(deg[g.labels == k].mean()) for k in groups},
        "isolated": int((deg == 0).sum()),
    }


def lambda_factor(g: ContactGraph) -> float:
    """Edge density ``sum(A) / n**2``."""
    return float(g.adj.sum(dtype=np.int64)) / g.n**2


def export_graph(g: ContactGraph, out_dir, header=None):
    """Write ``edges.csv``, ``labels.csv`` and ``degree_histogram.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    src, dst = np.nonzero(np.triu(g.adj, 1))
    paths = {}
    with open(out_dir / "edges.csv", "w", newline="") as fh:
        _comment(fh, header)
        wr = csv.writer(fh)
        wr.writerow(["src", "dst"])
        wr.writerows(zip(src.tolist(), dst.tolist()))
    paths["edges"] = out_dir / "edges.csv"
    with open(out_dir / "labels.csv", "w", newline="") as fh:
        _comment(fh, header)
        wr = csv.writer(fh)
        wr.writerow(["node", "group"])
        wr.writerows(enumerate(g.labels.tolist()))
    paths["labels"] = out_dir / "labels.csv"
    hist = graph_stats(g)["degree_histogram"]
    with open(out_dir / "degree_histogram.csv", "w", newline="") as fh:
        _comment(fh, header)
        wr = csv.writer(fh)
        wr.writerow(["degree", "count"])
        wr.writerows((d, int(c)) for d, c in enumerate(hist) if c)
    paths["degree_histogram"] = out_dir / "degree_histogram.csv"
    return paths


def read_edge_list(path, n, labels=None) -> ContactGraph:
    adj = np.zeros((n, n), dtype=np.int8)
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            i, j = int(row["src"]), int(row["dst"])
            adj[i, j] = adj[j, i] = 1
    return ContactGraph(adj, labels)


def _comment(fh, header):
    if header:
        for line in str(header).splitlines():
            fh.write(f"# {line}\n")
