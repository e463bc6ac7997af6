"""Epidemic burden measures computed from a :class:`~netsir.sir_dynamics.Trajectory`."""
from __future__ import annotations

import numpy as np

from netsir.errors import ConfigurationError


def _mask(traj, mask):
    n = traj.max_I.shape[0]
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask)
    if mask.dtype != bool:
        sel = np.zeros(n, dtype=bool)
        sel[mask.astype(np.int64)] = True
        mask = sel
    if not mask.any():
        raise ConfigurationError("empty group mask")
    return mask


def infection_load(traj, mask=None) -> float:
    """Mean over the selected nodes of each node's peak infection probability."""
    m = _mask(traj, mask)
    return float(traj.max_I[m].mean())


def activation_margin(traj, mask=None) -> float:
    """Mean over the selected nodes of each node's lowest ``p_S + p_R``."""
    m = _mask(traj, mask)
    return float(traj.min_SR[m].mean())


def peak_mean_infection(traj, mask=None):
    """Largest group-mean ``p_I`` over time and the step where it occurs."""
    m = _mask(traj, mask)
    if m.all():
        series = traj.mean_I
    elif traj.states is not None:
        series = traj.states[:, 1, m].mean(axis=1)
    else:
        groups = np.unique(traj.labels[m])
        if not np.array_equal(m, np.isin(traj.labels, groups)):
            raise ConfigurationError(
                "peak of an arbitrary mask needs a trajectory with stored states"
            )
        sizes = np.array([(traj.labels == g).sum() for g in groups])
        series = sum(traj.group_means[int(g)][:, 1] * s for g, s in zip(groups, sizes))
        series = series / sizes.sum()
    t = int(np.argmax(series))
    return float(series[t]), t


def conservation_error(traj) -> float:
    """Largest ``|p_S + p_I + p_R - 1|`` seen over all nodes and steps."""
    if traj.states is not None:
        return float(np.abs(traj.states.sum(axis=1) - 1.0).max())
    return float(traj.conservation)
