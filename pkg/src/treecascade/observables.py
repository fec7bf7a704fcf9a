"""Stochastic-calculus observables of the Gaussian-driven evolution.

The log total mass accumulates quadratic variation at the overlap rate
Q_t = sum_{v != root} (mass(v)/mass(root))^2, the expected depth at
which two independent rays drawn from the normalized flow split.  Pairs
of non-ancestral vertex masses have log-bracket rate |u ^ v| dt, the
depth of their common ancestor.  Under the measure tilted by the
mean-one total-mass martingale, each vertex's driving Brownian motion
acquires drift equal to the normalized mass of that vertex; the
Girsanov check renders that identity as a z-score.

All of these use the continuous (Gaussian) weight kind; jump kinds are
rejected where the continuous bracket is assumed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive_seeds
from .tree import FLOW_REL_TOL, common_ancestor_depth, flat_index
from . import weights as wp

__all__ = [
    "OverlapSeries",
    "QvComparison",
    "ExplosionReport",
    "GirsanovReport",
    "overlap",
    "overlap_series",
    "path_observables",
    "realized_vs_predicted_qv",
    "bracket_rate",
    "empirical_bracket",
    "explosion_monitor",
    "girsanov_check",
]

GIRSANOV_MAX_DEPTH = 4


def _overlap_from_levels(levels):
    root = levels[0][0]
    q = 0.0
    for lvl in levels[1:]:
        q += float(np.sum((lvl / root) ** 2))
    return q


def overlap(f):
    """sum over v != root of (mass(v)/mass(root))^2, the truncated
    expected meeting depth of two independent rays."""
    return _overlap_from_levels([np.asarray(a) for a in f.levels])


@dataclass(frozen=True)
class OverlapSeries:
    times: np.ndarray
    overlap: np.ndarray
    tail_flag: bool


def _require_gaussian(path, what):
    if path.spec.kind != wp.GAUSSIAN:
        raise ValueError(f"{what} assumes the continuous weight kind")


def overlap_series(path):
    """Overlap at every stored snapshot; tail_flag marks any time where
    the deepest level carries more than 1% of the sum (truncation is
    then suspect)."""
    q = np.empty(path.n_snapshots)
    flagged = False
    for i in range(path.n_snapshots):
        levels = path.mass_levels(i)
        q[i] = _overlap_from_levels(levels)
        root = levels[0][0]
        tail = float(np.sum((levels[-1] / root) ** 2))
        if tail > 0.01 * q[i]:
            flagged = True
    return OverlapSeries(times=path.times.copy(), overlap=q, tail_flag=flagged)


def path_observables(path):
    """(times, root_mass, overlap, cum_qv) arrays over stored snapshots;
    cum_qv is the running sum of squared log root-mass increments."""
    roots = np.empty(path.n_snapshots)
    q = np.empty(path.n_snapshots)
    for i in range(path.n_snapshots):
        levels = path.mass_levels(i)
        roots[i] = levels[0][0]
        q[i] = _overlap_from_levels(levels)
    cum_qv = np.zeros_like(roots)
    np.cumsum(np.diff(np.log(roots)) ** 2, out=cum_qv[1:])
    return path.times.copy(), roots, q, cum_qv


@dataclass(frozen=True)
class QvComparison:
    realized: float
    predicted: float
    rel_err: float


def realized_vs_predicted_qv(path):
    """Realized squared log root increments against the integrated overlap."""
    _require_gaussian(path, "quadratic variation comparison")
    times, roots, q, cum_qv = path_observables(path)
    realized = float(cum_qv[-1])
    predicted = float(np.sum(q[:-1] * np.diff(times)))
    if predicted == 0.0:
        rel_err = 0.0 if realized == 0.0 else math.inf
    else:
        rel_err = abs(realized - predicted) / predicted
    return QvComparison(realized=realized, predicted=predicted, rel_err=rel_err)


def bracket_rate(u, v):
    """|u ^ v|: the log-bracket rate of two non-ancestral vertex masses."""
    if u.is_ancestor_of(v) or v.is_ancestor_of(u):
        raise ValueError("bracket rate is defined for non-ancestral pairs")
    return common_ancestor_depth(u, v)


def empirical_bracket(path, u, v):
    """Realized covariation of log masses per unit time, drift-centered."""
    if u.is_ancestor_of(v) or v.is_ancestor_of(u):
        raise ValueError("bracket rate is defined for non-ancestral pairs")
    series = path.vertex_mass_series([u, v])
    duration = float(path.times[-1] - path.times[0])
    if duration <= 0:
        raise ValueError("path must span positive time")
    d = np.diff(np.log(series), axis=0)
    d = d - d.mean(axis=0)
    return float(np.sum(d[:, 0] * d[:, 1])) / duration


@dataclass(frozen=True)
class ExplosionReport:
    times: np.ndarray
    overlap: np.ndarray
    cum_overlap_integral: np.ndarray
    root_masses: np.ndarray
    flags: np.ndarray
    flagged: bool


def explosion_monitor(path, mass_ratio=1e-6, integral_threshold=10.0):
    """Accumulated overlap integral with collapse flags.

    A time is flagged when the root mass has fallen below mass_ratio of
    its initial value while the integral is already past the threshold;
    qualitative by construction, since the true divergence criterion is
    invisible at finite depth.
    """
    _require_gaussian(path, "explosion monitoring")
    times, roots, q, _ = path_observables(path)
    cum = np.zeros_like(q)
    if len(times) > 1:
        dt = np.diff(times)
        np.cumsum(0.5 * (q[1:] + q[:-1]) * dt, out=cum[1:])
    flags = (roots < mass_ratio * roots[0]) & (cum > integral_threshold)
    return ExplosionReport(
        times=times,
        overlap=q,
        cum_overlap_integral=cum,
        root_masses=roots,
        flags=flags,
        flagged=bool(np.any(flags)),
    )


@dataclass(frozen=True)
class GirsanovReport:
    tilted_mean: float
    predicted_mean: float
    statistic: float
    se: float
    replicas: int


def girsanov_check(base, spec, t_end, vertex, replicas, seed, step=0.01):
    """Tilted-drift identity: E[M (B(v) - int mass*(v) ds)] = 0.

    M is the terminal root mass of the normalized cascade (a mean-one
    martingale), B(v) the vertex's driving Brownian value at t_end, and
    mass*(v) the normalized vertex mass.  Importance-weight variance
    grows exponentially with depth, so depth is capped.
    """
    if spec.kind != wp.GAUSSIAN:
        raise ValueError("the drift identity assumes the continuous weight kind")
    if base.depth > GIRSANOV_MAX_DEPTH:
        raise ValueError(f"girsanov check limited to depth {GIRSANOV_MAX_DEPTH}")
    if abs(base.root_mass - 1.0) > FLOW_REL_TOL:
        raise ValueError("base flow must be normalized")
    if not 1 <= vertex.depth <= base.depth:
        raise ValueError("test vertex must be a proper vertex of the flow")
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    if t_end == 0.0:
        return GirsanovReport(0.0, 0.0, 0.0, 0.0, replicas)

    n = base.depth
    size = (1 << (n + 1)) - 2
    m_steps = int(round(t_end / step))
    if abs(m_steps * step - t_end) > 1e-9 or m_steps < 1:
        raise ValueError("t_end must be a positive multiple of step")
    seeds = derive_seeds(seed, replicas)
    slices = [slice((1 << k) - 2, (1 << (k + 1)) - 2) for k in range(1, n + 1)]

    cum = np.zeros((replicas, size))
    integral = np.zeros(replicas)
    dt = t_end / m_steps
    for j in range(1, m_steps + 1):
        logx = np.zeros((replicas, 1))
        v_mass = None
        for k, sl in enumerate(slices, start=1):
            logx = np.repeat(logx, 2, axis=1) + cum[:, sl]
            if k == n:
                leaves = base.leaves[None, :] * np.exp(logx)
                level = leaves
                while level.shape[1] > 1 << vertex.depth:
                    level = level.reshape(replicas, -1, 2).sum(axis=2)
                v_mass = level[:, vertex.bits]
                while level.shape[1] > 1:
                    level = level.reshape(replicas, -1, 2).sum(axis=2)
                root = level[:, 0]
        integral += (v_mass / root) * dt
        cum += wp.log_increments_multi(spec, (j - 1) * dt, dt, seeds, j, 0, size)

    logx = np.zeros((replicas, 1))
    for sl in slices:
        logx = np.repeat(logx, 2, axis=1) + cum[:, sl]
    m_weight = (base.leaves[None, :] * np.exp(logx)).sum(axis=1)
    b_vertex = cum[:, flat_index(vertex)] + 0.5 * t_end

    y = m_weight * (b_vertex - integral)
    se = float(y.std(ddof=1) / math.sqrt(replicas))
    z = float(y.mean() / se) if se > 0 else 0.0
    total = float(m_weight.sum())
    return GirsanovReport(
        tilted_mean=float(np.dot(m_weight, b_vertex)) / total,
        predicted_mean=float(np.dot(m_weight, integral)) / total,
        statistic=z,
        se=se,
        replicas=replicas,
    )
