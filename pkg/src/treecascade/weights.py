"""Mean-one multiplicative weight processes with independent increments.

A weight process W_t attaches to every tree vertex an independent copy of a
positive process with W_0 = 1, E[W_t] = 1, and independent multiplicative
increments: log W_t has stationary independent increments with cumulant
kappa, so E[W_t^h] = exp(t kappa(h)).  Two kinds are built in:

* ``gaussian``: W_t = exp(B_t - t/2), kappa(h) = h(h-1)/2.
* ``compound_poisson``: W_t = exp(L_t - t lam (M(1)-1)) for a compound
  Poisson L_t with rate lam and normal jumps N(mu_J, sd_J^2), where
  M(h) = E[e^{h J}]; kappa(h) = lam (M(h) - 1 - h (M(1) - 1)).

Both have every real moment finite.  E[W_t log W_t] = t kappa'(1) >= 0 by
Jensen (strictly positive for nondegenerate weights); for the Gaussian kind
it equals t/2.

Sampling is addressed by ``VertexNoiseKey`` (seed, vertex, step index):
identical keys give identical increments, distinct keys independent ones.
The scalar sampler and the bulk per-level sampler share one code path, so
single-draw reproduction of any simulated increment is exact.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import poisson

from .tree import Vertex, flat_index
from . import rng

__all__ = [
    "GAUSSIAN",
    "COMPOUND_POISSON",
    "WeightSpec",
    "VertexNoiseKey",
    "gaussian_spec",
    "compound_poisson_spec",
    "spec_from_config",
    "spec_to_config",
    "moment",
    "log_moment",
    "w_log_w",
    "sample_increment",
    "log_increments",
    "log_increments_multi",
]

GAUSSIAN = "gaussian"
COMPOUND_POISSON = "compound_poisson"
KINDS = (GAUSSIAN, COMPOUND_POISSON)


@dataclass(frozen=True)
class WeightSpec:
    """Distribution family of the per-vertex weight process."""

    kind: str
    rate: float = None
    jump_mean: float = None
    jump_sd: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "compound_poisson":
            if self.rate is None or self.rate <= 0:
                raise ValueError("compound_poisson requires rate > 0")
            if self.jump_sd is None or self.jump_sd < 0:
                raise ValueError("compound_poisson requires jump_sd >= 0")
            if self.jump_mean is None:
                raise ValueError("compound_poisson requires jump_mean")
        elif self.rate is not None or self.jump_mean is not None or self.jump_sd is not None:
            raise ValueError("gaussian kind takes no jump parameters")


@dataclass(frozen=True)
class VertexNoiseKey:
    """Address of one increment draw: (seed, vertex, step index)."""

    seed: int
    vertex: Vertex
    step_index: int

    def __post_init__(self):
        if self.vertex.depth == 0:
            raise ValueError("the root carries no weight")
        if self.step_index < 1:
            raise ValueError("step_index is 1-based")


def gaussian_spec():
    return WeightSpec(kind="gaussian")


def compound_poisson_spec(rate=1.0, jump_mean=0.0, jump_sd=0.3):
    return WeightSpec(kind="compound_poisson", rate=rate, jump_mean=jump_mean, jump_sd=jump_sd)


def spec_from_config(config):
    """Build a spec from the wire dict {kind, rate?, jump_mean?, jump_sd?}."""
    extra = set(config) - {"kind", "rate", "jump_mean", "jump_sd"}
    if extra:
        raise ValueError(f"unknown config fields {sorted(extra)}")
    kind = config.get("kind")
    if kind == "gaussian":
        return WeightSpec(kind="gaussian")
    if kind == "compound_poisson":
        return compound_poisson_spec(
            rate=float(config.get("rate", 1.0)),
            jump_mean=float(config.get("jump_mean", 0.0)),
            jump_sd=float(config.get("jump_sd", 0.3)),
        )
    raise ValueError(f"unknown weight kind {kind!r}")


def spec_to_config(spec):
    if spec.kind == "gaussian":
        return {"kind": "gaussian"}
    return {
        "kind": "compound_poisson",
        "rate": spec.rate,
        "jump_mean": spec.jump_mean,
        "jump_sd": spec.jump_sd,
    }


def _jump_mgf(spec, h):
    # E[e^{h J}] for the normal jump law.
    return math.exp(h * spec.jump_mean + 0.5 * (h * spec.jump_sd) ** 2)


def _cumulant(spec, h):
    # kappa(h) with E[W_t^h] = exp(t kappa(h)); kappa(0) = kappa(1) = 0.
    if spec.kind == "gaussian":
        return 0.5 * h * (h - 1.0)
    lam = spec.rate
    return lam * (_jump_mgf(spec, h) - 1.0 - h * (_jump_mgf(spec, 1.0) - 1.0))


def log_moment(spec, t, h):
    """log E[W_t^h] = t kappa(h)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return t * _cumulant(spec, h)


def moment(spec, t, h):
    """E[W_t^h]; finite for every real h for the built-in kinds."""
    return math.exp(log_moment(spec, t, h))


def w_log_w(spec, t):
    """E[W_t log W_t] = t kappa'(1), the entropy rate of the weight.

    Nonnegative by Jensen applied to the mean-one variable W_t.  Gaussian:
    t/2.  Compound Poisson: t lam (M'(1) - M(1) + 1) with
    M'(1) = (mu_J + sd_J^2) M(1).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if spec.kind == "gaussian":
        return 0.5 * t
    m1 = _jump_mgf(spec, 1.0)
    m1p = (spec.jump_mean + spec.jump_sd**2) * m1
    return t * spec.rate * (m1p - m1 + 1.0)


def _lanes(spec):
    # Uniform draws consumed per vertex-step: one normal, or one Poisson
    # count plus one normal for the jump sum.
    return 1 if spec.kind == "gaussian" else 2


def _log_increments_from_uniforms(spec, duration, u):
    if spec.kind == "gaussian":
        return math.sqrt(duration) * ndtri(u[:, 0]) - 0.5 * duration
    lam = spec.rate
    n_jumps = poisson.ppf(u[:, 0], lam * duration)
    z = ndtri(u[:, 1])
    jump_sum = spec.jump_mean * n_jumps + spec.jump_sd * np.sqrt(n_jumps) * z
    return jump_sum - duration * lam * (_jump_mgf(spec, 1.0) - 1.0)


def log_increments(spec, t, duration, seed, step_index, first_flat, count):
    """log of the weight increments over (t, t+duration] for a flat vertex range.

    ``first_flat``/``count`` address vertices in level-major flat order
    (see ``tree.flat_index``).  ``t`` is accepted for interface stability;
    the built-in kinds have stationary increments.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if duration == 0.0:
        return np.zeros(count)
    u = rng.vertex_uniforms(seed, step_index, first_flat, count, _lanes(spec))
    return _log_increments_from_uniforms(spec, duration, u)


def log_increments_multi(spec, t, duration, seeds, step_index, first_flat, count):
    """Batched ``log_increments`` over per-replica seeds; shape (len(seeds), count)."""
    if duration == 0.0:
        return np.zeros((len(seeds), count))
    u = rng.vertex_uniforms_multi(seeds, step_index, first_flat, count, _lanes(spec))
    flat = u.reshape(-1, _lanes(spec))
    return _log_increments_from_uniforms(spec, duration, flat).reshape(len(seeds), count)


def sample_increment(spec, t, s, key):
    """One weight increment W over (t, t+s], addressed by ``key``.

    Runs the same generation path as the bulk sampler, so the returned
    value equals the increment any simulation with the same seed applies to
    ``key.vertex`` at ``key.step_index`` with step duration ``s``.
    """
    if s < 0:
        raise ValueError("duration must be nonnegative")
    if s == 0.0:
        return 1.0
    logw = log_increments(spec, t, s, key.seed, key.step_index, flat_index(key.vertex), 1)
    return float(np.exp(logw[0]))
