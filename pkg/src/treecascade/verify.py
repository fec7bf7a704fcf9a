"""Statistical pass/fail rendering of the structural identities.

Each test reduces one identity to a scalar statistic with a configured
threshold: two-sample KS for the one-step-vs-composed marginal law,
z-scores for martingale means, exact relative error for the pathwise
composition identity, and interval checks for the Hölder slope and the
quadratic-variation match.  Every distributional test has an adversarial
control (wrong composition duration, uncompensated weights) that must
come out Fail; a suite therefore records the expected verdict per entry
and succeeds only when every actual verdict matches it.  A test whose
replica budget is below its declared power floor reports Inconclusive
rather than a verdict it cannot support.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import ks_2samp

from .rng import derive_seed, derive_seeds
from .tree import uniform_flow
from . import engine, observables, regularity, transport
from . import weights as wp
from .parallel import parallel_map

__all__ = [
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "TestReport",
    "SuiteEntry",
    "SuiteConfig",
    "test_markov_marginal",
    "test_martingale",
    "test_composition",
    "test_regularity_propagation",
    "test_holder_slope",
    "test_qv_agreement",
    "default_suite",
    "quick_suite",
    "run_suite",
    "unexpected_reports",
    "reports_to_json",
]

PASS = "Pass"
FAIL = "Fail"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class TestReport:
    test_name: str
    statistic: float
    threshold: float
    replicas: int
    seed: int
    verdict: str
    expected: str = PASS
    detail: str = ""


def _verdict(ok, replicas, min_replicas):
    if replicas < min_replicas:
        return INCONCLUSIVE
    return PASS if ok else FAIL


def _flat_size(depth):
    return (1 << (depth + 1)) - 2


def _leaf_products(base, cum):
    # exp of per-leaf accumulated log-weights times base leaf masses
    logx = np.zeros((cum.shape[0], 1))
    for k in range(1, base.depth + 1):
        sl = slice((1 << k) - 2, (1 << (k + 1)) - 2)
        logx = np.repeat(logx, 2, axis=1) + cum[:, sl]
    return base.leaves[None, :] * np.exp(logx)


def _root_samples(base, spec, times, seeds, chunk=256):
    """Root masses at the given times for one path per seed; (R, T) array."""
    times = np.asarray(times, dtype=np.float64)
    size = _flat_size(base.depth)
    out = np.empty((len(seeds), len(times)))
    for lo in range(0, len(seeds), chunk):
        sub = seeds[lo : lo + chunk]
        cum = np.zeros((len(sub), size))
        t_prev = 0.0
        for j, t in enumerate(times, start=1):
            dt = float(t - t_prev)
            if dt > 0:
                cum += wp.log_increments_multi(spec, t_prev, dt, sub, j, 0, size)
            out[lo : lo + len(sub), j - 1] = _leaf_products(base, cum).sum(axis=1)
            t_prev = float(t)
    return out


def test_markov_marginal(
    base=None,
    spec=None,
    t=0.3,
    s=0.3,
    depth=12,
    replicas=2000,
    seed=0,
    threshold=0.01,
    min_replicas=200,
    control=False,
    threads=1,
):
    """KS equality of the root-mass law at t+s: one step vs evolve-then-cascade.

    The control composes with duration s/2 instead of s and must Fail.
    """
    if base is None:
        base = uniform_flow(depth)
    if spec is None:
        spec = wp.gaussian_spec()
    size = _flat_size(base.depth)
    seed_direct = derive_seed(seed, 0)
    seed_evolve = derive_seed(seed, 1)
    seed_fresh = derive_seed(seed, 2)
    s_used = s / 2.0 if control else s

    direct = _root_samples(base, spec, [t + s], derive_seeds(seed_direct, replicas))[:, 0]

    evolve_seeds = derive_seeds(seed_evolve, replicas)
    fresh_seeds = derive_seeds(seed_fresh, replicas)
    composed = np.empty(replicas)
    chunk = 256
    for lo in range(0, replicas, chunk):
        n_sub = len(evolve_seeds[lo : lo + chunk])
        cum = wp.log_increments_multi(spec, 0.0, t, evolve_seeds[lo : lo + chunk], 1, 0, size)
        leaves_t = _leaf_products(base, cum)
        cum2 = wp.log_increments_multi(spec, t, s_used, fresh_seeds[lo : lo + chunk], 1, 0, size)
        logx = np.zeros((n_sub, 1))
        for k in range(1, base.depth + 1):
            sl = slice((1 << k) - 2, (1 << (k + 1)) - 2)
            logx = np.repeat(logx, 2, axis=1) + cum2[:, sl]
        composed[lo : lo + n_sub] = (leaves_t * np.exp(logx)).sum(axis=1)

    p_value = float(ks_2samp(direct, composed).pvalue)
    name = "markov_marginal_control" if control else "markov_marginal"
    ok = p_value > threshold
    return TestReport(
        test_name=name,
        statistic=p_value,
        threshold=threshold,
        replicas=replicas,
        seed=seed,
        verdict=_verdict(ok, replicas, min_replicas),
        detail=f"t={t} s={s_used} depth={base.depth}",
    )


def test_martingale(
    base=None,
    spec=None,
    times=(0.2, 0.5, 0.9),
    depth=12,
    replicas=2000,
    seed=0,
    threshold=4.0,
    min_replicas=200,
    uncompensated=False,
    threads=1,
):
    """Replica-mean root mass against the initial mass, max |z| over times.

    The control removes the mean-one compensation, scaling each root by
    exp(depth * t / 2); its means drift and the test must Fail.
    """
    if base is None:
        base = uniform_flow(depth)
    if spec is None:
        spec = wp.gaussian_spec()
    if uncompensated and spec.kind != wp.GAUSSIAN:
        raise ValueError("uncompensated control is defined for the continuous kind")
    times = tuple(float(t) for t in times)
    roots = _root_samples(base, spec, times, derive_seeds(seed, replicas))
    if uncompensated:
        roots = roots * np.exp(base.depth * np.asarray(times) / 2.0)[None, :]
    means = roots.mean(axis=0)
    ses = roots.std(axis=0, ddof=1) / math.sqrt(replicas)
    z = np.abs(means - base.root_mass) / ses
    stat = float(np.max(z))
    name = "martingale_control" if uncompensated else "martingale"
    ok = stat <= threshold
    return TestReport(
        test_name=name,
        statistic=stat,
        threshold=threshold,
        replicas=replicas,
        seed=seed,
        verdict=_verdict(ok, replicas, min_replicas),
        detail=f"times={times} depth={base.depth}",
    )


def test_composition(
    depth=10,
    t_end=1.0,
    step=0.1,
    spec=None,
    seed=0,
    threshold=1e-12,
    threads=1,
):
    """Replay every stored pair (i, j) and compare all vertex masses."""
    if spec is None:
        spec = wp.gaussian_spec()
    base = uniform_flow(depth)
    grid = engine.make_grid(t_end, step)
    path = engine.simulate_path(base, spec, grid, seed=seed)

    def worst_for_start(i):
        worst = 0.0
        for j in range(i + 1, len(grid)):
            replayed = engine.compose_from_path(path, i, j)
            direct = path.masses_flat(j)
            flat = np.concatenate([np.asarray(l) for l in replayed.levels])
            worst = max(worst, float(np.max(np.abs(flat / direct - 1.0))))
        return worst

    worsts = parallel_map(worst_for_start, range(len(grid) - 1), threads=threads)
    stat = max(worsts)
    return TestReport(
        test_name="composition",
        statistic=stat,
        threshold=threshold,
        replicas=1,
        seed=seed,
        verdict=PASS if stat <= threshold else FAIL,
        detail=f"depth={depth} grid=[0,{t_end}] step={step}",
    )


def test_regularity_propagation(
    depth=16,
    t=0.3,
    h_values=(1.1, 1.3, 1.5),
    replicas=24,
    seed=0,
    tol=0.05,
    min_fraction=0.95,
    min_replicas=16,
    spec=None,
    threads=1,
):
    """Snapshots keep fitted pressure under the propagated analytic bound."""
    if spec is None:
        spec = wp.gaussian_spec()
    base = uniform_flow(depth)
    seeds = derive_seeds(seed, replicas)

    def one(r):
        path = engine.simulate_path(base, spec, [0.0, t], seed=int(seeds[r]), snapshot_times=[t])
        snap = path.snapshot(0)
        for h in h_values:
            bound = regularity.pressure(regularity.THETA, h) + wp.log_moment(spec, t, h)
            if regularity.pressure(snap, h) > bound + tol:
                return False
        return True

    good = parallel_map(one, range(replicas), threads=threads)
    frac = sum(good) / replicas
    return TestReport(
        test_name="regularity_propagation",
        statistic=float(frac),
        threshold=min_fraction,
        replicas=replicas,
        seed=seed,
        verdict=_verdict(frac >= min_fraction, replicas, min_replicas),
        detail=f"depth={depth} t={t} h={tuple(h_values)}",
    )


def test_holder_slope(
    depth=10,
    t_end=0.5,
    step=2.0**-7,
    replicas=6,
    pair_budget=32,
    seed=0,
    bounds=(0.40, 0.60),
    min_replicas=4,
    spec=None,
    threads=1,
):
    """Pooled log-log Wasserstein slope across dyadic lags sits near 1/2."""
    if spec is None:
        spec = wp.gaussian_spec()
    base = uniform_flow(depth)
    grid = engine.make_grid(t_end, step)
    seeds = derive_seeds(seed, replicas)
    paths = (
        engine.simulate_path(base, spec, grid, seed=int(seeds[r])) for r in range(replicas)
    )
    fit = transport.holder_exponent(paths, pair_budget=pair_budget)
    lo, hi = bounds
    ok = (not fit.degenerate) and lo <= fit.slope <= hi
    return TestReport(
        test_name="holder_slope",
        statistic=fit.slope,
        threshold=hi,
        replicas=replicas,
        seed=seed,
        verdict=_verdict(ok, replicas, min_replicas),
        detail=f"bounds={bounds} depth={depth} step={step}",
    )


def test_qv_agreement(
    depth=12,
    t_end=0.3,
    step=1e-3,
    replicas=16,
    seed=0,
    threshold=0.15,
    min_replicas=8,
    spec=None,
    threads=1,
):
    """Mean relative error of realized vs predicted log-root quadratic variation."""
    if spec is None:
        spec = wp.gaussian_spec()
    base = uniform_flow(depth)
    grid = engine.make_grid(t_end, step)
    seeds = derive_seeds(seed, replicas)

    def one(r):
        path = engine.simulate_path(base, spec, grid, seed=int(seeds[r]))
        return observables.realized_vs_predicted_qv(path).rel_err

    rels = parallel_map(one, range(replicas), threads=threads)
    stat = float(np.mean(rels))
    return TestReport(
        test_name="qv_agreement",
        statistic=stat,
        threshold=threshold,
        replicas=replicas,
        seed=seed,
        verdict=_verdict(stat <= threshold, replicas, min_replicas),
        detail=f"depth={depth} T'={t_end} step={step}",
    )


_REGISTRY = {
    "markov_marginal": test_markov_marginal,
    "markov_marginal_control": lambda **kw: test_markov_marginal(control=True, **kw),
    "martingale": test_martingale,
    "martingale_control": lambda **kw: test_martingale(uncompensated=True, **kw),
    "composition": test_composition,
    "regularity_propagation": test_regularity_propagation,
    "holder_slope": test_holder_slope,
    "qv_agreement": test_qv_agreement,
}


@dataclass(frozen=True)
class SuiteEntry:
    name: str
    expected: str = PASS
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 42
    entries: tuple = ()


def default_suite(seed=42):
    return SuiteConfig(
        seed=seed,
        entries=(
            SuiteEntry("composition"),
            SuiteEntry("markov_marginal"),
            SuiteEntry("markov_marginal_control", expected=FAIL),
            SuiteEntry("martingale"),
            SuiteEntry("martingale_control", expected=FAIL),
            SuiteEntry("regularity_propagation"),
            SuiteEntry("holder_slope"),
            SuiteEntry("qv_agreement"),
        ),
    )


def quick_suite(seed=42):
    return SuiteConfig(
        seed=seed,
        entries=(
            SuiteEntry("composition", params={"depth": 8, "t_end": 0.5}),
            SuiteEntry("markov_marginal", params={"depth": 10, "replicas": 800}),
            SuiteEntry(
                "markov_marginal_control",
                expected=FAIL,
                params={"depth": 10, "replicas": 800},
            ),
            SuiteEntry("martingale", params={"depth": 10, "replicas": 800}),
            SuiteEntry(
                "martingale_control",
                expected=FAIL,
                params={"depth": 10, "replicas": 800},
            ),
            SuiteEntry("qv_agreement", params={"depth": 10, "replicas": 8}),
        ),
    )


def _entry_seed(suite_seed, name):
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")
    return derive_seed(suite_seed, tag)


def run_suite(config, threads=1):
    """Execute the configured entries; deterministic given the suite seed.

    Each entry runs under a seed derived from (suite seed, test name), so
    entries are independent and reorderable.
    """
    reports = []
    for entry in config.entries:
        if entry.name not in _REGISTRY:
            raise ValueError(f"unknown test name {entry.name!r}")
        fn = _REGISTRY[entry.name]
        report = fn(seed=_entry_seed(config.seed, entry.name), threads=threads, **entry.params)
        reports.append(replace(report, expected=entry.expected))
    return reports


def unexpected_reports(reports):
    """Entries whose verdict contradicts the expectation (Inconclusive never does)."""
    return [r for r in reports if r.verdict != INCONCLUSIVE and r.verdict != r.expected]


def reports_to_json(reports, suite_seed=None):
    doc = {
        "suite_seed": suite_seed,
        "reports": [
            {
                "test_name": r.test_name,
                "statistic": r.statistic,
                "threshold": r.threshold,
                "replicas": r.replicas,
                "seed": r.seed,
                "verdict": r.verdict,
                "expected": r.expected,
                "detail": r.detail,
            }
            for r in reports
        ],
        "ok": not unexpected_reports(reports),
    }
    return json.dumps(doc, sort_keys=True, indent=2)
