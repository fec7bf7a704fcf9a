import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treecascade import engine, tree
from treecascade import weights as wp


class TestGrid:
    def test_make_grid_basic(self):
        g = engine.make_grid(0.3, 0.1)
        np.testing.assert_allclose(g, [0.0, 0.1, 0.2, 0.3], atol=1e-15)
        assert g[-1] == 0.3

    def test_make_grid_zero(self):
        assert list(engine.make_grid(0.0, 0.1)) == [0.0]

    def test_make_grid_rejects_misaligned(self):
        with pytest.raises(ValueError):
            engine.make_grid(0.25, 0.1)
        with pytest.raises(ValueError):
            engine.make_grid(-1.0, 0.1)
        with pytest.raises(ValueError):
            engine.make_grid(1.0, 0.0)


class TestCascadeStatic:
    def test_unit_weights_reproduce_base_exactly(self):
        base = tree.flow_from_leaves([1.0, 2.0, 3.0, 4.0])
        out = engine.cascade_static(base, [np.ones(2), np.ones(4)])
        assert out == base

    def test_hand_computed_masses(self):
        base = tree.uniform_flow(1)
        out = engine.cascade_static(base, [np.array([2.0, 4.0])])
        assert list(out.leaves) == [1.0, 2.0]
        assert out.root_mass == 3.0

    def test_rejects_bad_weights(self):
        base = tree.uniform_flow(2)
        with pytest.raises(ValueError):
            engine.cascade_static(base, [np.ones(2)])
        with pytest.raises(ValueError):
            engine.cascade_static(base, [np.ones(2), np.array([1.0, 1.0, 1.0, 0.0])])

    @given(
        seed=st.integers(0, 2**32),
        depth=st.integers(1, 6),
    )
    @settings(max_examples=25)
    def test_conservation_after_cascade(self, seed, depth):
        g = np.random.default_rng(seed)
        base = tree.flow_from_leaves(g.random(1 << depth) + 0.1)
        weights = [g.lognormal(0.0, 0.5, size=1 << k) for k in range(1, depth + 1)]
        out = engine.cascade_static(base, weights)
        assert not tree.validate_flow(out).violations


class TestSimulatePath:
    def test_snapshot_zero_is_base_object(self):
        base = tree.uniform_flow(3)
        path = engine.simulate_path(base, wp.gaussian_spec(), engine.make_grid(0.2, 0.1))
        assert path.snapshot(0) is base
        assert path.n_snapshots == 3
        assert list(path.times) == [0.0, 0.1, 0.2]

    def test_deterministic_regression_anchor(self):
        # frozen root masses pin the noise layout; any change to keying or
        # transforms must be deliberate
        base = tree.uniform_flow(4)
        grid = engine.make_grid(0.3, 0.1)
        p = engine.simulate_path(base, wp.gaussian_spec(), grid, seed=123)
        assert p.root_mass(3) == 0.9352037795172267
        pcp = engine.simulate_path(base, wp.compound_poisson_spec(), grid, seed=123)
        assert pcp.root_mass(3) == 1.0264096051618137

    def test_snapshots_conserve_mass(self):
        base = tree.uniform_flow(5)
        path = engine.simulate_path(base, wp.gaussian_spec(), engine.make_grid(0.4, 0.1), seed=5)
        for i in range(path.n_snapshots):
            assert not tree.validate_flow(path.snapshot(i)).violations

    def test_martingale_mean_frozen_seed(self):
        base = tree.uniform_flow(6)
        grid = engine.make_grid(0.5, 0.25)
        from treecascade.rng import derive_seeds

        roots = np.array(
            [
                engine.simulate_path(base, wp.gaussian_spec(), grid, seed=int(s)).root_mass(2)
                for s in derive_seeds(99, 400)
            ]
        )
        z = abs(roots.mean() - 1.0) / (roots.std(ddof=1) / math.sqrt(len(roots)))
        assert z < 4.0

    def test_snapshot_times_subset(self):
        base = tree.uniform_flow(3)
        grid = engine.make_grid(0.4, 0.1)
        full = engine.simulate_path(base, wp.gaussian_spec(), grid, seed=1)
        part = engine.simulate_path(base, wp.gaussian_spec(), grid, seed=1, snapshot_times=[0.2])
        assert part.n_snapshots == 1
        assert part.snapshot(0) == full.snapshot(2)
        with pytest.raises(ValueError):
            engine.simulate_path(base, wp.gaussian_spec(), grid, seed=1, snapshot_times=[0.15])

    def test_depth_truncation_couples_noise(self):
        # flat level-major keying: a shallower run of the same seed draws
        # exactly the deeper run's weights on the shared vertex range
        grid = engine.make_grid(0.3, 0.1)
        deep = engine.simulate_path(tree.uniform_flow(5), wp.gaussian_spec(), grid, seed=3)
        shallow = engine.simulate_path(
            tree.uniform_flow(5), wp.gaussian_spec(), grid, seed=3, depth=3
        )
        n_shared = (1 << 4) - 2
        for i in range(len(grid)):
            assert np.array_equal(
                shallow.log_weight_state(i), deep.log_weight_state(i)[:n_shared]
            )

    def test_vertex_mass_series_matches_snapshots(self):
        base = tree.uniform_flow(3)
        path = engine.simulate_path(base, wp.gaussian_spec(), engine.make_grid(0.2, 0.1), seed=2)
        vs = [tree.Vertex(1, 0), tree.Vertex(3, 5)]
        series = path.vertex_mass_series(vs)
        for i in range(path.n_snapshots):
            for j, v in enumerate(vs):
                assert series[i, j] == path.snapshot(i).mass(v)

    def test_index_of_time(self):
        base = tree.uniform_flow(2)
        path = engine.simulate_path(base, wp.gaussian_spec(), engine.make_grid(0.2, 0.1))
        assert path.index_of_time(0.1) == 1
        with pytest.raises(ValueError):
            path.index_of_time(0.05)


class TestComposition:
    def test_compose_zero_duration_identity(self):
        f = tree.uniform_flow(3)
        assert engine.compose(f, wp.gaussian_spec(), 0.3, 0.0, seed=1) is f

    def test_compose_from_path_matches_direct(self):
        base = tree.uniform_flow(6)
        spec = wp.gaussian_spec()
        grid = engine.make_grid(0.5, 0.1)
        path = engine.simulate_path(base, spec, grid, seed=17)
        for i, j in [(0, 5), (0, 2), (2, 5), (3, 4)]:
            replayed = engine.compose_from_path(path, i, j)
            direct = path.snapshot(j)
            for k in range(base.depth + 1):
                np.testing.assert_allclose(
                    replayed.level(k), direct.level(k), rtol=1e-12, atol=0.0
                )

    def test_compose_from_path_compound_poisson(self):
        base = tree.uniform_flow(5)
        spec = wp.compound_poisson_spec()
        grid = engine.make_grid(0.4, 0.1)
        path = engine.simulate_path(base, spec, grid, seed=23)
        replayed = engine.compose_from_path(path, 1, 4)
        direct = path.snapshot(4)
        for k in range(base.depth + 1):
            np.testing.assert_allclose(replayed.level(k), direct.level(k), rtol=1e-12, atol=0.0)

    def test_window_weights_route_matches_snapshots(self):
        # cascading snapshot i by exp(cum_j - cum_i) reproduces snapshot j:
        # the same identity through a different arithmetic path
        base = tree.uniform_flow(6)
        spec = wp.gaussian_spec()
        grid = engine.make_grid(0.6, 0.1)
        path = engine.simulate_path(base, spec, grid, seed=29)
        sl = [slice((1 << k) - 2, (1 << (k + 1)) - 2) for k in range(1, base.depth + 1)]
        for i, j in [(0, 6), (1, 3), (4, 6)]:
            dcum = path.log_weight_state(j) - path.log_weight_state(i)
            weights = [np.exp(dcum[s]) for s in sl]
            out = engine.cascade_static(path.snapshot(i), weights)
            direct = path.snapshot(j)
            for k in range(base.depth + 1):
                np.testing.assert_allclose(out.level(k), direct.level(k), rtol=1e-12, atol=0.0)

    def test_compose_validation(self):
        f = tree.uniform_flow(2)
        with pytest.raises(ValueError):
            engine.compose(f, wp.gaussian_spec(), 0.0, -0.1, seed=1)
        with pytest.raises(ValueError):
            engine.compose(f, wp.gaussian_spec(), 0.0, 0.1, seed=1, steps=0)

    def test_markov_two_step_equals_one_path(self):
        # evolving to t then composing with the path's own increments lands
        # exactly on the path's state at t + s
        base = tree.uniform_flow(4)
        spec = wp.gaussian_spec()
        grid = engine.make_grid(0.4, 0.2)
        path = engine.simulate_path(base, spec, grid, seed=31)
        mid = path.snapshot(1)
        end = engine.compose(mid, spec, 0.2, 0.2, seed=31, steps=1, first_step=2)
        for k in range(base.depth + 1):
            np.testing.assert_allclose(
                end.level(k), path.snapshot(2).level(k), rtol=1e-12, atol=0.0
            )


class TestConvergenceProbe:
    def test_theta_moment_decay_within_bound(self):
        report = engine.convergence_probe(
            tree.uniform_flow(7),
            wp.gaussian_spec(),
            t=0.4,
            depths=(2, 3, 4, 5, 6),
            h=1.5,
            replicas=512,
            seed=11,
        )
        assert not any(row.flagged for row in report.rows)
        assert report.c_fitted < 1.0
        # analytic decay rate per level: log(E[W^h] 2^(1-h)) < 0 here
        alpha = math.log(wp.moment(wp.gaussian_spec(), 0.4, 1.5) * 2.0**-0.5)
        assert report.fitted_slope() < alpha + 0.1

    def test_probe_validation(self):
        with pytest.raises(ValueError):
            engine.convergence_probe(
                tree.uniform_flow(4), wp.gaussian_spec(), 0.1, (4,), 2.0, 8, 0
            )
        with pytest.raises(ValueError):
            engine.convergence_probe(
                tree.uniform_flow(4), wp.gaussian_spec(), 0.1, (2,), 2.0, 1, 0
            )
