import numpy as np
import pytest

from edcausal.core import CateQuery, aggregate
from edcausal.core import _is_dag
from edcausal.simulator import (
    CategoricalPolicy,
    InvalidQueryError,
    LinearDynamics,
    SimConfig,
    SimState,
    UniformPolicy,
    WeakestFirstPolicy,
    cate_oracle,
    cate_oracle_estimate,
    generate_graph,
    generate_queries,
    logistic,
    logit,
    make_rng,
    paired_rollouts,
    simulate_dataset,
    spectral_radius,
    step,
)
from oracles import sigmoid, structural_step, uniform_policy_cate


class TestConfig:
    def test_defaults_match_dataset_statistics(self):
        c = SimConfig()
        assert (c.num_constructs, c.num_students, c.num_steps) == (50, 100, 400)

    @pytest.mark.parametrize(
        "kw",
        [dict(num_constructs=1), dict(num_steps=2, lag=2), dict(learning_gain=0.0), dict(noise_scale=-1.0),
         dict(edge_probability=1.5), dict(weight_range=(0.5, 0.2)), dict(max_spectral_radius=1.0)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)

    def test_replace(self):
        assert SimConfig().replace(seed=5).seed == 5


class TestGraph:
    def test_structure(self):
        cfg = SimConfig(seed=4)
        g = generate_graph(cfg)
        assert g.weights.shape == (3, 51, 51)
        assert _is_dag(g.instantaneous_block() != 0)
        assert np.all(g.learning_gains() == cfg.learning_gain)
        assert np.all(np.diag(g.weights[1, 1:, 1:]) > 0)
        assert np.all(g.weights[1:, 0, :] == 0) and np.all(g.weights[:, 1:, 0] == 0)

    def test_stationary(self):
        for seed in range(5):
            cfg = SimConfig(num_constructs=10, edge_probability=0.5, weight_range=(0.4, 0.9), seed=seed)
            g = generate_graph(cfg)
            dyn = LinearDynamics.from_graph(g, 0.0)
            assert spectral_radius(dyn.coefs) <= cfg.max_spectral_radius + 1e-12

    def test_deterministic_and_seed_sensitive(self):
        assert generate_graph(SimConfig(seed=1)) == generate_graph(SimConfig(seed=1))
        assert generate_graph(SimConfig(seed=1)) != generate_graph(SimConfig(seed=2))

    def test_default_density(self):
        adj = aggregate(generate_graph(SimConfig(seed=0))).adj
        assert 50 < adj.sum() < 250


class TestDataset:
    def test_shapes(self, tiny_world):
        cfg, _, ds = tiny_world
        assert len(ds) == cfg.num_students and ds.num_rows == cfg.num_students * cfg.num_steps
        for t in ds:
            assert np.all((t.probs > 0) & (t.probs < 1))

    def test_matches_structural_oracle(self, tiny_world):
        cfg, g, ds = tiny_world
        n, T, lag = cfg.num_constructs, cfg.num_steps, cfg.lag
        rng = make_rng(cfg.seed, 1, 0)
        unit = rng.uniform(-1.0, 1.0, size=(T, n))
        eps = unit * cfg.noise_scale
        eps[0] = unit[0] * cfg.init_scale
        actions = rng.integers(0, n, size=T)
        hist = [np.zeros(n)] * lag
        probs = []
        for t in range(T):
            s = structural_step(g.weights, hist, int(actions[t]), eps[t])
            hist = hist[1:] + [s]
            probs.append(sigmoid(s))
        traj = ds.trajectories[0]
        assert np.array_equal(traj.actions, actions)
        np.testing.assert_allclose(traj.probs, probs, rtol=0, atol=1e-12)

    def test_jobs_do_not_change_output(self, tiny_world):
        cfg, g, ds = tiny_world
        assert simulate_dataset(cfg, g, jobs=4) == ds

    def test_state_dependent_policy(self, tiny_world):
        cfg, g, _ = tiny_world
        ds = simulate_dataset(cfg.replace(noise_scale=0.0, init_scale=0.0), g, WeakestFirstPolicy())
        t = ds.trajectories[0]
        # each action targets the weakest construct of the previous step
        assert np.array_equal(t.actions[1:], np.argmin(t.probs[:-1], axis=1))

    def test_graph_mismatch(self, tiny_world):
        cfg, g, _ = tiny_world
        with pytest.raises(ValueError):
            simulate_dataset(cfg.replace(num_constructs=5), g)


class TestStep:
    def test_teaching_raises_target(self, tiny_world):
        _, g, _ = tiny_world
        s0 = SimState.initial(g.num_constructs, g.lag)
        s1 = step(s0, 2, g)
        assert s1.probs[2] > s0.probs[2]

    def test_matches_oracle(self, tiny_world, rng):
        _, g, _ = tiny_world
        hist = rng.normal(size=(g.lag, g.num_constructs))
        new = step(SimState(hist), 1, g).skills
        np.testing.assert_allclose(new, structural_step(g.weights, list(hist), 1), atol=1e-12)

    def test_zero_noise_deterministic(self, tiny_world):
        _, g, _ = tiny_world
        s = SimState.initial(g.num_constructs, g.lag)
        assert np.array_equal(step(s, 0, g).latent, step(s, 0, g).latent)

    def test_invalid_action(self, tiny_world):
        _, g, _ = tiny_world
        with pytest.raises(ValueError):
            step(SimState.initial(g.num_constructs, g.lag), g.num_constructs, g)

    def test_noise_requires_rng(self, tiny_world):
        _, g, _ = tiny_world
        with pytest.raises(ValueError):
            step(SimState.initial(g.num_constructs, g.lag), 0, g, noise_scale=0.1)


class TestPolicies:
    def test_categorical_frequencies(self):
        pol = CategoricalPolicy((0.0, 1.0, 3.0))
        a = pol(make_rng(0), np.zeros((40000, 3)))
        assert not np.any(a == 0)
        assert np.mean(a == 2) == pytest.approx(0.75, abs=0.01)

    def test_uniform_range(self):
        a = UniformPolicy(4)(make_rng(1), np.zeros((1000, 4)))
        assert set(a.tolist()) == {0, 1, 2, 3}


class TestQueries:
    def test_structure(self, tiny_world):
        _, g, ds = tiny_world
        qs = generate_queries(ds, g, 10, seed=2)
        assert len(qs) == 10
        for q in qs:
            assert q.intervention != q.reference
            assert q.conditioning.shape[0] > g.lag
            children = np.abs(g.weights[:, q.intervention + 1, 1:]).max(axis=0) > 0
            assert q.target == q.intervention or children[q.target]
            # the conditioning is a prefix of some trajectory
            assert any(
                np.array_equal(t.rows()[: q.conditioning.shape[0]], q.conditioning) for t in ds
            )

    def test_deterministic(self, tiny_world):
        _, g, ds = tiny_world
        assert generate_queries(ds, g, 5, seed=1) == generate_queries(ds, g, 5, seed=1)


class TestOracle:
    def _query(self, world, k=0):
        _, g, ds = world
        return g, generate_queries(ds, g, 10, seed=5)[k]

    def test_antisymmetric(self, tiny_world):
        g, q = self._query(tiny_world)
        assert cate_oracle(g, q, 2000, seed=3) == -cate_oracle(g, q.swapped(), 2000, seed=3)

    def test_equal_arms_zero(self, tiny_world):
        _, g, _ = tiny_world
        dyn = LinearDynamics.from_graph(g, 0.3)
        est = paired_rollouts(dyn, np.zeros((g.lag, g.num_constructs)), 1, 1, 0, 2, 500, 0, UniformPolicy(g.num_constructs))
        assert est.value == 0.0

    def test_uniform_policy_exact_expectation(self, tiny_world):
        g, q = self._query(tiny_world, 1)
        hist = logit(q.conditioning[-g.lag :, 1:])
        exact = uniform_policy_cate(g.weights, hist, q.intervention, q.reference, q.target)
        est = cate_oracle_estimate(g, q, 20000, seed=0, noise_scale=0.0)
        assert abs(est.value - exact) < 4 * est.stderr + 1e-12

    def test_markov_in_history(self, tiny_world):
        g, q = self._query(tiny_world, 2)
        cond = q.conditioning.copy()
        cond[: -g.lag, 1:] = 0.123
        cond[: -g.lag, 0] = 0
        q2 = CateQuery(cond, q.intervention, q.reference, q.target)
        assert cate_oracle(g, q, 1000) == cate_oracle(g, q2, 1000)

    def test_invalid_queries(self, tiny_world):
        g, q = self._query(tiny_world)
        short = CateQuery(q.conditioning[:1], q.intervention, q.reference, q.target)
        with pytest.raises(InvalidQueryError):
            cate_oracle(g, short, 10)
        cond = q.conditioning.copy()
        cond[-1, 1] = 1.0
        with pytest.raises(InvalidQueryError):
            cate_oracle(g, CateQuery(cond, q.intervention, q.reference, q.target), 10)

    def test_stderr_shrinks(self, tiny_world):
        g, q = self._query(tiny_world)
        a = cate_oracle_estimate(g, q, 1000, seed=1)
        b = cate_oracle_estimate(g, q, 16000, seed=1)
        assert b.stderr < a.stderr


def test_link_round_trip(rng):
    s = rng.normal(size=100) * 5
    np.testing.assert_allclose(logit(logistic(s)), s, atol=1e-9)
