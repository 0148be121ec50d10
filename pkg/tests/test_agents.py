import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maps.agents import (
    Agent,
    build_ensemble,
    epsilon_greedy,
    greedy_action,
    load_ensemble,
    make_agent,
    make_ensemble,
    positional_confidence,
    q_values,
    save_ensemble,
    sync_target,
)
from maps.neural import AdamState, CheckpointError, init_mlp, mlp_forward, snapshot

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestBuildEnsemble:
    def test_four_agents(self):
        sizes = [s.hidden_sizes for s in build_ensemble(4, 30)]
        assert sizes == [(32, 16), (64, 32, 16), (128, 64, 32, 16), (256, 128, 64, 32, 16)]

    def test_pattern_repeats(self):
        four = [s.hidden_sizes for s in build_ensemble(4, 30)]
        assert [s.hidden_sizes for s in build_ensemble(8, 30)] == four * 2
        assert [s.hidden_sizes for s in build_ensemble(16, 30)] == four * 4

    def test_single(self):
        (spec,) = build_ensemble(1, 10)
        assert spec.hidden_sizes == (32, 16) and spec.sizes == (10, 32, 16, 3)

    def test_layer_counts(self):
        for i, s in enumerate(build_ensemble(16, 5)):
            assert len(s.hidden_sizes) == i % 4 + 2
            assert s.output_dim == 3 and s.index == i

    def test_invalid(self):
        with pytest.raises(ValueError):
            build_ensemble(0, 30)

    def test_repeated_shapes_initialised_independently(self):
        agents = make_ensemble(8, 6, seed=1)
        assert agents[0].online.sizes == agents[4].online.sizes
        assert not agents[0].online.equals(agents[4].online)
        again = make_ensemble(8, 6, seed=1)
        assert all(a.online.equals(b.online) for a, b in zip(agents, again))


def zero_head_agent(f=4):
    agent = make_ensemble(1, f, seed=0)[0]
    agent.online.weights[-1][...] = 0.0
    agent.online.biases[-1][...] = 0.0
    sync_target(agent)
    return agent


class TestQValues:
    def test_zero_head(self, rng):
        q = q_values(zero_head_agent(), rng.normal(size=(5, 4)))
        np.testing.assert_array_equal(q, 0.0)

    def test_online_target_after_sync(self, rng):
        agent = make_ensemble(1, 4, seed=3)[0]
        mlp_forward(agent.online, rng.normal(size=(8, 4)), "train")
        sync_target(agent)
        x = rng.normal(size=(6, 4))
        np.testing.assert_array_equal(q_values(agent, x, "online"), q_values(agent, x, "target"))

    def test_batch_equals_rows(self, rng):
        agent = make_ensemble(2, 4, seed=3)[1]
        x = rng.normal(size=(3, 4))
        batch = q_values(agent, x)
        for i in range(3):
            np.testing.assert_array_equal(q_values(agent, x[i : i + 1])[0], batch[i])

    def test_shape_error(self, rng):
        with pytest.raises(ValueError):
            q_values(make_ensemble(1, 4)[0], rng.normal(size=(2, 5)))


class TestActions:
    @pytest.mark.parametrize("q,a", [([0.9, 0.1, 0.2], 1), ([0.1, 0.9, 0.2], 0), ([0.1, 0.2, 0.9], -1)])
    def test_greedy(self, q, a):
        assert greedy_action(q) == a

    def test_ties_prefer_long(self):
        assert greedy_action([1.0, 1.0, 1.0]) == 1
        assert greedy_action([0.0, 1.0, 1.0]) == 0

    # integer-valued rows keep shifts and scalings exact, so ties stay ties
    @given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=3), st.integers(-1000, 1000),
           st.integers(1, 1000))
    def test_greedy_shift_scale_invariant(self, q, c, k):
        q = np.array(q, dtype=float)
        assert greedy_action(q + c) == greedy_action(q) == greedy_action(q * k)

    def test_epsilon_zero_is_greedy(self, rng):
        for _ in range(100):
            q = rng.normal(size=3)
            assert epsilon_greedy(q, 0.0, rng) == greedy_action(q)

    def test_epsilon_one_uniform(self):
        rng = np.random.default_rng(0)
        draws = np.array([epsilon_greedy([5.0, 0.0, 0.0], 1.0, rng) for _ in range(30_000)])
        for a in (-1, 0, 1):
            assert abs(np.mean(draws == a) - 1 / 3) < 0.01

    def test_epsilon_reproducible(self):
        seq = lambda: [epsilon_greedy([0.0, 1.0, 0.5], 0.5, r) for r in [np.random.default_rng(9)] for _ in range(50)]  # noqa: E731
        assert seq() == seq()

    def test_epsilon_range(self, rng):
        with pytest.raises(ValueError):
            epsilon_greedy([0, 0, 0], 1.5, rng)


class TestConfidence:
    @pytest.mark.parametrize("q,eta", [([0.7, 0.0, 0.2], 0.5), ([0.1, 0.0, 0.6], -0.5), ([3.3, -8.0, 3.3], 0.0)])
    def test_examples(self, q, eta):
        assert positional_confidence(q) == pytest.approx(eta, abs=1e-12)

    @given(finite, finite, finite)
    def test_antisymmetric(self, a, b, c):
        assert positional_confidence([a, b, c]) == -positional_confidence([c, b, a])

    def test_batch(self):
        np.testing.assert_array_equal(positional_confidence(np.array([[1, 0, 2], [4, 9, 1]])), [-1, 3])


class TestSync:
    def test_target_frozen_after_sync(self, rng):
        agent = make_ensemble(1, 4, seed=2)[0]
        sync_target(agent)
        x = rng.normal(size=(5, 4))
        before = q_values(agent, x, "target")
        agent.online.weights[0] += 1.0
        np.testing.assert_array_equal(q_values(agent, x, "target"), before)

    def test_idempotent(self):
        agent = make_ensemble(1, 4, seed=2)[0]
        sync_target(agent)
        first = snapshot(agent.target)
        sync_target(agent)
        assert agent.target.equals(first) and agent.target.sizes == agent.online.sizes


class TestEnsembleCheckpoint:
    def test_roundtrip(self, tmp_path):
        agents = make_ensemble(3, 5, seed=4)
        agents[1].online.weights[0] += 0.5
        save_ensemble(agents, tmp_path / "ck", iterations=17)
        loaded, manifest = load_ensemble(tmp_path / "ck")
        assert manifest["K"] == 3 and manifest["f"] == 5 and manifest["iterations"] == 17
        for a, b in zip(agents, loaded):
            assert a.online.equals(b.online) and a.target.equals(b.target)
            assert a.spec == b.spec

    def test_corrupt(self, tmp_path):
        agents = make_ensemble(2, 5, seed=4)
        save_ensemble(agents, tmp_path)
        (tmp_path / "agent_01.online.bin").write_bytes(b"MAPSNET\0junk")
        with pytest.raises(CheckpointError):
            load_ensemble(tmp_path)
        with pytest.raises(CheckpointError):
            load_ensemble(tmp_path / "missing")
