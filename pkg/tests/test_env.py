import time

import numpy as np
import pytest

from rlaug import segmodel
from rlaug.agent import AgentConfig, DQNAgent
from rlaug.dataset import gen_synthetic
from rlaug.env import AugmentEnv, EnvConfig, compute_reward, rollout
from rlaug.errors import ConfigError, ContractViolation
from rlaug.imgops import Action


@pytest.fixture(scope="module")
def setup():
    data = gen_synthetic(14, 32, "hard", seed=21)
    model = segmodel.SegModel(seed=0)
    segmodel.pretrain(model, [s.pair() for s in data[:10]], epochs=3, seed=0)
    return model, data[:10], data[10:]


def make_env(setup, **kw):
    model, _, val = setup
    return AugmentEnv(model, val, EnvConfig(**kw), seed=5)


class Scripted:
    """Agent stand-in that plays a fixed action list."""

    def __init__(self, actions):
        self.actions = list(actions)
        self.buffer = []

    def act(self, s, epsilon):
        return self.actions.pop(0) if self.actions else Action.TM

    def remember(self, t):
        self.buffer.append(t)

    def learn(self):
        return None

    class net:
        @staticmethod
        def forward(s):
            return np.zeros((1, 12)), None


def test_reward_arithmetic():
    assert compute_reward(0.80, 0.75, False) == pytest.approx(0.05, abs=1e-15)
    assert compute_reward(0.80, 0.75, True) == pytest.approx(0.5, abs=1e-14)
    assert compute_reward(0.6, 0.6, False) == 0.0


def test_terminal_scale_ratio():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d, dp = rng.random(2)
        assert compute_reward(d, dp, True) == 10.0 * compute_reward(d, dp, False)


def test_reset_deterministic(setup):
    env = make_env(setup)
    train = setup[1]
    s1 = env.reset(train[0], seed=1)
    base1 = env.trace.d_base
    env.step(Action.HF)
    s2 = env.reset(train[0], seed=1)
    assert np.array_equal(s1, s2)
    assert env.trace.d_base == base1 and 0.0 <= base1 <= 1.0
    start = env.checkpoints["episode-start"]
    assert all(np.array_equal(start[k], env.model.params[k]) for k in start)


def test_reset_without_checkpoint(setup):
    env = make_env(setup)
    del env.checkpoints["episode-start"]
    with pytest.raises(ConfigError):
        env.reset(setup[1][0])


def test_step_after_done(setup):
    env = make_env(setup)
    env.reset(setup[1][0])
    _, r, done = env.step(Action.TM)
    assert done and r == 0.0
    with pytest.raises(ContractViolation):
        env.step(Action.HF)


def test_reward_law_and_telescoping(setup):
    env = make_env(setup)
    for k, sample in enumerate(setup[1][:3]):
        env.reset(sample, seed=k)
        d0 = env.trace.d_base
        rewards = []
        for a in (Action.RT, Action.LT, Action.WP, Action.TM):
            _, r, done = env.step(a)
            rewards.append(r)
        dice = [d0] + [s["dice"] for s in env.trace.steps]
        for t, r in enumerate(rewards):
            diff = dice[t + 1] - dice[t]
            assert r == (10.0 * diff if t == len(rewards) - 1 else diff)
        telescoped = dice[-1] - dice[0] + 9.0 * (dice[-1] - dice[-2])
        assert abs(sum(rewards) - telescoped) < 1e-6
        # fine-tuned model is scored honestly
        assert env.validation_dice() == dice[-1]


def test_step_cap(setup):
    env = make_env(setup, max_steps=8)
    trace = rollout(env, Scripted([Action.HF] * 20), setup[1][0], 0.0, learn=False)
    assert len(trace) == 8
    assert [s["terminal"] for s in trace.steps] == [False] * 7 + [True]
    last = trace.steps[-1]
    assert last["reward"] == 10.0 * (last["dice"] - trace.steps[-2]["dice"])
    assert len(trace.provenance) == 8


def test_tm_first_returns_original(setup):
    env = make_env(setup)
    sample = setup[1][1]
    agent = Scripted([Action.TM])
    trace = rollout(env, agent, sample, 0.0, learn=False)
    assert len(trace) == 1 and trace.provenance == []
    assert np.array_equal(trace.image, sample.image) and np.array_equal(trace.mask, sample.mask)
    assert len(agent.buffer) == 1 and agent.buffer[0].done


def test_rollout_pushes_transitions_and_is_fast(setup):
    env = make_env(setup)
    agent = DQNAgent(env.encoder.state_dim, AgentConfig(batch_size=4), seed=0)
    t0 = time.perf_counter()
    trace = rollout(env, agent, setup[1][2], 1.0, learn=True, seed=3)
    assert time.perf_counter() - t0 < 5.0
    assert 1 <= len(trace) <= 8
    assert len(agent.buffer) == len(trace)
    assert trace.terminal and trace.steps[-1]["terminal"]


def test_episode_reproducible(setup):
    def play():
        env = make_env(setup)
        trace = rollout(env, Scripted([Action.AN, Action.WP, Action.CL]), setup[1][3], 0.0,
                        learn=False, seed=17)
        return trace.steps, trace.provenance, trace.image

    a, b = play(), play()
    assert a[0] == b[0] and a[1] == b[1] and np.array_equal(a[2], b[2])


def test_empty_validation(setup):
    with pytest.raises(ContractViolation):
        AugmentEnv(setup[0], [])
