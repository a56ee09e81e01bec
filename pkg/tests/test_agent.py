import numpy as np
import pytest

from rlaug import agent as ag
from rlaug.agent import AgentConfig, QNetwork, ReplayBuffer, Transition
from rlaug.errors import ContractViolation

from bandit import run_bandit
from gradcheck import numeric_grad, rel_err


def _forced(net, v, c):
    """Zero the trunk-to-head weights so the heads emit their biases."""
    net.params.params["value.w"][...] = 0
    net.params.params["value.b"][...] = v
    net.params.params["advantage.w"][...] = 0
    net.params.params["advantage.b"][...] = c


def test_dueling_forced_heads():
    net = QNetwork(5, n_actions=3, seed=0, dtype=np.float64)
    _forced(net, 1.0, [1.0, 2.0, 3.0])
    assert ag.q_values(net, np.ones(5)).tolist() == [0.0, 1.0, 2.0]


def test_constant_advantage_gives_value():
    net = QNetwork(5, seed=0, dtype=np.float64)
    _forced(net, 0.7, 4.0)
    assert np.allclose(ag.q_values(net, np.zeros(5)), 0.7, atol=1e-15)


def test_aggregation_identity(rng):
    net = QNetwork(16, seed=3)
    s = rng.standard_normal((200, 16))
    v, _, _ = net.heads(s)
    q, _ = net.forward(s)
    assert q.shape == (200, 12)
    assert np.abs((q - v[:, None]).mean(axis=1)).max() < 1e-5


def test_argmax_invariant_to_advantage_shift(rng):
    net = QNetwork(8, seed=1)
    s = rng.standard_normal(8)
    before = np.argmax(ag.q_values(net, s))
    net.params.params["advantage.b"] += 3.25
    assert np.argmax(ag.q_values(net, s)) == before


def test_wrong_state_length():
    with pytest.raises(ContractViolation):
        ag.q_values(QNetwork(4), np.zeros(5))


def test_select_action_greedy_and_ties():
    net = QNetwork(2, n_actions=12, seed=0, dtype=np.float64)
    c = np.array([.1, .9, .2] + [0.0] * 9)
    _forced(net, 0.0, c)
    rng = np.random.default_rng(0)
    assert ag.select_action(net, np.zeros(2), 0.0, rng) == 1
    c = np.zeros(12)
    c[2] = c[7] = 1.0
    _forced(net, 0.0, c)
    assert ag.select_action(net, np.zeros(2), 0.0, rng) == 2
    with pytest.raises(ContractViolation):
        ag.select_action(net, np.zeros(2), 1.5, rng)


def test_select_action_uniform_at_eps_one():
    net = QNetwork(2, seed=0)
    rng = np.random.default_rng(7)
    draws = [ag.select_action(net, np.zeros(2), 1.0, rng) for _ in range(12000)]
    freq = np.bincount(draws, minlength=12)
    sigma = np.sqrt(12000 * (1 / 12) * (11 / 12))
    assert np.abs(freq - 1000).max() < 3 * sigma


def test_dueling_backward_gradcheck(rng):
    net = QNetwork(5, n_actions=4, hidden=6, seed=2, dtype=np.float64)
    s = rng.standard_normal((3, 5))
    proj = rng.standard_normal((3, 4))
    net.params.zero_grad()
    _, cache = net.forward(s, record=True)
    net.backward(cache, proj)

    def loss(_):
        return float((net.forward(s)[0] * proj).sum())

    for name in net.params.names():
        assert rel_err(net.params.grads[name], numeric_grad(loss, net.params.params[name])) < 1e-6


def _transition(r, done, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return Transition(rng.standard_normal(dim), 0, r, rng.standard_normal(dim), done)


def test_td_targets():
    target = QNetwork(4, seed=0)
    assert ag.td_targets(target, [_transition(0.5, True)], 0.9).tolist() == [0.5]
    batch = [_transition(0.25, False, seed=i) for i in range(3)]
    assert ag.td_targets(target, batch, 0.0).tolist() == [0.25] * 3
    y = ag.td_targets(target, batch, 0.9)
    q_next = np.stack([ag.q_values(target, t.s_next) for t in batch]).max(axis=1)
    assert np.allclose(y, 0.25 + 0.9 * q_next)


def test_td_step_leaves_target():
    net = QNetwork(4, seed=0)
    target = net.copy()
    before = target.params.state()
    batch = [_transition(1.0, False, seed=i) for i in range(8)]
    loss = ag.td_train_step(net, target, batch, 0.9, 1e-3)
    assert loss > 0
    assert all(np.array_equal(before[k], target.params[k]) for k in before)
    assert not np.array_equal(net.params["fc1.w"], before["fc1.w"])
    with pytest.raises(ContractViolation):
        ag.td_train_step(net, target, [], 0.9, 1e-3)


def test_sync_target(rng):
    net, target = QNetwork(4, seed=0), QNetwork(4, seed=1)
    ag.sync_target(net, target)
    s = rng.standard_normal(4)
    assert np.array_equal(ag.q_values(net, s), ag.q_values(target, s))
    snap = ag.q_values(target, s)
    batch = [_transition(1.0, True, seed=i) for i in range(4)]
    for _ in range(10):
        ag.td_train_step(net, target, batch, 0.9, 1e-3)
    assert np.array_equal(ag.q_values(target, s), snap)
    ag.sync_target(net, target)
    once = target.params.state()
    ag.sync_target(net, target)
    assert all(np.array_equal(once[k], target.params[k]) for k in once)
    with pytest.raises(ContractViolation):
        ag.sync_target(net, QNetwork(5))


def test_replay_fifo_and_sampling():
    buf = ReplayBuffer(2, seed=0)
    with pytest.raises(ContractViolation):
        buf.sample(1)
    t1, t2, t3 = (_transition(float(i), True) for i in range(3))
    for t in (t1, t2, t3):
        buf.push(t)
    assert [id(t) for t in buf.contents()] == [id(t2), id(t3)]
    batch = buf.sample(5)
    assert len(batch) == 5 and all(t is t2 or t is t3 for t in batch)


def test_replay_sampling_reproducible():
    def draw():
        buf = ReplayBuffer(10, seed=42)
        for i in range(10):
            buf.push(_transition(float(i), True))
        return [t.r for t in buf.sample(20)]

    assert draw() == draw()


def test_epsilon_schedule():
    cfg = AgentConfig()
    eps = [cfg.epsilon(e, 100) for e in range(100)]
    assert eps[0] == 1.0
    assert eps[60] == pytest.approx(0.05) and eps[-1] == pytest.approx(0.05)
    assert all(a >= b for a, b in zip(eps, eps[1:]))
    assert all(0.0 <= e <= 1.0 for e in eps)


def test_config_validation():
    with pytest.raises(ContractViolation):
        AgentConfig(gamma=1.5)
    with pytest.raises(ContractViolation):
        AgentConfig(eps_end=-0.1)


def test_agent_run_reproducible():
    def run():
        a = ag.DQNAgent(3, AgentConfig(batch_size=4), n_actions=2, seed=9)
        s = np.ones(3)
        for _ in range(30):
            act = a.act(s, 0.5)
            a.remember(Transition(s, act, float(act), s, True))
            a.learn()
        return a.net.params.state(), [t.a for t in a.buffer.contents()]

    (p1, b1), (p2, b2) = run(), run()
    assert b1 == b2
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_bandit_small_sample():
    assert sum(run_bandit(s) for s in range(5)) >= 4


def test_training_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    ag.write_training_curve(path, [{"episode": 0, "epsilon": 1.0, "mean_q": 0.1, "loss": None,
                                    "return": -0.2}])
    assert path.read_text().splitlines() == ["episode,epsilon,mean_q,loss,return", "0,1.0,0.1,,-0.2"]
