"""Dueling DQN: Q(s, a) = V(s) + C(s, a) - mean_a' C(s, a').

A shared trunk of two linear-ReLU layers feeds a scalar value head and an
advantage head with one output per action. Training regresses Q(s, a) onto
r + gamma * max_a' Q_target(s', a') (just r for terminal transitions) with a
squared loss, one Adam step per call, and a periodically hard-synced target
network.
"""
import csv
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import ContractViolation
from .imgops import N_ACTIONS


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6
    batch_size: int = 32
    buffer_capacity: int = 5000
    target_sync: int = 50
    lr: float = 1e-3
    hidden: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractViolation(f"{name} must lie in [0, 1]")

    def epsilon(self, episode, episodes):
        """Linear decay from eps_start to eps_end over the first eps_decay_frac of episodes."""
        span = max(1.0, self.eps_decay_frac * episodes)
        frac = min(1.0, episode / span)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


def dueling_aggregate(value, advantage):
    """Combine V (shape (N,)) and C (shape (N, A)) into Q (shape (N, A)), in float64."""
    value = np.asarray(value, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return value[:, None] + advantage - advantage.mean(axis=1, keepdims=True)


class QNetwork:
    def __init__(self, state_dim, n_actions=N_ACTIONS, hidden=64, seed=0, dtype=np.float32):
        self.state_dim = int(state_dim)
        self.n_actions = int(n_actions)
        self.hidden = int(hidden)
        self.trunk = [nnet.linear("fc1", state_dim, hidden), nnet.RELU,
                      nnet.linear("fc2", hidden, hidden), nnet.RELU]
        self.value_head = [nnet.linear("value", hidden, 1)]
        self.adv_head = [nnet.linear("advantage", hidden, n_actions)]
        self.params = nnet.init_params(self.trunk + self.value_head + self.adv_head, seed, dtype)

    def architecture(self):
        return (self.state_dim, self.n_actions, self.hidden)

    def copy(self):
        clone = QNetwork.__new__(QNetwork)
        clone.__dict__.update(self.__dict__)
        clone.params = self.params.copy()
        return clone

    def _states(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.ndim == 1:
            s = s[None]
        if s.ndim != 2 or s.shape[1] != self.state_dim:
            raise ContractViolation(f"state length must be {self.state_dim}, got shape {s.shape}")
        return s

    def heads(self, s, record=False):
        s = self._states(s)
        h, c_trunk = nnet.forward(self.trunk, self.params, s, record)
        v, c_v = nnet.forward(self.value_head, self.params, h, record)
        c, c_c = nnet.forward(self.adv_head, self.params, h, record)
        return v[:, 0], c, (c_trunk, c_v, c_c)

    def forward(self, s, record=False):
        v, c, cache = self.heads(s, record)
        return dueling_aggregate(v, c), cache

    def backward(self, cache, grad_q):
        c_trunk, c_v, c_c = cache
        grad_q = np.asarray(grad_q, dtype=np.float64)
        g_v = grad_q.sum(axis=1, keepdims=True)
        g_c = grad_q - grad_q.mean(axis=1, keepdims=True)
        g_h = nnet.backward(c_v, g_v) + nnet.backward(c_c, g_c)
        nnet.backward(c_trunk, g_h)


def q_values(net, s):
    """Q(s, .) for a single state as a float64 vector of length n_actions."""
    s = np.asarray(s)
    if s.ndim != 1:
        raise ContractViolation(f"q_values takes a single state vector, got shape {s.shape}")
    return net.forward(s)[0][0]


def select_action(net, s, epsilon, rng):
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolation(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(q_values(net, s)))


def td_targets(target_net, batch, gamma):
    r = np.array([t.r for t in batch], dtype=np.float64)
    done = np.array([t.done for t in batch], dtype=bool)
    y = r.copy()
    live = ~done
    if gamma != 0 and live.any():
        q_next, _ = target_net.forward(np.stack([batch[i].s_next for i in np.flatnonzero(live)]))
        y[live] += gamma * q_next.max(axis=1)
    return y


def td_train_step(net, target_net, batch, gamma, lr):
    """One Adam step on mean (Q(s, a) - y)^2; returns the loss before the step."""
    if not batch:
        raise ContractViolation("td_train_step needs a non-empty batch")
    y = td_targets(target_net, batch, gamma)
    s = np.stack([t.s for t in batch])
    a = np.array([t.a for t in batch], dtype=np.int64)
    q, cache = net.forward(s, record=True)
    rows = np.arange(len(batch))
    err = q[rows, a] - y
    grad = np.zeros_like(q)
    grad[rows, a] = 2.0 * err / len(batch)
    net.backward(cache, grad)
    nnet.adam_step(net.params, lr)
    return float(np.mean(err * err))


def sync_target(net, target_net):
    """Hard-copy every parameter of ``net`` into ``target_net``."""
    if net.architecture() != target_net.architecture():
        raise ContractViolation(
            f"architecture mismatch: {net.architecture()} vs {target_net.architecture()}")
    target_net.params.load_state(net.params.state())
    return target_net


class ReplayBuffer:
    """Bounded FIFO of transitions sampled uniformly with replacement."""

    def __init__(self, capacity, seed=0):
        if capacity < 1:
            raise ContractViolation(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._items = deque(maxlen=self.capacity)
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self._items)

    def contents(self):
        return list(self._items)

    def push(self, transition):
        self._items.append(transition)

    def sample(self, k):
        if not self._items:
            raise ContractViolation("cannot sample from an empty replay buffer")
        idx = self._rng.integers(len(self._items), size=k)
        return [self._items[i] for i in idx]


class DQNAgent:
    """Online net, target net and replay buffer driven together."""

    def __init__(self, state_dim, config=AgentConfig(), n_actions=N_ACTIONS, seed=0):
        seeds = np.random.SeedSequence(seed).spawn(3)
        self.config = config
        self.net = QNetwork(state_dim, n_actions, config.hidden,
                            seed=int(seeds[0].generate_state(1)[0]))
        self.target = self.net.copy()
        self.buffer = ReplayBuffer(config.buffer_capacity,
                                   seed=int(seeds[1].generate_state(1)[0]))
        self.rng = np.random.default_rng(seeds[2])
        self.updates = 0
        self.losses = []

    def act(self, s, epsilon):
        return select_action(self.net, s, epsilon, self.rng)

    def remember(self, transition):
        self.buffer.push(transition)

    def learn(self):
        """One TD update once the buffer holds a full batch; returns the loss or None."""
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return None
        loss = td_train_step(self.net, self.target, self.buffer.sample(cfg.batch_size),
                             cfg.gamma, cfg.lr)
        self.updates += 1
        if self.updates % cfg.target_sync == 0:
            sync_target(self.net, self.target)
        self.losses.append(loss)
        return loss


def write_training_curve(path, rows):
    """rows: dicts with episode, epsilon, mean_q, loss, return."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "epsilon", "mean_q", "loss", "return"])
        for r in rows:
            w.writerow([r["episode"], repr(r["epsilon"]), repr(r["mean_q"]),
                        "" if r["loss"] is None else repr(r["loss"]), repr(r["return"])])
