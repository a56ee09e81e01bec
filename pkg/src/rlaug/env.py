"""The augmentation MDP.

An episode starts from one training (image, mask) pair and the substitute
segmentation model restored to its episode-start checkpoint. Each non-terminal
action transforms the pair, fine-tunes the substitute model on the result and
re-scores it on the validation set; the reward is the change in mean
validation Dice, scaled by 10 on the terminal step. The state is the frozen
pretrained encoder's bottleneck summary of the current image.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import segmodel
from .agent import Transition
from .errors import ConfigError, ContractViolation
from .imgops import DEFAULT_PARAMS, Action, apply_action
from .metrics import dice

TERMINAL_SCALE = 10.0


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 8
    finetune_steps: int = 2
    finetune_lr: float = 5e-5
    weight_decay: float = 5e-4
    threshold: float = 0.5
    replay_original: bool = False
    persist_model: bool = False


def compute_reward(d, d_prev, terminal):
    """d - d_prev, or 10 * (d - d_prev) on the terminal step."""
    r = d - d_prev
    return TERMINAL_SCALE * r if terminal else r


@dataclass
class EpisodeTrace:
    source_id: str
    d_base: float
    steps: list = field(default_factory=list)     # dicts: t, action, reward, dice, terminal
    provenance: list = field(default_factory=list)  # applied (non-TM) actions with seeds
    terminal: bool = False
    image: np.ndarray = None
    mask: np.ndarray = None

    @property
    def total_return(self):
        return sum(s["reward"] for s in self.steps)

    def __len__(self):
        return len(self.steps)


class AugmentEnv:
    """Owns a mutable copy of the substitute model; single-threaded."""

    def __init__(self, model, val, config=EnvConfig(), aug_params=DEFAULT_PARAMS,
                 replay_pool=None, seed=0):
        if not val:
            raise ContractViolation("the environment needs a non-empty validation set")
        self.config = config
        self.aug_params = aug_params
        self.encoder = model.copy()  # frozen: state extraction only
        self.model = model.copy()    # "current"
        self.checkpoints = {"pretrained": model.state(), "episode-start": model.state()}
        self._val_images = np.stack([s.image for s in val]).astype(np.float32)
        self._val_masks = [np.asarray(s.mask, dtype=np.uint8) for s in val]
        self._replay_pool = list(replay_pool or [])
        self._rng = np.random.default_rng(seed)
        self._replay_next = 0
        self.trace = None
        self.done = True

    def validation_dice(self):
        preds = segmodel.predict_batch(self.model, self._val_images, self.config.threshold)
        return float(np.mean([dice(p, m) for p, m in zip(preds, self._val_masks)]))

    def state(self):
        return segmodel.extract_state(self.encoder, self.image)

    def reset(self, sample, seed=None):
        """Restore the episode-start checkpoint, load ``sample`` and return s^0."""
        if "episode-start" not in self.checkpoints:
            raise ConfigError("no 'episode-start' checkpoint to restore")
        if self.config.persist_model and self.trace is not None:
            self.checkpoints["episode-start"] = self.model.state()
        self.model.load_state(self.checkpoints["episode-start"])
        self.image = np.asarray(sample.image, dtype=np.float64)
        self.mask = np.asarray(sample.mask, dtype=np.uint8)
        self.t = 0
        self._step_rng = np.random.default_rng(self._rng.integers(2**63) if seed is None else seed)
        self.d_prev = self.validation_dice()
        self.trace = EpisodeTrace(sample.id, self.d_prev)
        self.done = False
        return self.state()

    def _replay(self):
        pair = self._replay_pool[self._replay_next % len(self._replay_pool)]
        self._replay_next += 1
        return pair

    def step(self, action):
        """Returns (s_next, reward, done)."""
        if self.done:
            raise ContractViolation("step() called on a finished episode; reset() first")
        action = Action(action)
        seed = int(self._step_rng.integers(2**63))
        cap_hit = self.t + 1 >= self.config.max_steps
        if action is not Action.TM:
            self.image, self.mask, _ = apply_action(self.image, self.mask, action, seed,
                                                    self.aug_params)
            self.trace.provenance.append({"action": action.name, "seed": seed})
            replay = self._replay if self.config.replay_original and self._replay_pool else None
            segmodel.finetune(self.model, (self.image.astype(np.float32), self.mask),
                              self.config.finetune_steps, self.config.finetune_lr,
                              self.config.weight_decay, replay)
            d = self.validation_dice()
        else:
            d = self.d_prev
        terminal = action is Action.TM or cap_hit
        r = compute_reward(d, self.d_prev, terminal)
        self.trace.steps.append({"t": self.t, "action": action.name, "reward": r,
                                 "dice": d, "terminal": terminal})
        self.d_prev = d
        self.t += 1
        self.done = terminal
        if terminal:
            self.trace.terminal = True
            self.trace.image, self.trace.mask = self.image, self.mask
        return self.state(), r, terminal


def rollout(env, agent, sample, epsilon, learn=True, seed=None):
    """Run one episode with ``agent``'s epsilon-greedy policy.

    Every transition goes into the agent's replay buffer; with ``learn`` the
    agent takes one update per step. Returns the EpisodeTrace, whose
    ``image``/``mask`` are the sample's augmented output.
    """
    s = env.reset(sample, seed)
    losses = []
    q_means = []
    while not env.done:
        a = agent.act(s, epsilon)
        q_means.append(float(agent.net.forward(s)[0].mean()))
        s_next, r, done = env.step(a)
        agent.remember(Transition(s, a, r, s_next, done))
        if learn:
            loss = agent.learn()
            if loss is not None:
                losses.append(loss)
        s = s_next
    trace = env.trace
    trace.losses = losses
    trace.mean_q = float(np.mean(q_means))
    return trace


def append_trace_jsonl(fh, episode, trace):
    for step in trace.steps:
        rec = {"episode": episode, "t": step["t"], "action": step["action"],
               "reward": step["reward"], "dice": step["dice"], "terminal": step["terminal"]}
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
