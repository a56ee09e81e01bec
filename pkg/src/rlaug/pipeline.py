"""End-to-end phases. Each reads and writes files under one output directory::

    out/
      config.txt                  resolved RunConfig
      run.log                     timestamps (the only non-deterministic file)
      data/manifest.jsonl         all splits, PGMs under data/images, data/masks
      checkpoints/pretrained.ckpt, agent.ckpt
      policy/curve.csv            episode, epsilon, mean_q, loss, return
      policy/traces.jsonl         one line per environment step
      augmented/<method>/         manifest.jsonl (2N samples; N for "none") + PGMs
      final/<method>/             model.ckpt, metrics.csv
      report/report.csv, report.txt
"""
import csv
import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import dataset, metrics, nnet, segmodel
from .agent import DQNAgent, QNetwork, write_training_curve
from .config import RunConfig, parse_config
from .env import AugmentEnv, append_trace_jsonl, rollout
from .errors import ConfigError, ContractViolation
from .imgops import Action, N_ACTIONS, apply_action

METHODS = ("none", "traditional", "random", "learned")


class Run:
    def __init__(self, out, cfg=None):
        self.out = Path(out)
        self.cfg = cfg or RunConfig()

    def path(self, *parts):
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    @property
    def manifest(self):
        return self.out / "data" / "manifest.jsonl"

    def log(self, msg):
        with open(self.path("run.log"), "a") as fh:
            fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {msg}\n")

    def save_config(self):
        self.path("config.txt").write_text(self.cfg.to_text())

    def new_model(self, phase):
        c = self.cfg
        return segmodel.SegModel((c.width1, c.width2), seed=c.phase_seed(phase))

    def load_model(self, ckpt):
        if not Path(ckpt).exists():
            raise ConfigError(f"missing checkpoint {ckpt}")
        model = self.new_model("init")
        model.load_state(nnet.load_checkpoint(ckpt))
        return model

    def split(self, *names, phase=None):
        if not self.manifest.exists():
            raise ConfigError(f"missing dataset manifest {self.manifest}; run gen-data first")
        return dataset.load_manifest(self.manifest, names, phase=phase)


# -- phases -----------------------------------------------------------------

def gen_data(run):
    c = run.cfg
    run.save_config()
    samples = dataset.gen_synthetic(c.n_samples, c.size, c.difficulty, c.phase_seed("gen-data"))
    train, val, test = dataset.split(samples, (c.n_train, c.n_val, c.n_test),
                                     c.phase_seed("split"))
    path = dataset.write_dataset(run.out / "data", train + val + test)
    run.log(f"gen-data: {len(train)}/{len(val)}/{len(test)} samples")
    return path


def _train_model(run, pairs, epochs, phase):
    c = run.cfg
    model = run.new_model(phase)
    segmodel.pretrain(model, pairs, epochs, c.seg_lr, c.phase_seed(phase + "/order"),
                      c.seg_batch, c.weight_decay)
    return model


def pretrain(run):
    train = run.split("train", phase="pretrain")
    model = _train_model(run, [s.pair() for s in train], run.cfg.pretrain_epochs, "pretrain")
    ckpt = run.path("checkpoints", "pretrained.ckpt")
    nnet.save_checkpoint(ckpt, model.params)
    with open(run.path("checkpoints", "pretrain_loss.csv"), "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(model.history):
            fh.write(f"{i},{loss!r}\n")
    run.log("pretrain: done")
    return ckpt


def _make_env(run, phase):
    c = run.cfg
    model = run.load_model(run.out / "checkpoints" / "pretrained.ckpt")
    train, val = run.split("train", phase=phase), run.split("val", phase=phase)
    pool = [(s.image.astype(np.float32), s.mask) for s in train]
    env = AugmentEnv(model, val, c.env_config(), c.aug_params(), replay_pool=pool,
                     seed=c.phase_seed(phase + "/env"))
    return env, train


def learn_policy(run):
    """Train the Dueling DQN for ``episodes`` episodes; returns per-episode traces."""
    c = run.cfg
    env, train = _make_env(run, "learn-policy")
    agent = DQNAgent(env.encoder.state_dim, c.agent_config(), seed=c.phase_seed("agent"))
    pick = np.random.default_rng(c.phase_seed("learn-policy/pick"))
    curve, traces = [], []
    with open(run.path("policy", "traces.jsonl"), "w") as fh:
        for ep in range(c.episodes):
            eps = c.agent_config().epsilon(ep, c.episodes)
            sample = train[int(pick.integers(len(train)))]
            trace = rollout(env, agent, sample, eps, learn=True)
            append_trace_jsonl(fh, ep, trace)
            traces.append(trace)
            curve.append({"episode": ep, "epsilon": eps, "mean_q": trace.mean_q,
                          "loss": float(np.mean(trace.losses)) if trace.losses else None,
                          "return": trace.total_return})
    write_training_curve(run.path("policy", "curve.csv"), curve)
    nnet.save_checkpoint(run.path("checkpoints", "agent.ckpt"), agent.net.params)
    run.log(f"learn-policy: {c.episodes} episodes, {agent.updates} updates")
    return traces


def load_agent(run, state_dim):
    ckpt = run.out / "checkpoints" / "agent.ckpt"
    if not ckpt.exists():
        raise ConfigError(f"missing agent checkpoint {ckpt}; run learn-policy first")
    c = run.cfg
    net = QNetwork(state_dim, N_ACTIONS, c.agent_hidden)
    net.params.load_state(nnet.load_checkpoint(ckpt))
    return net


class _GreedyAgent:
    """Frozen policy wrapper: acts greedily, never learns."""

    def __init__(self, net):
        self.net = net

    def act(self, s, epsilon):
        return int(np.argmax(self.net.forward(s)[0][0]))

    def remember(self, transition):
        pass

    def learn(self):
        return None


def _traditional_steps(rng, params):
    kind = int(rng.integers(3))
    if kind == 0:
        return [{"action": "HF", "seed": 0}]
    if kind == 1:
        sign = 1.0 if rng.integers(2) else -1.0
        return [{"action": "RT", "seed": 0, "degrees": sign * params.rotate_degrees}]
    side = ("CL", "CR", "CU", "CD")[int(rng.integers(4))]
    return [{"action": side, "seed": 0}]


def _random_steps(rng, max_steps):
    length = int(rng.integers(1, max_steps + 1))
    non_terminal = [a for a in Action if a is not Action.TM]
    return [{"action": non_terminal[int(rng.integers(len(non_terminal)))].name,
             "seed": int(rng.integers(2**63))} for _ in range(length)]


def augment(run, method="learned"):
    """Build the method's training set (2N samples, or the N originals for "none")."""
    c = run.cfg
    params = c.aug_params()
    train = run.split("train", phase="augment")
    if method == "none":
        return dataset.write_dataset(run.out / "augmented" / "none", train)
    if method not in METHODS:
        raise ContractViolation(f"unknown augmentation method {method!r}")
    rng = np.random.default_rng(c.phase_seed(f"augment/{method}"))
    augmented = []
    if method == "learned":
        env, _ = _make_env(run, "augment")
        policy = _GreedyAgent(load_agent(run, env.encoder.state_dim))
        with open(run.path("augmented", "learned", "traces.jsonl"), "w") as fh:
            for i, s in enumerate(train):
                trace = rollout(env, policy, s, 0.0, learn=False,
                                seed=int(rng.integers(2**63)))
                append_trace_jsonl(fh, i, trace)
                augmented.append(dataset.augmented_sample(s, trace.provenance,
                                                          trace.image, trace.mask))
    else:
        for s in train:
            steps = (_traditional_steps(rng, params) if method == "traditional"
                     else _random_steps(rng, c.max_steps))
            img, mask = dataset.replay_steps(s.image, s.mask, steps, params)
            augmented.append(dataset.augmented_sample(s, steps, img, mask))
    full = dataset.build_augmented_set(train, augmented)
    path = dataset.write_dataset(run.out / "augmented" / method, full)
    run.log(f"augment[{method}]: {len(full)} samples")
    return path


def _evaluate(model, test, threshold):
    preds = segmodel.predict_batch(model, np.stack([s.image for s in test]), threshold)
    return [metrics.evaluate(p, s.mask) for p, s in zip(preds, test)]


def train_final(run, method):
    """Fresh model on the method's set, scored on the test split."""
    c = run.cfg
    manifest = run.out / "augmented" / method / "manifest.jsonl"
    if not manifest.exists():
        raise ConfigError(f"missing augmented set {manifest}; run augment --method {method}")
    train = dataset.load_manifest(manifest, ("train",), phase="train-final")
    model = _train_model(run, [s.pair() for s in train], c.final_epochs, "train-final")
    nnet.save_checkpoint(run.path("final", method, "model.ckpt"), model.params)
    test = run.split("test", phase="train-final")
    records = _evaluate(model, test, c.threshold)
    agg, _ = metrics.write_metrics_csv(run.path("final", method, "metrics.csv"),
                                       [s.id for s in test], records)
    run.log(f"train-final[{method}]: {len(train)} training samples, DSC {agg['dsc']:.4f}")
    return agg


def evaluate_checkpoint(run, ckpt, dest):
    model = run.load_model(ckpt)
    test = run.split("test", phase="eval")
    records = _evaluate(model, test, run.cfg.threshold)
    agg, _ = metrics.write_metrics_csv(dest, [s.id for s in test], records)
    return agg


# -- report -----------------------------------------------------------------

def sign_test(wins, losses):
    """One-sided binomial p-value P(X >= wins) with X ~ Bin(wins + losses, 1/2); ties dropped."""
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n


def collect_run(out, methods=METHODS):
    """{method: (test ids, aggregate record)} for the methods present under ``out``."""
    found = {}
    for m in methods:
        path = Path(out) / "final" / m / "metrics.csv"
        if path.exists():
            ids, _, agg = metrics.read_metrics_csv(path)
            found[m] = (ids, agg)
    if found:
        first = next(iter(found.values()))[0]
        for m, (ids, _) in found.items():
            if ids != first:
                raise ContractViolation(f"{out}: method {m} was scored on a different test split")
    return found


def action_histogram(trace_path):
    counts = Counter({a.name: 0 for a in Action})
    if Path(trace_path).exists():
        for line in Path(trace_path).read_text().splitlines():
            if line.strip():
                counts[json.loads(line)["action"]] += 1
    return dict(counts)


def ordering_stats(runs, a="learned", b="random"):
    wins = losses = ties = 0
    for found in runs:
        if a in found and b in found:
            da, db = found[a][1]["dsc"], found[b][1]["dsc"]
            if da > db:
                wins += 1
            elif da < db:
                losses += 1
            else:
                ties += 1
    return {"a": a, "b": b, "wins": wins, "losses": losses, "ties": ties,
            "p_value": sign_test(wins, losses)}


def _run_seed(out):
    cfg = Path(out) / "config.txt"
    if not cfg.exists():
        raise ConfigError(f"{out} has no config.txt")
    return parse_config(cfg.read_text()).seed


def _fmt_row(agg):
    pct = [f"{100 * agg[k]:.1f}" for k in ("iou", "dsc", "ppv", "sen")]
    dist = ["n/a" if math.isnan(agg[k]) else f"{agg[k]:.2f}" for k in ("cd", "hd", "asd")]
    return pct + dist


def report(run, extra_runs=()):
    """Comparison table for this run (plus sign tests when several runs are given)."""
    outs = [run.out] + [Path(p) for p in extra_runs]
    collected = [collect_run(o) for o in outs]
    if sum(len(f) for f in collected[:1]) < 2:
        raise ContractViolation("report needs at least two method runs in the output directory")
    cols = [metrics.METRIC_NAMES[k] for k in metrics.METRIC_KEYS]
    with open(run.path("report", "report.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "method"] + cols)
        for o, found in zip(outs, collected):
            seed = _run_seed(o)
            for m, (_, agg) in found.items():
                w.writerow([seed, m] + [repr(float(agg[k])) for k in metrics.METRIC_KEYS])
    hist = action_histogram(run.out / "augmented" / "learned" / "traces.jsonl")
    policy_hist = action_histogram(run.out / "policy" / "traces.jsonl")
    lines = ["Method            " + " ".join(f"{c:>8}" for c in cols)]
    for m, (_, agg) in collected[0].items():
        lines.append(f"{m:<18}" + " ".join(f"{v:>8}" for v in _fmt_row(agg)))
    lines.append("")
    lines.append("mIoU/DSC/PPV/SEN in %, CD/HD/ASD in px (1 px = 1 mm-equivalent)")
    lines.append("")
    lines.append("Actions chosen by the learned policy while augmenting:")
    lines.append("  " + " ".join(f"{k}:{v}" for k, v in hist.items()))
    lines.append("Actions taken during policy learning:")
    lines.append("  " + " ".join(f"{k}:{v}" for k, v in policy_hist.items()))
    stats = []
    if len(outs) > 1:
        lines.append("")
        lines.append(f"Across {len(outs)} runs (mean test DSC, one-sided sign test):")
        for b in ("random", "none", "traditional"):
            st = ordering_stats(collected, "learned", b)
            stats.append(st)
            lines.append(f"  learned > {b}: {st['wins']} wins, {st['losses']} losses, "
                         f"{st['ties']} ties, p = {st['p_value']:.4f}")
    run.path("report", "report.txt").write_text("\n".join(lines) + "\n")
    run.log("report: written")
    return {"runs": collected, "histogram": hist, "policy_histogram": policy_hist,
            "ordering": stats}


def run_all(run, methods=None):
    """Every phase in order; returns {method: aggregate metrics}."""
    methods = methods or run.cfg.method_list()
    gen_data(run)
    pretrain(run)
    if "learned" in methods:
        learn_policy(run)
    results = {}
    for m in methods:
        augment(run, m)
        results[m] = train_final(run, m)
    return results
