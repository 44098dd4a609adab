"""Semi-supervised training loop.

Each labeled start node contributes one optimizer step per epoch: M walks
are rolled out from it, every walk is classified, each walk earns a
terminal +-1 reward against the start node's true label, and two gradient
sources are averaged over the M walks before the step:

  - a policy gradient through the action log-probabilities, discounted
    toward late steps, into the scorer and (through the history chain) the
    recurrent core;
  - a supervised cross-entropy-plus-L2 gradient through the classifier
    head and, unless disabled, back through the recurrent core.

The scorer receives nothing from the supervised pass (the aggregation
threshold has zero derivative) and the classifier nothing from the policy
pass; both invariants are asserted by tests rather than trusted.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .agent import (
    TAG_SHUFFLE,
    TAG_TRAIN_WALK,
    Model,
    Trajectory,
    classify,
    init_model,
    predict,
    stream_rng,
    walk,
)
from .errors import ConfigError, NumericError
from .graph import AttributedGraph, LabelSplit
from .nn import adam_step, softmax_cross_entropy


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the benchmark setup."""

    walk_len: int = 10          # steps per walk, T
    train_walks: int = 5        # rollouts per start node during training
    test_walks: int = 10        # rollouts per node at prediction time
    discount: float = 0.99     # reward discount toward early steps
    lr: float = 1e-4
    hidden_dim: int = 128
    epochs: int = 30
    l2: float = 5e-4            # classifier L2 coefficient
    seed: int = 0
    supervised_to_core: bool = True   # let the classifier loss reach the core
    reward_from_ensemble: bool = False  # reward walks by the ensemble vote
    reward_baseline: bool = False       # subtract the batch-mean reward
    threads: int = 1

    def validate(self):
        if self.walk_len < 2:
            raise ConfigError(f"walk_len must be >= 2, got {self.walk_len}")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError(f"discount must be in (0, 1], got {self.discount}")
        if self.train_walks < 1:
            raise ConfigError(f"train_walks must be >= 1, got {self.train_walks}")
        if self.test_walks < 1:
            raise ConfigError(f"test_walks must be >= 1, got {self.test_walks}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        return self

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    train_acc: float
    mean_loss: float
    seconds: float


@dataclass
class TrainResult:
    model: Model
    best_state: dict
    best_epoch: int
    epoch_stats: list[EpochStats] = field(default_factory=list)


def terminal_reward(predicted: int, truth: int) -> float:
    """+1 for a correct terminal prediction, -1 otherwise; all intermediate
    steps are rewardless, so this is also the episode return."""
    return 1.0 if predicted == truth else -1.0


def _bptt(model: Model, traj: Trajectory, dh_slots: np.ndarray):
    """Run gradient flow backward through the walk's recurrent chain.

    dh_slots[t] holds the externally injected gradient on the history after
    step t (index 0 is the initial zero history, whose gradient is dropped).
    Slots above the last nonzero one contribute nothing and are skipped.
    """
    nz = np.flatnonzero(np.any(dh_slots != 0.0, axis=1))
    if nz.size == 0:
        return
    top = int(nz[-1])
    g = dh_slots[top]
    for t in range(top, 0, -1):
        _, dh_prev = model.gru.backward(traj.gru_caches[t - 1], g)
        g = dh_prev + dh_slots[t - 1]


def episode_policy_gradient(traj: Trajectory, reward: float, discount: float,
                            model: Model, weight: float = 1.0):
    """Accumulate the policy-gradient contribution of one episode.

    Each action's log-probability gradient is weighted by
    discount^(T - t) * reward * weight, flowing into the scorer directly and
    into the recurrent core through the history the scorer consumed.
    Gradients of the *negative* objective are accumulated (the optimizer
    minimizes). Fallback steps (underflowed score mass) are skipped.
    """
    model.check_versions(traj.versions)
    if reward == 0.0:
        return
    T = traj.length
    d = model.hidden_dim
    dh_slots = np.zeros((T + 1, d))
    for t in range(1, T):
        if traj.fallback[t - 1]:
            continue
        phi = traj.scores[t - 1]
        i = int(traj.chosen_idx[t - 1])
        coef = weight * reward * discount ** (T - t)
        total = float(phi.sum())
        dphi = np.full(phi.shape[0], coef / total)
        dphi[i] -= coef / float(phi[i])
        dinputs = model.score.backward(traj.score_caches[t - 1], dphi)
        dh_slots[t - 1] += dinputs[:, :d].sum(axis=0)
    _bptt(model, traj, dh_slots)


def supervised_step(traj: Trajectory, truth: int, model: Model,
                    l2_coef: float, weight: float = 1.0,
                    to_core: bool = True) -> float:
    """Accumulate the supervised gradient of one episode and return its loss
    (cross-entropy at the final history plus the classifier L2 penalty).

    Touches the classifier and, when to_core is set, the recurrent core via
    the full history chain. Never touches the scorer.
    """
    model.check_versions(traj.versions)
    logits, cache = model.classifier.forward(traj.h_final)
    ce, dlogits = softmax_cross_entropy(logits, truth)
    loss = ce + l2_coef * model.classifier.g.sq_norm()
    dh = model.classifier.backward(cache, weight * dlogits)
    cg = model.classifier.g
    for k, p in cg.params.items():
        cg.grads[k] += (2.0 * l2_coef * weight) * p
    if to_core:
        dh_slots = np.zeros((traj.length + 1, model.hidden_dim))
        dh_slots[traj.length] = dh
        _bptt(model, traj, dh_slots)
    return loss


def _rollouts(view, node: int, model: Model, cfg: TrainConfig,
              epoch: int) -> list[Trajectory]:
    """M_train walks from one start node, each on its own derived stream so
    results do not depend on scheduling."""
    def one(j: int) -> Trajectory:
        rng = stream_rng(cfg.seed, TAG_TRAIN_WALK, epoch, node, j)
        return walk(view, node, cfg.walk_len, model, rng)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(one, range(cfg.train_walks)))
    return [one(j) for j in range(cfg.train_walks)]


def train_epoch(g: AttributedGraph, split: LabelSplit, model: Model,
                cfg: TrainConfig, epoch: int) -> EpochStats:
    """One pass over the shuffled training nodes; one optimizer step each.

    Labels are read only through g.label_of and only for start nodes; the
    walks themselves run on the label-free view.
    """
    t0 = time.perf_counter()
    view = g.walk_view()
    order = stream_rng(cfg.seed, TAG_SHUFFLE, epoch).permutation(split.train_ids)
    m = cfg.train_walks
    reward_sum = 0.0
    loss_sum = 0.0
    n_walks = 0
    n_correct = 0
    for node in order:
        node = int(node)
        truth = g.label_of(node)
        trajs = _rollouts(view, node, model, cfg, epoch)
        probs = np.empty((m, model.num_classes))
        for j, traj in enumerate(trajs):
            traj.terminal_probs = classify(model.classifier, traj.h_final)
            probs[j] = traj.terminal_probs
        ensemble_pred = int(np.argmax(probs.mean(axis=0)))
        if cfg.reward_from_ensemble:
            rewards = np.full(m, terminal_reward(ensemble_pred, truth))
        else:
            rewards = np.array([
                terminal_reward(int(np.argmax(probs[j])), truth)
                for j in range(m)
            ])
        advantages = rewards - rewards.mean() if cfg.reward_baseline else rewards
        for j, traj in enumerate(trajs):
            episode_policy_gradient(traj, float(advantages[j]), cfg.discount,
                                    model, weight=1.0 / m)
            loss_sum += supervised_step(traj, truth, model, cfg.l2,
                                        weight=1.0 / m,
                                        to_core=cfg.supervised_to_core)
        for group in model.groups():
            adam_step(group, cfg.lr)
        reward_sum += rewards.sum()
        n_walks += m
        n_correct += int(ensemble_pred == truth)
    return EpochStats(
        epoch=epoch,
        mean_reward=reward_sum / max(n_walks, 1),
        train_acc=n_correct / max(len(order), 1),
        mean_loss=loss_sum / max(n_walks, 1),
        seconds=time.perf_counter() - t0,
    )


def train(g: AttributedGraph, split: LabelSplit, cfg: TrainConfig) -> TrainResult:
    """Full training run; returns the final model, the best-by-mean-reward
    parameter snapshot, and per-epoch statistics. Deterministic for a fixed
    seed in single-threaded mode (and, by stream design, any thread count).
    """
    cfg.validate()
    if split.train_ids.size == 0:
        raise ConfigError("training split is empty")
    model = init_model(g.node_dim, g.edge_dim, cfg.hidden_dim,
                       g.num_classes, cfg.seed)
    best_state = model.state_copy()
    best_epoch = -1
    best_reward = -np.inf
    stats: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        try:
            es = train_epoch(g, split, model, cfg, epoch)
        except NumericError as err:
            # hand partial progress to the caller for diagnostics
            err.model = model
            err.stats = stats
            raise
        stats.append(es)
        if es.mean_reward > best_reward:
            best_reward = es.mean_reward
            best_state = model.state_copy()
            best_epoch = epoch
    return TrainResult(model=model, best_state=best_state,
                       best_epoch=best_epoch, epoch_stats=stats)


def evaluate_nodes(g: AttributedGraph, node_ids, model: Model,
                   cfg: TrainConfig):
    """Ensemble-predict every node in node_ids and score against its label.

    Returns (accuracy, per_class_accuracy: dict class -> rate, predictions).
    """
    view = g.walk_view()
    per_class_total: dict[int, int] = {}
    per_class_hit: dict[int, int] = {}
    preds = {}
    hits = 0
    for node in node_ids:
        node = int(node)
        pred, _ = predict(view, node, model, cfg.test_walks, cfg.walk_len,
                          rng=cfg.seed)
        preds[node] = pred
        truth = g.label_of(node)
        per_class_total[truth] = per_class_total.get(truth, 0) + 1
        if pred == truth:
            per_class_hit[truth] = per_class_hit.get(truth, 0) + 1
            hits += 1
    n = max(len(preds), 1)
    per_class = {
        c: per_class_hit.get(c, 0) / t for c, t in sorted(per_class_total.items())
    }
    return hits / n, per_class, preds
