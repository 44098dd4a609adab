"""The walking agent: per-neighbor relevance scoring, stochastic next-node
sampling, relevance-gated neighbor aggregation, recurrent history update,
and terminal classification of the walk's start node.

A walk runs T iterations. At every iteration it scores the current node's
neighborhood and folds [current attr || relevant-neighbor aggregate] into
the history vector; at iterations 1..T-1 it also samples the next node from
the scores, so a trajectory carries T nodes and T-1 action log-probabilities
(there is no node choice left to make at the final step).

Walks never see labels: they operate on a WalkView, which has no label
field. Classification of the start node happens from the final history
vector only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .graph import WalkView
from .nn import Classifier, GruCell, ParamGroup, ScoreNet, softmax

# Sub-stream tags: every random draw in the system comes from a generator
# seeded by (seed, tag, *key), so walks are reproducible regardless of
# scheduling and no two purposes share a stream.
TAG_TRAIN_WALK = 0
TAG_PREDICT = 1
TAG_SHUFFLE = 2
TAG_INIT = 3
TAG_ANALYSIS = 4


def stream_rng(seed: int, tag: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence((int(seed), int(tag)) + tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass
class WalkState:
    """Agent state between iterations: where it stands, what it remembers,
    how many steps it has taken."""

    current: int
    h: np.ndarray
    t: int


@dataclass
class Trajectory:
    """Record of one T-step walk.

    scores[t] is the score vector over the neighborhood observed at step
    t+1; chosen arrays have length T-1. The private cache lists allow the
    trainer to backpropagate through the walk; they are tied to the
    parameter versions recorded at walk time.
    """

    nodes: np.ndarray
    chosen_idx: np.ndarray
    chosen_logprobs: np.ndarray
    scores: list | None
    fallback: np.ndarray
    h_final: np.ndarray | None
    terminal_probs: np.ndarray | None = None
    score_caches: list = field(default_factory=list, repr=False)
    gru_caches: list = field(default_factory=list, repr=False)
    versions: dict = field(default_factory=dict, repr=False)

    @property
    def length(self) -> int:
        return int(self.nodes.shape[0])


class Model:
    """The three trainable components: scorer (policy), recurrent core, and
    classifier head, as one bundle with shared dimension bookkeeping."""

    def __init__(self, core: ParamGroup, policy: ParamGroup,
                 classifier: ParamGroup, node_dim: int, edge_dim: int):
        self.gru = GruCell(core)
        self.score = ScoreNet(policy)
        self.classifier = Classifier(classifier)
        self.node_dim = node_dim
        self.edge_dim = edge_dim
        self.hidden_dim = self.gru.hidden_dim
        self.num_classes = self.classifier.num_classes

    def groups(self) -> list[ParamGroup]:
        return [self.gru.g, self.score.g, self.classifier.g]

    def versions(self) -> dict[str, int]:
        return {g.name: g.version for g in self.groups()}

    def check_versions(self, versions: dict[str, int]):
        for g in self.groups():
            if versions.get(g.name) != g.version:
                raise ContractError(
                    f"trajectory built at {g.name} version {versions.get(g.name)}, "
                    f"parameters now at {g.version}"
                )

    def zero_grads(self):
        for g in self.groups():
            g.zero_grads()

    def state_copy(self) -> dict[str, dict[str, np.ndarray]]:
        return {g.name: g.state_copy() for g in self.groups()}

    def load_state(self, state: dict[str, dict[str, np.ndarray]]):
        for g in self.groups():
            g.load_state(state[g.name])


def init_model(node_dim: int, edge_dim: int, hidden_dim: int,
               num_classes: int, seed: int) -> Model:
    """Fresh model with scaled-uniform weights and zero biases, drawn from
    the dedicated init stream of ``seed``."""
    rng = stream_rng(seed, TAG_INIT)
    core = GruCell.init_params(2 * node_dim, hidden_dim, rng)
    policy = ScoreNet.init_params(hidden_dim + 2 * node_dim + edge_dim,
                                  hidden_dim, rng)
    clf = Classifier.init_params(hidden_dim, num_classes, rng)
    return Model(core, policy, clf, node_dim, edge_dim)


class StepMeter:
    """Counts float values materialized per walk step.

    The count covers the walk's named arrays: neighbor attribute gathers,
    score-net inputs and activations, sampling and aggregation buffers, and
    the recurrent cell's gate vectors with their matrix-product inputs.
    Constant-factor expression temporaries are not modeled; the counter is a
    deterministic function of the visited degrees and the model dimensions.
    """

    def __init__(self):
        self.per_step: list[int] = []
        self._current = 0

    def add(self, n: int):
        self._current += int(n)

    def end_step(self):
        self.per_step.append(self._current)
        self._current = 0

    @property
    def peak(self) -> int:
        return max(self.per_step) if self.per_step else 0


def score_neighbors(score: ScoreNet, h_prev: np.ndarray, x_v: np.ndarray,
                    nbr_attrs: np.ndarray, edge_attrs: np.ndarray,
                    meter: StepMeter | None = None):
    """Score every neighbor of the current node; one sigmoid score per
    neighbor, deterministic given inputs. Input rows are
    [history || current attr || edge attr || neighbor attr]."""
    k = nbr_attrs.shape[0]
    d = h_prev.shape[0]
    dv = x_v.shape[0]
    de = edge_attrs.shape[1]
    x = np.empty((k, d + 2 * dv + de))
    x[:, :d] = h_prev
    x[:, d:d + dv] = x_v
    x[:, d + dv:d + dv + de] = edge_attrs
    x[:, d + dv + de:] = nbr_attrs
    phi, cache = score.forward(x)
    if meter is not None:
        # input matrix, hidden activations, pre-activation row, scores
        meter.add(x.size + k * d + 2 * k)
    return phi, cache


def sample_next(phi: np.ndarray, rng: np.random.Generator,
                meter: StepMeter | None = None):
    """Draw a neighbor index from the categorical distribution phi / sum(phi).

    Returns (index, logprob, fallback). If the score mass underflows to
    zero the draw falls back to uniform and is flagged; flagged steps carry
    no usable policy gradient.
    """
    k = phi.shape[0]
    total = float(phi.sum())
    if not np.isfinite(total) or total <= 0.0:
        idx = int(rng.integers(k))
        return idx, -np.log(k), True
    cum = np.cumsum(phi)
    u = rng.random() * total
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, k - 1)
    if phi[idx] <= 0.0:
        idx = int(np.argmax(phi))
    if meter is not None:
        meter.add(2 * k)  # cumulative-sum buffer plus the probability row
    return idx, float(np.log(phi[idx]) - np.log(total)), False


def aggregate_relevant(phi: np.ndarray, nbr_attrs: np.ndarray,
                       meter: StepMeter | None = None) -> np.ndarray:
    """Sum the attribute vectors of neighbors scored strictly above 0.5
    (a score of exactly 0.5 is excluded); zero vector when none qualify.
    The hard threshold means this carries no gradient back into the scores.
    """
    mask = phi > 0.5
    if meter is not None:
        meter.add(mask.size + nbr_attrs.shape[1])
    if not mask.any():
        return np.zeros(nbr_attrs.shape[1])
    return nbr_attrs[mask].sum(axis=0)


def walk(view: WalkView, start: int, T: int, model: Model,
         rng: np.random.Generator | None,
         replay: np.ndarray | None = None,
         meter: StepMeter | None = None) -> Trajectory:
    """Run one T-step walk from ``start`` under the current policy.

    With ``replay`` (a length T-1 index array) the action at each step is
    forced instead of sampled and no random draws occur; log-probabilities
    are still recorded for the forced actions. T must be at least 2.
    """
    if T < 2:
        raise ValueError(f"walk length must be >= 2, got {T}")
    if rng is None and replay is None:
        raise ValueError("walk needs a generator unless the path is replayed")
    d = model.hidden_dim
    state = WalkState(current=int(start), h=np.zeros(d), t=0)
    nodes = np.empty(T, dtype=np.int64)
    nodes[0] = state.current
    chosen_idx = np.empty(T - 1, dtype=np.int64)
    logprobs = np.empty(T - 1)
    fallback = np.zeros(T - 1, dtype=bool)
    scores: list[np.ndarray] = []
    score_caches = []
    gru_caches = []

    for t in range(1, T + 1):
        state.t = t
        v = state.current
        nbrs, eids = view.neighbors(v)
        x_v = view.node_attrs[v]
        nbr_attrs = view.node_attrs[nbrs]
        edge_attrs = view.edge_attrs[eids]
        if meter is not None:
            meter.add(nbr_attrs.size + edge_attrs.size)
        phi, s_cache = score_neighbors(model.score, state.h, x_v,
                                       nbr_attrs, edge_attrs, meter)
        scores.append(phi)
        score_caches.append(s_cache)
        if t < T:
            if replay is None:
                idx, lp, fb = sample_next(phi, rng, meter)
            else:
                idx = int(replay[t - 1])
                total = float(phi.sum())
                lp = float(np.log(phi[idx]) - np.log(total))
                fb = False
            chosen_idx[t - 1] = idx
            logprobs[t - 1] = lp
            fallback[t - 1] = fb
        c_n = aggregate_relevant(phi, nbr_attrs, meter)
        x_cat = np.concatenate([x_v, c_n])
        if meter is not None:
            meter.add(x_cat.size)
        h_new, g_cache = model.gru.forward(x_cat, state.h)
        if meter is not None:
            # six gate matrix-vector products plus z, r, uh, hbar, h
            meter.add(11 * d)
            meter.end_step()
        gru_caches.append(g_cache)
        state.h = h_new
        if t < T:
            state.current = int(nbrs[chosen_idx[t - 1]])
            nodes[t] = state.current

    return Trajectory(
        nodes=nodes,
        chosen_idx=chosen_idx,
        chosen_logprobs=logprobs,
        scores=scores,
        fallback=fallback,
        h_final=state.h,
        score_caches=score_caches,
        gru_caches=gru_caches,
        versions=model.versions(),
    )


def classify(clf: Classifier, h_final: np.ndarray) -> np.ndarray:
    """Class probability vector for a finished walk (softmax head)."""
    logits, _ = clf.forward(h_final)
    return softmax(logits)


def predict(view: WalkView, start: int, model: Model, M_test: int, T: int,
            rng: np.random.Generator | int):
    """Ensemble prediction for one node: M_test independent walks, mean of
    the class probability vectors, argmax with ties to the lowest class id.

    ``rng`` may be a Generator (walks draw from it sequentially) or an
    integer seed (each walk gets its own (seed, start, index) stream, which
    is the scheduling-independent form used by evaluation).
    """
    if M_test < 1:
        raise ValueError("need at least one walk")
    acc = np.zeros(model.num_classes)
    for j in range(M_test):
        if isinstance(rng, (int, np.integer)):
            walk_rng = stream_rng(int(rng), TAG_PREDICT, start, j)
        else:
            walk_rng = rng
        traj = walk(view, start, T, model, walk_rng)
        traj.terminal_probs = classify(model.classifier, traj.h_final)
        acc += traj.terminal_probs
    mean_probs = acc / M_test
    return int(np.argmax(mean_probs)), mean_probs
