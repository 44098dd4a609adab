"""Gradient-check suite shared by the CLI and the tests.

Each check builds a small random instance, wires a scalar loss through one
kernel (or the whole frozen-action model), and compares the analytic
backward pass against central finite differences. All instances live at
dimensions <= 8 so a full sweep over 100 seeds stays fast.
"""

from __future__ import annotations

import numpy as np

from .agent import init_model, walk
from .graph import build_graph
from .nn import (
    GruCell,
    ParamGroup,
    ScoreNet,
    grad_check,
    linear_backward,
    linear_forward,
    sigmoid,
    sigmoid_grad,
    softmax_cross_entropy,
    tanh_grad,
)
from .training import episode_policy_gradient, supervised_step

PASS_TOLERANCE = 1e-6


def check_linear(seed: int) -> float:
    rng = np.random.default_rng(seed)
    group = ParamGroup("linear", {
        "w": rng.normal(size=(3, 5)),
        "b": rng.normal(size=3),
    })
    x = rng.normal(size=5)
    r = rng.normal(size=3)

    def fn():
        y, cache = linear_forward(group.params["w"], group.params["b"], x)
        out = np.tanh(y)
        dy = r * tanh_grad(out)
        _, dw, db = linear_backward(group.params["w"], cache, dy)
        group.grads["w"] += dw
        group.grads["b"] += db
        return float(r @ out)

    return grad_check(fn, [group])


def check_sigmoid(seed: int) -> float:
    rng = np.random.default_rng(seed)
    group = ParamGroup("sigmoid", {"x": rng.normal(size=6)})
    r = rng.normal(size=6)

    def fn():
        y = sigmoid(group.params["x"])
        group.grads["x"] += r * sigmoid_grad(y)
        return float(r @ y)

    return grad_check(fn, [group])


def check_tanh(seed: int) -> float:
    rng = np.random.default_rng(seed)
    group = ParamGroup("tanh", {"x": rng.normal(size=6)})
    r = rng.normal(size=6)

    def fn():
        y = np.tanh(group.params["x"])
        group.grads["x"] += r * tanh_grad(y)
        return float(r @ y)

    return grad_check(fn, [group])


def check_softmax_ce(seed: int) -> float:
    rng = np.random.default_rng(seed)
    group = ParamGroup("sce", {"logits": rng.normal(size=5)})
    label = int(rng.integers(5))

    def fn():
        loss, dlogits = softmax_cross_entropy(group.params["logits"], label)
        group.grads["logits"] += dlogits
        return loss

    return grad_check(fn, [group])


def check_gru(seed: int) -> float:
    rng = np.random.default_rng(seed)
    d, din = 4, 6
    group = GruCell.init_params(din, d, rng)
    cell = GruCell(group)
    x = rng.normal(size=din)
    h_prev = rng.uniform(-0.9, 0.9, size=d)
    r = rng.normal(size=d)

    def fn():
        h, cache = cell.forward(x, h_prev)
        cell.backward(cache, r)
        return float(r @ h)

    return grad_check(fn, [group])


def check_score(seed: int) -> float:
    rng = np.random.default_rng(seed)
    k, din, d = 3, 8, 4
    group = ScoreNet.init_params(din, d, rng)
    net = ScoreNet(group)
    inputs = rng.normal(size=(k, din))
    r = rng.normal(size=k)

    def fn():
        phi, cache = net.forward(inputs)
        net.backward(cache, r)
        return float(r @ phi)

    return grad_check(fn, [group])


def check_classifier(seed: int) -> float:
    from .nn import Classifier

    rng = np.random.default_rng(seed)
    d, k = 4, 3
    group = Classifier.init_params(d, k, rng)
    clf = Classifier(group)
    h = rng.uniform(-0.9, 0.9, size=d)
    label = int(rng.integers(k))

    def fn():
        logits, cache = clf.forward(h)
        loss, dlogits = softmax_cross_entropy(logits, label)
        clf.backward(cache, dlogits)
        return loss

    return grad_check(fn, [group])


def _tiny_graph(seed: int):
    """5-node attributed graph small enough for exhaustive FD probing."""
    rng = np.random.default_rng(seed)
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 0)]
    node_attrs = rng.normal(size=(5, 2))
    edge_attrs = rng.normal(size=(len(edges), 2))
    labels = np.array([0, 1, 0, 1, 0], dtype=np.int64)
    return build_graph(
        5,
        [(u, v, i) for i, (u, v) in enumerate(edges)],
        node_attrs,
        edge_attrs=edge_attrs,
        labels=labels,
        num_classes=2,
    )


def full_model_instance(seed: int, margin: float = 1e-3):
    """A frozen-action walk instance whose scores keep a safe distance from
    the 0.5 aggregation threshold, so finite differencing never crosses the
    discontinuity. Retries derived seeds until the margin holds."""
    T = 3
    for attempt in range(50):
        s = seed + 7919 * attempt
        g = _tiny_graph(s)
        model = init_model(g.node_dim, g.edge_dim, hidden_dim=3,
                           num_classes=2, seed=s)
        # widen the score spread so raw scores are not all pinned near 0.5
        model.score.g.params["w_hidden"] *= 4.0
        model.score.g.params["w_out"] *= 4.0
        rng = np.random.default_rng(s)
        replay = np.array([rng.integers(g.degree(0) or 1),
                           0], dtype=np.int64)
        probe = walk(g.walk_view(), 0, T, model, None, replay=replay)
        if min(float(np.abs(phi - 0.5).min()) for phi in probe.scores) > margin:
            return g, model, replay, T
    raise AssertionError("could not find a margin-safe instance")


def check_full_model(seed: int) -> float:
    """Frozen-action end-to-end check: policy surrogate plus supervised loss,
    differentiated jointly through scorer, core, and classifier."""
    g, model, replay, T = full_model_instance(seed)
    view = g.walk_view()
    reward, discount, l2, truth = 0.7, 0.9, 1e-3, 1

    def fn():
        traj = walk(view, 0, T, model, None, replay=replay)
        surrogate = -sum(
            discount ** (T - t) * reward * traj.chosen_logprobs[t - 1]
            for t in range(1, T)
        )
        episode_policy_gradient(traj, reward, discount, model)
        sup = supervised_step(traj, truth, model, l2)
        return float(surrogate + sup)

    return grad_check(fn, model.groups())


KERNEL_CHECKS = {
    "linear": check_linear,
    "sigmoid": check_sigmoid,
    "tanh": check_tanh,
    "softmax_cross_entropy": check_softmax_ce,
    "gru_cell": check_gru,
    "score_net": check_score,
    "classifier": check_classifier,
    "full_model_frozen_actions": check_full_model,
}


def run_all_checks(n_seeds: int = 5, base_seed: int = 0) -> dict[str, float]:
    """Max relative FD error per kernel over n_seeds seeded instances."""
    return {
        name: max(fn(base_seed + i) for i in range(n_seeds))
        for name, fn in KERNEL_CHECKS.items()
    }
