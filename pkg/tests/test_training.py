import numpy as np
import pytest

import nodewalk.training as training
from nodewalk.agent import TAG_TRAIN_WALK, init_model, stream_rng, walk
from nodewalk.errors import ConfigError, ContractError, NumericError
from nodewalk.graph import split_labels
from nodewalk.nn import adam_step, softmax_cross_entropy
from nodewalk.training import (
    TrainConfig,
    episode_policy_gradient,
    evaluate_nodes,
    supervised_step,
    terminal_reward,
    train,
    train_epoch,
)

from conftest import tiny_graph


def setup_walk(seed=0, T=5, hidden=4):
    g = tiny_graph(seed=seed)
    model = init_model(g.node_dim, g.edge_dim, hidden, g.num_classes, seed)
    traj = walk(g.walk_view(), 0, T, model,
                stream_rng(seed, TAG_TRAIN_WALK, 0, 0, 0))
    return g, model, traj


def grads_of(group):
    return {k: v.copy() for k, v in group.grads.items()}


def all_zero(grads):
    return all(np.all(v == 0.0) for v in grads.values())


def test_terminal_reward_values():
    assert terminal_reward(1, 1) == 1.0
    assert terminal_reward(0, 1) == -1.0


def test_policy_pass_never_touches_classifier():
    _, model, traj = setup_walk()
    episode_policy_gradient(traj, 1.0, 0.99, model)
    assert all_zero(model.classifier.g.grads)
    assert not all_zero(model.score.g.grads)
    assert not all_zero(model.gru.g.grads)


def test_supervised_pass_never_touches_scorer():
    _, model, traj = setup_walk()
    supervised_step(traj, 1, model, l2_coef=1e-3)
    assert all_zero(model.score.g.grads)
    assert not all_zero(model.classifier.g.grads)
    assert not all_zero(model.gru.g.grads)


def test_supervised_to_core_flag():
    _, model, traj = setup_walk()
    supervised_step(traj, 0, model, l2_coef=0.0, to_core=False)
    assert all_zero(model.gru.g.grads)


def test_supervised_loss_value():
    _, model, traj = setup_walk()
    logits, _ = model.classifier.forward(traj.h_final)
    ce, _ = softmax_cross_entropy(logits, 1)
    expected = ce + 2e-3 * model.classifier.g.sq_norm()
    got = supervised_step(traj, 1, model, l2_coef=2e-3)
    assert abs(got - expected) < 1e-12


def test_supervised_l2_gradient_component():
    _, model, traj = setup_walk()
    supervised_step(traj, 1, model, l2_coef=0.0, weight=0.5)
    g0 = grads_of(model.classifier.g)
    model.zero_grads()
    lam = 3e-3
    supervised_step(traj, 1, model, l2_coef=lam, weight=0.5)
    g1 = grads_of(model.classifier.g)
    for k, p in model.classifier.g.params.items():
        assert np.allclose(g1[k] - g0[k], 2.0 * lam * 0.5 * p, atol=1e-14)


def test_zero_reward_episode_adds_nothing():
    _, model, traj = setup_walk()
    episode_policy_gradient(traj, 0.0, 0.99, model)
    assert all_zero(model.score.g.grads)
    assert all_zero(model.gru.g.grads)


def test_policy_gradient_matches_scalar_loop():
    # independent recomputation of dL/dphi with plain python loops
    _, model, traj = setup_walk(T=4)
    reward, discount, weight = 0.8, 0.9, 0.7
    episode_policy_gradient(traj, reward, discount, model, weight=weight)
    got_score = grads_of(model.score.g)
    got_gru = grads_of(model.gru.g)

    model.zero_grads()
    T = traj.length
    d = model.hidden_dim
    dh_slots = np.zeros((T + 1, d))
    for t in range(1, T):
        phi = traj.scores[t - 1]
        i = int(traj.chosen_idx[t - 1])
        coef = weight * reward * discount ** (T - t)
        dphi = np.zeros(phi.shape[0])
        for k in range(phi.shape[0]):
            dphi[k] = coef / phi.sum()
            if k == i:
                dphi[k] -= coef / phi[i]
        dinputs = model.score.backward(traj.score_caches[t - 1], dphi)
        dh_slots[t - 1] += dinputs[:, :d].sum(axis=0)
    g = dh_slots[T]
    for t in range(T, 0, -1):
        _, dh_prev = model.gru.backward(traj.gru_caches[t - 1], g)
        g = dh_prev + dh_slots[t - 1]
    for k, v in grads_of(model.score.g).items():
        assert np.allclose(v, got_score[k], atol=1e-12)
    for k, v in grads_of(model.gru.g).items():
        assert np.allclose(v, got_gru[k], atol=1e-12)


def test_stale_trajectory_rejected():
    _, model, traj = setup_walk()
    model.score.g.grads["w_out"][:] = 0.1
    adam_step(model.score.g, 1e-3)
    with pytest.raises(ContractError):
        episode_policy_gradient(traj, 1.0, 0.99, model)
    with pytest.raises(ContractError):
        supervised_step(traj, 0, model, l2_coef=0.0)


def test_train_epoch_deterministic():
    g = tiny_graph(n=10)
    split = split_labels(g, 0.3, 1.0, seed=0)
    cfg = TrainConfig(epochs=1, hidden_dim=6, walk_len=4, train_walks=2, seed=5)
    m1 = init_model(g.node_dim, g.edge_dim, 6, g.num_classes, 5)
    m2 = init_model(g.node_dim, g.edge_dim, 6, g.num_classes, 5)
    s1 = train_epoch(g, split, m1, cfg, 0)
    s2 = train_epoch(g, split, m2, cfg, 0)
    assert s1.mean_reward == s2.mean_reward
    assert s1.train_acc == s2.train_acc
    for a, b in zip(m1.groups(), m2.groups()):
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])


def test_train_zero_epochs_keeps_init():
    g = tiny_graph(n=10)
    split = split_labels(g, 0.3, 1.0, seed=0)
    cfg = TrainConfig(epochs=0, hidden_dim=6, walk_len=4, seed=3)
    res = train(g, split, cfg)
    fresh = init_model(g.node_dim, g.edge_dim, 6, g.num_classes, 3)
    for name, state in res.best_state.items():
        ref = {g_.name: g_ for g_ in fresh.groups()}[name]
        for k, v in state.items():
            assert np.array_equal(v, ref.params[k])
    assert res.best_epoch == -1


def test_train_learns_on_easy_graph():
    # strong homophily, clean attributes: reward should improve
    from nodewalk.graph import normalize_attributes, synth_planted_partition
    g = normalize_attributes(
        synth_planted_partition(40, 2, 0.4, 0.01, 6, 0.05, seed=2))
    split = split_labels(g, 0.25, 1.0, seed=2)
    cfg = TrainConfig(epochs=8, hidden_dim=12, walk_len=4, train_walks=3,
                      test_walks=6, lr=3e-3, seed=2)
    res = train(g, split, cfg)
    first = res.epoch_stats[0].mean_reward
    best = max(s.mean_reward for s in res.epoch_stats)
    assert best > first
    res.model.load_state(res.best_state)
    acc, per_class, preds = evaluate_nodes(g, split.test_ids, res.model, cfg)
    assert set(preds) == set(int(i) for i in split.test_ids)
    assert 0.0 <= acc <= 1.0
    assert set(per_class) <= {0, 1}


def test_train_empty_split_rejected():
    g = tiny_graph(n=10)
    split = split_labels(g, 0.3, 1.0, seed=0)
    from dataclasses import replace
    empty = replace(split, train_ids=np.empty(0, dtype=np.int64))
    with pytest.raises(ConfigError):
        train(g, empty, TrainConfig(epochs=1))


def test_numeric_error_carries_partial_state(monkeypatch):
    g = tiny_graph(n=10)
    split = split_labels(g, 0.3, 1.0, seed=0)

    calls = {"n": 0}
    real = training.train_epoch

    def explode(*args, **kwargs):
        if calls["n"] >= 1:
            raise NumericError("boom")
        calls["n"] += 1
        return real(*args, **kwargs)

    monkeypatch.setattr(training, "train_epoch", explode)
    cfg = TrainConfig(epochs=3, hidden_dim=6, walk_len=4, train_walks=2, seed=1)
    with pytest.raises(NumericError) as ei:
        train(g, split, cfg)
    assert ei.value.model is not None
    assert len(ei.value.stats) == 1


def test_config_validation():
    for bad in (
        TrainConfig(walk_len=1),
        TrainConfig(discount=0.0),
        TrainConfig(discount=1.5),
        TrainConfig(train_walks=0),
        TrainConfig(test_walks=0),
        TrainConfig(epochs=-1),
        TrainConfig(lr=0.0),
        TrainConfig(l2=-0.1),
        TrainConfig(hidden_dim=0),
        TrainConfig(threads=0),
    ):
        with pytest.raises(ConfigError):
            bad.validate()
    assert TrainConfig().validate() is not None


def test_reward_variants_run():
    g = tiny_graph(n=10)
    split = split_labels(g, 0.3, 1.0, seed=0)
    for kw in ({"reward_from_ensemble": True}, {"reward_baseline": True},
               {"supervised_to_core": False}, {"threads": 2}):
        cfg = TrainConfig(epochs=1, hidden_dim=6, walk_len=4, train_walks=2,
                          seed=7, **kw)
        model = init_model(g.node_dim, g.edge_dim, 6, g.num_classes, 7)
        stats = train_epoch(g, split, model, cfg, 0)
        assert np.isfinite(stats.mean_loss)
        assert -1.0 <= stats.mean_reward <= 1.0


def test_threaded_epoch_matches_single_thread():
    g = tiny_graph(n=10)
    split = split_labels(g, 0.3, 1.0, seed=0)
    states = []
    for threads in (1, 3):
        cfg = TrainConfig(epochs=1, hidden_dim=6, walk_len=4, train_walks=3,
                          seed=11, threads=threads)
        m = init_model(g.node_dim, g.edge_dim, 6, g.num_classes, 11)
        train_epoch(g, split, m, cfg, 0)
        states.append(m.state_copy())
    for name in states[0]:
        for k in states[0][name]:
            assert np.array_equal(states[0][name][k], states[1][name][k])
