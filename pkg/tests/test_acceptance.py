"""Acceptance suite: one test per shipping criterion.

Run with `pytest -v tests/test_acceptance.py` to get a pass/fail line per
criterion. The five-seed benchmark runs (criteria 3-5) come from the
session-scoped `bench` fixture and take several minutes to build.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_graph

from nodewalk.agent import (
    TAG_TRAIN_WALK,
    aggregate_relevant,
    init_model,
    stream_rng,
    walk,
)
from nodewalk.analysis import (
    agent_trajectories,
    class_visit_matrix,
    diversity_curves,
    random_trajectories,
    workspace_probe,
)
from nodewalk.checks import run_all_checks
from nodewalk.cli import main
from nodewalk.graph import build_graph, synth_planted_partition
from nodewalk.training import (
    episode_policy_gradient,
    supervised_step,
    terminal_reward,
)


# ---------------------------------------------------------------- criterion 1

def test_criterion_1_gradient_fidelity():
    t0 = time.perf_counter()
    report = run_all_checks(n_seeds=100)
    elapsed = time.perf_counter() - t0
    assert len(report) == 8
    for name, err in report.items():
        assert err < 1e-6, f"{name}: max relative FD error {err:.3g}"
    assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"


# ---------------------------------------------------------------- criterion 2

# Star instance and Monte-Carlo stream pinned after a design-time seed scan
# for well-conditioned coordinates (smallest nonzero |gradient| maximized).
STAR_SEED = 31
MC_STREAM_SEED = 123
N_EPISODES = 100_000
LEAF_REWARDS = np.array([1.0, -1.0, 1.0])


def _star_instance():
    """Hub node 0 with three leaves, T=2: a single sampled action."""
    rng = np.random.default_rng(STAR_SEED)
    attrs = rng.normal(size=(4, 2))
    attrs /= np.linalg.norm(attrs, axis=1, keepdims=True)
    e_attrs = rng.normal(size=(3, 1))
    g = build_graph(4, [(0, i + 1, i) for i in range(3)], attrs,
                    edge_attrs=e_attrs, labels=np.zeros(4, dtype=np.int64),
                    num_classes=2)
    model = init_model(2, 1, hidden_dim=3, num_classes=2, seed=STAR_SEED)
    return g.walk_view(), model


def _expected_return(view, model) -> float:
    """Enumerate all three actions by replay: sum of pi(a) * R(a)."""
    total = 0.0
    for a in range(3):
        traj = walk(view, 0, 2, model, rng=None, replay=np.array([a]))
        total += math.exp(traj.chosen_logprobs.sum()) * \
            LEAF_REWARDS[traj.nodes[1] - 1]
    return total


def test_criterion_2_policy_gradient_oracle():
    t0 = time.perf_counter()
    view, model = _star_instance()
    params = model.score.g.params

    # exact side: central finite differences of the enumerated expectation
    eps = 1e-6
    exact = {}
    for name in sorted(params):
        arr = params[name]
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            hi = _expected_return(view, model)
            arr[idx] = orig - eps
            lo = _expected_return(view, model)
            arr[idx] = orig
            g[idx] = (hi - lo) / (2.0 * eps)
            it.iternext()
        exact[name] = g

    # sampled side: REINFORCE averaged over the episode budget
    model.zero_grads()
    for i in range(N_EPISODES):
        rng = stream_rng(MC_STREAM_SEED, TAG_TRAIN_WALK, 0, 0, i)
        traj = walk(view, 0, 2, model, rng)
        r = LEAF_REWARDS[traj.nodes[1] - 1]
        episode_policy_gradient(traj, r, 1.0, model,
                                weight=1.0 / N_EPISODES)
    # the trainer accumulates the negative objective; flip back
    mc = {k: -v for k, v in model.score.g.grads.items()}

    worst = 0.0
    for name in exact:
        e, m = exact[name], mc[name]
        zero = e == 0.0
        # coordinates the T=2 episode provably never touches (the score
        # input's history block sees only h_0 = 0) must be zero both ways
        assert np.all(m[zero] == 0.0), f"{name}: sampled mass on dead coords"
        if np.any(~zero):
            rel = np.abs(m[~zero] - e[~zero]) / np.abs(e[~zero])
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t0
    assert worst <= 0.02, f"worst per-coordinate relative error {worst:.4f}"
    assert elapsed < 120.0, f"oracle comparison took {elapsed:.1f}s"


# -------------------------------------------------------------- criteria 3, 4

def test_criterion_3_end_to_end_learning(bench):
    trans = [r["trans_acc"] for r in bench]
    base = [r["base_acc"] for r in bench]
    budget = sum(r["t_trans"] for r in bench)
    assert np.mean(trans) >= 0.90, f"mean test accuracy {np.mean(trans):.3f}"
    assert np.mean(trans) > np.mean(base), \
        f"agent {np.mean(trans):.3f} vs logistic {np.mean(base):.3f}"
    assert budget < 600.0, f"five transductive runs took {budget:.0f}s"


def test_criterion_4_transductive_inductive_parity(bench):
    trans = float(np.mean([r["trans_acc"] for r in bench]))
    ind = float(np.mean([r["ind_acc"] for r in bench]))
    assert abs(trans - ind) <= 0.03, f"trans {trans:.3f} vs ind {ind:.3f}"


# -------------------------------------------------------------- criteria 5, 6

@pytest.fixture(scope="module")
def walk_analysis(bench):
    """Analysis walks from every node of the first benchmark graph under its
    trained model, plus the matching uniform random baseline."""
    run = bench[0]
    g, model = run["graph"], run["model"]
    starts = np.arange(g.num_nodes)
    T = run["cfg"].walk_len
    agent = agent_trajectories(g, model, starts, T, walks_per_start=1, seed=0)
    rand = random_trajectories(g, starts, T, walks_per_start=1, seed=0)
    return g, agent, rand


def test_criterion_5_path_label_diversity(walk_analysis):
    g, agent, rand = walk_analysis
    assert len(agent) >= 100 and len(rand) >= 100
    da = diversity_curves(agent, g.labels)
    dr = diversity_curves(rand, g.labels)
    T = agent[0].length
    for t in range(2, T):
        row = t - 1  # rows cover t = 1..T-1
        assert da[row, 1] < dr[row, 1], (
            f"t={t}: agent diversity {da[row, 1]:.4f} not below "
            f"random {dr[row, 1]:.4f}"
        )


def test_criterion_6_visit_matrix_diagonal(walk_analysis):
    g, agent, _ = walk_analysis
    mat = class_visit_matrix(agent, g.labels, g.num_classes)
    assert mat.shape == (g.num_classes, g.num_classes)
    assert np.all(mat.argmax(axis=0) == np.arange(g.num_classes)), \
        f"visit matrix not diagonal-dominant per column:\n{mat}"


# ---------------------------------------------------------------- criterion 7

def _hub_synth(n: int, p_in: float, p_out: float, seed: int,
               hub_deg: int = 64, attr_dim: int = 8):
    """Planted-partition graph rebuilt so node 0 has exactly hub_deg
    neighbors, which is the global maximum degree at both test scales."""
    g0 = synth_planted_partition(n, 2, p_in, p_out, attr_dim, 0.1, seed=seed)
    endpoints, _ = g0.real_edges()
    keep = (endpoints[:, 0] != 0) & (endpoints[:, 1] != 0)
    edges = [(0, j) for j in range(1, hub_deg + 1)]
    edges += [(int(u), int(v)) for u, v in endpoints[keep]]
    return build_graph(n, edges, g0.node_attrs, labels=g0.labels,
                       num_classes=2)


def test_criterion_7_scaling_property():
    d = 16
    peaks = []
    for n, p_in, p_out in ((1_000, 0.012, 0.0012),
                           (100_000, 1.2e-4, 1.2e-5)):
        g = _hub_synth(n, p_in, p_out, seed=7)
        degrees = np.diff(g.indptr)
        assert degrees.max() == 64 and degrees.argmax() == 0
        model = init_model(g.node_dim, g.edge_dim, hidden_dim=d,
                           num_classes=2, seed=0)
        per_step, peak = workspace_probe(g, model, T=10, seed=0)
        assert peak == per_step.max()
        peaks.append(peak)
    small, large = peaks
    assert abs(small - large) / small <= 0.05, \
        f"per-step peak {small} at 1K nodes vs {large} at 100K nodes"


# ---------------------------------------------------------------- criterion 8

def test_criterion_8_determinism(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--synthetic",
                 "n=40,k=2,p_in=0.3,p_out=0.02,attr_dim=4",
                 "--out", str(data), "--seed", "3"]) == 0
    train_flags = ["--epochs", "2", "--hidden-dim", "8", "--walk-len", "4",
                   "--train-walks", "2", "--test-walks", "2",
                   "--threads", "1", "--seed", "5"]
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--data", str(data), "--out", str(out),
                     *train_flags]) == 0
        an = tmp_path / f"{name}_walks"
        assert main(["analyze", "--data", str(data), "--out", str(an),
                     "--checkpoint", str(out / "checkpoint.ckpt"),
                     "--starts", "6", "--analyze-walks", "3",
                     *train_flags]) == 0
        outs.append((out, an))
    (out_a, an_a), (out_b, an_b) = outs
    for fname in ("checkpoint.ckpt", "final.ckpt"):
        assert (out_a / fname).read_bytes() == (out_b / fname).read_bytes(), \
            f"{fname} differs between identical runs"
    for fname in ("trajectories_agent.tsv", "trajectories_random.tsv"):
        assert (an_a / fname).read_bytes() == (an_b / fname).read_bytes(), \
            f"{fname} differs between identical runs"


# ---------------------------------------------------------------- criterion 9

def test_criterion_9_invariant_suite():
    g = tiny_graph(seed=4)
    view = g.walk_view()
    model = init_model(g.node_dim, g.edge_dim, hidden_dim=6, num_classes=2,
                       seed=1)

    # walk-level invariants over many episodes
    for i in range(50):
        rng = stream_rng(9, TAG_TRAIN_WALK, 0, int(i % g.num_nodes), i)
        traj = walk(view, int(i % g.num_nodes), 5, model, rng)
        for phi in traj.scores:
            assert np.all(phi > 0.0) and np.all(phi < 1.0)
        for t in range(traj.length - 1):
            if traj.fallback[t]:
                continue
            p = traj.scores[t] / traj.scores[t].sum()
            assert abs(p.sum() - 1.0) <= 1e-9
            assert math.isclose(math.exp(traj.chosen_logprobs[t]),
                                p[traj.chosen_idx[t]], rel_tol=1e-12)
        assert np.all(traj.h_final > -1.0) and np.all(traj.h_final < 1.0)

    # a score of exactly 0.5 contributes nothing to the aggregate
    nbr_attrs = np.eye(3)
    agg = aggregate_relevant(np.array([0.5, 0.5 + 1e-12, 0.5 - 1e-12]),
                             nbr_attrs)
    assert np.array_equal(agg, np.array([0.0, 1.0, 0.0]))

    # terminal rewards are exactly +/-1
    assert terminal_reward(1, 1) == 1.0
    assert terminal_reward(0, 1) == -1.0

    # supervised pass never touches the scorer
    rng = stream_rng(9, TAG_TRAIN_WALK, 1, 0, 0)
    traj = walk(view, 0, 5, model, rng)
    model.zero_grads()
    supervised_step(traj, g.label_of(0), model, l2_coef=5e-4)
    assert all(np.all(v == 0.0) for v in model.score.g.grads.values())
    assert any(np.any(v != 0.0) for v in model.classifier.g.grads.values())

    # policy pass never touches the classifier
    model.zero_grads()
    episode_policy_gradient(traj, 1.0, 0.99, model)
    assert all(np.all(v == 0.0) for v in model.classifier.g.grads.values())
    assert any(np.any(v != 0.0) for v in model.score.g.grads.values())

    # walks are label-blind: relabeled copy, same stream, same trajectory
    ep, eattr = g.real_edges()
    edges = [(int(u), int(v), k) for k, (u, v) in enumerate(ep)]
    flipped = build_graph(g.num_nodes, edges, g.node_attrs, edge_attrs=eattr,
                          labels=1 - g.labels, num_classes=2)
    for i in range(10):
        r1 = stream_rng(5, TAG_TRAIN_WALK, 0, 0, i)
        r2 = stream_rng(5, TAG_TRAIN_WALK, 0, 0, i)
        t1 = walk(view, 0, 5, model, r1)
        t2 = walk(flipped.walk_view(), 0, 5, model, r2)
        assert np.array_equal(t1.nodes, t2.nodes)
        assert np.array_equal(t1.chosen_logprobs, t2.chosen_logprobs)
