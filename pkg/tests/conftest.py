"""Shared fixtures.

The `bench` fixture is expensive (ten 30-epoch training runs) and is built
once per session, only when an acceptance test asks for it.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from nodewalk.graph import (
    build_graph,
    normalize_attributes,
    prune_for_inductive,
    reinsert_hidden,
    split_labels,
    synth_planted_partition,
)
from nodewalk.training import TrainConfig, evaluate_nodes, train

BENCH_SEEDS = 5
BENCH_ATTR_DIM = 16


def make_benchmark_graph(seed: int):
    g = synth_planted_partition(200, 2, 0.05, 0.005, BENCH_ATTR_DIM, 0.1,
                                seed=seed)
    return normalize_attributes(g)


def tiny_graph(seed: int = 0, n: int = 8, attr_dim: int = 3, edge_dim: int = 2):
    """Small connected-ish labeled graph for unit tests."""
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n, i) for i in range(n)]
    extra = [(i, (i + 3) % n, n + j) for j, i in enumerate(range(0, n, 2))]
    edges += extra
    node_attrs = rng.normal(size=(n, attr_dim))
    edge_attrs = rng.normal(size=(len(edges), edge_dim))
    labels = np.arange(n, dtype=np.int64) % 2
    return build_graph(n, edges, node_attrs, edge_attrs=edge_attrs,
                       labels=labels, num_classes=2)


def _logistic_accuracy(g, split) -> float:
    from sklearn.linear_model import LogisticRegression

    clf = LogisticRegression(max_iter=2000)
    clf.fit(g.node_attrs[split.train_ids], g.labels[split.train_ids])
    pred = clf.predict(g.node_attrs[split.test_ids])
    return float(np.mean(pred == g.labels[split.test_ids]))


def _bench_one_seed(seed: int):
    g = make_benchmark_graph(seed)
    split = split_labels(g, test_frac=0.3, train_frac=1.0, seed=seed)
    cfg = TrainConfig(seed=seed)

    t0 = time.perf_counter()
    res = train(g, split, cfg)
    res.model.load_state(res.best_state)
    trans_acc, _, _ = evaluate_nodes(g, split.test_ids, res.model, cfg)
    t_trans = time.perf_counter() - t0

    t0 = time.perf_counter()
    pruned, remap = prune_for_inductive(g, split.test_ids)
    ind_split = replace(split,
                        train_ids=remap.old_to_new[split.train_ids],
                        test_ids=np.empty(0, dtype=np.int64))
    ind_res = train(pruned, ind_split, cfg)
    ind_res.model.load_state(ind_res.best_state)
    full = reinsert_hidden(pruned, remap, g.node_attrs[remap.hidden_ids],
                           g.labels[remap.hidden_ids])
    ind_acc, _, _ = evaluate_nodes(full, split.test_ids, ind_res.model, cfg)
    t_ind = time.perf_counter() - t0

    return {
        "graph": g,
        "split": split,
        "cfg": cfg,
        "model": res.model,  # best-reward state already loaded
        "trans_acc": trans_acc,
        "ind_acc": ind_acc,
        "base_acc": _logistic_accuracy(g, split),
        "t_trans": t_trans,
        "t_ind": t_ind,
    }


@pytest.fixture(scope="session")
def bench():
    """Benchmark runs for the end-to-end criteria, keyed by seed. Only the
    first seed keeps its graph and trained model (for the walk analyses)."""
    runs = []
    for seed in range(BENCH_SEEDS):
        r = _bench_one_seed(seed)
        if seed != 0:
            r["graph"] = r["split"] = r["model"] = r["cfg"] = None
        runs.append(r)
    return runs
