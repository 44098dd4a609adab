"""Synthetic planted-partition benchmark: transductive vs inductive vs a
feature-only logistic baseline, averaged over seeds.

Usage:
    python3 scripts/run_benchmark.py --seeds 5 --epochs 30
"""

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from nodewalk.graph import (
    normalize_attributes,
    prune_for_inductive,
    reinsert_hidden,
    split_labels,
    synth_planted_partition,
)
from nodewalk.training import TrainConfig, evaluate_nodes, train


def logistic_accuracy(g, split) -> float:
    from sklearn.linear_model import LogisticRegression

    clf = LogisticRegression(max_iter=2000)
    clf.fit(g.node_attrs[split.train_ids], g.labels[split.train_ids])
    pred = clf.predict(g.node_attrs[split.test_ids])
    return float(np.mean(pred == g.labels[split.test_ids]))


def run_seed(seed: int, epochs: int, attr_dim: int, class_sep: float):
    g = synth_planted_partition(200, 2, 0.05, 0.005, attr_dim, 0.1,
                                seed=seed, class_sep=class_sep)
    g = normalize_attributes(g)
    split = split_labels(g, test_frac=0.3, train_frac=1.0, seed=seed)
    cfg = TrainConfig(epochs=epochs, seed=seed)

    t0 = time.perf_counter()
    res = train(g, split, cfg)
    res.model.load_state(res.best_state)
    trans_acc, _, _ = evaluate_nodes(g, split.test_ids, res.model, cfg)
    t_trans = time.perf_counter() - t0

    t0 = time.perf_counter()
    pruned, remap = prune_for_inductive(g, split.test_ids)
    train_ids_new = np.array([remap.old_to_new[i] for i in split.train_ids])
    ind_split = replace(split, train_ids=train_ids_new,
                        test_ids=np.empty(0, dtype=np.int64))
    ind_res = train(pruned, ind_split, cfg)
    ind_res.model.load_state(ind_res.best_state)
    full = reinsert_hidden(pruned, remap, g.node_attrs[remap.hidden_ids],
                           g.labels[remap.hidden_ids])
    ind_acc, _, _ = evaluate_nodes(full, split.test_ids, ind_res.model, cfg)
    t_ind = time.perf_counter() - t0

    base_acc = logistic_accuracy(g, split)
    return trans_acc, ind_acc, base_acc, t_trans, t_ind, res


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--attr-dim", type=int, default=16)
    ap.add_argument("--class-sep", type=float, default=0.2)
    args = ap.parse_args(argv)

    trans, ind, base = [], [], []
    for seed in range(args.seeds):
        ta, ia, ba, tt, ti, _ = run_seed(seed, args.epochs, args.attr_dim,
                                         args.class_sep)
        trans.append(ta)
        ind.append(ia)
        base.append(ba)
        print(f"seed {seed}: trans={ta:.3f} ({tt:.0f}s) ind={ia:.3f} "
              f"({ti:.0f}s) logistic={ba:.3f}", flush=True)
    print(f"mean: trans={np.mean(trans):.3f} ind={np.mean(ind):.3f} "
          f"logistic={np.mean(base):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
