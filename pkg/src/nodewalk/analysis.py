"""Trajectory analytics: path label diversity, class-visit matrices, a
uniform random-walk baseline, and per-step workspace instrumentation.

Analysis is allowed to read labels (the agent is not); every function here
takes trajectories plus the label array and never feeds labels back into
the walk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import TAG_ANALYSIS, Model, StepMeter, Trajectory, classify, stream_rng, walk
from .errors import DataError, ParseError
from .graph import UNLABELED, AttributedGraph, WalkView


def path_label_diversity(labels_on_path, t: int, exclude_start: bool = False) -> float:
    """Fraction-style measure of how much a walk departs from its start
    label by step t: 1 - (matching labels among steps 0..t) / t.

    The default counts the start node itself (step 0), so t+1 terms are
    divided by t and an all-same-label path yields -1/t; exclude_start sums
    steps 1..t instead, staying in [0, 1].
    """
    if not 1 <= t < len(labels_on_path):
        raise ValueError(f"step {t} outside path of length {len(labels_on_path)}")
    l0 = labels_on_path[0]
    lo = 1 if exclude_start else 0
    same = sum(1 for i in range(lo, t + 1) if labels_on_path[i] == l0)
    return 1.0 - same / t


def _label_paths(trajs, labels: np.ndarray) -> np.ndarray:
    if not trajs:
        return np.empty((0, 0), dtype=np.int64)
    lengths = {traj.length for traj in trajs}
    if len(lengths) != 1:
        raise DataError(f"trajectories have mixed lengths {sorted(lengths)}")
    return np.stack([labels[traj.nodes] for traj in trajs])


def diversity_curves(trajs, labels: np.ndarray,
                     exclude_start: bool = False) -> np.ndarray:
    """Per-step mean and population variance of the path label diversity
    across trajectories; rows are (t, mean, variance) for t = 1..T-1.
    Empty input gives an empty array."""
    paths = _label_paths(trajs, labels)
    if paths.size == 0:
        return np.empty((0, 3))
    T = paths.shape[1]
    rows = []
    for t in range(1, T):
        vals = np.array([
            path_label_diversity(path, t, exclude_start) for path in paths
        ])
        rows.append((float(t), vals.mean(), vals.var()))
    return np.array(rows)


def class_visit_matrix(trajs, labels: np.ndarray, k: int) -> np.ndarray:
    """k x k matrix: entry (r, c) is the rate at which walks starting at
    class-c nodes visit class-r nodes. Visits count steps 1..T-1 only and
    only labeled nodes; each column with any visits is normalized to sum 1.
    """
    counts = np.zeros((k, k))
    for traj in trajs:
        start_label = int(labels[traj.nodes[0]])
        if start_label == UNLABELED:
            raise DataError(f"start node {traj.nodes[0]} is unlabeled")
        visited = labels[traj.nodes[1:]]
        for lab in visited[visited != UNLABELED]:
            counts[int(lab), start_label] += 1.0
    sums = counts.sum(axis=0, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


def random_walk_baseline(view: WalkView, start: int, T: int,
                         rng: np.random.Generator) -> Trajectory:
    """Uniform next-neighbor walk over the same label-free view the agent
    uses, recorded in the agent's trajectory shape (no scores, no history).
    """
    if T < 2:
        raise ValueError(f"walk length must be >= 2, got {T}")
    nodes = np.empty(T, dtype=np.int64)
    chosen = np.empty(T - 1, dtype=np.int64)
    logprobs = np.empty(T - 1)
    nodes[0] = int(start)
    v = int(start)
    for t in range(1, T):
        nbrs, _ = view.neighbors(v)
        k = nbrs.shape[0]
        idx = int(rng.integers(k))
        chosen[t - 1] = idx
        logprobs[t - 1] = -np.log(k)
        v = int(nbrs[idx])
        nodes[t] = v
    return Trajectory(
        nodes=nodes,
        chosen_idx=chosen,
        chosen_logprobs=logprobs,
        scores=None,
        fallback=np.zeros(T - 1, dtype=bool),
        h_final=None,
    )


def agent_trajectories(g: AttributedGraph, model: Model, starts, T: int,
                       walks_per_start: int, seed: int) -> list[Trajectory]:
    """Policy walks for analysis, with terminal probabilities attached."""
    view = g.walk_view()
    out = []
    for s in starts:
        for j in range(walks_per_start):
            rng = stream_rng(seed, TAG_ANALYSIS, 0, int(s), j)
            traj = walk(view, int(s), T, model, rng)
            traj.terminal_probs = classify(model.classifier, traj.h_final)
            out.append(traj)
    return out


def random_trajectories(g: AttributedGraph, starts, T: int,
                        walks_per_start: int, seed: int) -> list[Trajectory]:
    view = g.walk_view()
    return [
        random_walk_baseline(view, int(s), T,
                             stream_rng(seed, TAG_ANALYSIS, 1, int(s), j))
        for s in starts
        for j in range(walks_per_start)
    ]


def workspace_probe(g: AttributedGraph | WalkView, model: Model, T: int,
                    seed: int = 0):
    """Instrumented walk from the highest-degree node (lowest id on ties):
    returns (per-step allocation counts, peak count in any single step).

    The counter covers the arrays a step materializes, so the numbers are a
    deterministic function of visited degrees and model dimensions and in
    particular independent of graph size; the peak lands on the start step
    because no visited node can out-degree the maximum-degree start.
    """
    view = g.walk_view() if isinstance(g, AttributedGraph) else g
    degrees = np.diff(view.indptr)
    start = int(np.argmax(degrees))
    meter = StepMeter()
    walk(view, start, T, model, stream_rng(seed, TAG_ANALYSIS, 2, start),
         meter=meter)
    return np.asarray(meter.per_step, dtype=np.int64), meter.peak


@dataclass
class TrajRecord:
    """One parsed trajectory-dump line."""

    start: int
    nodes: np.ndarray
    chosen_scores: np.ndarray | None
    terminal_probs: np.ndarray | None


def _fmt_floats(vals) -> str:
    return ",".join(format(float(v), ".17g") for v in vals)


def dump_trajectories(trajs, path):
    """Text dump, one walk per line: start node, visited node sequence, the
    chosen neighbor's score per step ('-' for scoreless baselines), and the
    terminal class distribution ('-' when unclassified)."""
    with open(path, "w") as fh:
        for traj in trajs:
            if traj.scores is None:
                score_field = "-"
            else:
                score_field = _fmt_floats(
                    traj.scores[t][int(traj.chosen_idx[t])]
                    for t in range(traj.length - 1)
                )
            probs_field = ("-" if traj.terminal_probs is None
                           else _fmt_floats(traj.terminal_probs))
            fh.write("\t".join([
                str(int(traj.nodes[0])),
                ",".join(str(int(v)) for v in traj.nodes),
                score_field,
                probs_field,
            ]) + "\n")


def parse_trajectory_dump(path) -> list[TrajRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(parts)}")
            try:
                start = int(parts[0])
                nodes = np.array([int(x) for x in parts[1].split(",")],
                                 dtype=np.int64)
                scores = (None if parts[2] == "-" else
                          np.array([float(x) for x in parts[2].split(",")]))
                probs = (None if parts[3] == "-" else
                         np.array([float(x) for x in parts[3].split(",")]))
            except ValueError:
                raise ParseError(path, lineno, "malformed field") from None
            if nodes[0] != start:
                raise ParseError(path, lineno, "start field disagrees with path")
            records.append(TrajRecord(start, nodes, scores, probs))
    return records


def write_diversity_curves(rows: np.ndarray, path):
    """Tab-separated t, mean, variance (one policy per file)."""
    with open(path, "w") as fh:
        fh.write("t\tmean\tvariance\n")
        for t, mean, var in rows:
            fh.write(f"{int(t)}\t{mean:.17g}\t{var:.17g}\n")


def parse_diversity_curves(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "t\tmean\tvariance":
            raise ParseError(path, 1, f"unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(path, lineno, "expected 3 columns")
            rows.append([float(p) for p in parts])
    return np.array(rows).reshape(len(rows), 3)


def write_visit_matrix(mat: np.ndarray, path):
    """Tab-separated matrix with class-id headers; rows are visited classes,
    columns are start classes."""
    k = mat.shape[0]
    with open(path, "w") as fh:
        fh.write("\t".join([""] + [str(c) for c in range(k)]) + "\n")
        for r in range(k):
            fh.write("\t".join([str(r)] + [format(v, ".17g") for v in mat[r]]) + "\n")


def parse_visit_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        k = len(header) - 1
        mat = np.zeros((k, k))
        for r in range(k):
            parts = fh.readline().rstrip("\n").split("\t")
            if len(parts) != k + 1:
                raise ParseError(path, r + 2, "row width mismatch")
            mat[r] = [float(x) for x in parts[1:]]
    return mat
