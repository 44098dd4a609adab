"""Attributed-graph data model, file ingestion, label splits, and synthetic graphs.

Graphs are undirected and immutable after construction. Adjacency is stored
CSR-style: ``indptr`` delimits each node's slice of the parallel arrays
``nbr_ids`` (neighbor node id) and ``nbr_eids`` (edge record id). Every edge
appears in both endpoints' slices with the same edge record id; a self-loop
appears once in its node's slice.

Nodes that would otherwise have no neighbors receive a synthetic self-loop
with an all-zero edge attribute row, so a walk always has at least one
action. Such filler edges are flagged in ``edge_is_fill`` and are dropped
when a graph is rebuilt (pruning, re-insertion).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    InsufficientLabelsError,
    ParseError,
    RangeError,
)

UNLABELED = -1


@dataclass(frozen=True)
class AttributedGraph:
    """Sparse undirected adjacency plus dense node/edge attributes and labels.

    ``labels[v]`` is a class id in ``[0, num_classes)`` or ``UNLABELED``.
    All arrays are read-only.
    """

    num_nodes: int
    indptr: np.ndarray       # (num_nodes + 1,) int64
    nbr_ids: np.ndarray      # (2*E - L,) int64, L = number of self-loops
    nbr_eids: np.ndarray     # parallel to nbr_ids
    node_attrs: np.ndarray   # (num_nodes, D_v) float64
    edge_attrs: np.ndarray   # (num_edges, D_e) float64
    labels: np.ndarray       # (num_nodes,) int64
    num_classes: int
    edge_endpoints: np.ndarray  # (num_edges, 2) int64, u <= v
    edge_is_fill: np.ndarray    # (num_edges,) bool, synthetic self-loops

    @property
    def num_edges(self) -> int:
        return self.edge_attrs.shape[0]

    @property
    def node_dim(self) -> int:
        return self.node_attrs.shape[1]

    @property
    def edge_dim(self) -> int:
        return self.edge_attrs.shape[1]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int):
        """Neighbor ids and edge record ids of ``v`` as array views."""
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.nbr_ids[lo:hi], self.nbr_eids[lo:hi]

    def label_of(self, v: int) -> int:
        """Label of one node; the single sanctioned label accessor."""
        return int(self.labels[v])

    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    def walk_view(self) -> "WalkView":
        """Label-stripped view handed to anything that walks the graph."""
        return WalkView(
            num_nodes=self.num_nodes,
            indptr=self.indptr,
            nbr_ids=self.nbr_ids,
            nbr_eids=self.nbr_eids,
            node_attrs=self.node_attrs,
            edge_attrs=self.edge_attrs,
        )

    def real_edges(self):
        """(u, v, attr_row) triples of non-filler edges, for rebuilds."""
        keep = ~self.edge_is_fill
        return (
            self.edge_endpoints[keep],
            self.edge_attrs[keep],
        )


@dataclass(frozen=True)
class WalkView:
    """Adjacency and attributes only; labels are deliberately absent."""

    num_nodes: int
    indptr: np.ndarray
    nbr_ids: np.ndarray
    nbr_eids: np.ndarray
    node_attrs: np.ndarray
    edge_attrs: np.ndarray

    @property
    def node_dim(self) -> int:
        return self.node_attrs.shape[1]

    @property
    def edge_dim(self) -> int:
        return self.edge_attrs.shape[1]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int):
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.nbr_ids[lo:hi], self.nbr_eids[lo:hi]


@dataclass(frozen=True)
class LabelSplit:
    """Disjoint train/test/unlabeled node id sets (sorted arrays)."""

    train_ids: np.ndarray
    test_ids: np.ndarray
    unlabeled_ids: np.ndarray


@dataclass(frozen=True)
class InductiveRemap:
    """Bookkeeping to re-insert hidden nodes after an inductive prune."""

    num_nodes_full: int
    hidden_ids: np.ndarray      # original ids removed from the training graph
    old_to_new: np.ndarray      # (num_nodes_full,) int64, -1 for hidden nodes
    new_to_old: np.ndarray      # (num_kept,) int64
    hidden_edges: np.ndarray    # (H, 2) original-id endpoints touching hidden nodes
    hidden_edge_attrs: np.ndarray  # (H, D_e) their attribute rows


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def build_graph(
    num_nodes: int,
    edges,
    node_attrs: np.ndarray,
    edge_attrs: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    num_classes: int | None = None,
    edge_dim: int | None = None,
) -> AttributedGraph:
    """Construct a graph from an edge list.

    ``edges`` is an iterable of ``(u, v)`` or ``(u, v, attr_idx)`` where
    ``attr_idx`` selects a row of ``edge_attrs`` (``None`` or missing means an
    all-zero row). Duplicate undirected edges collapse to one record keeping
    the first attribute row. Degree-0 nodes get a flagged zero-attribute
    self-loop.
    """
    node_attrs = np.ascontiguousarray(node_attrs, dtype=np.float64)
    if node_attrs.ndim != 2 or node_attrs.shape[0] != num_nodes:
        raise DimensionError(
            f"node_attrs must be ({num_nodes}, D_v), got {node_attrs.shape}"
        )
    if edge_attrs is not None:
        edge_attrs = np.ascontiguousarray(edge_attrs, dtype=np.float64)
        if edge_attrs.ndim != 2:
            raise DimensionError("edge_attrs must be a 2-d matrix")
        d_e = edge_attrs.shape[1]
    else:
        d_e = edge_dim if edge_dim is not None else node_attrs.shape[1]

    seen: dict[tuple[int, int], int] = {}
    endpoints: list[tuple[int, int]] = []
    rows: list[np.ndarray] = []
    zero_row = np.zeros(d_e)
    for entry in edges:
        if len(entry) == 2:
            u, v = entry
            aidx = None
        else:
            u, v, aidx = entry
        u, v = int(u), int(v)
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise RangeError(f"edge ({u}, {v}) outside node range [0, {num_nodes})")
        key = (u, v) if u <= v else (v, u)
        if key in seen:
            continue
        if aidx is None:
            row = zero_row
        else:
            if edge_attrs is None or not (0 <= aidx < edge_attrs.shape[0]):
                raise RangeError(f"edge attribute row {aidx} out of range")
            row = edge_attrs[aidx]
        seen[key] = len(endpoints)
        endpoints.append(key)
        rows.append(row)

    is_fill = [False] * len(endpoints)
    deg = np.zeros(num_nodes, dtype=np.int64)
    for u, v in endpoints:
        deg[u] += 1
        if v != u:
            deg[v] += 1
    for v in np.flatnonzero(deg == 0):
        endpoints.append((int(v), int(v)))
        rows.append(zero_row)
        is_fill.append(True)

    m = len(endpoints)
    ep = np.asarray(endpoints, dtype=np.int64).reshape(m, 2)
    attrs = np.asarray(rows, dtype=np.float64).reshape(m, d_e)

    # Two directed half-edges per edge, one for a self-loop.
    loops = ep[:, 0] == ep[:, 1]
    src = np.concatenate([ep[:, 0], ep[~loops, 1]])
    dst = np.concatenate([ep[:, 1], ep[~loops, 0]])
    eid = np.concatenate([np.arange(m), np.arange(m)[~loops]])
    order = np.lexsort((eid, dst, src))
    src, dst, eid = src[order], dst[order], eid[order]
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)

    if labels is None:
        lab = np.full(num_nodes, UNLABELED, dtype=np.int64)
    else:
        lab = np.asarray(labels, dtype=np.int64).copy()
        if lab.shape != (num_nodes,):
            raise DimensionError(f"labels must be ({num_nodes},), got {lab.shape}")
    if num_classes is None:
        num_classes = int(lab.max()) + 1 if (lab != UNLABELED).any() else 0
    if (lab != UNLABELED).any() and int(lab.max()) >= num_classes:
        raise RangeError("label id exceeds num_classes")

    return AttributedGraph(
        num_nodes=num_nodes,
        indptr=_freeze(indptr),
        nbr_ids=_freeze(dst),
        nbr_eids=_freeze(eid),
        node_attrs=_freeze(node_attrs.copy()),
        edge_attrs=_freeze(attrs),
        labels=_freeze(lab),
        num_classes=num_classes,
        edge_endpoints=_freeze(ep),
        edge_is_fill=_freeze(np.asarray(is_fill, dtype=bool)),
    )


def _read_attr_file(path) -> np.ndarray:
    """Attribute file: first line ``DIM <d>``, then one whitespace row per record."""
    rows = []
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if dim is None:
                parts = line.split()
                if len(parts) != 2 or parts[0] != "DIM":
                    raise ParseError(path, lineno, f"expected 'DIM <d>' header, got {line!r}")
                try:
                    dim = int(parts[1])
                except ValueError:
                    raise ParseError(path, lineno, f"bad dimension {parts[1]!r}") from None
                if dim <= 0:
                    raise ParseError(path, lineno, "dimension must be positive")
                continue
            try:
                row = np.array([float(x) for x in line.split()], dtype=np.float64)
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric attribute value in {line!r}") from None
            if row.shape[0] != dim:
                raise DimensionError(
                    f"{path}:{lineno}: attribute row has {row.shape[0]} values, expected {dim}"
                )
            rows.append(row)
    if dim is None:
        raise ParseError(path, 1, "empty attribute file")
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)


def load_graph(
    edge_file,
    node_attr_file,
    edge_attr_file=None,
    label_file=None,
    edge_dim: int | None = None,
) -> AttributedGraph:
    """Load a graph from the text formats documented in the README.

    Edge file lines are ``src<TAB>dst[<TAB>edge_attr_row]``. When
    ``edge_attr_file`` is absent every edge gets a zero attribute row of
    width ``edge_dim`` (default: the node attribute width).
    """
    node_attrs = _read_attr_file(node_attr_file)
    num_nodes = node_attrs.shape[0]
    edge_attrs = _read_attr_file(edge_attr_file) if edge_attr_file else None

    edges = []
    with open(edge_file) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError(edge_file, lineno, f"expected 2 or 3 fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
                aidx = int(parts[2]) if len(parts) == 3 else None
            except ValueError:
                raise ParseError(edge_file, lineno, f"non-integer field in {line!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise RangeError(f"{edge_file}:{lineno}: node id out of range [0, {num_nodes})")
            if aidx is not None and edge_attrs is None:
                raise ParseError(edge_file, lineno, "edge attr index given but no edge attr file")
            edges.append((u, v, aidx) if aidx is not None else (u, v))

    labels = np.full(num_nodes, UNLABELED, dtype=np.int64)
    if label_file:
        with open(label_file) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError(label_file, lineno, f"expected 'node<TAB>class', got {line!r}")
                try:
                    v, c = int(parts[0]), int(parts[1])
                except ValueError:
                    raise ParseError(label_file, lineno, f"non-integer field in {line!r}") from None
                if not 0 <= v < num_nodes:
                    raise RangeError(f"{label_file}:{lineno}: node id {v} out of range")
                if c < 0:
                    raise RangeError(f"{label_file}:{lineno}: negative class id {c}")
                labels[v] = c

    return build_graph(
        num_nodes,
        edges,
        node_attrs,
        edge_attrs=edge_attrs,
        labels=labels,
        edge_dim=edge_dim,
    )


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return mat / safe


def normalize_attributes(g: AttributedGraph) -> AttributedGraph:
    """Scale every node and edge attribute row to unit L2 norm (zero rows stay)."""
    return AttributedGraph(
        num_nodes=g.num_nodes,
        indptr=g.indptr,
        nbr_ids=g.nbr_ids,
        nbr_eids=g.nbr_eids,
        node_attrs=_freeze(_unit_rows(g.node_attrs)),
        edge_attrs=_freeze(_unit_rows(g.edge_attrs)),
        labels=g.labels,
        num_classes=g.num_classes,
        edge_endpoints=g.edge_endpoints,
        edge_is_fill=g.edge_is_fill,
    )


def split_labels(
    g: AttributedGraph, test_frac: float, train_frac: float, seed: int
) -> LabelSplit:
    """Sample a test set from the labeled nodes, then a training set from the rest.

    ``test_frac`` is relative to all labeled nodes, ``train_frac`` to the
    labeled pool left after the test set is removed. Remaining labeled nodes
    are treated as unlabeled.
    """
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test_frac must be in (0, 1), got {test_frac}")
    if not 0.0 < train_frac <= 1.0:
        raise ValueError(f"train_frac must be in (0, 1], got {train_frac}")
    labeled = g.labeled_ids()
    if labeled.size < g.num_classes:
        raise InsufficientLabelsError(
            f"{labeled.size} labeled nodes but {g.num_classes} classes"
        )
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 11)))
    perm = rng.permutation(labeled)
    n_test = round(test_frac * labeled.size)
    test_ids = np.sort(perm[:n_test])
    rest = perm[n_test:]
    n_train = round(train_frac * rest.size)
    train_ids = np.sort(rest[:n_train])
    moved = np.sort(rest[n_train:])
    unlabeled = np.sort(np.concatenate([np.flatnonzero(g.labels == UNLABELED), moved]))
    return LabelSplit(
        train_ids=_freeze(train_ids),
        test_ids=_freeze(test_ids),
        unlabeled_ids=_freeze(unlabeled),
    )


def prune_for_inductive(g: AttributedGraph, hidden_ids) -> tuple[AttributedGraph, InductiveRemap]:
    """Remove ``hidden_ids`` and their incident edges, with a re-insertion map."""
    hidden = np.unique(np.asarray(list(hidden_ids), dtype=np.int64))
    if hidden.size and (hidden.min() < 0 or hidden.max() >= g.num_nodes):
        raise RangeError("hidden id outside graph")
    mask = np.ones(g.num_nodes, dtype=bool)
    mask[hidden] = False
    new_to_old = np.flatnonzero(mask)
    old_to_new = np.full(g.num_nodes, -1, dtype=np.int64)
    old_to_new[new_to_old] = np.arange(new_to_old.size)

    ep, attrs = g.real_edges()
    touches_hidden = ~mask[ep[:, 0]] | ~mask[ep[:, 1]]
    kept_ep = ep[~touches_hidden]
    kept_attrs = attrs[~touches_hidden]
    pruned = build_graph(
        new_to_old.size,
        [
            (old_to_new[u], old_to_new[v], i)
            for i, (u, v) in enumerate(kept_ep)
        ],
        g.node_attrs[new_to_old],
        edge_attrs=kept_attrs,
        labels=g.labels[new_to_old],
        num_classes=g.num_classes,
        edge_dim=g.edge_dim,
    )
    remap = InductiveRemap(
        num_nodes_full=g.num_nodes,
        hidden_ids=_freeze(hidden),
        old_to_new=_freeze(old_to_new),
        new_to_old=_freeze(new_to_old),
        hidden_edges=_freeze(ep[touches_hidden].copy()),
        hidden_edge_attrs=_freeze(attrs[touches_hidden].copy()),
    )
    return pruned, remap


def reinsert_hidden(
    pruned: AttributedGraph,
    remap: InductiveRemap,
    hidden_node_attrs: np.ndarray,
    hidden_labels: np.ndarray | None = None,
) -> AttributedGraph:
    """Rebuild the full graph from a pruned graph plus the stored hidden edges."""
    n = remap.num_nodes_full
    node_attrs = np.zeros((n, pruned.node_dim))
    node_attrs[remap.new_to_old] = pruned.node_attrs
    node_attrs[remap.hidden_ids] = hidden_node_attrs
    labels = np.full(n, UNLABELED, dtype=np.int64)
    labels[remap.new_to_old] = pruned.labels
    if hidden_labels is not None:
        labels[remap.hidden_ids] = hidden_labels

    kept_ep, kept_attrs = pruned.real_edges()
    edges = [
        (remap.new_to_old[u], remap.new_to_old[v], i)
        for i, (u, v) in enumerate(kept_ep)
    ]
    base = kept_attrs.shape[0]
    edges.extend(
        (u, v, base + i) for i, (u, v) in enumerate(remap.hidden_edges)
    )
    all_attrs = np.concatenate([kept_attrs, remap.hidden_edge_attrs], axis=0)
    return build_graph(
        n,
        edges,
        node_attrs,
        edge_attrs=all_attrs,
        labels=labels,
        num_classes=pruned.num_classes,
        edge_dim=pruned.edge_dim,
    )


def _sample_pair_block(rng, rows: np.ndarray, cols: np.ndarray, p: float, same: bool):
    """Sample edges of one block of an inhomogeneous random graph without
    materializing the full pair grid: draw a binomial edge count, then that
    many distinct flat pair indices.

    Returns (u, v) arrays of sampled pairs.
    """
    nr, nc = rows.size, cols.size
    n_pairs = nr * (nr - 1) // 2 if same else nr * nc
    if n_pairs == 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    count = int(rng.binomial(n_pairs, p))
    if count == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    # Distinct flat indices: oversample with replacement until enough, then a
    # uniform subset (distinct values of exchangeable draws are uniform).
    chosen = np.empty(0, dtype=np.int64)
    while chosen.size < count:
        extra = rng.integers(0, n_pairs, size=int((count - chosen.size) * 1.4) + 16)
        chosen = np.unique(np.concatenate([chosen, extra]))
    if chosen.size > count:
        keep = rng.choice(chosen.size, size=count, replace=False)
        chosen = chosen[np.sort(keep)]
    if not same:
        return rows[chosen // nc], cols[chosen % nc]
    # Row-major upper triangle: flat index -> (i, j) with i < j.
    i = (nr - 2 - np.floor(
        np.sqrt(-8.0 * chosen + 4.0 * nr * (nr - 1) - 7.0) / 2.0 - 0.5
    )).astype(np.int64)
    i = np.clip(i, 0, nr - 2)
    row_start = lambda a: a * (2 * nr - a - 1) // 2  # noqa: E731
    for _ in range(2):  # absorb float rounding at row boundaries
        i = np.where(chosen < row_start(i), i - 1, i)
        i = np.where(chosen >= row_start(i + 1), i + 1, i)
    j = chosen - row_start(i) + i + 1
    if (j <= i).any() or (j >= nr).any():
        raise AssertionError("triangle index inversion out of range")
    return rows[i], rows[j]


def synth_planted_partition(
    n: int,
    k: int,
    p_in: float,
    p_out: float,
    attr_dim: int,
    noise_sigma: float,
    seed: int,
    class_sep: float = 0.2,
) -> AttributedGraph:
    """Generate a planted-partition graph with class-correlated attributes.

    Nodes are assigned round-robin to ``k`` balanced classes. Same-class pairs
    link with probability ``p_in``, cross-class pairs with ``p_out``. Class
    mean attribute vectors share a common base direction and differ by
    ``class_sep`` along per-class orthogonal directions, so ``class_sep`` and
    ``noise_sigma`` jointly control how separable attributes alone are. Node
    attributes (class mean plus Gaussian noise) are unit-normalized; edge
    attributes are the average of the endpoint class means plus noise, left
    unnormalized. All labels are populated.
    """
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ValueError("require 0 <= p_out <= p_in <= 1")
    if n < k:
        raise ValueError("need at least one node per class")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 13)))
    labels = np.arange(n, dtype=np.int64) % k

    # k+1 orthonormal directions: one shared base plus one per class.
    basis, _ = np.linalg.qr(rng.normal(size=(attr_dim, min(k + 1, attr_dim))))
    base = basis[:, 0]
    means = np.empty((k, attr_dim))
    for c in range(k):
        direction = basis[:, 1 + c % (basis.shape[1] - 1)] if basis.shape[1] > 1 else base
        m = base + class_sep * direction
        means[c] = m / np.linalg.norm(m)

    edges_u, edges_v = [], []
    for a in range(k):
        ids_a = np.flatnonzero(labels == a)
        u, v = _sample_pair_block(rng, ids_a, ids_a, p_in, same=True)
        edges_u.append(u)
        edges_v.append(v)
        for b in range(a + 1, k):
            ids_b = np.flatnonzero(labels == b)
            u, v = _sample_pair_block(rng, ids_a, ids_b, p_out, same=False)
            edges_u.append(u)
            edges_v.append(v)
    eu = np.concatenate(edges_u)
    ev = np.concatenate(edges_v)

    node_attrs = means[labels] + rng.normal(scale=noise_sigma, size=(n, attr_dim))
    node_attrs = _unit_rows(node_attrs)
    edge_means = 0.5 * (means[labels[eu]] + means[labels[ev]])
    edge_attrs = edge_means + rng.normal(scale=noise_sigma, size=edge_means.shape)

    return build_graph(
        n,
        [(int(u), int(v), i) for i, (u, v) in enumerate(zip(eu, ev))],
        node_attrs,
        edge_attrs=edge_attrs,
        labels=labels,
        num_classes=k,
    )
