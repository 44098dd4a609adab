"""Command-line entry point.

Commands: ingest, synth, train, eval, analyze, gradcheck. Configuration
merges three layers, later winning: dataclass defaults, a `key = value`
config file (--config), command-line flags. Every command writes its fully
resolved configuration beside its outputs.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, checks
from .agent import TAG_ANALYSIS, stream_rng
from .checkpoint import load_checkpoint, model_config_hash, save_checkpoint
from .errors import (
    CompatibilityError,
    ConfigError,
    DataError,
    NumericError,
)
from .graph import (
    AttributedGraph,
    load_graph,
    normalize_attributes,
    prune_for_inductive,
    reinsert_hidden,
    split_labels,
    synth_planted_partition,
)
from .training import TrainConfig, evaluate_nodes, train

SYNTH_DEFAULTS = {
    "n": 200,
    "k": 2,
    "p_in": 0.05,
    "p_out": 0.005,
    "noise": 0.1,
    "attr_dim": 16,
    "class_sep": 0.2,
    "graph_seed": None,  # falls back to the run seed
}


@dataclass
class RunConfig(TrainConfig):
    """Everything a command needs: training hyperparameters plus data
    sources, split fractions, mode, and output locations."""

    mode: str = "transductive"
    test_frac: float = 0.3
    train_frac: float = 1.0
    data_dir: str | None = None
    synthetic: str | None = None
    out_dir: str = "nodewalk_out"
    checkpoint: str | None = None
    starts: int = 100
    analyze_walks: int = 5
    normalize: bool = True
    diversity_exclude_start: bool = False
    edge_file: str | None = None
    node_attr_file: str | None = None
    edge_attr_file: str | None = None
    label_file: str | None = None
    edge_dim: int | None = None

    def validate(self):
        super().validate()
        if self.mode not in ("transductive", "inductive"):
            raise ConfigError(f"mode must be transductive or inductive, got {self.mode!r}")
        if not 0.0 < self.test_frac < 1.0:
            raise ConfigError(f"test_frac must be in (0, 1), got {self.test_frac}")
        if not 0.0 < self.train_frac <= 1.0:
            raise ConfigError(f"train_frac must be in (0, 1], got {self.train_frac}")
        if self.starts < 1:
            raise ConfigError(f"starts must be >= 1, got {self.starts}")
        if self.analyze_walks < 1:
            raise ConfigError(f"analyze_walks must be >= 1, got {self.analyze_walks}")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_BOOL_FIELDS = {
    "supervised_to_core", "reward_from_ensemble", "reward_baseline",
    "normalize", "diversity_exclude_start",
}
_INT_FIELDS = {
    "walk_len", "train_walks", "test_walks", "hidden_dim", "epochs", "seed",
    "threads", "starts", "analyze_walks", "edge_dim",
}
_FLOAT_FIELDS = {"discount", "lr", "l2", "test_frac", "train_frac"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_FIELDS:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")
    if raw.lower() == "none":
        return None
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: bad value {raw!r}") from None
    return raw


def parse_config_file(path) -> dict:
    """Line-oriented `key = value`; blank lines and # comments ignored;
    unknown keys rejected."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    layers = {}
    if getattr(args, "config", None):
        layers.update(parse_config_file(args.config))
    for key in _FIELD_TYPES:
        val = getattr(args, key, None)
        if val is not None:
            layers[key] = val
    return RunConfig(**layers).validate()


# filesystem locations; irrelevant to what the run computes, so they stay out
# of checkpoint-embedded config text (two runs into different dirs must still
# produce byte-identical checkpoints)
_PATH_FIELDS = {
    "data_dir", "out_dir", "checkpoint", "edge_file", "node_attr_file",
    "edge_attr_file", "label_file",
}


def format_resolved(cfg: RunConfig, paths: bool = True) -> str:
    lines = []
    for key in sorted(_FIELD_TYPES):
        if not paths and key in _PATH_FIELDS:
            continue
        val = getattr(cfg, key)
        if val is None:
            val = "none"
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def _write_resolved(cfg: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.txt").write_text(format_resolved(cfg))


def parse_synth_spec(spec: str | None, seed: int) -> dict:
    """Comma-separated key=value synthetic-graph description, e.g.
    'n=200,k=2,p_in=0.05'. Unspecified keys take benchmark defaults."""
    params = dict(SYNTH_DEFAULTS)
    params["graph_seed"] = seed
    if spec:
        for item in spec.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ConfigError(f"synthetic spec item {item!r} is not key=value")
            key, _, raw = item.partition("=")
            key = key.strip()
            if key not in SYNTH_DEFAULTS:
                raise ConfigError(f"unknown synthetic spec key {key!r}")
            try:
                params[key] = (int(raw) if key in ("n", "k", "attr_dim", "graph_seed")
                               else float(raw))
            except ValueError:
                raise ConfigError(f"synthetic spec key {key}: bad value {raw!r}") from None
    return params


def synth_graph(params: dict) -> AttributedGraph:
    return synth_planted_partition(
        n=params["n"], k=params["k"], p_in=params["p_in"],
        p_out=params["p_out"], attr_dim=params["attr_dim"],
        noise_sigma=params["noise"], seed=params["graph_seed"],
        class_sep=params["class_sep"],
    )


def load_dataset_dir(path) -> AttributedGraph:
    d = Path(path)
    edges = d / "edges.tsv"
    node_attrs = d / "node_attrs.tsv"
    if not edges.exists() or not node_attrs.exists():
        raise DataError(f"{path} is not a dataset directory (missing edges.tsv/node_attrs.tsv)")
    edge_attrs = d / "edge_attrs.tsv"
    labels = d / "labels.tsv"
    return load_graph(
        edges, node_attrs,
        edge_attr_file=edge_attrs if edge_attrs.exists() else None,
        label_file=labels if labels.exists() else None,
    )


def write_dataset_dir(g: AttributedGraph, out: Path):
    """Persist the real (non-filler) edges and all attributes/labels in the
    ingestion text formats, so the directory reloads to an equal graph."""
    out.mkdir(parents=True, exist_ok=True)
    endpoints, attrs = g.real_edges()
    with open(out / "edges.tsv", "w") as fh:
        for i, (u, v) in enumerate(endpoints):
            fh.write(f"{u}\t{v}\t{i}\n")
    with open(out / "node_attrs.tsv", "w") as fh:
        fh.write(f"DIM {g.node_dim}\n")
        for row in g.node_attrs:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")
    with open(out / "edge_attrs.tsv", "w") as fh:
        fh.write(f"DIM {g.edge_dim}\n")
        for row in attrs:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")
    labeled = g.labeled_ids()
    if labeled.size:
        with open(out / "labels.tsv", "w") as fh:
            for v in labeled:
                fh.write(f"{v}\t{g.labels[v]}\n")


def load_run_graph(cfg: RunConfig) -> AttributedGraph:
    """The graph a train/eval/analyze run operates on, normalization applied."""
    if cfg.data_dir and cfg.synthetic:
        raise ConfigError("give either --data or --synthetic, not both")
    if cfg.data_dir:
        g = load_dataset_dir(cfg.data_dir)
    elif cfg.synthetic is not None:
        g = synth_graph(parse_synth_spec(cfg.synthetic, cfg.seed))
    else:
        raise ConfigError("no data source: pass --data DIR or --synthetic SPEC")
    if g.num_classes < 2 or g.labeled_ids().size == 0:
        raise DataError("graph has no usable labels")
    return normalize_attributes(g) if cfg.normalize else g


def _train_graph_and_ids(cfg: RunConfig, g: AttributedGraph, split):
    """Transductive: train on the full graph. Inductive: remove the test
    nodes and remap the training ids into the pruned numbering."""
    if cfg.mode == "transductive":
        return g, split.train_ids
    pruned, remap = prune_for_inductive(g, split.test_ids)
    return pruned, remap.old_to_new[split.train_ids]


def _eval_graph(cfg: RunConfig, g: AttributedGraph, split) -> AttributedGraph:
    """Inductive evaluation re-inserts the hidden nodes (with their original
    attributes, edges, and labels) into the training graph."""
    if cfg.mode == "transductive":
        return g
    pruned, remap = prune_for_inductive(g, split.test_ids)
    return reinsert_hidden(pruned, remap,
                           hidden_node_attrs=g.node_attrs[remap.hidden_ids],
                           hidden_labels=g.labels[remap.hidden_ids])


def cmd_ingest(cfg: RunConfig) -> int:
    if not cfg.edge_file or not cfg.node_attr_file:
        raise ConfigError("ingest needs --edges and --node-attrs")
    g = load_graph(cfg.edge_file, cfg.node_attr_file,
                   edge_attr_file=cfg.edge_attr_file,
                   label_file=cfg.label_file,
                   edge_dim=cfg.edge_dim)
    out = Path(cfg.out_dir)
    write_dataset_dir(g, out)
    _write_resolved(cfg, out)
    degs = np.diff(g.indptr)
    (out / "summary.txt").write_text(
        f"nodes = {g.num_nodes}\n"
        f"edges = {g.num_edges}\n"
        f"node_dim = {g.node_dim}\n"
        f"edge_dim = {g.edge_dim}\n"
        f"classes = {g.num_classes}\n"
        f"labeled = {g.labeled_ids().size}\n"
        f"max_degree = {int(degs.max())}\n"
        f"mean_degree = {float(degs.mean()):.4f}\n"
    )
    print(f"ingested {g.num_nodes} nodes, {g.num_edges} edge records -> {out}")
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    g = synth_graph(parse_synth_spec(cfg.synthetic, cfg.seed))
    out = Path(cfg.out_dir)
    write_dataset_dir(g, out)
    _write_resolved(cfg, out)
    print(f"generated {g.num_nodes} nodes, {g.num_edges} edge records -> {out}")
    return 0


def _train_log_lines(stats) -> str:
    return "".join(
        f"{s.epoch}\t{s.mean_reward:.17g}\t{s.train_acc:.17g}"
        f"\t{s.mean_loss:.17g}\t{s.seconds:.6f}\n"
        for s in stats
    )


def cmd_train(cfg: RunConfig) -> int:
    g = load_run_graph(cfg)
    split = split_labels(g, cfg.test_frac, cfg.train_frac, cfg.seed)
    train_graph, train_ids = _train_graph_and_ids(cfg, g, split)
    split_for_train = dataclasses.replace(
        split, train_ids=train_ids,
        test_ids=np.empty(0, dtype=np.int64),
        unlabeled_ids=np.empty(0, dtype=np.int64),
    ) if cfg.mode == "inductive" else split
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)
    try:
        result = train(train_graph, split_for_train, cfg)
    except NumericError as err:
        model = getattr(err, "model", None)
        if model is not None:
            save_checkpoint(out / "diagnostic.ckpt", model,
                            config_text=format_resolved(cfg, paths=False),
                            meta={"aborted": "numeric-error"})
            stats = getattr(err, "stats", [])
            (out / "train_log.tsv").write_text(_train_log_lines(stats))
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    best = result.model
    final_state = best.state_copy()
    best.load_state(result.best_state)
    save_checkpoint(out / "checkpoint.ckpt", best,
                    config_text=format_resolved(cfg, paths=False),
                    meta={"best_epoch": str(result.best_epoch)})
    best.load_state(final_state)
    save_checkpoint(out / "final.ckpt", best,
                    config_text=format_resolved(cfg, paths=False))
    (out / "train_log.tsv").write_text(_train_log_lines(result.epoch_stats))
    last = result.epoch_stats[-1] if result.epoch_stats else None
    if last:
        print(f"trained {cfg.epochs} epochs; last mean reward "
              f"{last.mean_reward:.3f}, train acc {last.train_acc:.3f}; "
              f"best epoch {result.best_epoch}")
    print(f"checkpoint -> {out / 'checkpoint.ckpt'}")
    return 0


def _load_model_for(cfg: RunConfig, g: AttributedGraph):
    if not cfg.checkpoint:
        raise ConfigError("this command needs --checkpoint")
    expected = model_config_hash(g.node_dim, g.edge_dim, cfg.hidden_dim,
                                 g.num_classes)
    ck = load_checkpoint(cfg.checkpoint, expected_hash=expected)
    return ck.build_model()


def cmd_eval(cfg: RunConfig) -> int:
    g = load_run_graph(cfg)
    split = split_labels(g, cfg.test_frac, cfg.train_frac, cfg.seed)
    model = _load_model_for(cfg, g)
    eval_graph = _eval_graph(cfg, g, split)
    acc, per_class, _ = evaluate_nodes(eval_graph, split.test_ids, model, cfg)
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)
    lines = [f"overall\t{acc:.17g}"]
    lines += [f"class\t{c}\t{rate:.17g}" for c, rate in per_class.items()]
    (out / "accuracy_report.tsv").write_text("\n".join(lines) + "\n")
    print(f"{cfg.mode} accuracy on {split.test_ids.size} test nodes: {acc:.4f}")
    return 0


def cmd_analyze(cfg: RunConfig) -> int:
    g = load_run_graph(cfg)
    model = _load_model_for(cfg, g)
    labeled = g.labeled_ids()
    order = stream_rng(cfg.seed, TAG_ANALYSIS, 3).permutation(labeled)
    starts = np.sort(order[:min(cfg.starts, labeled.size)])
    agent_trajs = analysis.agent_trajectories(
        g, model, starts, cfg.walk_len, cfg.analyze_walks, cfg.seed)
    random_trajs = analysis.random_trajectories(
        g, starts, cfg.walk_len, cfg.analyze_walks, cfg.seed)
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)
    analysis.dump_trajectories(agent_trajs, out / "trajectories_agent.tsv")
    analysis.dump_trajectories(random_trajs, out / "trajectories_random.tsv")
    analysis.write_diversity_curves(
        analysis.diversity_curves(agent_trajs, g.labels,
                                  cfg.diversity_exclude_start),
        out / "diversity_agent.tsv")
    analysis.write_diversity_curves(
        analysis.diversity_curves(random_trajs, g.labels,
                                  cfg.diversity_exclude_start),
        out / "diversity_random.tsv")
    analysis.write_visit_matrix(
        analysis.class_visit_matrix(agent_trajs, g.labels, g.num_classes),
        out / "visit_matrix.tsv")
    print(f"analyzed {len(agent_trajs)} agent walks and "
          f"{len(random_trajs)} random walks from {starts.size} start nodes -> {out}")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    results = checks.run_all_checks(n_seeds=5, base_seed=cfg.seed)
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)
    ok = True
    lines = []
    for name, err in results.items():
        passed = err < checks.PASS_TOLERANCE
        ok = ok and passed
        lines.append(f"{name}\t{err:.3e}\t{'PASS' if passed else 'FAIL'}")
    report = "\n".join(lines) + "\n"
    (out / "gradcheck_report.txt").write_text(report)
    print(report, end="")
    return 0 if ok else 3


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodewalk",
        description="Walk-based semi-supervised node classification on attributed graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "ingest": "validate raw graph files and write a dataset directory",
        "synth": "generate a planted-partition dataset directory",
        "train": "train a model and write checkpoints plus a log",
        "eval": "predict the held-out test nodes from a checkpoint",
        "analyze": "dump trajectories, diversity curves, and the visit matrix",
        "gradcheck": "finite-difference check of every kernel and the full model",
    }
    flag_help = {
        "walk_len": "steps per walk",
        "train_walks": "rollouts per start node in training",
        "test_walks": "rollouts per node at prediction time",
        "discount": "reward discount toward early steps, in (0, 1]",
        "lr": "learning rate",
        "hidden_dim": "history vector width",
        "epochs": "training epochs",
        "l2": "classifier L2 coefficient",
        "seed": "master seed for all random streams",
        "threads": "walk parallelism (1 = reference mode)",
        "mode": "transductive or inductive",
        "test_frac": "fraction of labeled nodes held out for testing",
        "train_frac": "fraction of remaining labeled nodes used for training",
        "data_dir": "dataset directory from ingest/synth",
        "synthetic": "inline synthetic spec, e.g. n=200,k=2,p_in=0.05",
        "out_dir": "output directory",
        "checkpoint": "checkpoint file to evaluate/analyze",
        "starts": "number of start nodes to analyze",
        "analyze_walks": "walks per start node in analyze",
        "normalize": "unit-normalize attribute rows",
        "diversity_exclude_start": "diversity variant that skips the start node",
        "supervised_to_core": "let the classifier loss reach the recurrent core",
        "reward_from_ensemble": "reward each walk by the ensemble prediction",
        "reward_baseline": "subtract the batch-mean reward",
        "edge_file": "raw edge list file",
        "node_attr_file": "raw node attribute file",
        "edge_attr_file": "raw edge attribute file",
        "label_file": "raw label file",
        "edge_dim": "edge attribute width when no edge attribute file exists",
    }
    flag_names = {
        "data_dir": "--data",
        "out_dir": "--out",
        "edge_file": "--edges",
        "node_attr_file": "--node-attrs",
        "edge_attr_file": "--edge-attrs",
        "label_file": "--labels",
    }
    for name, blurb in specs.items():
        p = sub.add_parser(name, help=blurb, description=blurb)
        p.add_argument("--config", help="key = value config file")
        for field in _FIELD_TYPES:
            flag = flag_names.get(field, "--" + field.replace("_", "-"))
            kwargs = {"dest": field, "default": None, "help": flag_help[field]}
            if field in _BOOL_FIELDS:
                p.add_argument(flag, action=argparse.BooleanOptionalAction,
                               **kwargs)
            elif field in _INT_FIELDS:
                p.add_argument(flag, type=int, **kwargs)
            elif field in _FLOAT_FIELDS:
                p.add_argument(flag, type=float, **kwargs)
            elif field == "mode":
                p.add_argument(flag, choices=("transductive", "inductive"),
                               **kwargs)
            else:
                p.add_argument(flag, **kwargs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (DataError, CompatibilityError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
