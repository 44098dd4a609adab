"""Semi-supervised node classification on attributed graphs via
policy-guided recurrent walks."""

from .agent import (
    Model,
    Trajectory,
    WalkState,
    aggregate_relevant,
    classify,
    init_model,
    predict,
    sample_next,
    score_neighbors,
    stream_rng,
    walk,
)
from .errors import (
    CompatibilityError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    InsufficientLabelsError,
    NumericError,
    ParseError,
    RangeError,
)
from .graph import (
    UNLABELED,
    AttributedGraph,
    LabelSplit,
    WalkView,
    build_graph,
    load_graph,
    normalize_attributes,
    prune_for_inductive,
    reinsert_hidden,
    split_labels,
    synth_planted_partition,
)
from .nn import (
    Classifier,
    GruCell,
    ParamGroup,
    ScoreNet,
    adam_step,
    grad_check,
    softmax_cross_entropy,
)
from .training import (
    EpochStats,
    TrainConfig,
    TrainResult,
    episode_policy_gradient,
    evaluate_nodes,
    supervised_step,
    terminal_reward,
    train,
    train_epoch,
)

__version__ = "0.1.0"
