"""Benchmarking toolkit for budgeted edge-flip attacks on GNN node classifiers."""

from .attacks import (
    ATTACKS,
    AttackContext,
    AttackPlan,
    NoLegalMoveError,
    apply_plan,
    attack_fga,
    attack_l1d_rnd,
    attack_nettack_lite,
    attack_rnd,
    get_attack,
    influence_score,
)
from .estimators import GCNClassifier, JaccardEdgePruner, SGCClassifier
from .graph import (
    DENSE_LIMIT,
    Graph,
    GraphFormatError,
    Split,
    degree,
    jaccard_prune,
    load_graph,
    normalize_adjacency,
    random_split,
    synthetic_sbm,
    write_graph,
)
from .harness import (
    BenchmarkError,
    CellRecord,
    EvalReport,
    RunSpec,
    aggregate,
    derive_seed,
    run_benchmark,
    score_evasion,
    score_poison,
)
from .models import (
    ModelConfig,
    TrainedModel,
    TrainingDivergedError,
    cross_entropy,
    forward_gcn2,
    forward_sgc,
    load_model,
    loss_and_grads,
    margin,
    save_model,
    train,
)
from .selection import (
    ConfigGrid,
    SelectionError,
    TargetSet,
    default_surrogate_grid,
    default_victim_grid,
    node_select,
    select,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACKS",
    "AttackContext",
    "AttackPlan",
    "BenchmarkError",
    "CellRecord",
    "ConfigGrid",
    "DENSE_LIMIT",
    "EvalReport",
    "GCNClassifier",
    "Graph",
    "GraphFormatError",
    "JaccardEdgePruner",
    "ModelConfig",
    "NoLegalMoveError",
    "RunSpec",
    "SGCClassifier",
    "SelectionError",
    "Split",
    "TargetSet",
    "TrainedModel",
    "TrainingDivergedError",
    "aggregate",
    "apply_plan",
    "attack_fga",
    "attack_l1d_rnd",
    "attack_nettack_lite",
    "attack_rnd",
    "cross_entropy",
    "default_surrogate_grid",
    "default_victim_grid",
    "degree",
    "derive_seed",
    "forward_gcn2",
    "forward_sgc",
    "get_attack",
    "influence_score",
    "jaccard_prune",
    "load_graph",
    "load_model",
    "loss_and_grads",
    "margin",
    "node_select",
    "normalize_adjacency",
    "random_split",
    "run_benchmark",
    "save_model",
    "score_evasion",
    "score_poison",
    "select",
    "synthetic_sbm",
    "train",
    "write_graph",
    "__version__",
]
