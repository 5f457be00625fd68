"""Deterministic round-based simulator for tiered federated learning.

Eight strategies (weight-averaging families, hierarchical averaging,
two-way and three-way split training) run over a client/edge/cloud
topology with byte-exact communication accounting and a closed-form
cost model that the ledger is reconciled against.
"""
from .autodiff import Tape, Tensor, gradient_check
from .config import (
    COMPONENTS,
    DataSettings,
    ModelSettings,
    RunConfig,
    SweepSpec,
    TopologySettings,
    component_config,
    parse_config,
    parse_sweep,
    sweep_points,
)
from .data import Dataset, PairBatch, PartitionSpec, load_csv, make_blobs, make_pairs, partition
from .errors import ConfigError, ContractError, DimensionError, NumericError, TierflError
from .ledger import (
    GB,
    KINDS,
    STRATEGY_KINDS,
    CostModelInput,
    Ledger,
    LedgerSummary,
    MessageRecord,
    ReconcileReport,
    analytic_cost,
    reconcile,
    units_from_row,
)
from .losses import (
    contrastive_loss,
    contrastive_loss_rows,
    cosine_measure,
    cross_entropy,
    embedding_separation,
    iou_dice,
    macro_f1,
    pair_labels,
    proximal_term,
)
from .optim import Adam, Sgd
from .protocols import (
    RoundMetrics,
    RunResult,
    Schedule,
    Simulation,
    StrategyConfig,
    Topology,
    aggregate_fednova,
    aggregate_weighted,
    run_experiment,
    select_clients,
)
from .segments import (
    LayerSpec,
    SegmentParams,
    SplitPlan,
    build_segment,
    forward_segment,
    param_bytes,
    role_aware_split,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "COMPONENTS",
    "ConfigError",
    "ContractError",
    "CostModelInput",
    "DataSettings",
    "Dataset",
    "DimensionError",
    "GB",
    "KINDS",
    "Ledger",
    "LedgerSummary",
    "LayerSpec",
    "MessageRecord",
    "ModelSettings",
    "NumericError",
    "PairBatch",
    "PartitionSpec",
    "ReconcileReport",
    "RoundMetrics",
    "RunConfig",
    "RunResult",
    "STRATEGY_KINDS",
    "Schedule",
    "SegmentParams",
    "Sgd",
    "Simulation",
    "SplitPlan",
    "StrategyConfig",
    "SweepSpec",
    "Tape",
    "Tensor",
    "TierflError",
    "Topology",
    "TopologySettings",
    "aggregate_fednova",
    "aggregate_weighted",
    "analytic_cost",
    "build_segment",
    "component_config",
    "contrastive_loss",
    "contrastive_loss_rows",
    "cosine_measure",
    "cross_entropy",
    "embedding_separation",
    "forward_segment",
    "gradient_check",
    "iou_dice",
    "load_csv",
    "macro_f1",
    "make_blobs",
    "make_pairs",
    "pair_labels",
    "param_bytes",
    "parse_config",
    "parse_sweep",
    "partition",
    "proximal_term",
    "reconcile",
    "role_aware_split",
    "run_experiment",
    "select_clients",
    "sweep_points",
    "units_from_row",
]
