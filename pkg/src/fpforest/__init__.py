"""Feature-partitioned tree ensembles: training, L0 attack evaluation, and
robustness certification."""

from .attack import (
    AttackBudget,
    AttackResult,
    ThresholdIndex,
    accuracy_under_attack,
    enumerate_attacks,
    find_attack,
    relevant_thresholds,
)
from .certify import (
    CertificationReport,
    CertStatus,
    CoverInstance,
    build_cover,
    cascade_evaluate,
    elb_accuracy,
    elb_max_cover,
    flb_accuracy,
    flb_cover_bound,
    is_certified_robust,
    needed_wrong,
)
from .data import Dataset, SplitSpec, load_csv, majority_fraction, project, save_csv, split
from .model import (
    Forest,
    ForestMeta,
    Leaf,
    Split,
    TraversalStep,
    accuracy,
    load_forest,
    predict_forest,
    predict_tree,
    save_forest,
    traversal_path,
)
from .training import (
    Partition,
    TrainConfig,
    fpf_train,
    overlap_count,
    random_partition,
    rf_train,
    rsm_train,
    train_tree,
)

__version__ = "0.1.0"
