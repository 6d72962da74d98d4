"""Simulator and policy-optimization toolkit for traveling-maintainer
networks with condition monitoring."""

from .errors import (
    CompatibilityError,
    EnumerationCapError,
    IllegalActionError,
    MaintnetError,
    ValidationError,
)
from .mdp import (
    EngineerAction,
    Instance,
    JointAction,
    MAINTAIN,
    NetworkState,
    advance_time,
    apply_engineer_action,
    apply_joint_action,
    initial_state,
    legal_actions_engineer,
    legal_joint_actions,
    stage_cost,
    stage_cost_components,
    step,
    travel_to,
)
from .assignment import hungarian
from .policies import IdlePolicy, Policy, RandomPolicy
from .heuristics import (
    DecompositionPolicy,
    DispatchPolicy,
    ThresholdConfig,
    align_clusters_to_engineers,
    induced_subinstance,
    kmeans_clusters,
    rank_assets,
    reduce_ranking,
)
from .exact import (
    StateIndex,
    TablePolicy,
    enumerate_states,
    exact_policy_value,
    policy_iteration,
    value_iteration,
)
from .rollout import (
    Dataset,
    RolloutBudget,
    collect_dataset,
    estimate_q,
    improved_action,
    rollout_cost,
    sample_horizon,
)
from .features import featurize, featurize_f1, featurize_f2, featurize_f3, feature_dimension
from .learning import (
    NetworkPolicy,
    TrainHyperparams,
    TrainedNetwork,
    api_iterate,
    network_decide,
    train_classifier,
)
from .evaluate import EvaluationReport, evaluate_policy
from .transforms import add_engineer, remove_engineer, remove_machine
from .instances import list_shipped, load_instance, load_shipped, save_instance

__version__ = "0.1.0"
