"""Adaptive ABAC authorization learning from owner feedback via contextual bandits."""

from .model import (
    AbacPolicy,
    AbacRule,
    AccessRequest,
    Attribute,
    AttributeFilter,
    AttributeSchema,
    DENY,
    Decision,
    PERMIT,
    SchemaError,
    filter_matches,
    policy_decide,
    rule_matches,
    validate_policy,
)
from .featurize import FeatureSpace, FeatureVector, State, build_feature_space, featurize, get_request, get_state
from .feedback import FeedbackRecord, Owner, OwnerModel, RewardWeights, reward, reward_items, reward_to_cost, simulate_feedback
from .learners import (
    BanditConfig,
    BanditLearner,
    CostSensitiveLearner,
    ips_cost_estimates,
    supervised_update,
)
from .planning import ValueHierarchy, closeness, get_lower_neighbors, get_upper_neighbors, plan_augment
from .warmstart import (
    WarmstartExample,
    apply_warmstart,
    init_from_capability_defaults,
    init_from_general_rules,
    init_from_log,
    init_from_user_defaults,
    merge_examples,
)
from .harness import ExperimentConfig, RunResult, progressive_validation_loss, run_shift, run_stream, windowed_loss

__version__ = "0.1.0"
