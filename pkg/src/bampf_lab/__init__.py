"""Tabular Bayes-adaptive MDP laboratory.

Build BAMDPs from finite priors over finite MDPs, plan Bayes-optimally,
simulate suboptimal learners, and apply and certify potential-based
pseudo-reward shaping over histories.
"""

from bampf_lab.errors import (
    ArgumentError,
    BampfLabError,
    CapacityError,
    ImpossibleEvidenceError,
    ValidationError,
)
from bampf_lab.mdp import (
    FiniteMdp,
    StationaryPolicy,
    ValueFunction,
    enumerate_deterministic_policies,
    episodic_wrapper,
    policy_evaluation,
    value_iteration,
)
from bampf_lab.bamdp import (
    AugmentedState,
    Belief,
    History,
    PlannerConfig,
    PlanResult,
    PriorMixture,
    decompose_value,
    expected_reward,
    initial_state,
    plan_bayes_optimal,
    posterior_update,
    successor_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "AugmentedState",
    "BampfLabError",
    "Belief",
    "CapacityError",
    "FiniteMdp",
    "History",
    "ImpossibleEvidenceError",
    "PlanResult",
    "PlannerConfig",
    "PriorMixture",
    "StationaryPolicy",
    "ValidationError",
    "ValueFunction",
    "decompose_value",
    "enumerate_deterministic_policies",
    "episodic_wrapper",
    "expected_reward",
    "initial_state",
    "plan_bayes_optimal",
    "policy_evaluation",
    "posterior_update",
    "successor_distribution",
    "value_iteration",
]
