"""PAC policy identification in deterministic episodic MDPs by action elimination."""
from .flow import Cut, Flow, extract_policy_cover, flow_value_of, min_flow
from .instances import (gen_bandit, gen_chain, gen_cover_elimination, gen_hard_worst_case,
                        gen_random_layered, gen_random_tree, gen_regret_vs_bpi,
                        gen_visits_vs_gap, kappa_bound, theorem1_lower_bound, tree_lower_bound)
from .learner import BudgetExceeded, LearnerState, RunResult, run_eprl
from .mdp import (ActionSpec, DeterministicMdp, Policy, compute_gaps, is_tree_based,
                  optimal_values, policy_values, rollout)

__version__ = "0.1.0"

__all__ = [
    "ActionSpec", "BudgetExceeded", "Cut", "DeterministicMdp", "Flow", "LearnerState", "Policy",
    "RunResult", "compute_gaps", "extract_policy_cover", "flow_value_of", "gen_bandit",
    "gen_chain", "gen_cover_elimination", "gen_hard_worst_case", "gen_random_layered",
    "gen_random_tree", "gen_regret_vs_bpi", "gen_visits_vs_gap", "is_tree_based", "kappa_bound",
    "min_flow", "optimal_values", "policy_values", "rollout", "run_eprl", "theorem1_lower_bound",
    "tree_lower_bound",
]
