"""Deceptive policy synthesis for goal-reaching MDPs against inverse-RL adversaries."""
from .exceptions import DivergenceError, InfeasibleError, SpecError
from .mdp import (MDPSpec, MMDPSpec, OccupancyMeasure, StochasticPolicy, TrajectoryDataset,
                  build_product, occupancy_of_policy, policy_evaluation, policy_of_occupancy,
                  revenue, revenue_loss, sample_trajectories, value_iteration)
from .solver import (OccupancyPolytope, QuadraticPenalty, SolveReport, maximize_convex_quadratic,
                     solve_concave_qp, solve_optimal)
from .deception import (BoundReport, DeceptionConfig, DeceptivePolicy, deception_bound,
                        solve_baseline, synthesize, verify_bound)
from .irl import (ApprenticeshipLearning, DeepMaxEntIRL, FeatureMap, MaxEntIRL, RewardEstimate,
                  make_learner)
from .mtd import (ExperimentConfig, ExperimentReport, MetricWeights, MTDParams, build_mtd,
                  deception_metric, likelihoods, run_experiment)

__version__ = "0.1.0"
