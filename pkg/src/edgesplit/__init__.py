"""Carbon-aware edge/server DNN partitioning with shift-weighted conformal prediction."""

__version__ = "0.1.0"

from ._kernels import BACKEND, NUMBA_AVAILABLE
from .conformal import (CalibrationSample, CalibrationSet, PredictionInterval, ScoredCalibration, build_interval,
                        nonconformity_score, score_calibration, vanilla_quantile, weighted_quantile,
                        weighted_quantiles)
from .cost_model import (CONTEXT_FIELDS, Contention, CostBreakdown, CostModel, DnnProfile, LayerProfile,
                         ObjectiveWeights, PowerModel, SystemContext, objective_q, optimal_partition)
from .decision import (NeurosurgeonModel, baseline_cloud_only, baseline_edge_only, baseline_neurosurgeon,
                       choose_adaptive, choose_mean, choose_random, fallback)
from .errors import *  # noqa: F401,F403
from .pipeline import Pipeline, evaluate
from .predictor import (OracleModel, PredictorModel, TrainingConfig, TrainingSample, TrainingSet,
                        implicit_argmin, predict_q, train)
from .profiles import get_profile, resnet18_blocks, toy5
from .replay import ScenarioConfig, ScenarioReport, replay_scenario
from .shift import (GaussianDensity, UniformBoxDensity, fit_gaussian, fit_uniform, likelihood_ratio,
                    normalized_weights)
from .simulator import (CarbonTrace, ContextBox, SimulatedLink, estimate_bandwidth, load_carbon_trace,
                        synth_carbon_trace)
