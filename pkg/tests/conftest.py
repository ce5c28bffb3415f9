import numpy as np
import pytest

from edgesplit.cost_model import CostModel, SystemContext
from edgesplit.predictor import TrainingConfig, train
from edgesplit.profiles import resnet18_blocks, toy5
from edgesplit.shift import fit_gaussian
from edgesplit.simulator import (DEFAULT_BOX, build_calibration_set, build_shifted_set, build_training_set)

# Measurement around which the default shifted test set is drawn.
DEFAULT_MEASUREMENT = SystemContext(bandwidth=10.0, server_gpu_util=0.6, edge_gpu_util=0.5, edge_gpu_freq=640.0,
                                    edge_cpu_util=0.4, edge_cpu_freq=1200.0, carbon_intensity=450.0)


@pytest.fixture
def toy():
    return toy5()


@pytest.fixture
def toy_model():
    return CostModel(toy5())


@pytest.fixture(scope="session")
def resnet_model():
    return CostModel(resnet18_blocks())


@pytest.fixture
def ref_ctx():
    """Reference conditions: identity scaling on the edge and server."""
    return SystemContext(bandwidth=10.0, server_gpu_util=0.0, edge_gpu_util=0.0, edge_gpu_freq=921.6,
                         edge_cpu_util=0.0, edge_cpu_freq=1479.0, carbon_intensity=400.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class Benchmark:
    """Default synthetic benchmark: 5k training contexts, 1k calibration, 1k shifted test."""

    def __init__(self, seed, cost_model, n_train=5000, n_cal=1000, n_test=1000):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.cost_model = cost_model
        self.training = build_training_set(cost_model, DEFAULT_BOX, n_train, 0.02, rng)
        self.calibration = build_calibration_set(cost_model, DEFAULT_BOX, n_cal, rng)
        gaussian = fit_gaussian(DEFAULT_MEASUREMENT, 0.2, DEFAULT_BOX.density())
        self.test = build_shifted_set(cost_model, gaussian, DEFAULT_BOX, n_test, rng)
        self.model = train(self.training, TrainingConfig(seed=seed))


_BENCHMARKS = {}


@pytest.fixture(scope="session")
def benchmark_for(resnet_model):
    """Session cache: training is the slow part, so each seed trains once."""

    def get(seed) -> Benchmark:
        if seed not in _BENCHMARKS:
            _BENCHMARKS[seed] = Benchmark(seed, resnet_model)
        return _BENCHMARKS[seed]

    return get


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(label, passed, detail):
        ACCEPTANCE_LINES.append(f"{label}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
