import numpy as np
import pytest

from roomev import nn, plant
from roomev import surrogate as sg

SMALL = dict(lookback=5, n_layers=1, n_hidden=8, sigma_i=0.0)


@pytest.fixture(scope="session")
def small_frame():
    return sg.Frame.from_trace(plant.generate_history(plant.PlantConfig(), 14, seed=5))


def _zero(spec, frame):
    net = nn.RecurrentNet(len(spec.inputs), len(spec.outputs), spec.n_layers, spec.n_hidden, spec.cell,
                          zero_head=True)
    return sg.SurrogateModel(spec, sg.fit_stats(frame, spec), net=net)


@pytest.fixture(scope="session")
def frozen_model(small_frame):
    """Full model whose networks output zero deltas, so every signal holds its last value."""
    return sg.FullRoomModel(_zero(sg.weather_spec(**SMALL), small_frame),
                            _zero(sg.room_spec(**SMALL), small_frame))


@pytest.fixture(scope="session")
def coeffs():
    from roomev.battery import BatteryCoefficients

    return BatteryCoefficients(-0.01, 0.05, -0.02)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
