import os
import sys

import pytest

# Add the package directory to the Python path
package_path = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if package_path not in sys.path:
    sys.path.insert(0, package_path)

from environments import (
    DecisionAutomatonEnv,
    LogitDuopolyEnv,
    PDGame,
    PrisonersDilemmaEnv,
    stochastic_params_from_xy,
)
from models import AgentSpec, SimConfig
from presets import parse_config

from tests.fixtures.sample_data import MINIMAL_PD_CONFIG


@pytest.fixture
def pd_env():
    """Deterministic prisoner's dilemma, x=2.5, y=-0.5"""
    return PrisonersDilemmaEnv(PDGame(x=2.5, y=-0.5))


@pytest.fixture
def stochastic_pd_env():
    """Factory for stochastic dilemmas with x=2.5, y=0, V=5"""

    def _create(mode="correlated"):
        channel = stochastic_params_from_xy(2.5, 0.0, 5.0, mode=mode)
        return PrisonersDilemmaEnv(PDGame(2.5, 0.0, "stochastic"), channel)

    return _create


@pytest.fixture
def decision_env():
    return DecisionAutomatonEnv(x=1.0, y=-0.5, initial_state=2)


@pytest.fixture
def duopoly_env():
    return LogitDuopolyEnv()


@pytest.fixture
def make_spec():
    """Factory for agent specs with two-action defaults"""

    def _create(alpha=0.5, epsilon=0.1, delta=0.95, bias=0.0, distortion=(1.0, 0.0)):
        return AgentSpec(
            alpha=alpha,
            epsilon=epsilon,
            delta=delta,
            bias=bias,
            distortion=tuple(distortion),
        )

    return _create


@pytest.fixture
def make_sim():
    """Factory for simulation configs with short horizons"""

    def _create(
        horizon=300,
        num_paths=4,
        initial_q=((0.95, 1.0), (0.95, 1.0)),
        master_seed=11,
        trace_level="aggregates",
        window=None,
    ):
        return SimConfig(
            horizon=horizon,
            num_paths=num_paths,
            initial_q=tuple(tuple(q) for q in initial_q),
            master_seed=master_seed,
            trace_level=trace_level,
            window=window,
        )

    return _create


@pytest.fixture
def minimal_config():
    return parse_config(MINIMAL_PD_CONFIG, source="tiny-pd.yaml")


@pytest.fixture
def config_file(tmp_path):
    """Write YAML text to a temporary config file and return its path"""

    def _write(text, name="run.yaml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write
