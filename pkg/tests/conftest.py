from pathlib import Path

import numpy as np
import pytest
import yaml

from mftg import load_scenario

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"


def scenario_doc(family="deterministic_2p", agents=2, horizon=1, p=2, o=None,
                 a_bar=1.0, b_bar=None, q_bar=1.0, r_bar=1.0,
                 q_dev=1.0, r_dev=1.0, a_dev=None, b_dev=None,
                 noise=None, initial=None, mc=None):
    """Dict-form scenario builder used all over the tests."""
    doc = {
        "family": family,
        "agents": agents,
        "horizon": horizon,
        "p": p,
        "dynamics": {"a_bar": a_bar, "b_bar": b_bar if b_bar is not None else 1.0},
        "weights": {"q_bar": q_bar, "r_bar": r_bar},
        "initial": initial or {"mean": 1.0},
    }
    if o is not None:
        doc["o"] = o
    if family != "deterministic_2p":
        doc["weights"]["q_dev"] = q_dev
        doc["weights"]["r_dev"] = r_dev
        doc["noise"] = noise or {"kind": "gaussian", "sigma": 1.0}
    if family == "general_moment_2o2p":
        doc["dynamics"]["a_dev"] = a_dev if a_dev is not None else 1.0
        doc["dynamics"]["b_dev"] = b_dev if b_dev is not None else 1.0
    if mc is not None:
        doc["monte_carlo"] = mc
    return doc


def make_scenario(**kwargs):
    return load_scenario(yaml.safe_dump(scenario_doc(**kwargs)))


def random_deterministic(rng, max_agents=4, max_horizon=12, max_p=4):
    """Well-behaved random deterministic instance."""
    agents = int(rng.integers(1, max_agents + 1))
    horizon = int(rng.integers(1, max_horizon + 1))
    p = int(rng.integers(1, max_p + 1))
    sign = lambda: float(rng.choice([-1.0, 1.0]))
    return make_scenario(
        family="deterministic_2p",
        agents=agents,
        horizon=horizon,
        p=p,
        a_bar=float(rng.uniform(0.5, 1.3)) * sign(),
        b_bar=[float(rng.uniform(0.3, 2.0)) * sign() for _ in range(agents)],
        q_bar=[float(rng.uniform(0.5, 5.0)) for _ in range(agents)],
        r_bar=[float(rng.uniform(0.5, 5.0)) for _ in range(agents)],
        initial={"mean": float(rng.uniform(0.5, 5.0)) * sign()},
    )


@pytest.fixture(scope="session")
def det_two_agent():
    return load_scenario((SCENARIOS / "deterministic_two_agent.yaml").read_text())


@pytest.fixture(scope="session")
def additive_two_agent():
    return load_scenario((SCENARIOS / "additive_two_agent.yaml").read_text())


@pytest.fixture(scope="session")
def multiplicative_two_agent():
    return load_scenario((SCENARIOS / "multiplicative_two_agent.yaml").read_text())


@pytest.fixture(scope="session")
def general_two_agent():
    return load_scenario((SCENARIOS / "general_moment_two_agent.yaml").read_text())


@pytest.fixture(scope="session")
def one_step_unit():
    """Hand-derived quartic one-step game: gains 1/3, leading coefficient 83/81."""
    return make_scenario(agents=2, horizon=1, p=2, b_bar=[1.0, 1.0])


def assert_close(actual, expected, rtol=0.0, atol=0.0):
    np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)
