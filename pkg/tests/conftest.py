import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blockrl.envs import make_lock, make_random_block

settings.register_profile(
    "blockrl", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True,
)
settings.load_profile("blockrl")


def lock_three_layers(noise: float = 0.0, per_state: int = 2, actions: int = 2, seed: int = 0):
    """Two-state lock with H=3; uniform play keeps the good state with probability (1/|A|)^2."""
    return make_lock(3, actions, noise, per_state, seed)


@pytest.fixture
def lock():
    return lock_three_layers()[0]


@pytest.fixture
def small_random():
    return make_random_block((3, 3, 2, 6), 0.1, 4, n_concepts=5)[0]


def tiny_instance(seed: int, max_h: int = 3, max_s: int = 3, max_a: int = 2, extra_x: int = 3):
    """Random tiny Block MDP sized for brute-force oracles."""
    rng = np.random.default_rng(seed)
    H, S, A = int(rng.integers(1, max_h + 1)), int(rng.integers(1, max_s + 1)), int(rng.integers(1, max_a + 1))
    X = int(rng.integers(S, S + extra_x + 1))
    return make_random_block((H, S, A, X), 1e-6, seed, n_concepts=3, concentration=0.4)[0]


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULT_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
