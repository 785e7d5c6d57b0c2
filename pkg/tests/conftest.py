import numpy as np
import pytest
from hypothesis import settings, strategies as st

from reward_geometry.mdp import Mdp, random_mdp

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")

# Small instances: every A**S stays at or below 256 so brute force is cheap.
SIZES = [(1, 1), (1, 2), (2, 2), (3, 2), (4, 2), (2, 3), (3, 3), (4, 3), (5, 3), (6, 2)]


@st.composite
def mdps(draw, sizes=SIZES, gammas=(0.5, 0.9), sparsity=(0.0, 0.3)):
    n_states, n_actions = draw(st.sampled_from(sizes))
    gamma = draw(st.sampled_from(gammas))
    sparse = draw(st.sampled_from(sparsity))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_mdp(n_states, n_actions, gamma, sparse, seed)


seeds = st.integers(0, 2**32 - 1)


@pytest.fixture
def one_state_two_actions():
    """Single self-looping state with two actions, gamma 0.5."""
    return Mdp(np.ones((1, 2, 1)), np.ones(1), 0.5)


@pytest.fixture
def arm_reward():
    """Pays 1 for action 0 and 0 for action 1."""
    return np.array([[[1.0], [0.0]]])


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion printed after the run.

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
