import numpy as np
import pytest
from hypothesis import strategies as st

from kstruct.models import ModelSpace


@st.composite
def spaces(draw, max_points=20, max_complexity=30, max_loss=10.0):
    k = draw(st.integers(1, max_points))
    cs = draw(st.lists(st.integers(1, max_complexity), min_size=k, max_size=k, unique=True))
    losses = draw(st.lists(st.floats(0.0, max_loss, allow_nan=False), min_size=k, max_size=k))
    return ModelSpace.from_pairs(cs, losses)


def two_point(c1, l1, c2, l2):
    return ModelSpace.from_pairs([c1, c2], [l1, l2])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
