import numpy as np
import pytest

from pseudocount.density import QuantizedFrame


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_frame(rng, h, w, bins=8):
    return QuantizedFrame(rng.integers(0, bins, size=(h, w)), bins=bins)


def all_frames(h, w, bins):
    """Every frame of the given geometry, in lexicographic pixel order."""
    import itertools

    for values in itertools.product(range(bins), repeat=h * w):
        yield QuantizedFrame(np.array(values).reshape(h, w), bins=bins)


# Acceptance verdicts, one line per criterion, repeated in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
