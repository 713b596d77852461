import numpy as np
import pytest

from inandout.geometry import Ball, Box, Ellipsoid, Polytope, Simplex
from inandout.sampler import make_rng


class HalfSpace:
    """Unbounded test body {x : x[axis] <= 0}; only membership is offered."""

    def __init__(self, d, axis=0):
        self.d = d
        self.axis = axis
        self.center = np.zeros(d)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(x[self.axis] <= 0)
        return x[:, self.axis] <= 0


def square_polytope():
    A = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    return Polytope(A, np.ones(4))


def zoo():
    return [
        Ball(3, 1.5),
        Box(4),
        Box(2, [-1, -2], [1.5, 2]),
        Simplex(3),
        Ellipsoid([1.0, 2.0, 3.0]),
        square_polytope(),
        Polytope(np.vstack([np.eye(3), -np.eye(3), [[1, 1, 1]]]),
                 np.array([2, 2, 2, 2, 2, 2, 3.0])),
    ]


@pytest.fixture
def rng():
    return make_rng(20260101)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
