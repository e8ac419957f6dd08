import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pytest

# Logs from the test run go to a scratch directory, not the project's logs/
os.environ.setdefault("LOG_DIR", tempfile.mkdtemp(prefix="wmprc-test-logs-"))

SRC = Path(__file__).resolve().parent.parent / "src"
sys.path.insert(0, str(SRC))

from estimator.model_core import ClusterAssignment, DesignMatrix, RobotRoster  # noqa: E402

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def random_rows(rng: np.random.Generator, k: int, m: int) -> np.ndarray:
    """M random 3-vs-3 rows over K robots."""
    x = np.zeros((m, k))
    for s in range(m):
        chosen = rng.choice(k, size=6, replace=False)
        x[s, chosen[:3]] = 1.0
        x[s, chosen[3:]] = -1.0
    return x


def roster_of(k: int) -> RobotRoster:
    return RobotRoster(tuple(f"frc{i + 1}" for i in range(k)))


def random_labels(rng: np.random.Generator, k: int, c: int) -> np.ndarray:
    """Random labels using every one of the c clusters."""
    labels = np.concatenate([np.arange(c), rng.integers(0, c, size=k - c)])
    return rng.permutation(labels)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20190420)


@pytest.fixture
def design_factory() -> Callable[..., DesignMatrix]:
    """
    Build a random instance: Y = X beta + noise, beta from ``strengths`` and
    ``labels`` when given, standard normal strengths otherwise.
    """

    def make(
        rng: np.random.Generator,
        k: int,
        m: int,
        strengths: Optional[Sequence[float]] = None,
        labels: Optional[Sequence[int]] = None,
        sigma: float = 1.0,
    ) -> DesignMatrix:
        x = random_rows(rng, k, m)
        if strengths is None:
            beta = rng.normal(0.0, 5.0, size=k)
        else:
            beta = np.asarray(strengths, dtype=float)[np.asarray(labels)]
        y = x @ beta + sigma * rng.normal(size=m)
        return DesignMatrix(x, y, roster_of(k))

    return make


@pytest.fixture
def separated_instance(design_factory, rng):
    """Twelve robots in three well separated clusters, low noise."""
    labels = np.repeat([0, 1, 2], 4)
    strengths = np.array([-30.0, 0.0, 30.0])
    design = design_factory(rng, 12, 60, strengths=strengths, labels=labels, sigma=1.0)
    return design, ClusterAssignment(labels, 3)
