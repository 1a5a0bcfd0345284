import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from flowopt.ingest import SynthSpec, split_holdout, synth_generate

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_ds():
    return synth_generate(SynthSpec(3, 20), seed=5)


@pytest.fixture(scope="session")
def small_split(small_ds):
    return split_holdout(small_ds, 0.25, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
