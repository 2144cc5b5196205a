import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cesim.model import ChannelRealization, Dimensions, PhaseSchedule, SymbolFrame

settings.register_profile(
    "cesim", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("cesim")


def make_instance(seed, N=3, M=2, L=2, T=5, energies=None, alpha=1.0):
    """Random channel, feasible schedule and symbols; small enough for naive loops."""
    rng = np.random.default_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dims = Dimensions(N, M, L, T)
    taps = (rng.standard_normal((M, N, L)) + 1j * rng.standard_normal((M, N, L))) / np.sqrt(2 * L)
    history = rng.uniform(-np.pi, np.pi, (N, L - 1))
    anchor = history[:, -1] if L > 1 else np.zeros(N)
    angles = anchor[:, None] + np.cumsum(rng.uniform(-alpha * np.pi, alpha * np.pi, (N, T)), axis=1)
    symbols = (rng.standard_normal((M, T)) + 1j * rng.standard_normal((M, T))) / np.sqrt(2)
    if energies is None:
        energies = rng.uniform(0.2, 3.0, M)
    return ChannelRealization(taps, dims), PhaseSchedule(angles, history), SymbolFrame(symbols, energies)


@pytest.fixture
def instance():
    return make_instance(0)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
