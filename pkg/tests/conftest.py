import numpy as np
import pytest

from nfbm import StepFunction


def random_step(rng, T=1.0, pieces=4):
    inner = np.sort(rng.uniform(0.02 * T, 0.98 * T, pieces - 1))
    return StepFunction(np.concatenate([[0.0], inner, [T]]), rng.normal(size=pieces))


def three_se(samples):
    samples = np.asarray(samples)
    return 3.0 * samples.std(ddof=1) / np.sqrt(samples.size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
