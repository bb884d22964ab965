import numpy as np
import pytest

from dcesa.bayes import Prior, make_draws, prior_family
from dcesa.design import DesignSpec

BASE_LEVELS = (2, 2, 2, 3, 3, 3)


@pytest.fixture
def spec():
    return DesignSpec(BASE_LEVELS, 15, 2)


@pytest.fixture
def spec3():
    return DesignSpec(BASE_LEVELS, 15, 3)


@pytest.fixture
def small_spec():
    return DesignSpec((2, 3, 3), 6, 2)


@pytest.fixture
def family_prior(spec):
    return prior_family(1.0, 1.0, spec)


@pytest.fixture
def small_draws(small_spec):
    prior = Prior(np.zeros(small_spec.m), np.eye(small_spec.m))
    return make_draws(prior, "spherical_radial", seed=3, n_radial=2, n_rotations=2)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
