import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def bpsk_model():
    from macap.constellation import make_psk
    from macap.surface import RateModel
    return RateModel(make_psk(2), make_psk(2))


@pytest.fixture(scope="session")
def gauss_model():
    from macap.constellation import GAUSSIAN
    from macap.surface import RateModel
    return RateModel(GAUSSIAN, GAUSSIAN)


@pytest.fixture(scope="session")
def small_ensemble():
    from macap.channel import RicianSpec, sample_ensemble
    return sample_ensemble(RicianSpec(-6.88), RicianSpec(-6.88), 200, 11)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
