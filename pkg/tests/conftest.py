import warnings

import pytest
from hypothesis import HealthCheck, settings

from subpop.errors import CancellationWarning

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_cancellation():
    # tests that check the warning use pytest.warns, which overrides this
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CancellationWarning)
        yield
