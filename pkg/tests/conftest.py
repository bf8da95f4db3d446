import os

import pytest
from hypothesis import HealthCheck, settings

from conslaw.benchmarks import make_system, simulate
from conslaw.harness import default_t_end

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SYSTEMS = ("volpert", "two_laws", "oxidation", "no_laws", "mapk")


@pytest.fixture(scope="session")
def clean_run():
    """Cached clean simulations keyed by (system, N)."""
    cache = {}

    def get(name, n):
        if (name, n) not in cache:
            cache[(name, n)] = simulate(make_system(name), default_t_end(name), n)
        return cache[(name, n)]

    return get
