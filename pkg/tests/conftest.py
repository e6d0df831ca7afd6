import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LONG_ENV = "SPARSE_INV_LONG"


def pytest_collection_modifyitems(config, items):
    if os.environ.get(LONG_ENV):
        return
    skip = pytest.mark.skip(reason=f"long reproduction run; set {LONG_ENV}=1 to enable")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
