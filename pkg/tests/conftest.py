from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from ssibridge.clock import FixedClock
from ssibridge.crypto import Jwk, seeded_rng
from ssibridge.scenarios import ScenarioConfig, World

settings.register_profile(
    "ssibridge", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("ssibridge")


@pytest.fixture
def clock() -> FixedClock:
    return FixedClock(1_750_000_000)


@pytest.fixture
def issuer_key() -> Jwk:
    return Jwk.generate("issuer-1", seeded_rng(1, "issuer"))


@pytest.fixture
def world():
    w = World(ScenarioConfig(seed=7))
    yield w
    w.close()


def pytest_terminal_summary(terminalreporter):
    from support import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
