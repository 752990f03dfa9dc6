import os

import pytest
from hypothesis import HealthCheck, settings

from nfvscale.domain import FlowSpec, Protocol, VnfProfile

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def const_flow(fid: int, vt: int, start: int, duration: int, rate: float) -> FlowSpec:
    return FlowSpec(fid, vt, Protocol.TCP, start, duration, (float(rate),) * duration)


@pytest.fixture
def profile10() -> VnfProfile:
    return VnfProfile(per_packet_cost=1.0, max_queue_len=10, base_capacity=10)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"CRITERION {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
