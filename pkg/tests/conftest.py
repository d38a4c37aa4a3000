import numpy as np
import pytest
import torch
from hypothesis import settings

from textinpaint.torchutil import configure_threads

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    configure_threads(1, deterministic=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_model():
    """An untrained but complete generator at micro size, for plumbing tests."""
    from textinpaint.config import AutoencoderConfig, ConditionConfig, DenoiserConfig
    from textinpaint.model import build
    from textinpaint.schedule import build_schedule

    return build(
        AutoencoderConfig(hidden=8),
        ConditionConfig(dim=16, layers=1, heads=2),
        DenoiserConfig(channels=16, heads=2, groups=4),
        build_schedule(100, 1e-4, 0.02),
        seed=3,
    )


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def record():
    """Log one acceptance line: ``record(number, name, passed, detail)``."""

    def _record(number: int, name: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def pytest_configure(config):
    torch.set_num_threads(1)
