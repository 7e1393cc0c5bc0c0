import numpy as np
import pytest
from hypothesis import settings

from mmwsched.scene import SceneConfig, SiteConfig, UserConfig

settings.register_profile("repo", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("repo")

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one acceptance line: acceptance(name, passed, detail)."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"\n[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


def open_config(**kw) -> SceneConfig:
    """Street-sized area without buildings or moving obstacles."""
    kw.setdefault("buildings", [])
    kw.setdefault("densities", {})
    return SceneConfig(**kw)


def static_user(x=150.0, y=40.0) -> UserConfig:
    return UserConfig(region=(x, y, x, y), directions_deg=(0.0,), speed_kmh=0.0)


def single_ap(position=(50.0, 40.0, 10.0), boresight=0.0) -> list[SiteConfig]:
    return [SiteConfig(position, boresight)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
