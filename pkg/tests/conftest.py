from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from navafford.scenegen import (AssetCatalog, AssetEntry, Configuration, FurniturePlacement, Obstacle, SceneSpec,
                                Target, World, default_catalog, generate_configurations, generate_scene)

settings.register_profile("dev", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture(scope="session")
def catalog() -> AssetCatalog:
    return default_catalog()


@pytest.fixture(scope="session")
def scene(catalog) -> SceneSpec:
    return generate_scene(11, catalog, 0)


@pytest.fixture(scope="session")
def configs(scene, catalog) -> list[Configuration]:
    return generate_configurations(scene, 11, 6, catalog)


def bare_world(obstacles=(), target_xy=(1.0, 0.55), target_z=0.9) -> World:
    """One 2 m counter along the wall, one bottle on it, optional ``(asset name, xy)`` obstacles."""
    cat = default_catalog()
    counter = AssetEntry("furniture", "long_counter", 2.0, 0.6, 0.9, "floor", "counter")
    scene = SceneSpec(0, 6.0, 0.9, (FurniturePlacement(counter, 0.0),), ())
    bottle = cat.get("bottle_a")
    target = Target(100, bottle, (target_xy[0], target_xy[1], target_z), (0.0, 1.0), False)
    obs = tuple(Obstacle(200 + i, cat.get(name), xy, 0.0) for i, (name, xy) in enumerate(obstacles))
    return World(scene, Configuration(0, 0, (target,), obs, 100))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def make_world():
    return bare_world


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_line():
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""
    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
