"""Shared fixtures; scenario runs are session-scoped because they are the
expensive part of the suite and several test files read the same artifacts."""

from __future__ import annotations

import time

import pytest

from roughmetric import make_domain
from roughmetric.scenarios import default_config, run_scenario


@pytest.fixture(scope="session")
def unit_torus():
    return make_domain("torus", 2, 1.0, 64)


@pytest.fixture(scope="session")
def torus2():
    return make_domain("torus", 2, 2.0, 128)


@pytest.fixture(scope="session")
def unit_box():
    return make_domain("box", 2, 1.0, 64)


def _timed_run(scenario: str, tmp_path_factory, workers: int = 1):
    out = tmp_path_factory.mktemp(f"run_{scenario.lower()}")
    cfg = default_config(scenario, str(out))
    start = time.perf_counter()
    summary = run_scenario(cfg, workers=workers)
    elapsed = time.perf_counter() - start
    return summary, elapsed, out


@pytest.fixture(scope="session")
def s1_run(tmp_path_factory):
    return _timed_run("S1", tmp_path_factory)


@pytest.fixture(scope="session")
def s2_run(tmp_path_factory):
    return _timed_run("S2", tmp_path_factory)


@pytest.fixture(scope="session")
def s3_run(tmp_path_factory):
    return _timed_run("S3", tmp_path_factory)


@pytest.fixture(scope="session")
def s4_run(tmp_path_factory):
    return _timed_run("S4", tmp_path_factory)


@pytest.fixture(scope="session")
def s5_run(tmp_path_factory):
    return _timed_run("S5", tmp_path_factory)
