from __future__ import annotations

import numpy as np
import pytest

from simnn.dataset import derive_task, load_horse_colic


@pytest.fixture(scope="session")
def horse_colic():
    return load_horse_colic()


@pytest.fixture(scope="session")
def hc24(horse_colic):
    return derive_task(horse_colic, "HC24")


@pytest.fixture(scope="session")
def hc23(horse_colic):
    return derive_task(horse_colic, "HC23")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
