from __future__ import annotations

from pathlib import Path

import pytest

from topogen.loop_layout import generate_design_space

CACHE_DIR = Path(__file__).parent / "_cache"


@pytest.fixture(scope="session")
def cache_dir() -> Path:
    CACHE_DIR.mkdir(exist_ok=True)
    return CACHE_DIR


@pytest.fixture(scope="session")
def loop3_space():
    return generate_design_space(3)


@pytest.fixture(scope="session")
def loop4_space():
    return generate_design_space(4)


@pytest.fixture(scope="session")
def loop6_space():
    return generate_design_space(6)
