"""
Shared fixtures: built-in presets, a seeded generator and exported spec files
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.presets import get_preset
from app.storage import export_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def so3():
    return get_preset("so3")


@pytest.fixture(scope="session")
def standard():
    return get_preset("standard")


@pytest.fixture(scope="session")
def standard_connection():
    return get_preset("standard_connection")


@pytest.fixture(scope="session")
def poisson_sigma():
    return get_preset("poisson_sigma")


@pytest.fixture(scope="session")
def atiyah():
    return get_preset("atiyah")


@pytest.fixture(scope="session")
def atiyah_u1():
    return get_preset("atiyah_u1")


@pytest.fixture(scope="session")
def harmonic_oscillator():
    return get_preset("harmonic_oscillator")


@pytest.fixture
def exported(tmp_path):
    """exported("so3") -> path of the preset written as a spec file"""
    def export(name: str):
        path = tmp_path / f"{name}.json"
        export_model(get_preset(name).model, path)
        return str(path)
    return export
