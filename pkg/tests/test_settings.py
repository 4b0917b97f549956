import pytest

from app.algebroid import sample_points
from app.presets import get_preset
from config.settings import Settings, settings


def test_defaults():
    fresh = Settings(_env_file=None)
    assert fresh.default_tol == 1e-8
    assert fresh.validate_tol == 1e-10
    assert fresh.sample_points == 50
    assert fresh.include_boundary is False


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("VALIDATE_TOL", "1e-6")
    monkeypatch.setenv("include_boundary", "true")
    fresh = Settings(_env_file=None)
    assert fresh.validate_tol == 1e-6
    assert fresh.include_boundary is True


def test_env_file(tmp_path):
    env_file = tmp_path / ".env"
    env_file.write_text("NEWTON_MAX_ITER=7\nRANDOM_SEED=42\n", encoding="utf-8")
    fresh = Settings(_env_file=str(env_file))
    assert fresh.newton_max_iter == 7
    assert fresh.random_seed == 42


def test_sampling_follows_settings(monkeypatch):
    monkeypatch.setattr(settings, "sample_points", 9)
    monkeypatch.setattr(settings, "sample_high", 0.0)
    env = sample_points(get_preset("standard").model.spec)
    assert env["x1"].shape == (9,)
    assert (env["u1"] <= 0.0).all()


def test_invalid_override(monkeypatch):
    monkeypatch.setenv("SAMPLE_POINTS", "many")
    with pytest.raises(ValueError):
        Settings(_env_file=None)
