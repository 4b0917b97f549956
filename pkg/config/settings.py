"""
Configuration settings for the Lie algebroid field theory engine
Values can be overridden through environment variables or a local .env file
"""
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Application
    app_name: str = "Algebroid Field Engine"
    debug: bool = False
    log_level: str = "WARNING"

    # Tolerances
    default_tol: float = 1e-8          # CLI --tol
    validate_tol: float = 1e-10        # structure equation checks
    holonomy_tol: float = 1e-8         # max |M| for a holonomic second jet
    regularity_threshold: float = 1e-12  # relative to the Hessian max-norm

    # Legendre inversion (damped Newton)
    newton_tol: float = 1e-12
    newton_max_iter: int = 100
    newton_min_step: float = 2.0 ** -20

    # Random sampling of base points
    sample_points: int = 50
    sample_low: float = -1.0
    sample_high: float = 1.0
    random_seed: int = 0

    # Field residual reports
    include_boundary: bool = False

    # Shipped presets
    presets_dir: str = "presets"

    class Config:
        env_file = ".env"
        case_sensitive = False


# Global settings instance
settings = Settings()
