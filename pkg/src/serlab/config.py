# File: src/serlab/config.py
# Description: Numerical defaults, environment settings and constellation file loading
# Author: serlab developers
# Created: 2026-10-19

from pathlib import Path
from typing import List, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from serlab.error_handling import InvalidInputError


class ConstellationFile(BaseModel):
    """
    On-disk description of a constellation.

    Business Purpose: Lets users run every check on their own signal sets
    without writing Python, using a small JSON (or YAML) document.

    Example:
        {"n": 2, "points": [[1, 0], [0, 1], [-1, 0], [0, -1]], "rescale": true}
    """
    n: int = Field(ge=1)
    points: List[List[float]]
    priors: Optional[List[float]] = None
    rescale: bool = False

    @field_validator('points')
    @classmethod
    def validate_point_count(cls, v):
        """At least two points are needed for a detection problem."""
        if len(v) < 2:
            raise ValueError(f"need at least 2 points, got {len(v)}")
        return v


class Settings(BaseSettings):
    """
    Library-wide numerical settings loaded from environment variables.

    Business Purpose: Centralizes tolerances, sample budgets and capability
    limits so experiments can be tightened or relaxed without code changes.

    Example:
        settings = Settings()
        print(f"Bound checks use {settings.bound_sigma_k} standard errors")
    """
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        populate_by_name=True,
        extra="ignore",
    )

    # Monte Carlo
    default_samples: int = Field(default=100_000, alias="SERLAB_DEFAULT_SAMPLES")
    default_seed: int = Field(default=7, alias="SERLAB_DEFAULT_SEED")
    mc_chunk_size: int = Field(default=65_536, alias="SERLAB_MC_CHUNK_SIZE")
    workers: int = Field(default=1, alias="SERLAB_WORKERS")

    # Verification
    bound_sigma_k: float = Field(default=4.0, alias="SERLAB_BOUND_SIGMA_K")
    inflection_sigma_k: float = Field(default=3.0, alias="SERLAB_INFLECTION_SIGMA_K")
    log_concavity_sigma_k: float = Field(default=4.0, alias="SERLAB_LOG_CONCAVITY_SIGMA_K")
    bound_abs_tol: float = Field(default=1e-12, alias="SERLAB_BOUND_ABS_TOL")

    # Quadrature
    quadrature_abs_tol: float = Field(default=1e-9, alias="SERLAB_QUADRATURE_ABS_TOL")
    quadrature_box_sigmas: float = Field(default=10.0, alias="SERLAB_QUADRATURE_BOX_SIGMAS")
    fading_abs_tol: float = Field(default=1e-10, alias="SERLAB_FADING_ABS_TOL")
    quadrature_limit: int = Field(default=200, alias="SERLAB_QUADRATURE_LIMIT")
    quadrature_max_refinements: int = Field(default=3, alias="SERLAB_QUADRATURE_MAX_REFINEMENTS")

    # Decision region geometry
    vertex_max_dim: int = Field(default=4, alias="SERLAB_VERTEX_MAX_DIM")
    vertex_max_points: int = Field(default=64, alias="SERLAB_VERTEX_MAX_POINTS")
    vertex_max_subsets: int = Field(default=2_000_000, alias="SERLAB_VERTEX_MAX_SUBSETS")

    # Optimizers
    allocation_sum_tol: float = Field(default=1e-10, alias="SERLAB_ALLOCATION_SUM_TOL")
    allocation_inner_tol: float = Field(default=1e-12, alias="SERLAB_ALLOCATION_INNER_TOL")
    allocation_floor_snr: float = Field(default=1e-12, alias="SERLAB_ALLOCATION_FLOOR_SNR")
    inflection_rel_tol: float = Field(default=1e-8, alias="SERLAB_INFLECTION_REL_TOL")
    inflection_scan_points: int = Field(default=257, alias="SERLAB_INFLECTION_SCAN_POINTS")
    tangent_max_expansions: int = Field(default=60, alias="SERLAB_TANGENT_MAX_EXPANSIONS")
    tangent_scan_high: float = Field(default=1e4, alias="SERLAB_TANGENT_SCAN_HIGH")
    concavity_tol: float = Field(default=1e-7, alias="SERLAB_CONCAVITY_TOL")

    # Logging
    environment: str = Field(default="development", alias="SERLAB_ENVIRONMENT")
    log_level: str = Field(default="INFO", alias="SERLAB_LOG_LEVEL")
    log_dir: str = Field(default="~/.serlab/logs", alias="SERLAB_LOG_DIR")


def load_constellation_file(config_path: str) -> ConstellationFile:
    """
    Load a constellation description from a JSON or YAML file.

    Business Purpose: Reads user signal sets from disk; JSON is a subset of
    YAML, so one parser serves both formats.

    Args:
        config_path: Path to the constellation file

    Returns:
        Validated ConstellationFile

    Raises:
        InvalidInputError: If the file is missing, unparsable or invalid

    Example:
        spec = load_constellation_file("qam16.json")
        print(spec.n, len(spec.points))
    """
    config_file = Path(config_path).expanduser()

    if not config_file.exists():
        raise InvalidInputError(
            f"Constellation file not found: {config_path}",
            context={'path': str(config_file)},
        )

    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
        return ConstellationFile(**(data or {}))
    except (yaml.YAMLError, ValidationError, TypeError) as e:
        raise InvalidInputError(
            f"Invalid constellation file {config_path}: {e}",
            context={'path': str(config_file)},
        ) from e


def get_settings() -> Settings:
    """
    Get library settings.

    Returns:
        Settings object populated from the environment and .env
    """
    return Settings()


# Global instance for easy access
settings = get_settings()
