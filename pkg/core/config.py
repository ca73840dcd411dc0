import os
from typing import Optional, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configuración de la aplicación"""

    # Configuración general
    log_level: str = "INFO"
    threads: int = os.cpu_count() or 1
    seed: int = 2024

    # Configuración de nuisances
    nuisance_folds: int = 2
    clip: float = 0.01
    ridge_grid: Tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
    inner_folds: int = 3
    source_interaction: bool = True

    # Configuración de la penalización y del solver
    penalty: str = "mcp"
    gamma: Optional[float] = None
    penalize_intercepts: bool = False
    grid_size: int = 20
    lambda_min_ratio: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 10000
    warm_start: str = "lambda2"

    # Configuración de la selección de parámetros
    tuning: str = "cv"
    tuning_folds: int = 5

    # Configuración de la inferencia
    bootstrap_reps: int = 500
    bootstrap_rescale: bool = True
    retune_bootstrap: bool = False
    level: float = 0.95
    verdict_includes_intercept: bool = False

    # Configuración de la simulación
    calibration_draws: int = 100000

    model_config = SettingsConfigDict(env_file=".env", env_prefix="HTEFUSE_", extra="ignore")


# Instancia global de configuración
settings = Settings()
