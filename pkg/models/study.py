from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class SimulationConfig(BaseModel):
    """Parámetros del proceso generador de datos RCT+RWD"""

    model_config = ConfigDict(frozen=True)

    n: int = Field(2500, ge=10)
    p: int = Field(20, ge=8, description="Número de covariables (sin intercepto)")
    signal: float = 2.0
    confounded: bool = True
    target_cr: float = Field(0.2, gt=0, lt=1, description="Tasa de censura objetivo")
    error_dist: Literal["normal", "logistic"] = "normal"
    pr_s1: float = Field(0.2, gt=0, lt=1, description="P(S = 1)")
    pr_a: float = Field(0.5, gt=0, lt=1, description="P(A = 1)")
    rho: float = Field(0.3, ge=0, lt=1, description="Cov(X_i, X_j) = rho^|i-j|")
    seed: int = 0


class SimulationTruth(BaseModel):
    """Coeficientes verdaderos (longitud p + 1, intercepto nulo) y ventana de censura"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: np.ndarray
    beta: np.ndarray
    confounded: bool
    t0: float
    t1: float

    @property
    def support(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Soportes verdaderos (D1, D2) en la indexación con intercepto en 0"""
        return tuple(int(j) for j in np.flatnonzero(self.alpha)), tuple(int(j) for j in np.flatnonzero(self.beta))

    def to_dict(self) -> Dict:
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "confounded": self.confounded,
            "t0": self.t0,
            "t1": self.t1,
        }


class Metrics(BaseModel):
    """Métricas de un estimador a lo largo de las réplicas"""

    model_config = ConfigDict(frozen=True)

    estimator: str
    rmse: float = Field(..., ge=0)
    fdr: float = Field(..., ge=0, le=1)
    tir: Optional[float] = Field(None, ge=0, le=1, description="Solo para estimadores con bloque beta")
    n_replicates: int
    n_failed: int = 0


class CoefficientSummary(BaseModel):
    """Bias, SD, SE y CP de un coeficiente de alfa"""

    model_config = ConfigDict(frozen=True)

    estimator: str
    coefficient: str
    truth: float
    mean: float
    bias: float
    sd: float
    se: Optional[float] = None
    cp: Optional[float] = Field(None, ge=0, le=1)


class ReplicateRecord(BaseModel):
    """Resultado de una réplica; todas las tablas del informe se recalculan a partir de estos registros"""

    replicate: int
    seed: int
    censoring_rate: float
    alpha: Dict[str, List[float]] = Field(default_factory=dict)
    beta: Dict[str, Optional[List[float]]] = Field(default_factory=dict)
    confounded: Dict[str, bool] = Field(default_factory=dict)
    se: Dict[str, List[float]] = Field(default_factory=dict, description="Error estándar bootstrap de alfa")
    failures: Dict[str, str] = Field(default_factory=dict)


class StudyReport(BaseModel):
    """Informe de un estudio de simulación"""

    preset: Optional[str] = None
    config: SimulationConfig
    estimators: List[str]
    B: int
    seed: int
    level: float = 0.95
    bootstrap_reps: int = 0
    truth: Dict
    metrics: List[Metrics]
    coefficients: List[CoefficientSummary] = Field(default_factory=list)
    records: List[ReplicateRecord] = Field(default_factory=list, exclude=True)
    runtime_seconds: float = Field(0.0, exclude=True)

    @model_validator(mode="after")
    def _check(self) -> "StudyReport":
        if self.B < 1:
            raise ValueError("el estudio necesita al menos una réplica")
        return self

    def metric(self, estimator: str) -> Metrics:
        for m in self.metrics:
            if m.estimator == estimator:
                return m
        raise KeyError(estimator)

    def coefficient(self, estimator: str, name: str) -> CoefficientSummary:
        for c in self.coefficients:
            if c.estimator == estimator and c.coefficient == name:
                return c
        raise KeyError((estimator, name))
