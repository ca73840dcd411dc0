import hashlib
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import settings
from models.data import FoldAssignment

_ARRAYS = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class WeightVector(BaseModel):
    """Pesos de Stute sobre la ordenación de la muestra por tiempo"""

    model_config = _ARRAYS

    order: np.ndarray = Field(..., description="Permutación de índices ordenada por (T, 1 - delta, índice)")
    weights: np.ndarray = Field(..., description="Peso de la observación order[i]")

    def per_observation(self) -> np.ndarray:
        """Pesos en el orden original de la muestra"""
        out = np.empty_like(self.weights)
        out[self.order] = self.weights
        return out

    @property
    def total(self) -> float:
        return float(self.weights.sum())


class StepFunction(BaseModel):
    """Función escalonada continua por la derecha"""

    model_config = _ARRAYS

    jump_times: np.ndarray
    values: np.ndarray = Field(..., description="Valor en [jump_times[i], jump_times[i+1])")
    initial: float = Field(1.0, description="Valor antes del primer salto")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate([[self.initial], self.values])
        return padded[idx]

    def jumps(self) -> np.ndarray:
        """Masa de 1 - S en cada instante de salto"""
        previous = np.concatenate([[self.initial], self.values[:-1]])
        return previous - self.values


class PropensityMode(str, Enum):
    KNOWN = "known"
    LOGISTIC = "logistic"


class NuisanceConfig(BaseModel):
    """Configuración de las funciones nuisance (propensión y medias condicionales)"""

    model_config = ConfigDict(frozen=True)

    k_folds: int = Field(2, ge=2)
    propensity_mode: PropensityMode = PropensityMode.LOGISTIC
    known_e1: Optional[float] = Field(None, gt=0, lt=1, description="Propensión conocida en el RCT")
    known_e0: Optional[float] = Field(None, gt=0, lt=1, description="Propensión conocida en el RWD")
    ridge_grid: Tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
    clip: float = Field(0.01, gt=0, lt=0.5)
    inner_folds: int = Field(3, ge=2)
    source_interaction: bool = Field(True, description="Añadir S*X a la base de mu (las medias difieren entre fuentes)")

    @field_validator("ridge_grid")
    @classmethod
    def _positive(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(v <= 0 for v in value):
            raise ValueError("ridge_grid debe contener valores positivos")
        return tuple(sorted(value))

    @model_validator(mode="after")
    def _known_values(self) -> "NuisanceConfig":
        if self.propensity_mode == PropensityMode.KNOWN and (self.known_e1 is None or self.known_e0 is None):
            raise ValueError("el modo 'known' necesita known_e1 y known_e0")
        return self

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]


class NuisanceFit(BaseModel):
    """Predicciones fuera de fold de e, mu, mu0 y mu1"""

    model_config = _ARRAYS

    e_hat: np.ndarray
    mu_hat: np.ndarray
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    folds: FoldAssignment
    config: NuisanceConfig

    def subset(self, idx) -> "NuisanceFit":
        idx = np.asarray(idx, dtype=int)
        folds = self.folds
        sub_folds = folds.fold_of[idx]
        # Los folds de un subconjunto pueden quedar vacíos; se conserva la asignación original
        if np.unique(sub_folds).size == folds.k:
            folds = FoldAssignment(fold_of=sub_folds, k=folds.k, seed=folds.seed)
        return NuisanceFit(
            e_hat=self.e_hat[idx],
            mu_hat=self.mu_hat[idx],
            mu0_hat=self.mu0_hat[idx],
            mu1_hat=self.mu1_hat[idx],
            folds=folds,
            config=self.config,
        )


class PenaltyFamily(str, Enum):
    MCP = "mcp"
    SCAD = "scad"
    ADAPTIVE_LASSO = "alasso"


DEFAULT_GAMMA = {PenaltyFamily.MCP: 3.0, PenaltyFamily.SCAD: 3.7, PenaltyFamily.ADAPTIVE_LASSO: 1.0}


class PenaltySpec(BaseModel):
    """Familia de penalización rho(t; lambda)"""

    model_config = ConfigDict(frozen=True)

    family: PenaltyFamily = PenaltyFamily.MCP
    gamma: Optional[float] = None
    adaptive_weights: Optional[Tuple[float, ...]] = Field(None, description="Longitud 2q (bloques alfa y beta)")

    @model_validator(mode="before")
    @classmethod
    def _default_gamma(cls, data):
        if isinstance(data, dict) and data.get("gamma") is None:
            data = {**data, "gamma": DEFAULT_GAMMA[PenaltyFamily(data.get("family", PenaltyFamily.MCP))]}
        return data

    @model_validator(mode="after")
    def _check(self) -> "PenaltySpec":
        if self.family == PenaltyFamily.MCP and self.gamma <= 1:
            raise ValueError("MCP necesita gamma > 1")
        if self.family == PenaltyFamily.SCAD and self.gamma <= 2:
            raise ValueError("SCAD necesita gamma > 2")
        if self.adaptive_weights is not None and any(w < 0 for w in self.adaptive_weights):
            raise ValueError("los pesos adaptativos deben ser no negativos")
        return self

    def with_weights(self, weights) -> "PenaltySpec":
        return self.model_copy(update={"adaptive_weights": tuple(float(w) for w in weights)})


class Coefficients(BaseModel):
    """Solución (alfa, beta) en la escala original de las covariables"""

    model_config = _ARRAYS

    alpha: np.ndarray = Field(..., description="Bloque HTE, tau(X) = X'alfa, intercepto en 0")
    beta: Optional[np.ndarray] = Field(None, description="Bloque de confusión, u_c(X) = X'beta")
    theta_std: np.ndarray = Field(..., description="Coeficientes en la escala estandarizada del solver")
    objective: float
    iterations: int
    converged: bool
    history: Tuple[float, ...] = Field((), description="Objetivo al final de cada ciclo")

    @property
    def theta(self) -> np.ndarray:
        return self.alpha if self.beta is None else np.concatenate([self.alpha, self.beta])

    @property
    def df(self) -> int:
        return int(np.count_nonzero(self.theta_std))


class PathResult(BaseModel):
    model_config = _ARRAYS

    grid: List[Tuple[float, float]]
    solutions: List[Coefficients]
    df: List[int]
    warm_start: List[int] = Field(..., description="Índice de la solución usada como arranque; -1 = modelo nulo")
    grid1: Tuple[float, ...]
    grid2: Tuple[float, ...]

    def at(self, i1: int, i2: int) -> Coefficients:
        return self.solutions[i1 * len(self.grid2) + i2]


class KKTReport(BaseModel):
    model_config = _ARRAYS

    max_violation: float
    violations: np.ndarray


class TuningMethod(str, Enum):
    CV = "cv"
    BIC = "bic"


class TuningResult(BaseModel):
    model_config = _ARRAYS

    lambda1: float
    lambda2: float
    criterion_table: np.ndarray = Field(..., description="Criterio por (lambda1, lambda2), lambda1 en filas")
    method: TuningMethod
    grid1: Tuple[float, ...]
    grid2: Tuple[float, ...]
    index: Tuple[int, int]


class BaselineKind(str, Enum):
    RL = "rl"
    OA = "oa"
    GM0 = "gm0"
    GM1 = "gm1"
    META = "meta"
    GM01 = "gm01"
    RCT_ONLY = "rct"
    NAIVE = "naive"


_KIND_LABEL = {
    BaselineKind.RL: "RL",
    BaselineKind.OA: "OA",
    BaselineKind.GM0: "GM0",
    BaselineKind.GM1: "GM1",
    BaselineKind.META: "Meta",
    BaselineKind.GM01: "GM01",
    BaselineKind.RCT_ONLY: "RL",
    BaselineKind.NAIVE: "RL",
}


class BaselineVariant(BaseModel):
    """Estimador a ajustar: tipo, criterio de selección y restricciones"""

    model_config = ConfigDict(frozen=True)

    kind: BaselineKind = BaselineKind.RL
    tuning_method: TuningMethod = TuningMethod.CV
    rct_only: bool = False
    oracle: bool = False

    @model_validator(mode="before")
    @classmethod
    def _normalize(cls, data):
        if isinstance(data, dict) and BaselineKind(data.get("kind", BaselineKind.RL)) == BaselineKind.RCT_ONLY:
            data = {**data, "rct_only": True}
        return data

    @property
    def has_beta(self) -> bool:
        return not self.rct_only and self.kind != BaselineKind.NAIVE

    @property
    def label(self) -> str:
        """Nombre corto: RL.cv, RL.bic, RL.RCT, RL.NAI, OA.or, ..."""
        base = _KIND_LABEL[self.kind]
        if self.kind == BaselineKind.NAIVE:
            return f"{base}.NAIor" if self.oracle else f"{base}.NAI"
        if self.rct_only:
            return f"{base}.RCTor" if self.oracle else f"{base}.RCT"
        if self.oracle:
            return f"{base}.or"
        return f"{base}.{self.tuning_method.value}"

    @classmethod
    def parse(cls, label: str) -> "BaselineVariant":
        """Inverso de label (sin distinguir mayúsculas)"""
        head, _, tail = label.strip().partition(".")
        kind = {v.lower(): k for k, v in _KIND_LABEL.items() if k not in (BaselineKind.RCT_ONLY, BaselineKind.NAIVE)}.get(head.lower())
        if kind is None:
            raise ValueError(f"estimador desconocido: {label}")
        tail = tail.lower() or "cv"
        if tail in ("cv", "bic"):
            return cls(kind=kind, tuning_method=TuningMethod(tail))
        if tail == "or":
            return cls(kind=kind, oracle=True)
        if tail in ("rct", "rctor"):
            if kind == BaselineKind.RL:
                return cls(kind=BaselineKind.RCT_ONLY, oracle=tail == "rctor")
            return cls(kind=kind, rct_only=True, oracle=tail == "rctor")
        if tail in ("nai", "naior") and kind == BaselineKind.RL:
            return cls(kind=BaselineKind.NAIVE, oracle=tail == "naior")
        raise ValueError(f"estimador desconocido: {label}")


class FitResult(BaseModel):
    """Resultado de un ajuste: coeficientes, soportes y veredicto de confusión"""

    model_config = _ARRAYS

    label: str
    variant: BaselineVariant
    coefficients: Coefficients
    support_alpha: Tuple[int, ...]
    support_beta: Optional[Tuple[int, ...]] = None
    confounded: bool = False
    tuning: Optional[TuningResult] = None
    lambda1: float = 0.0
    lambda2: float = 0.0
    n_used: int
    nuisance_digest: str = ""

    @property
    def alpha(self) -> np.ndarray:
        return self.coefficients.alpha

    @property
    def beta(self) -> Optional[np.ndarray]:
        return self.coefficients.beta

    def summary(self, names: Tuple[str, ...] = ()) -> Dict:
        """Representación serializable (JSON) del ajuste"""
        names = ("(intercept)",) + tuple(names) if names else tuple(f"x{j}" for j in range(self.alpha.shape[0]))
        out = {
            "estimator": self.label,
            "n_used": self.n_used,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "tuning": self.tuning.method.value if self.tuning else None,
            "alpha": {name: float(v) for name, v in zip(names, self.alpha)},
            "support_alpha": [names[j] for j in self.support_alpha],
            "converged": self.coefficients.converged,
            "nuisance_digest": self.nuisance_digest,
        }
        if self.beta is not None:
            out["beta"] = {name: float(v) for name, v in zip(names, self.beta)}
            out["support_beta"] = [names[j] for j in (self.support_beta or ())]
            out["confounded"] = self.confounded
        return out


class ConfoundingVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    confounded: bool
    support_beta: Tuple[int, ...]


class BootstrapResult(BaseModel):
    """Errores estándar e intervalos del bootstrap 0.632"""

    model_config = _ARRAYS

    B: int
    level: float
    point: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    attempts: int
    subsample_size: int
    replicate_matrix: Optional[np.ndarray] = None


class RunConfig(BaseModel):
    """Configuración validada de una ejecución de la CLI"""

    command: Literal["fit", "bootstrap", "simulate", "benchmark"]
    input: Optional[str] = None
    output: Optional[str] = None
    output_format: Literal["json", "table"] = "json"
    method: str = "rl"
    rct_only: bool = False
    tuning: TuningMethod = Field(default_factory=lambda: TuningMethod(settings.tuning))
    penalty: PenaltyFamily = Field(default_factory=lambda: PenaltyFamily(settings.penalty))
    gamma: Optional[float] = Field(default_factory=lambda: settings.gamma)
    folds: int = Field(default_factory=lambda: settings.nuisance_folds, ge=2)
    tuning_folds: int = Field(default_factory=lambda: settings.tuning_folds, ge=2)
    bootstrap: int = Field(0, ge=0)
    level: float = Field(default_factory=lambda: settings.level, gt=0, lt=1)
    seed: Optional[int] = None
    threads: int = Field(default_factory=lambda: settings.threads, ge=1)
    preset: Optional[str] = None
    fast: bool = False
    p: Optional[int] = Field(None, ge=8)
    n: Optional[int] = Field(None, ge=10)
    cr: Optional[float] = Field(None, gt=0, lt=1)
    signal: Optional[float] = None
    confounded: Optional[bool] = None
    reps: Optional[int] = Field(None, ge=1)
    error_dist: Optional[Literal["normal", "logistic"]] = None
    known_propensity: Optional[Tuple[float, float]] = None
    covariates: Optional[List[str]] = None
    estimators: Optional[List[str]] = None

    @model_validator(mode="after")
    def _required(self) -> "RunConfig":
        if self.command in ("fit", "bootstrap") and not self.input:
            raise ValueError(f"'{self.command}' necesita --input")
        if self.command in ("simulate", "benchmark") and self.seed is None:
            raise ValueError(f"'{self.command}' necesita --seed")
        if self.command == "simulate" and not self.output:
            raise ValueError("'simulate' necesita --output")
        if self.known_propensity is not None and not all(0 < v < 1 for v in self.known_propensity):
            raise ValueError("--known-propensity necesita valores en (0, 1)")
        PenaltySpec(family=self.penalty, gamma=self.gamma)
        if self.method not in {k.value for k in BaselineKind}:
            raise ValueError(f"método desconocido: {self.method}")
        return self
