from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class Observation(BaseModel):
    """Un sujeto de la muestra fusionada (T, delta, A, S, X)"""

    model_config = ConfigDict(frozen=True)

    time: float = Field(..., gt=0, description="Tiempo de seguimiento observado T")
    status: int = Field(..., ge=0, le=1, description="1 = evento observado, 0 = censurado")
    treatment: int = Field(..., ge=0, le=1, description="Tratamiento A")
    source: int = Field(..., ge=0, le=1, description="1 = RCT, 0 = RWD")
    covariates: Tuple[float, ...] = Field(..., description="Covariables X, sin intercepto")

    @field_validator("covariates")
    @classmethod
    def _finite(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not np.all(np.isfinite(value)):
            raise ValueError("las covariables deben ser finitas")
        return value


class ColumnSchema(BaseModel):
    """Mapa de nombres de columna del fichero de entrada"""

    time: str = "time"
    status: str = "status"
    treatment: str = "treat"
    source: str = "source"
    covariates: Optional[List[str]] = Field(None, description="None = columnas x1..xp")


class Dataset(BaseModel):
    """Muestra fusionada RCT+RWD, inmutable tras su construcción"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    time: np.ndarray
    status: np.ndarray
    treatment: np.ndarray
    source: np.ndarray
    covariates: np.ndarray
    covariate_names: Tuple[str, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        data["time"] = _frozen(data["time"], float)
        for key in ("status", "treatment", "source"):
            data[key] = _frozen(data[key], np.int8)
        covariates = np.asarray(data["covariates"], dtype=float)
        if covariates.size == 0:
            covariates = np.zeros((len(data["time"]), 0))
        elif covariates.ndim == 1:
            covariates = covariates.reshape(len(data["time"]), -1)
        data["covariates"] = _frozen(covariates, float)
        if not data.get("covariate_names"):
            data["covariate_names"] = tuple(f"x{j + 1}" for j in range(covariates.shape[1]))
        return data

    @model_validator(mode="after")
    def _check(self) -> "Dataset":
        n = self.time.shape[0]
        if n == 0:
            raise ValueError("el dataset está vacío")
        for name in ("status", "treatment", "source"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} debe tener longitud {n}")
        if self.covariates.ndim != 2 or self.covariates.shape[0] != n:
            raise ValueError(f"covariates debe ser una matriz con {n} filas")
        if len(self.covariate_names) != self.covariates.shape[1]:
            raise ValueError("covariate_names no coincide con el número de covariables")

        bad: List[str] = []
        for name, mask in (
            ("time <= 0 o no finito", ~(np.isfinite(self.time) & (self.time > 0))),
            ("status no binario", ~np.isin(self.status, (0, 1))),
            ("treat no binario", ~np.isin(self.treatment, (0, 1))),
            ("source no binario", ~np.isin(self.source, (0, 1))),
            ("covariables no finitas", ~np.all(np.isfinite(self.covariates), axis=1)),
        ):
            rows = np.flatnonzero(mask) + 1
            if rows.size:
                bad.append(f"{name} en filas {rows[:10].tolist()}")
        if bad:
            raise ValueError("; ".join(bad))
        if self.n1 < 1:
            raise ValueError("se necesita al menos una fila RCT (source = 1)")
        return self

    @property
    def n(self) -> int:
        return int(self.time.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def n1(self) -> int:
        return int(np.sum(self.source == 1))

    @property
    def n0(self) -> int:
        return int(np.sum(self.source == 0))

    @property
    def log_time(self) -> np.ndarray:
        return np.log(self.time)

    @property
    def strata(self) -> np.ndarray:
        """Etiqueta de celda (S, A) codificada como 2S + A"""
        return 2 * self.source.astype(int) + self.treatment.astype(int)

    def design(self) -> np.ndarray:
        """Matriz [1, X]; el intercepto X0 = 1 se añade aquí y nunca viene en los ficheros"""
        return np.column_stack([np.ones(self.n), self.covariates])

    def observations(self) -> List[Observation]:
        return [
            Observation(
                time=float(self.time[i]),
                status=int(self.status[i]),
                treatment=int(self.treatment[i]),
                source=int(self.source[i]),
                covariates=tuple(float(v) for v in self.covariates[i]),
            )
            for i in range(self.n)
        ]

    @classmethod
    def from_observations(cls, observations: Sequence[Observation], covariate_names: Sequence[str] = ()) -> "Dataset":
        if not observations:
            raise ValueError("no hay observaciones")
        widths = {len(o.covariates) for o in observations}
        if len(widths) != 1:
            raise ValueError(f"filas con distinto número de covariables: {sorted(widths)}")
        return cls(
            time=[o.time for o in observations],
            status=[o.status for o in observations],
            treatment=[o.treatment for o in observations],
            source=[o.source for o in observations],
            covariates=[list(o.covariates) for o in observations],
            covariate_names=tuple(covariate_names),
        )

    def subset(self, idx: Sequence[int]) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            time=self.time[idx],
            status=self.status[idx],
            treatment=self.treatment[idx],
            source=self.source[idx],
            covariates=self.covariates[idx],
            covariate_names=self.covariate_names,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.covariate_names == other.covariate_names
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.source, other.source)
            and np.array_equal(self.covariates, other.covariates)
        )

    __hash__ = None


class FoldAssignment(BaseModel):
    """Asignación de cada observación a un fold en [0, K)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    fold_of: np.ndarray
    k: int = Field(..., ge=2)
    seed: int

    @model_validator(mode="after")
    def _check(self) -> "FoldAssignment":
        counts = np.bincount(self.fold_of, minlength=self.k)
        if counts.shape[0] != self.k or np.any(counts == 0):
            raise ValueError(f"todos los folds deben estar en [0, {self.k}) y no vacíos: {counts.tolist()}")
        return self

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def sizes(self) -> List[int]:
        return np.bincount(self.fold_of, minlength=self.k).tolist()
