import logging
import re
from typing import List

import numpy as np
import pandas as pd

from core.errors import DataValidationError, RowError
from models.data import ColumnSchema, Dataset

logger = logging.getLogger(__name__)

_COVARIATE_PATTERN = re.compile(r"^x(\d+)$")


class FrameCleaner:
    """Validación fila a fila de un DataFrame antes de construir el Dataset"""

    def __init__(self, schema: ColumnSchema):
        self.schema = schema

    def _covariate_columns(self, frame: pd.DataFrame) -> List[str]:
        """Columnas de covariables: las del esquema o x1..xp en orden numérico"""
        if self.schema.covariates is not None:
            return list(self.schema.covariates)
        found = [(int(m.group(1)), col) for col in frame.columns if (m := _COVARIATE_PATTERN.match(str(col)))]
        return [col for _, col in sorted(found)]

    def _check_columns(self, frame: pd.DataFrame, covariates: List[str]) -> None:
        required = [self.schema.time, self.schema.status, self.schema.treatment, self.schema.source]
        missing = [col for col in required + covariates if col not in frame.columns]
        if missing:
            raise DataValidationError(f"Faltan columnas obligatorias: {missing}")

    def _numeric(self, frame: pd.DataFrame, column: str, errors: List[RowError]) -> np.ndarray:
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
        for row in np.flatnonzero(~np.isfinite(values)):
            raw = frame[column].iloc[row]
            reason = "valor ausente" if pd.isna(raw) else f"valor no numérico '{raw}'"
            errors.append(RowError(row=int(row) + 1, reason=f"{column}: {reason}"))
        return values

    def _binary(self, frame: pd.DataFrame, column: str, errors: List[RowError]) -> np.ndarray:
        values = self._numeric(frame, column, errors)
        bad = np.isfinite(values) & ~np.isin(values, (0.0, 1.0))
        for row in np.flatnonzero(bad):
            errors.append(RowError(row=int(row) + 1, reason=f"{column}: valor no binario {values[row]:g}"))
        return values

    def to_dataset(self, frame: pd.DataFrame) -> Dataset:
        """Validar el DataFrame y construir el Dataset, o fallar listando las filas"""
        covariates = self._covariate_columns(frame)
        self._check_columns(frame, covariates)

        errors: List[RowError] = []
        time = self._numeric(frame, self.schema.time, errors)
        for row in np.flatnonzero(np.isfinite(time) & (time <= 0)):
            errors.append(RowError(row=int(row) + 1, reason=f"{self.schema.time}: tiempo no positivo {time[row]:g}"))
        status = self._binary(frame, self.schema.status, errors)
        treatment = self._binary(frame, self.schema.treatment, errors)
        source = self._binary(frame, self.schema.source, errors)
        matrix = np.column_stack([self._numeric(frame, col, errors) for col in covariates]) if covariates else np.zeros((len(frame), 0))

        if errors:
            errors.sort(key=lambda e: e.row)
            logger.error(f"Datos inválidos: {len(errors)} problemas en {len({e.row for e in errors})} filas")
            raise DataValidationError("Filas inválidas en los datos de entrada", errors)

        if not np.any(source == 1):
            raise DataValidationError("Se necesita al menos una fila RCT (source = 1)")

        return Dataset(
            time=time,
            status=status.astype(int),
            treatment=treatment.astype(int),
            source=source.astype(int),
            covariates=matrix,
            covariate_names=tuple(covariates),
        )
