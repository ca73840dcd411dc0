import logging
import re
from pathlib import Path
from typing import Optional, Union

import pandas as pd

from core.errors import DataValidationError, RowError
from ingestion.cleaning import FrameCleaner
from models.data import ColumnSchema, Dataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_PARSER_LINE = re.compile(r"line (\d+)")


class IngestionPipeline:
    """Orquestador de lectura y escritura de ficheros delimitados"""

    def __init__(self, schema: Optional[ColumnSchema] = None, sep: str = ","):
        self.schema = schema or ColumnSchema()
        self.sep = sep
        self.cleaner = FrameCleaner(self.schema)

    def _read_frame(self, path: Path) -> pd.DataFrame:
        """Leer el fichero; las filas con más campos que la cabecera son un error de fila"""
        try:
            return pd.read_csv(path, sep=self.sep, encoding="utf-8", decimal=".", skipinitialspace=True, float_precision="round_trip")
        except pd.errors.ParserError as e:
            match = _PARSER_LINE.search(str(e))
            if match:
                # La línea 1 del fichero es la cabecera
                row = int(match.group(1)) - 1
                raise DataValidationError("Fila con número de campos distinto a la cabecera", [RowError(row=row, reason=str(e))]) from e
            raise DataValidationError(f"No se pudo parsear {path}: {str(e)}") from e
        except pd.errors.EmptyDataError as e:
            raise DataValidationError(f"Fichero vacío: {path}") from e

    def load(self, path: PathLike) -> Dataset:
        """Leer y validar un dataset"""
        path = Path(path)
        if not path.exists():
            raise DataValidationError(f"No existe el fichero {path}")

        try:
            logger.info(f"Leyendo dataset: {path}")
            frame = self._read_frame(path)
            dataset = self.cleaner.to_dataset(frame)
            logger.info(f"Dataset cargado: n={dataset.n}, p={dataset.p}, n1={dataset.n1}, n0={dataset.n0}")
            return dataset
        except DataValidationError as e:
            logger.error(f"Error cargando {path}: {str(e)}")
            raise

    def write(self, d: Dataset, path: PathLike) -> Path:
        """Escribir un dataset con precisión suficiente para releerlo sin pérdida"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(
            {
                self.schema.time: d.time,
                self.schema.status: d.status.astype(int),
                self.schema.treatment: d.treatment.astype(int),
                self.schema.source: d.source.astype(int),
            }
        )
        names = self.schema.covariates or list(d.covariate_names)
        for j, name in enumerate(names):
            frame[name] = d.covariates[:, j]
        frame.to_csv(path, sep=self.sep, index=False, float_format="%.17g", encoding="utf-8")
        logger.info(f"Dataset escrito en {path} ({d.n} filas)")
        return path


def load_dataset(path: PathLike, schema: Optional[ColumnSchema] = None) -> Dataset:
    return IngestionPipeline(schema).load(path)


def write_dataset(d: Dataset, path: PathLike, schema: Optional[ColumnSchema] = None) -> Path:
    return IngestionPipeline(schema).write(d, path)
