from dataclasses import dataclass
from typing import List, Optional


class HTEFuseError(Exception):
    """Error base de la librería"""


@dataclass(frozen=True)
class RowError:
    """Fila del fichero de entrada que viola un invariante (numeración desde 1)"""

    row: int
    reason: str


class DataValidationError(HTEFuseError, ValueError):
    """Datos de entrada inválidos, con el detalle por fila"""

    def __init__(self, message: str, row_errors: Optional[List[RowError]] = None):
        self.row_errors = list(row_errors or [])
        if self.row_errors:
            detail = "; ".join(f"fila {e.row}: {e.reason}" for e in self.row_errors[:20])
            if len(self.row_errors) > 20:
                detail += f"; ... ({len(self.row_errors) - 20} más)"
            message = f"{message}: {detail}"
        super().__init__(message)

    @property
    def rows(self) -> List[int]:
        return sorted({e.row for e in self.row_errors})


class FoldAssignmentError(HTEFuseError, ValueError):
    """No se pueden construir los folds pedidos"""


class NuisanceError(HTEFuseError, ValueError):
    """Fallo al estimar la propensión o las medias condicionales"""


class SolverError(HTEFuseError):
    """El problema de regresión es degenerado o el objetivo no es finito"""


class TuningError(HTEFuseError):
    """Fallo en la selección de (lambda1, lambda2)"""


class EstimationError(HTEFuseError):
    """El estimador pedido no se puede ajustar sobre estos datos"""


class BootstrapError(HTEFuseError):
    """Demasiadas réplicas bootstrap fallidas"""


class CalibrationError(HTEFuseError):
    """No se alcanza la tasa de censura objetivo"""
