import logging
from typing import Optional

import numpy as np
from sklearn.model_selection import StratifiedKFold

from core.errors import FoldAssignmentError
from models.data import Dataset, FoldAssignment

logger = logging.getLogger(__name__)


class FoldSplitter:
    """Particiones estratificadas por celda (S, A) para cross-fitting y validación cruzada"""

    def __init__(self, k: int, seed: int):
        if k < 2:
            raise FoldAssignmentError(f"k debe ser >= 2, recibido {k}")
        self.k = k
        self.seed = seed

    def assign(self, strata: np.ndarray) -> FoldAssignment:
        """Asignar folds a partir de las etiquetas de estrato"""
        strata = np.asarray(strata)
        if strata.size < self.k:
            raise FoldAssignmentError(f"k={self.k} es mayor que el número de filas ({strata.size})")

        labels, counts = np.unique(strata, return_counts=True)
        smallest = int(counts.min())
        if smallest < self.k:
            label = labels[int(np.argmin(counts))]
            raise FoldAssignmentError(
                f"k={self.k} es demasiado grande: el estrato {label} solo tiene {smallest} filas"
            )

        fold_of = np.empty(strata.size, dtype=int)
        if labels.size == 1:
            # Un único estrato: StratifiedKFold exige al menos dos clases
            order = np.random.default_rng(self.seed).permutation(strata.size)
            fold_of[order] = np.arange(strata.size) % self.k
        else:
            skf = StratifiedKFold(n_splits=self.k, shuffle=True, random_state=self.seed)
            for fold, (_, test_idx) in enumerate(skf.split(np.zeros(strata.size), strata)):
                fold_of[test_idx] = fold

        assignment = FoldAssignment(fold_of=fold_of, k=self.k, seed=self.seed)
        logger.debug(f"Folds asignados: tamaños {assignment.sizes()}")
        return assignment


def split_folds(d: Dataset, k: int, seed: int, strata: Optional[np.ndarray] = None) -> FoldAssignment:
    """Folds deterministas dada la semilla, estratificados por (S, A)"""
    return FoldSplitter(k, seed).assign(d.strata if strata is None else strata)
