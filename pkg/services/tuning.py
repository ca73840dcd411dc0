import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from core.errors import TuningError
from ingestion.splitter import FoldSplitter
from models.schemas import PathResult, PenaltySpec, TuningMethod, TuningResult
from services.solver import ProblemData, RegressionProblem, solution_path

logger = logging.getLogger(__name__)


def _select(table: np.ndarray, grid1: Tuple[float, ...], grid2: Tuple[float, ...], method: TuningMethod) -> TuningResult:
    # argmin devuelve el primer mínimo: con las rejillas descendentes, el par más disperso
    flat = int(np.argmin(table))
    i1, i2 = divmod(flat, len(grid2))
    return TuningResult(
        lambda1=grid1[i1],
        lambda2=grid2[i2],
        criterion_table=table,
        method=method,
        grid1=grid1,
        grid2=grid2,
        index=(i1, i2),
    )


def _fold_errors(
    data: ProblemData,
    train: np.ndarray,
    test: np.ndarray,
    grid1: Tuple[float, ...],
    grid2: Tuple[float, ...],
    spec: PenaltySpec,
    fold: int,
) -> np.ndarray:
    path = solution_path(data.subset(train).problem(), grid1, grid2, spec)
    validation = data.subset(test)
    errors = np.zeros(len(path.solutions))
    for i, c in enumerate(path.solutions):
        errors[i], has_events = validation.validation_error(c.alpha, c.beta)
        if not has_events:
            logger.warning(f"Fold de validación {fold} sin eventos observados: aporta 0 al criterio")
            break
    return errors


def cv_select(
    data: ProblemData,
    grid1: Sequence[float],
    grid2: Sequence[float],
    k: Optional[int] = None,
    seed: int = 0,
    spec: Optional[PenaltySpec] = None,
    threads: Optional[int] = None,
) -> TuningResult:
    """Validación cruzada en K folds estratificados por (S, A).

    ``data`` agrupa el dataset y las nuisances ya estimadas (d, nf): respuesta
    log T - mu(Z), diseño (A - e(Z)) * U, tiempos, estados y estratos por fila,
    tal como lo construyen ``robinson_data`` o ``problem_data``.

    En cada fold los pesos de Stute se recalculan sobre el entrenamiento y el
    error de validación usa los pesos de Stute del propio fold de validación.
    """
    k = settings.tuning_folds if k is None else k
    spec = spec or PenaltySpec()
    grid1 = tuple(sorted((float(v) for v in grid1), reverse=True))
    grid2 = tuple(sorted((float(v) for v in grid2), reverse=True))
    if not grid1 or not grid2:
        raise TuningError("la rejilla de lambda está vacía")

    folds = FoldSplitter(k, seed).assign(data.strata)
    workers = max(1, min(threads or settings.threads, k))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(_fold_errors, data, folds.train_index(f), folds.test_index(f), grid1, grid2, spec, f)
            for f in range(k)
        ]
        # Suma en orden de fold para que el resultado no dependa de la planificación
        table = sum(future.result() for future in futures)

    result = _select(np.asarray(table).reshape(len(grid1), len(grid2)), grid1, grid2, TuningMethod.CV)
    logger.debug(f"CV ({k} folds): lambda1={result.lambda1:.4g}, lambda2={result.lambda2:.4g}")
    return result


def bic_criterion(prob: RegressionProblem, path: PathResult) -> np.ndarray:
    """n_eff * log(RSS / sum w) + log(n_eff) * df para cada solución del camino"""
    n_eff = prob.n_eff
    total = float(prob.weights.sum())
    if n_eff == 0 or total <= 0:
        raise TuningError("no hay observaciones con peso positivo para el BIC")
    rss = np.array([prob.rss(c.theta_std) for c in path.solutions])
    df = np.array(path.df, dtype=float)
    return n_eff * np.log(np.maximum(rss, np.finfo(float).tiny) / total) + np.log(n_eff) * df


def bic_select(prob: RegressionProblem, path: PathResult) -> TuningResult:
    if not path.solutions:
        raise TuningError("el camino de soluciones está vacío")
    table = bic_criterion(prob, path).reshape(len(path.grid1), len(path.grid2))
    result = _select(table, path.grid1, path.grid2, TuningMethod.BIC)
    logger.debug(f"BIC: lambda1={result.lambda1:.4g}, lambda2={result.lambda2:.4g}")
    return result
