import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.stats import norm

from core.config import settings
from core.errors import BootstrapError, HTEFuseError
from models.data import Dataset
from models.schemas import BootstrapResult, ConfoundingVerdict, FitResult

logger = logging.getLogger(__name__)

SUBSAMPLE_FRACTION = 0.632
MAX_ATTEMPTS = 3

# Recibe el subconjunto y la semilla de la réplica; devuelve theta = (alfa, beta)
ReplicateFit = Callable[[Dataset, int], np.ndarray]


def stratified_subsample(d: Dataset, m: int, rng: np.random.Generator) -> np.ndarray:
    """Índices de m filas sin reemplazo, conservando la proporción RCT/RWD"""
    rct = np.flatnonzero(d.source == 1)
    rwd = np.flatnonzero(d.source == 0)
    m_rct = int(round(m * rct.size / d.n))
    m_rct = min(max(m_rct, 1 if rct.size else 0), rct.size)
    m_rwd = min(m - m_rct, rwd.size)
    chosen = np.concatenate([rng.choice(rct, m_rct, replace=False), rng.choice(rwd, m_rwd, replace=False)])
    return np.sort(chosen)


def _run_replicate(d: Dataset, fit: ReplicateFit, m: int, seed: int, b: int) -> Tuple[np.ndarray, int]:
    last_error = None
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, b, attempt])
        idx = stratified_subsample(d, m, rng)
        try:
            return np.asarray(fit(d.subset(idx), int(rng.integers(2**31 - 1))), dtype=float), attempt + 1
        except (HTEFuseError, ValueError) as e:
            last_error = e
            logger.warning(f"Réplica bootstrap {b}, intento {attempt + 1} fallido: {str(e)}")
    raise BootstrapError(f"la réplica {b} falló {MAX_ATTEMPTS} veces: {last_error}")


def bootstrap_se(
    d: Dataset,
    fit: ReplicateFit,
    point: np.ndarray,
    B: Optional[int] = None,
    level: Optional[float] = None,
    seed: int = 0,
    rescale: Optional[bool] = None,
    threads: Optional[int] = None,
    keep_replicates: bool = False,
) -> BootstrapResult:
    """Bootstrap 0.632: submuestras de round(0.632 n) filas sin reemplazo, estratificadas por S.

    El estimador puntual viene de la muestra completa. Con ``rescale`` la
    desviación entre réplicas se multiplica por sqrt(m / (n - m)) para que
    estime el error estándar de la muestra completa.
    """
    B = settings.bootstrap_reps if B is None else B
    level = settings.level if level is None else level
    rescale = settings.bootstrap_rescale if rescale is None else rescale
    if B < 2:
        raise BootstrapError(f"se necesitan al menos 2 réplicas, recibido B={B}")
    if not 0 < level < 1:
        raise BootstrapError(f"el nivel debe estar en (0, 1), recibido {level}")

    point = np.asarray(point, dtype=float)
    m = int(round(SUBSAMPLE_FRACTION * d.n))
    logger.info(f"Bootstrap 0.632: B={B}, m={m} de n={d.n}")

    workers = max(1, threads or settings.threads)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(_run_replicate, d, fit, m, seed, b) for b in range(B)]
        outcomes = []
        for b, future in enumerate(futures):
            try:
                outcomes.append(future.result())
            except BootstrapError as e:
                logger.error(f"Error en el bootstrap: {str(e)}")
                raise
            if (b + 1) % max(1, B // 10) == 0:
                logger.info(f"Bootstrap: {b + 1}/{B} réplicas")

    replicates = np.vstack([theta for theta, _ in outcomes])
    if replicates.shape[1] != point.shape[0]:
        raise BootstrapError(f"las réplicas tienen {replicates.shape[1]} coeficientes y el estimador {point.shape[0]}")
    attempts = int(sum(a for _, a in outcomes))

    se = replicates.std(axis=0, ddof=1)
    if rescale and m < d.n:
        se = se * np.sqrt(m / (d.n - m))
    z = float(norm.ppf(0.5 * (1.0 + level)))

    return BootstrapResult(
        B=B,
        level=level,
        point=point,
        se=se,
        ci_lower=point - z * se,
        ci_upper=point + z * se,
        attempts=attempts,
        subsample_size=m,
        replicate_matrix=replicates if keep_replicates else None,
    )


def detect_confounding(fit: FitResult, include_intercept: Optional[bool] = None) -> ConfoundingVerdict:
    """Confusión no medida si algún coeficiente penalizado de beta es distinto de cero"""
    if fit.beta is None:
        return ConfoundingVerdict(confounded=False, support_beta=())
    include_intercept = settings.verdict_includes_intercept if include_intercept is None else include_intercept
    start = 0 if include_intercept else 1
    support = tuple(int(j) for j in np.flatnonzero(fit.beta[start:]) + start)
    return ConfoundingVerdict(confounded=bool(support), support_beta=support)
