import logging

import numpy as np

from models.schemas import StepFunction, WeightVector

logger = logging.getLogger(__name__)


def _validate(times, flags) -> tuple:
    times = np.asarray(times, dtype=float)
    flags = np.asarray(flags)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("se necesita al menos una observación")
    if flags.shape != times.shape:
        raise ValueError(f"longitudes distintas: {times.size} tiempos y {flags.size} indicadores")
    if not np.all(np.isin(flags, (0, 1))):
        raise ValueError("los indicadores deben ser 0/1")
    return times, flags.astype(int)


def stute_order(times, deltas) -> np.ndarray:
    """Ordenación por (T, 1 - delta, índice): en empates los eventos preceden a las censuras"""
    times = np.asarray(times, dtype=float)
    deltas = np.asarray(deltas, dtype=int)
    return np.lexsort((np.arange(times.size), 1 - deltas, times))


def compute_weights(times, deltas, redistribute_last: bool = False) -> WeightVector:
    """Pesos de Kaplan-Meier (Stute) sobre la muestra ordenada.

    w_1 = delta_(1)/n y w_i = delta_(i)/(n-i+1) * prod_{j<i} ((n-j)/(n-j+1))^delta_(j).
    Con ``redistribute_last`` la masa no asignada pasa a la mayor observación
    cuando ésta está censurada.
    """
    times, deltas = _validate(times, deltas)
    if np.any(times <= 0):
        raise ValueError("los tiempos deben ser positivos")

    n = times.size
    order = stute_order(times, deltas)
    d = deltas[order]
    i = np.arange(1, n + 1)
    at_risk = (n - i + 1).astype(float)
    factors = np.where(d == 1, (n - i) / at_risk, 1.0)
    survival_before = np.concatenate([[1.0], np.cumprod(factors)[:-1]])
    weights = d / at_risk * survival_before
    if np.all(d == 1):
        # el producto telescópico vale (n-i+1)/n; sin censura se fija 1/n exacto
        weights = np.full(n, 1.0 / n)

    if redistribute_last and d[-1] == 0:
        weights[-1] += max(0.0, 1.0 - weights.sum())

    weights.setflags(write=False)
    return WeightVector(order=order, weights=weights)


def km_estimator(times, event_flags) -> StepFunction:
    """Estimador producto-límite de la supervivencia de los eventos marcados con 1"""
    times, flags = _validate(times, event_flags)

    jump_times, inverse = np.unique(times, return_inverse=True)
    events = np.bincount(inverse, weights=flags, minlength=jump_times.size)
    removed = np.bincount(inverse, minlength=jump_times.size)
    at_risk = times.size - np.concatenate([[0], np.cumsum(removed)[:-1]])
    survival = np.cumprod(1.0 - events / at_risk)

    return StepFunction(jump_times=jump_times, values=survival)
