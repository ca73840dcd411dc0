from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from models.study import CoefficientSummary, Metrics, SimulationTruth


def _stack(estimates: Sequence[np.ndarray], truth: np.ndarray) -> np.ndarray:
    matrix = np.vstack([np.asarray(e, dtype=float) for e in estimates])
    if matrix.shape[1] != truth.shape[0]:
        raise ValueError(f"estimaciones con {matrix.shape[1]} coeficientes y verdad con {truth.shape[0]}")
    return matrix


def compute_metrics(
    estimator: str,
    alphas: Sequence[np.ndarray],
    truth: SimulationTruth,
    confounded: Optional[Sequence[bool]] = None,
    n_failed: int = 0,
) -> Metrics:
    """RMSE, FDR y TIR sobre los p coeficientes de covariables (el intercepto no cuenta).

    Una réplica sin descubrimientos aporta 0 al FDR.
    """
    if len(alphas) == 0:
        raise ValueError("no hay estimaciones")
    estimates = _stack(alphas, truth.alpha)[:, 1:]
    target = truth.alpha[1:]

    rmse = float(np.sqrt(np.mean((estimates - target) ** 2)))

    selected = estimates != 0
    false = selected & (target == 0)
    discoveries = selected.sum(axis=1)
    ratios = np.divide(false.sum(axis=1), discoveries, out=np.zeros(len(estimates)), where=discoveries > 0)
    fdr = float(ratios.mean())

    tir = None
    if confounded is not None:
        flags = np.asarray(confounded, dtype=bool)
        tir = float(np.mean(flags == truth.confounded))

    return Metrics(estimator=estimator, rmse=rmse, fdr=fdr, tir=tir, n_replicates=len(estimates), n_failed=n_failed)


def summarize_coefficients(
    estimator: str,
    alphas: Sequence[np.ndarray],
    truth: SimulationTruth,
    names: Sequence[str],
    ses: Optional[Sequence[np.ndarray]] = None,
    level: float = 0.95,
) -> List[CoefficientSummary]:
    """Media, sesgo y desviación por coeficiente; SE medio y cobertura si hay bootstrap"""
    estimates = _stack(alphas, truth.alpha)
    mean = estimates.mean(axis=0)
    sd = estimates.std(axis=0, ddof=1) if len(estimates) > 1 else np.zeros(estimates.shape[1])

    se_mean = cp = None
    if ses:
        if len(ses) != len(estimates):
            raise ValueError(f"{len(ses)} errores estándar para {len(estimates)} estimaciones")
        se = _stack(ses, truth.alpha)
        z = float(norm.ppf(0.5 * (1.0 + level)))
        se_mean = se.mean(axis=0)
        cp = np.mean(np.abs(estimates - truth.alpha) <= z * se, axis=0)

    out = []
    for j, name in enumerate(names, start=1):
        out.append(
            CoefficientSummary(
                estimator=estimator,
                coefficient=name,
                truth=float(truth.alpha[j]),
                mean=float(mean[j]),
                bias=float(mean[j] - truth.alpha[j]),
                sd=float(sd[j]),
                se=None if se_mean is None else float(se_mean[j]),
                cp=None if cp is None else float(cp[j]),
            )
        )
    return out
