import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from core.errors import EstimationError, HTEFuseError
from models.data import Dataset
from models.schemas import (
    BaselineKind,
    BaselineVariant,
    Coefficients,
    FitResult,
    NuisanceFit,
    PenaltySpec,
    TuningMethod,
    TuningResult,
)
from services.inference import detect_confounding
from services.solver import (
    ProblemData,
    RegressionProblem,
    coordinate_descent,
    lambda_grid,
    refit_support,
    robinson_data,
    solution_path,
)
from services.tuning import bic_select, cv_select

logger = logging.getLogger(__name__)

Support = Tuple[Sequence[int], Sequence[int]]


def _covariate_design(d: Dataset, include_beta: bool) -> np.ndarray:
    """Diseño U = (X, (1-S)X) sin residualizar, usado por OA y GM"""
    x = d.design()
    return np.hstack([x, (1 - d.source)[:, None] * x]) if include_beta else x


def _rows_for(variant: BaselineVariant, d: Dataset) -> np.ndarray:
    mask = np.ones(d.n, dtype=bool)
    if variant.rct_only:
        mask &= d.source == 1
    if variant.kind == BaselineKind.GM0:
        mask &= d.treatment == 1
    elif variant.kind == BaselineKind.GM1:
        mask &= d.treatment == 0
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise EstimationError(f"{variant.label}: no hay filas disponibles para este estimador")
    return rows


def outcome_adjusted_response(d: Dataset, nf: NuisanceFit) -> np.ndarray:
    """Pseudo-respuesta A(logT - mu1)/e + mu1 - (1-A)(logT - mu0)/(1-e) - mu0"""
    a, e = d.treatment, nf.e_hat
    log_t = d.log_time
    return a * (log_t - nf.mu1_hat) / e + nf.mu1_hat - (1 - a) * (log_t - nf.mu0_hat) / (1 - e) - nf.mu0_hat


def problem_data(
    variant: BaselineVariant,
    d: Dataset,
    nf: NuisanceFit,
    penalize_intercepts: Optional[bool] = None,
) -> ProblemData:
    """Respuesta y diseño del estimador sobre las filas que usa"""
    if variant.kind == BaselineKind.META:
        raise EstimationError("Meta combina GM0 y GM1; no tiene problema propio")
    penalize_intercepts = settings.penalize_intercepts if penalize_intercepts is None else penalize_intercepts
    rows = _rows_for(variant, d)
    sub, sub_nf = d.subset(rows), nf.subset(rows)
    include_beta = variant.has_beta

    if variant.kind in (BaselineKind.RL, BaselineKind.RCT_ONLY, BaselineKind.NAIVE):
        return robinson_data(sub, sub_nf, include_beta=include_beta, penalize_intercepts=penalize_intercepts)

    if variant.kind == BaselineKind.OA:
        response = outcome_adjusted_response(sub, sub_nf)
    elif variant.kind == BaselineKind.GM0:
        response = sub.log_time - sub_nf.mu0_hat
    elif variant.kind == BaselineKind.GM1:
        response = sub_nf.mu1_hat - sub.log_time
    else:
        response = sub_nf.mu1_hat - sub_nf.mu0_hat

    # GM0 y GM1 recalculan los pesos de Stute sobre su brazo; GM01 usa toda la muestra
    return ProblemData(
        response=response,
        design=_covariate_design(sub, include_beta),
        time=sub.time,
        status=sub.status,
        strata=sub.strata,
        q=d.p + 1,
        has_beta=include_beta,
        penalize_intercepts=penalize_intercepts,
    )


def _supports(c: Coefficients) -> Tuple[Tuple[int, ...], Optional[Tuple[int, ...]]]:
    alpha = tuple(int(j) for j in np.flatnonzero(c.alpha))
    beta = None if c.beta is None else tuple(int(j) for j in np.flatnonzero(c.beta))
    return alpha, beta


def _result(
    variant: BaselineVariant,
    c: Coefficients,
    n_used: int,
    nf: NuisanceFit,
    tuning: Optional[TuningResult] = None,
    lambda1: float = 0.0,
    lambda2: float = 0.0,
) -> FitResult:
    support_alpha, support_beta = _supports(c)
    fit = FitResult(
        label=variant.label,
        variant=variant,
        coefficients=c,
        support_alpha=support_alpha,
        support_beta=support_beta,
        tuning=tuning,
        lambda1=lambda1,
        lambda2=lambda2,
        n_used=n_used,
        nuisance_digest=nf.config.digest(),
    )
    return fit.model_copy(update={"confounded": detect_confounding(fit).confounded})


def oracle_columns(prob: RegressionProblem, support: Support) -> np.ndarray:
    """Columnas del problema correspondientes a los soportes verdaderos (índices en 0..q-1)"""
    alpha_support, beta_support = support
    columns = [int(j) for j in alpha_support]
    if prob.has_beta:
        columns += [prob.q + int(j) for j in beta_support]
    return np.asarray(columns, dtype=int)


def fit_baseline(
    variant: BaselineVariant,
    d: Dataset,
    nf: NuisanceFit,
    spec: Optional[PenaltySpec] = None,
    seed: int = 0,
    lambdas: Optional[Tuple[float, float]] = None,
    support: Optional[Support] = None,
    tuning_folds: Optional[int] = None,
    threads: Optional[int] = None,
) -> FitResult:
    """Ajustar un estimador sobre las nuisances ya estimadas.

    Con ``lambdas`` se omite la selección y se resuelve en ese par (bootstrap);
    las variantes oráculo necesitan ``support`` con los soportes verdaderos.
    """
    spec = spec or PenaltySpec()
    if variant.kind == BaselineKind.META:
        gm0 = fit_baseline(variant.model_copy(update={"kind": BaselineKind.GM0}), d, nf, spec, seed, lambdas, support, tuning_folds, threads)
        gm1 = fit_baseline(variant.model_copy(update={"kind": BaselineKind.GM1}), d, nf, spec, seed, lambdas, support, tuning_folds, threads)
        return fit_meta(gm0, gm1, d, variant=variant)

    data = problem_data(variant, d, nf)
    prob = data.problem()

    if variant.oracle:
        if support is None:
            raise EstimationError(f"{variant.label}: el estimador oráculo necesita los soportes verdaderos")
        return _result(variant, refit_support(prob, oracle_columns(prob, support)), data.n, nf)

    if lambdas is not None:
        c = coordinate_descent(prob, lambdas[0], lambdas[1], spec=spec)
        return _result(variant, c, data.n, nf, lambda1=lambdas[0], lambda2=lambdas[1])

    grid1, grid2 = lambda_grid(prob)
    path = solution_path(prob, grid1, grid2, spec)
    if variant.tuning_method == TuningMethod.BIC:
        tuning = bic_select(prob, path)
    else:
        tuning = cv_select(data, grid1, grid2, k=tuning_folds, seed=seed, spec=spec, threads=threads)

    c = path.at(*tuning.index)
    logger.debug(f"{variant.label}: lambda1={tuning.lambda1:.4g}, lambda2={tuning.lambda2:.4g}, df={c.df}")
    return _result(variant, c, data.n, nf, tuning=tuning, lambda1=tuning.lambda1, lambda2=tuning.lambda2)


def fit_meta(gm0: FitResult, gm1: FitResult, d: Dataset, variant: Optional[BaselineVariant] = None) -> FitResult:
    """Combinación convexa de GM0 y GM1 ponderada por el tamaño de cada brazo"""
    if gm0.alpha.shape != gm1.alpha.shape or (gm0.beta is None) != (gm1.beta is None):
        raise EstimationError("GM0 y GM1 tienen dimensiones distintas")
    if gm0.alpha.shape[0] != d.p + 1:
        raise EstimationError(f"los coeficientes no corresponden a p={d.p}")
    variant = variant or BaselineVariant(kind=BaselineKind.META, tuning_method=gm0.variant.tuning_method, rct_only=gm0.variant.rct_only, oracle=gm0.variant.oracle)

    n_treated, n_control = gm0.n_used, gm1.n_used
    total = n_treated + n_control

    def combine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (n_treated * a + n_control * b) / total

    c0, c1 = gm0.coefficients, gm1.coefficients
    beta = None if c0.beta is None else combine(c0.beta, c1.beta)
    alpha = combine(c0.alpha, c1.alpha)
    coefficients = Coefficients(
        alpha=alpha,
        beta=beta,
        theta_std=alpha if beta is None else np.concatenate([alpha, beta]),
        objective=float(combine(np.float64(c0.objective), np.float64(c1.objective))),
        iterations=c0.iterations + c1.iterations,
        converged=c0.converged and c1.converged,
    )
    support_alpha, support_beta = _supports(coefficients)
    fit = FitResult(
        label=variant.label,
        variant=variant,
        coefficients=coefficients,
        support_alpha=support_alpha,
        support_beta=support_beta,
        lambda1=gm0.lambda1,
        lambda2=gm0.lambda2,
        n_used=total,
        nuisance_digest=gm0.nuisance_digest,
    )
    return fit.model_copy(update={"confounded": detect_confounding(fit).confounded})


def fit_many(
    variants: Sequence[BaselineVariant],
    d: Dataset,
    nf: NuisanceFit,
    spec: Optional[PenaltySpec] = None,
    seed: int = 0,
    support: Optional[Support] = None,
    tuning_folds: Optional[int] = None,
    threads: Optional[int] = None,
) -> Tuple[dict, dict]:
    """Ajustar varias variantes con las mismas nuisances; devuelve (resultados, fallos) por etiqueta"""
    results, failures = {}, {}
    for variant in variants:
        try:
            results[variant.label] = fit_baseline(variant, d, nf, spec, seed, support=support, tuning_folds=tuning_folds, threads=threads)
        except HTEFuseError as e:
            logger.warning(f"{variant.label} falló: {str(e)}")
            failures[variant.label] = str(e)
    return results, failures
