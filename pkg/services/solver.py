import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.config import settings
from core.errors import SolverError
from models.data import Dataset
from models.schemas import (
    Coefficients,
    KKTReport,
    NuisanceFit,
    PathResult,
    PenaltyFamily,
    PenaltySpec,
    WeightVector,
)
from services.penalty import coordinate_update, rho_eval
from services.stute import compute_weights

logger = logging.getLogger(__name__)

_ARRAYS = ConfigDict(arbitrary_types_allowed=True, frozen=True)
_DEGENERATE_SCALE = 1e-12
_WARM_STARTS = ("lambda2", "lambda1")


class RegressionProblem(BaseModel):
    """Mínimos cuadrados ponderados de Stute, con columnas estandarizadas.

    Las filas siguen la ordenación de Stute. El solver trabaja sobre la matriz
    de Gram estandarizada (sum_i w_i d_ij^2 = 1 en las columnas activas).
    """

    model_config = _ARRAYS

    response: np.ndarray
    design: np.ndarray
    weights: np.ndarray
    col_scale: np.ndarray
    active: np.ndarray
    penalized: np.ndarray
    q: int
    has_beta: bool
    gram: np.ndarray
    xty: np.ndarray
    yty: float
    order: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        response: np.ndarray,
        design: np.ndarray,
        weights: np.ndarray,
        q: int,
        has_beta: bool = True,
        penalize_intercepts: bool = False,
        order: Optional[np.ndarray] = None,
    ) -> "RegressionProblem":
        response = np.asarray(response, dtype=float)
        design = np.asarray(design, dtype=float)
        weights = np.asarray(weights, dtype=float)
        n = response.shape[0]
        m = 2 * q if has_beta else q
        if design.shape != (n, m) or weights.shape != (n,):
            raise SolverError(f"dimensiones incompatibles: respuesta {response.shape}, diseño {design.shape}, pesos {weights.shape}, se esperaban {m} columnas")
        if np.any(weights < 0):
            raise SolverError("los pesos deben ser no negativos")

        col_scale = np.sqrt(weights @ design**2)
        active = col_scale > _DEGENERATE_SCALE
        if not np.any(active):
            raise SolverError("degenerate residual treatment: todas las columnas del diseño tienen varianza ponderada nula")
        safe_scale = np.where(active, col_scale, 1.0)
        standardized = np.where(active, design / safe_scale, 0.0)

        penalized = np.ones(m, dtype=bool)
        if not penalize_intercepts:
            penalized[0] = False
            if has_beta:
                penalized[q] = False

        weighted = standardized * weights[:, None]
        return cls(
            response=response,
            design=design,
            weights=weights,
            col_scale=np.where(active, col_scale, 0.0),
            active=active,
            penalized=penalized,
            q=q,
            has_beta=has_beta,
            gram=weighted.T @ standardized,
            xty=weighted.T @ response,
            yty=float(weights @ response**2),
            order=np.arange(n) if order is None else np.asarray(order),
        )

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    @property
    def m(self) -> int:
        return int(self.design.shape[1])

    @property
    def n_eff(self) -> int:
        return int(np.count_nonzero(self.weights > 0))

    def standardized_design(self) -> np.ndarray:
        safe = np.where(self.active, self.col_scale, 1.0)
        return np.where(self.active, self.design / safe, 0.0)

    def lambdas(self, lambda1: float, lambda2: float) -> np.ndarray:
        lam = np.full(self.m, float(lambda1))
        if self.has_beta:
            lam[self.q :] = lambda2
        return lam

    def to_original(self, theta_std: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        safe = np.where(self.active, self.col_scale, 1.0)
        theta = np.where(self.active, theta_std / safe, 0.0)
        if self.has_beta:
            return theta[: self.q], theta[self.q :]
        return theta, None

    def rss(self, theta_std: np.ndarray) -> float:
        """Pérdida ponderada sum_i w_i r_i^2 evaluada directamente sobre los residuos"""
        residual = self.response - self.standardized_design() @ theta_std
        return float(self.weights @ residual**2)

    def gradient(self, theta_std: np.ndarray) -> np.ndarray:
        """Gradiente de 0.5 * rss en la escala estandarizada"""
        return self.gram @ theta_std - self.xty

    def penalty_weights(self, spec: PenaltySpec) -> np.ndarray:
        """Multiplicador de lambda por columna; 0 en columnas no penalizadas"""
        weights = np.ones(self.m)
        if spec.family == PenaltyFamily.ADAPTIVE_LASSO:
            if spec.adaptive_weights is not None:
                if len(spec.adaptive_weights) != self.m:
                    raise SolverError(f"adaptive_weights debe tener longitud {self.m}")
                weights = np.asarray(spec.adaptive_weights, dtype=float)
            else:
                weights = self.pilot_weights()
        return np.where(self.penalized, weights, 0.0)

    def pilot_weights(self, ridge: float = 1e-3) -> np.ndarray:
        """Pesos 1/|piloto| del lasso adaptativo, con piloto ridge estandarizado"""
        idx = np.flatnonzero(self.active)
        pilot = np.zeros(self.m)
        system = self.gram[np.ix_(idx, idx)] + ridge * np.eye(idx.size)
        pilot[idx] = np.linalg.solve(system, self.xty[idx])
        return 1.0 / np.maximum(np.abs(pilot), 1e-8)

    def penalty_total(self, theta_std: np.ndarray, lambda1: float, lambda2: float, spec: PenaltySpec) -> float:
        return self.penalty_at(theta_std, self.lambdas(lambda1, lambda2), self.penalty_weights(spec), spec)

    def penalty_at(self, theta_std: np.ndarray, lam: np.ndarray, pw: np.ndarray, spec: PenaltySpec) -> float:
        idx = np.flatnonzero(self.penalized & self.active)
        if idx.size == 0:
            return 0.0
        return float(np.sum(rho_eval(np.abs(theta_std[idx]), lam[idx], spec, pw[idx])[0]))

    def objective(self, theta_std: np.ndarray, lambda1: float, lambda2: float, spec: PenaltySpec) -> float:
        """0.5 * sum_i w_i r_i^2 + sum_j rho(|theta_j|; lambda)"""
        return 0.5 * self.rss(theta_std) + self.penalty_total(theta_std, lambda1, lambda2, spec)

    def null_solution(self) -> np.ndarray:
        """Ajuste por mínimos cuadrados de las columnas no penalizadas; el resto a cero"""
        theta = np.zeros(self.m)
        idx = np.flatnonzero(self.active & ~self.penalized)
        if idx.size:
            theta[idx] = np.linalg.lstsq(self.gram[np.ix_(idx, idx)], self.xty[idx], rcond=None)[0]
        return theta

    def lambda_max(self) -> Tuple[float, float]:
        """Menor lambda de cada bloque que anula todas sus columnas penalizadas"""
        gradient = np.abs(self.gradient(self.null_solution()))
        candidates = self.penalized & self.active
        blocks = [np.arange(self.q)] + ([np.arange(self.q, 2 * self.q)] if self.has_beta else [])
        out = []
        for block in blocks:
            mask = candidates[block]
            out.append(float(gradient[block][mask].max()) if np.any(mask) else 0.0)
        if not self.has_beta:
            out.append(0.0)
        return out[0], out[1]


class ProblemData(BaseModel):
    """Respuesta y diseño por fila (orden original) más lo necesario para los pesos de Stute"""

    model_config = _ARRAYS

    response: np.ndarray
    design: np.ndarray
    time: np.ndarray
    status: np.ndarray
    strata: np.ndarray
    q: int
    has_beta: bool
    penalize_intercepts: bool = False

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    def subset(self, idx: Sequence[int]) -> "ProblemData":
        idx = np.asarray(idx, dtype=int)
        return self.model_copy(
            update={
                "response": self.response[idx],
                "design": self.design[idx],
                "time": self.time[idx],
                "status": self.status[idx],
                "strata": self.strata[idx],
            }
        )

    def stute_weights(self) -> WeightVector:
        return compute_weights(self.time, self.status)

    def problem(self, w: Optional[WeightVector] = None) -> RegressionProblem:
        """Problema ordenado con pesos de Stute calculados sobre estas filas"""
        w = w or self.stute_weights()
        if w.order.shape[0] != self.n:
            raise SolverError(f"los pesos tienen {w.order.shape[0]} filas y los datos {self.n}")
        return RegressionProblem.from_arrays(
            self.response[w.order],
            self.design[w.order],
            w.weights,
            q=self.q,
            has_beta=self.has_beta,
            penalize_intercepts=self.penalize_intercepts,
            order=w.order,
        )

    def validation_error(self, alpha: np.ndarray, beta: Optional[np.ndarray]) -> Tuple[float, bool]:
        """Error cuadrático ponderado con los pesos de Stute de estas filas; (error, hay_eventos)"""
        if not np.any(self.status == 1):
            return 0.0, False
        w = self.stute_weights().per_observation()
        theta = alpha if beta is None else np.concatenate([alpha, beta])
        residual = self.response - self.design @ theta
        return float(w @ residual**2), True


def robinson_data(
    d: Dataset,
    nf: NuisanceFit,
    include_beta: bool = True,
    penalize_intercepts: bool = False,
) -> ProblemData:
    """Respuesta log T - mu(Z) y diseño (A - e(Z)) * U, U = (X, (1-S)X)"""
    if nf.e_hat.shape[0] != d.n:
        raise SolverError(f"las nuisances tienen {nf.e_hat.shape[0]} filas y el dataset {d.n}")
    residual_treatment = d.treatment - nf.e_hat
    if np.allclose(residual_treatment, 0.0):
        raise SolverError("degenerate residual treatment: A - e(Z) es nulo en todas las filas")

    x = d.design()
    blocks = [x, (1 - d.source)[:, None] * x] if include_beta else [x]
    design = residual_treatment[:, None] * np.hstack(blocks)
    return ProblemData(
        response=d.log_time - nf.mu_hat,
        design=design,
        time=d.time,
        status=d.status,
        strata=d.strata,
        q=d.p + 1,
        has_beta=include_beta,
        penalize_intercepts=penalize_intercepts,
    )


def assemble_design(
    d: Dataset,
    nf: NuisanceFit,
    w: Optional[WeightVector] = None,
    include_beta: bool = True,
    penalize_intercepts: bool = False,
) -> RegressionProblem:
    """Problema residualizado de Robinson ordenado por los pesos de Stute"""
    data = robinson_data(d, nf, include_beta=include_beta, penalize_intercepts=penalize_intercepts)
    return data.problem(w)


def _initial_theta(prob: RegressionProblem, init: Union[None, Coefficients, np.ndarray]) -> np.ndarray:
    if init is None:
        return prob.null_solution()
    theta = init.theta_std if isinstance(init, Coefficients) else np.asarray(init, dtype=float)
    if theta.shape != (prob.m,):
        raise SolverError(f"arranque con {theta.shape} coeficientes, se esperaban {prob.m}")
    return np.where(prob.active, theta, 0.0)


def coordinate_descent(
    prob: RegressionProblem,
    lambda1: float,
    lambda2: float,
    init: Union[None, Coefficients, np.ndarray] = None,
    spec: Optional[PenaltySpec] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> Coefficients:
    """Descenso por coordenadas cíclico sobre 0.5 * pérdida de Stute + penalización.

    Cada actualización minimiza exactamente el objetivo en una coordenada, así
    que el objetivo no crece entre ciclos. Sin ``init`` se arranca del ajuste
    de las columnas no penalizadas.
    """
    spec = spec or PenaltySpec()
    tol = settings.tol if tol is None else tol
    max_iter = settings.max_iter if max_iter is None else max_iter

    theta = _initial_theta(prob, init).copy()
    lam = prob.lambdas(lambda1, lambda2)
    pw = prob.penalty_weights(spec)
    gram, xty = prob.gram, prob.xty
    g_theta = gram @ theta
    columns = np.flatnonzero(prob.active)

    history: List[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        max_change = 0.0
        for j in columns:
            v = gram[j, j]
            z = xty[j] - g_theta[j] + v * theta[j]
            if prob.penalized[j]:
                new = coordinate_update(z, v, lam[j], spec, pw[j])
            else:
                new = z / v
            delta = new - theta[j]
            if delta != 0.0:
                g_theta += gram[:, j] * delta
                theta[j] = new
                max_change = max(max_change, abs(delta))

        value = 0.5 * (prob.yty - 2.0 * xty @ theta + theta @ g_theta) + prob.penalty_at(theta, lam, pw, spec)
        if not np.isfinite(value):
            logger.error(f"Objetivo no finito en la iteración {iterations}")
            raise SolverError("objetivo no finito: revisar los datos de entrada")
        history.append(float(value))
        if max_change < tol:
            converged = True
            break

    if not converged:
        logger.warning(f"Descenso por coordenadas sin converger tras {max_iter} ciclos (lambda1={lambda1:.4g}, lambda2={lambda2:.4g})")

    alpha, beta = prob.to_original(theta)
    return Coefficients(
        alpha=alpha,
        beta=beta,
        theta_std=theta,
        objective=0.5 * prob.rss(theta) + prob.penalty_at(theta, lam, pw, spec),
        iterations=iterations,
        converged=converged,
        history=tuple(history),
    )


def lambda_grid(
    prob: RegressionProblem,
    size: Optional[int] = None,
    min_ratio: Optional[float] = None,
) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """Rejillas log-espaciadas descendentes desde lambda_max hasta min_ratio * lambda_max por bloque"""
    size = settings.grid_size if size is None else size
    min_ratio = settings.lambda_min_ratio if min_ratio is None else min_ratio
    grids = []
    for lam_max in prob.lambda_max():
        if lam_max <= 0:
            grids.append((0.0,))
        else:
            grids.append(tuple(float(v) for v in np.geomspace(lam_max, lam_max * min_ratio, size)))
    return grids[0], grids[1]


def _warm_source(i1: int, i2: int, n2: int, warm_start: str) -> int:
    """Índice plano de la solución de arranque; -1 = modelo nulo"""
    if warm_start == "lambda1":
        if i1 > 0:
            return (i1 - 1) * n2 + i2
        return i2 - 1 if i2 > 0 else -1
    if i2 > 0:
        return i1 * n2 + i2 - 1
    return (i1 - 1) * n2 if i1 > 0 else -1


def solution_path(
    prob: RegressionProblem,
    grid1: Sequence[float],
    grid2: Sequence[float],
    spec: Optional[PenaltySpec] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    warm_start: Optional[str] = None,
) -> PathResult:
    """Rejilla producto recorrida en orden lambda1-mayor, con arranques en caliente encadenados.

    Con ``warm_start="lambda2"`` (por defecto) la primera columna baja en lambda1
    con beta = 0 y cada ajuste arranca de su vecino de lambda2 mayor. Con
    ``"lambda1"`` cada ajuste arranca de su vecino de lambda1 mayor y la primera
    fila (alfa = 0) baja en lambda2; en esa fila beta absorbe todo el efecto del RWD y, por la
    correlación entre los bloques, MCP puede quedarse en mínimos locales densos.
    """
    warm_start = settings.warm_start if warm_start is None else warm_start
    if warm_start not in _WARM_STARTS:
        raise SolverError(f"arranque en caliente desconocido: {warm_start!r}; opciones: {_WARM_STARTS}")
    grid1 = tuple(sorted((float(v) for v in grid1), reverse=True))
    grid2 = tuple(sorted((float(v) for v in grid2), reverse=True))
    if not grid1 or not grid2 or min(grid1 + grid2) < 0:
        raise SolverError("las rejillas de lambda deben ser no vacías y no negativas")

    solutions: List[Coefficients] = []
    warm: List[int] = []
    grid: List[Tuple[float, float]] = []
    n2 = len(grid2)
    for i1, lam1 in enumerate(grid1):
        for i2, lam2 in enumerate(grid2):
            source = _warm_source(i1, i2, n2, warm_start)
            init = solutions[source] if source >= 0 else None
            solutions.append(coordinate_descent(prob, lam1, lam2, init=init, spec=spec, tol=tol, max_iter=max_iter))
            warm.append(source)
            grid.append((lam1, lam2))

    return PathResult(
        grid=grid,
        solutions=solutions,
        df=[c.df for c in solutions],
        warm_start=warm,
        grid1=grid1,
        grid2=grid2,
    )


def kkt_check(
    prob: RegressionProblem,
    c: Coefficients,
    lambda1: float,
    lambda2: float,
    spec: Optional[PenaltySpec] = None,
) -> KKTReport:
    """Violación de las condiciones de estacionariedad por coordenada (escala estandarizada)"""
    spec = spec or PenaltySpec()
    theta = c.theta_std
    gradient = prob.gradient(theta)
    lam = prob.lambdas(lambda1, lambda2)
    pw = prob.penalty_weights(spec)

    violations = np.zeros(prob.m)
    for j in np.flatnonzero(prob.active):
        if not prob.penalized[j]:
            violations[j] = abs(gradient[j])
            continue
        if theta[j] != 0.0:
            derivative = rho_eval(abs(theta[j]), lam[j], spec, pw[j])[1]
            violations[j] = abs(gradient[j] + np.sign(theta[j]) * derivative)
        else:
            bound = rho_eval(0.0, lam[j], spec, pw[j])[1]
            violations[j] = max(0.0, abs(gradient[j]) - bound)

    return KKTReport(max_violation=float(violations.max(initial=0.0)), violations=violations)


def refit_support(prob: RegressionProblem, columns: Sequence[int]) -> Coefficients:
    """Mínimos cuadrados ponderados sin penalizar sobre un soporte fijo (más los interceptos)"""
    keep = np.zeros(prob.m, dtype=bool)
    keep[np.asarray(columns, dtype=int)] = True
    keep |= ~prob.penalized
    idx = np.flatnonzero(keep & prob.active)
    theta = np.zeros(prob.m)
    if idx.size:
        theta[idx] = np.linalg.lstsq(prob.gram[np.ix_(idx, idx)], prob.xty[idx], rcond=None)[0]
    alpha, beta = prob.to_original(theta)
    return Coefficients(
        alpha=alpha,
        beta=beta,
        theta_std=theta,
        objective=0.5 * prob.rss(theta),
        iterations=0,
        converged=True,
    )
