import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import KFold, train_test_split
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import StandardScaler

from core.config import settings
from core.errors import NuisanceError
from ingestion.splitter import split_folds
from models.data import Dataset
from models.schemas import NuisanceConfig, NuisanceFit, PropensityMode
from services.stute import compute_weights

logger = logging.getLogger(__name__)

_DEGENERATE_STD = 1e-12


class PropensityModel:
    """e(X, S) = P(A = 1 | X, S), un modelo (o una constante) por estrato S"""

    def __init__(self, models: Dict[int, object], clip: float):
        self.models = models
        self.clip = clip

    def predict(self, covariates: np.ndarray, source: np.ndarray) -> np.ndarray:
        covariates = np.asarray(covariates, dtype=float)
        source = np.asarray(source, dtype=int)
        out = np.empty(source.shape[0])
        for s in np.unique(source):
            rows = source == s
            model = self.models.get(int(s))
            if model is None:
                raise NuisanceError(f"no hay modelo de propensión para el estrato S={s}")
            if isinstance(model, float):
                out[rows] = model
            elif covariates.shape[1] == 0:
                out[rows] = model.predict_proba(np.zeros((int(rows.sum()), 1)))[:, 1]
            else:
                out[rows] = model.predict_proba(covariates[rows])[:, 1]
        return np.clip(out, self.clip, 1.0 - self.clip)


class LinearPredictor:
    """Predictor lineal sobre la base (1, X, S[, S*X])"""

    def __init__(self, intercept: float, coef: np.ndarray, source_interaction: bool):
        self.intercept = intercept
        self.coef = coef
        self.source_interaction = source_interaction

    def predict(self, covariates: np.ndarray, source: np.ndarray) -> np.ndarray:
        basis = mean_basis(covariates, source, self.source_interaction)
        return self.intercept + basis @ self.coef


def mean_basis(covariates: np.ndarray, source: np.ndarray, source_interaction: bool = False) -> np.ndarray:
    """Base de mu sin intercepto: X, S y opcionalmente S*X"""
    covariates = np.asarray(covariates, dtype=float)
    s = np.asarray(source, dtype=float)[:, None]
    blocks = [covariates, s]
    if source_interaction:
        blocks.append(s * covariates)
    return np.hstack(blocks)


def weighted_ridge(basis: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float) -> Tuple[float, np.ndarray]:
    """Ridge ponderado con intercepto sin penalizar.

    Las columnas se estandarizan con la media y desviación ponderadas; las de
    varianza nula quedan con coeficiente 0. Devuelve (intercepto, coeficientes)
    en la escala original.
    """
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if total <= 0:
        raise NuisanceError("no hay observaciones con peso positivo")
    wn = w / total
    center = wn @ basis
    std = np.sqrt(wn @ (basis - center) ** 2)
    keep = std > _DEGENERATE_STD
    coef = np.zeros(basis.shape[1])
    y_center = float(wn @ y)

    if np.any(keep):
        z = (basis[:, keep] - center[keep]) / std[keep]
        root = np.sqrt(wn)[:, None]
        lhs = np.vstack([root * z, np.sqrt(ridge) * np.eye(z.shape[1])])
        rhs = np.concatenate([np.sqrt(wn) * (y - y_center), np.zeros(z.shape[1])])
        solution = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        coef[keep] = solution / std[keep]

    intercept = y_center - float(center @ coef)
    return intercept, coef


def _select_ridge(basis: np.ndarray, y: np.ndarray, w: np.ndarray, cfg: NuisanceConfig, seed: int) -> float:
    """Ridge con menor error ponderado de validación cruzada interna"""
    positive = np.flatnonzero(w > 0)
    if positive.size < 2 * cfg.inner_folds:
        return cfg.ridge_grid[-1]

    errors = np.zeros(len(cfg.ridge_grid))
    inner = KFold(n_splits=cfg.inner_folds, shuffle=True, random_state=seed)
    for train_pos, test_pos in inner.split(positive):
        train, test = positive[train_pos], positive[test_pos]
        for r, ridge in enumerate(cfg.ridge_grid):
            intercept, coef = weighted_ridge(basis[train], y[train], w[train], ridge)
            residual = y[test] - intercept - basis[test] @ coef
            errors[r] += w[test] @ residual**2
    return cfg.ridge_grid[int(np.argmin(errors))]


def _fit_logistic(x: np.ndarray, a: np.ndarray, cfg: NuisanceConfig, seed: int) -> Pipeline:
    """Logística L2 con el ridge de mayor log-verosimilitud en una partición interna"""

    def build(ridge: float) -> Pipeline:
        return make_pipeline(StandardScaler(), LogisticRegression(C=1.0 / ridge, max_iter=1000))

    ridge = cfg.ridge_grid[-1]
    counts = np.bincount(a, minlength=2)
    if counts.min() >= 4:
        x_fit, x_val, a_fit, a_val = train_test_split(x, a, test_size=0.3, stratify=a, random_state=seed)
        best = -np.inf
        for candidate in cfg.ridge_grid:
            proba = np.clip(build(candidate).fit(x_fit, a_fit).predict_proba(x_val)[:, 1], 1e-12, 1 - 1e-12)
            loglik = float(np.sum(a_val * np.log(proba) + (1 - a_val) * np.log(1 - proba)))
            if loglik > best:
                best, ridge = loglik, candidate
    return build(ridge).fit(x, a)


def fit_propensity(d: Dataset, train_idx: Sequence[int], cfg: NuisanceConfig, seed: int = 0) -> PropensityModel:
    """Ajustar e(X, S) sobre las filas de entrenamiento, por separado en cada estrato S"""
    train_idx = np.asarray(train_idx, dtype=int)
    known = {1: cfg.known_e1, 0: cfg.known_e0}
    models: Dict[int, object] = {}

    for s in (0, 1):
        if known[s] is not None:
            models[s] = float(known[s])
            continue
        if cfg.propensity_mode == PropensityMode.KNOWN:
            continue
        rows = train_idx[d.source[train_idx] == s]
        if rows.size == 0:
            continue
        a = d.treatment[rows].astype(int)
        if np.unique(a).size < 2:
            raise NuisanceError(f"el estrato S={s} tiene un único brazo en entrenamiento; no se puede estimar la propensión")
        x = d.covariates[rows] if d.p > 0 else np.zeros((rows.size, 1))
        models[s] = _fit_logistic(x, a, cfg, seed)

    return PropensityModel(models, cfg.clip)


def fit_conditional_mean(
    d: Dataset,
    train_idx: Sequence[int],
    cfg: NuisanceConfig,
    arm: Optional[int] = None,
    seed: int = 0,
) -> LinearPredictor:
    """Regresión ridge de log T ponderada por Stute; con ``arm`` solo usa las filas A = arm"""
    rows = np.asarray(train_idx, dtype=int)
    if arm is not None:
        rows = rows[d.treatment[rows] == arm]
    label = "mu" if arm is None else f"mu{arm}"
    if rows.size == 0 or not np.any(d.status[rows] == 1):
        raise NuisanceError(f"{label}: todas las filas de entrenamiento están censuradas")

    w = compute_weights(d.time[rows], d.status[rows]).per_observation()
    y = d.log_time[rows]
    basis = mean_basis(d.covariates[rows], d.source[rows], cfg.source_interaction)
    ridge = _select_ridge(basis, y, w, cfg, seed)
    intercept, coef = weighted_ridge(basis, y, w, ridge)
    logger.debug(f"{label}: ridge={ridge:g} sobre {rows.size} filas")
    return LinearPredictor(intercept, coef, cfg.source_interaction)


def _fit_fold(d: Dataset, train: np.ndarray, test: np.ndarray, cfg: NuisanceConfig, seed: int) -> Tuple[np.ndarray, ...]:
    x, s = d.covariates[test], d.source[test]
    e = fit_propensity(d, train, cfg, seed).predict(x, s)
    mu = fit_conditional_mean(d, train, cfg, seed=seed).predict(x, s)
    mu0 = fit_conditional_mean(d, train, cfg, arm=0, seed=seed).predict(x, s)
    mu1 = fit_conditional_mean(d, train, cfg, arm=1, seed=seed).predict(x, s)
    return e, mu, mu0, mu1


def cross_fit(d: Dataset, cfg: NuisanceConfig, seed: int, threads: Optional[int] = None) -> NuisanceFit:
    """Predicciones fuera de fold de e, mu, mu0 y mu1"""
    folds = split_folds(d, cfg.k_folds, seed)
    outputs = [np.empty(d.n) for _ in range(4)]
    workers = max(1, min(threads or settings.threads, cfg.k_folds))

    try:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {
                k: executor.submit(_fit_fold, d, folds.train_index(k), folds.test_index(k), cfg, seed + k)
                for k in range(cfg.k_folds)
            }
            for k, future in futures.items():
                test = folds.test_index(k)
                for out, values in zip(outputs, future.result()):
                    out[test] = values
    except NuisanceError as e:
        logger.error(f"Error en el cross-fitting de nuisances: {str(e)}")
        raise

    logger.debug(f"Cross-fitting completado: K={cfg.k_folds}, tamaños {folds.sizes()}")
    e_hat, mu_hat, mu0_hat, mu1_hat = outputs
    return NuisanceFit(e_hat=e_hat, mu_hat=mu_hat, mu0_hat=mu0_hat, mu1_hat=mu1_hat, folds=folds, config=cfg)


def nuisance_config(**overrides) -> NuisanceConfig:
    """NuisanceConfig con los valores por defecto de la configuración global"""
    values = dict(k_folds=settings.nuisance_folds, clip=settings.clip, ridge_grid=settings.ridge_grid, inner_folds=settings.inner_folds, source_interaction=settings.source_interaction)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return NuisanceConfig(**values)
