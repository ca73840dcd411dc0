import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np

from core.config import settings
from core.errors import CalibrationError
from models.data import Dataset
from models.study import SimulationConfig, SimulationTruth

logger = logging.getLogger(__name__)

CENSORING_WIDTH = 4.0
CALIBRATION_TOLERANCE = 0.005
_MIN_CALIBRATION_DRAWS = 10000


class LatentSample(NamedTuple):
    source: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    log_failure: np.ndarray


def true_coefficients(p: int, signal: float, confounded: bool) -> Tuple[np.ndarray, np.ndarray]:
    """alfa* = Signal (1_4, -1_4, 0) y beta* = Signal (1_2, -1_2, 0) o 0, con intercepto nulo en 0"""
    if p < 8:
        raise ValueError(f"el proceso generador necesita p >= 8, recibido {p}")
    alpha = np.zeros(p + 1)
    alpha[1:5], alpha[5:9] = signal, -signal
    beta = np.zeros(p + 1)
    if confounded:
        beta[1:3], beta[3:5] = signal, -signal
    return alpha, beta


def _covariate_shift(cfg: SimulationConfig) -> np.ndarray:
    shift = np.zeros(cfg.p)
    shift[:8] = 0.2
    return shift


def _covariance(cfg: SimulationConfig) -> np.ndarray:
    lags = np.abs(np.subtract.outer(np.arange(cfg.p), np.arange(cfg.p)))
    return cfg.rho**lags


def _control_mean(cfg: SimulationConfig, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """mu0(X, S) = sin(X1) + 0.2 X4^2 - 0.5 X'alfa* - 0.5 (1-S) X'beta*"""
    alpha, beta = true_coefficients(cfg.p, cfg.signal, cfg.confounded)
    return np.sin(x[:, 0]) + 0.2 * x[:, 3] ** 2 - 0.5 * x @ alpha[1:] - 0.5 * (1 - s) * (x @ beta[1:])


def _draw_latent(cfg: SimulationConfig, n: int, rng: np.random.Generator) -> LatentSample:
    alpha, beta = true_coefficients(cfg.p, cfg.signal, cfg.confounded)
    s = rng.binomial(1, cfg.pr_s1, n)
    a = rng.binomial(1, cfg.pr_a, n)

    chol = np.linalg.cholesky(_covariance(cfg))
    x = a[:, None] * _covariate_shift(cfg) + rng.standard_normal((n, cfg.p)) @ chol.T

    x_alpha = x @ alpha[1:]
    x_beta = x @ beta[1:]
    # Confusor no medido del RWD: u | A, X ~ N(A X'beta*, 1)
    u = a * x_beta + rng.standard_normal(n)
    eps = rng.standard_normal(n) if cfg.error_dist == "normal" else rng.logistic(size=n)

    log_failure = _control_mean(cfg, x, s) + a * x_alpha + (1 - s) * u + eps
    return LatentSample(source=s, treatment=a, covariates=x, log_failure=log_failure)


def true_nuisances(cfg: SimulationConfig, d: Dataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(e, mu, mu0, mu1) verdaderos del proceso generador sobre las filas de ``d``.

    X | A ~ N(A * shift, Sigma), así que e(X) es logística lineal en X y no
    depende de S. Las medias son las de log T sin censura.
    """
    alpha, beta = true_coefficients(cfg.p, cfg.signal, cfg.confounded)
    x, s = d.covariates, d.source
    shift = _covariate_shift(cfg)
    slope = np.linalg.solve(_covariance(cfg), shift)
    log_odds = np.log(cfg.pr_a / (1.0 - cfg.pr_a)) + x @ slope - 0.5 * shift @ slope
    e = 1.0 / (1.0 + np.exp(-log_odds))

    mu0 = _control_mean(cfg, x, s)
    mu1 = mu0 + x @ alpha[1:] + (1 - s) * (x @ beta[1:])
    return e, e * mu1 + (1 - e) * mu0, mu0, mu1



def _empirical_rate(log_failure: np.ndarray, uniforms: np.ndarray, shift: float) -> float:
    return float(np.mean(log_failure > shift + CENSORING_WIDTH * uniforms))


def censoring_rate(cfg: SimulationConfig, shift: float, mc: int = 100000, seed: int = 0) -> float:
    """Tasa de censura Monte Carlo con log C ~ U[shift, shift + 4]"""
    rng = np.random.default_rng(seed)
    latent = _draw_latent(cfg, mc, rng)
    return _empirical_rate(latent.log_failure, rng.random(mc), shift)


def calibrate_censoring(cfg: SimulationConfig, mc: Optional[int] = None, seed: Optional[int] = None) -> Tuple[float, float]:
    """Ventana [t0, t0 + 4] de log C con tasa de censura target_cr, por bisección sobre t0.

    Las mc extracciones se fijan al inicio, así que la tasa es monótona en t0.
    """
    mc = settings.calibration_draws if mc is None else mc
    seed = cfg.seed if seed is None else seed
    if mc < _MIN_CALIBRATION_DRAWS:
        raise CalibrationError(f"la calibración necesita al menos {_MIN_CALIBRATION_DRAWS} extracciones, recibido {mc}")

    rng = np.random.default_rng(seed)
    latent = _draw_latent(cfg, mc, rng)
    uniforms = rng.random(mc)
    target = cfg.target_cr

    # lo: toda la muestra censurada; hi: ninguna observación censurada
    lo = float(latent.log_failure.min()) - CENSORING_WIDTH - 1.0
    hi = float(latent.log_failure.max()) + 1.0
    if not _empirical_rate(latent.log_failure, uniforms, hi) <= target <= _empirical_rate(latent.log_failure, uniforms, lo):
        raise CalibrationError(f"la tasa de censura {target} no es alcanzable")

    shift = 0.5 * (lo + hi)
    rate = _empirical_rate(latent.log_failure, uniforms, shift)
    for _ in range(200):
        if abs(rate - target) <= 0.1 * CALIBRATION_TOLERANCE:
            break
        if rate > target:
            lo = shift
        else:
            hi = shift
        shift = 0.5 * (lo + hi)
        rate = _empirical_rate(latent.log_failure, uniforms, shift)

    if abs(rate - target) > CALIBRATION_TOLERANCE:
        logger.error(f"Calibración fallida: tasa {rate:.4f} frente a objetivo {target}")
        raise CalibrationError(f"no se alcanza la tasa de censura {target} (obtenida {rate:.4f})")

    logger.info(f"Censura calibrada: log C ~ U[{shift:.4f}, {shift + CENSORING_WIDTH:.4f}], tasa {rate:.4f}")
    return shift, shift + CENSORING_WIDTH


def generate(cfg: SimulationConfig, t0: float, t1: float, seed: int) -> Tuple[Dataset, SimulationTruth]:
    """Una muestra RCT+RWD censurada y sus coeficientes verdaderos"""
    if t1 <= t0:
        raise ValueError(f"ventana de censura vacía: [{t0}, {t1}]")
    rng = np.random.default_rng(seed)
    latent = _draw_latent(cfg, cfg.n, rng)
    log_censoring = t0 + (t1 - t0) * rng.random(cfg.n)

    status = (latent.log_failure <= log_censoring).astype(int)
    log_observed = np.minimum(latent.log_failure, log_censoring)
    dataset = Dataset(
        time=np.exp(log_observed),
        status=status,
        treatment=latent.treatment,
        source=latent.source,
        covariates=latent.covariates,
    )
    alpha, beta = true_coefficients(cfg.p, cfg.signal, cfg.confounded)
    truth = SimulationTruth(alpha=alpha, beta=beta, confounded=cfg.confounded, t0=t0, t1=t1)
    return dataset, truth
