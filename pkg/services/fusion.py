import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from models.data import Dataset
from models.schemas import (
    BaselineKind,
    BaselineVariant,
    BootstrapResult,
    FitResult,
    NuisanceConfig,
    NuisanceFit,
    PenaltyFamily,
    PenaltySpec,
)
from services.baselines import Support, fit_baseline, fit_many
from services.inference import bootstrap_se
from services.nuisance import cross_fit, nuisance_config

logger = logging.getLogger(__name__)


class FusionEstimator:
    """Servicio principal: nuisances con cross-fitting y estimadores penalizados sobre la muestra RCT+RWD"""

    def __init__(
        self,
        penalty: Optional[PenaltyFamily] = None,
        gamma: Optional[float] = None,
        nuisance: Optional[NuisanceConfig] = None,
        tuning_folds: Optional[int] = None,
        threads: Optional[int] = None,
        retune_bootstrap: Optional[bool] = None,
    ):
        self.spec = PenaltySpec(family=penalty or settings.penalty, gamma=gamma if gamma is not None else settings.gamma)
        self.nuisance_config = nuisance or nuisance_config()
        self.tuning_folds = tuning_folds or settings.tuning_folds
        self.threads = threads or settings.threads
        self.retune_bootstrap = settings.retune_bootstrap if retune_bootstrap is None else retune_bootstrap
        logger.debug(f"FusionEstimator: penalización {self.spec.family.value} (gamma={self.spec.gamma}), K={self.nuisance_config.k_folds}")

    def estimate_nuisances(self, d: Dataset, seed: int, threads: Optional[int] = None) -> NuisanceFit:
        return cross_fit(d, self.nuisance_config, seed, threads=threads or self.threads)

    def fit(
        self,
        d: Dataset,
        variant: Optional[BaselineVariant] = None,
        seed: Optional[int] = None,
        nf: Optional[NuisanceFit] = None,
        support: Optional[Support] = None,
    ) -> FitResult:
        """Ajuste completo: nuisances (si no se pasan), selección de lambda y soportes"""
        variant = variant or BaselineVariant()
        seed = settings.seed if seed is None else seed
        logger.info(f"=== AJUSTANDO {variant.label} (n={d.n}, p={d.p}) ===")

        try:
            if nf is None:
                logger.info("Paso 1: Estimando nuisances con cross-fitting...")
                nf = self.estimate_nuisances(d, seed)
            logger.info("Paso 2: Seleccionando (lambda1, lambda2) y ajustando...")
            fit = fit_baseline(variant, d, nf, self.spec, seed, support=support, tuning_folds=self.tuning_folds, threads=self.threads)
            logger.info(f"{fit.label}: soporte alfa {list(fit.support_alpha)}, confusión={fit.confounded}")
            return fit
        except Exception as e:
            logger.error(f"=== ERROR AJUSTANDO {variant.label} ===")
            logger.error(f"Error: {str(e)}")
            raise

    def bootstrap(
        self,
        d: Dataset,
        variant: Optional[BaselineVariant] = None,
        B: Optional[int] = None,
        level: Optional[float] = None,
        seed: Optional[int] = None,
        point: Optional[FitResult] = None,
        support: Optional[Support] = None,
        keep_replicates: bool = False,
    ) -> Tuple[FitResult, BootstrapResult]:
        """Errores estándar por bootstrap 0.632 repitiendo todo el proceso en cada réplica.

        Salvo ``retune_bootstrap``, cada réplica reutiliza el (lambda1, lambda2)
        elegido con la muestra completa. Meta siempre reselecciona porque GM0 y
        GM1 tienen pares distintos.
        """
        variant = variant or BaselineVariant()
        seed = settings.seed if seed is None else seed
        point = point or self.fit(d, variant, seed, support=support)
        retune = self.retune_bootstrap or variant.kind == BaselineKind.META
        lambdas = None if retune else (point.lambda1, point.lambda2)

        def replicate(sub: Dataset, replicate_seed: int) -> np.ndarray:
            nf = cross_fit(sub, self.nuisance_config, replicate_seed, threads=1)
            fit = fit_baseline(variant, sub, nf, self.spec, replicate_seed, lambdas=lambdas, support=support, tuning_folds=self.tuning_folds, threads=1)
            return fit.coefficients.theta

        result = bootstrap_se(
            d,
            replicate,
            point.coefficients.theta,
            B=B,
            level=level,
            seed=seed,
            threads=self.threads,
            keep_replicates=keep_replicates,
        )
        return point, result

    def fit_many(
        self,
        d: Dataset,
        variants: Sequence[BaselineVariant],
        seed: int,
        support: Optional[Support] = None,
        threads: Optional[int] = None,
    ) -> Tuple[Dict[str, FitResult], Dict[str, str]]:
        """Varias variantes con las mismas nuisances; (resultados, fallos) por etiqueta"""
        nf = self.estimate_nuisances(d, seed, threads=threads)
        return fit_many(variants, d, nf, self.spec, seed, support=support, tuning_folds=self.tuning_folds, threads=threads or self.threads)
