import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from core.config import settings
from core.errors import HTEFuseError
from models.data import Dataset
from models.schemas import BaselineVariant, NuisanceFit
from models.study import ReplicateRecord, SimulationConfig, SimulationTruth, StudyReport
from services.baselines import fit_baseline
from services.fusion import FusionEstimator
from simulation.generator import calibrate_censoring, generate, true_coefficients
from simulation.metrics import compute_metrics, summarize_coefficients

logger = logging.getLogger(__name__)


class StudyPreset(BaseModel):
    """Estudio predefinido: escenario, estimadores y número de réplicas"""

    model_config = ConfigDict(frozen=True)

    name: str
    config: SimulationConfig
    estimators: List[str]
    B: int = 500
    bootstrap_reps: int = 0
    bootstrap_estimators: List[str] = Field(default_factory=list)


_COMPARISON = ["RL.cv", "RL.bic", "RL.RCT", "RL.NAI", "OA.cv", "GM0.cv", "GM1.cv", "Meta.cv", "GM01.cv", "RL.or", "OA.or"]
_INFERENCE = ["RL.cv", "RL.RCT"]

PRESETS: Dict[str, StudyPreset] = {
    "table1": StudyPreset(name="table1", config=SimulationConfig(), estimators=_COMPARISON),
    "table2": StudyPreset(name="table2", config=SimulationConfig(), estimators=_COMPARISON),
    "table3": StudyPreset(
        name="table3",
        config=SimulationConfig(confounded=False),
        estimators=_INFERENCE,
        bootstrap_reps=500,
        bootstrap_estimators=_INFERENCE,
    ),
    "table4": StudyPreset(
        name="table4",
        config=SimulationConfig(p=50, confounded=False),
        estimators=_INFERENCE,
        bootstrap_reps=500,
        bootstrap_estimators=_INFERENCE,
    ),
    "supp-signal1": StudyPreset(name="supp-signal1", config=SimulationConfig(signal=1.0), estimators=_COMPARISON),
    "supp-logistic": StudyPreset(
        name="supp-logistic",
        config=SimulationConfig(error_dist="logistic", target_cr=0.4),
        estimators=["RL.or", "RL.cv", "RL.bic", "OA.or", "OA.cv"],
    ),
    "supp-cr60": StudyPreset(
        name="supp-cr60",
        config=SimulationConfig(target_cr=0.6),
        estimators=["RL.or", "RL.cv", "RL.bic", "OA.or", "OA.cv"],
    ),
}

FAST_REPLICATES = 50
FAST_BOOTSTRAP = 100


class EstimatorOutput(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: np.ndarray
    beta: Optional[np.ndarray] = None
    confounded: bool = False
    se: Optional[np.ndarray] = None


class ReplicateContext:
    """Datos de una réplica; las nuisances se estiman una sola vez y se comparten entre estimadores"""

    def __init__(self, dataset: Dataset, truth: SimulationTruth, seed: int, fusion: FusionEstimator):
        self.dataset = dataset
        self.truth = truth
        self.seed = seed
        self.fusion = fusion
        self._nuisances: Optional[NuisanceFit] = None
        self._lock = threading.Lock()

    @property
    def nuisances(self) -> NuisanceFit:
        with self._lock:
            if self._nuisances is None:
                self._nuisances = self.fusion.estimate_nuisances(self.dataset, self.seed, threads=1)
            return self._nuisances


EstimatorFn = Callable[[ReplicateContext], EstimatorOutput]


def variant_estimator(variant: BaselineVariant, bootstrap_reps: int = 0, level: float = 0.95) -> EstimatorFn:
    """Estimador de estudio a partir de una variante (con bootstrap opcional)"""

    def run(ctx: ReplicateContext) -> EstimatorOutput:
        support = ctx.truth.support if variant.oracle else None
        fusion = ctx.fusion
        fit = fit_baseline(variant, ctx.dataset, ctx.nuisances, fusion.spec, ctx.seed, support=support, tuning_folds=fusion.tuning_folds, threads=1)
        se = None
        if bootstrap_reps:
            _, boot = fusion.bootstrap(ctx.dataset, variant, B=bootstrap_reps, level=level, seed=ctx.seed, point=fit, support=support)
            se = boot.se[: fit.alpha.shape[0]]
        return EstimatorOutput(alpha=fit.alpha, beta=fit.beta, confounded=fit.confounded, se=se)

    return run


def replicate_seeds(seed: int, B: int) -> List[int]:
    """Semillas independientes por réplica a partir de SeedSequence([seed, b])"""
    return [int(np.random.SeedSequence([seed, b]).generate_state(1)[0]) for b in range(B)]


def _run_replicate(
    b: int,
    replicate_seed: int,
    config: SimulationConfig,
    window: tuple,
    estimators: Mapping[str, EstimatorFn],
    fusion: FusionEstimator,
) -> ReplicateRecord:
    dataset, truth = generate(config, window[0], window[1], replicate_seed)
    ctx = ReplicateContext(dataset, truth, replicate_seed, fusion)
    record = ReplicateRecord(replicate=b, seed=replicate_seed, censoring_rate=float(np.mean(dataset.status == 0)))

    for label, estimator in estimators.items():
        try:
            out = estimator(ctx)
        except (HTEFuseError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning(f"Réplica {b}: {label} falló: {str(e)}")
            record.failures[label] = str(e)
            continue
        record.alpha[label] = [float(v) for v in out.alpha]
        record.beta[label] = None if out.beta is None else [float(v) for v in out.beta]
        record.confounded[label] = bool(out.confounded)
        if out.se is not None:
            record.se[label] = [float(v) for v in out.se]
    return record


def build_report(
    records: Sequence[ReplicateRecord],
    config: SimulationConfig,
    truth: SimulationTruth,
    estimators: Sequence[str],
    seed: int,
    level: float = 0.95,
    bootstrap_reps: int = 0,
    preset: Optional[str] = None,
) -> StudyReport:
    """Métricas y tablas de coeficientes recalculadas a partir de los registros por réplica"""
    names = [f"x{j}" for j in range(1, config.p + 1)]
    metrics, coefficients = [], []
    for label in estimators:
        fitted = [r for r in records if label in r.alpha]
        n_failed = sum(1 for r in records if label in r.failures)
        if not fitted:
            logger.warning(f"{label}: ninguna réplica terminó correctamente")
            continue
        alphas = [np.asarray(r.alpha[label]) for r in fitted]
        has_beta = fitted[0].beta.get(label) is not None
        flags = [r.confounded[label] for r in fitted] if has_beta else None
        metrics.append(compute_metrics(label, alphas, truth, confounded=flags, n_failed=n_failed))

        with_se = [r for r in fitted if label in r.se]
        ses = [np.asarray(r.se[label]) for r in with_se] if len(with_se) == len(fitted) else None
        coefficients.extend(summarize_coefficients(label, alphas, truth, names, ses=ses, level=level))

    return StudyReport(
        preset=preset,
        config=config,
        estimators=list(estimators),
        B=len(records),
        seed=seed,
        level=level,
        bootstrap_reps=bootstrap_reps,
        truth=truth.to_dict(),
        metrics=metrics,
        coefficients=coefficients,
        records=list(records),
    )


def run_study(
    config: SimulationConfig,
    estimators: Union[Sequence[str], Mapping[str, EstimatorFn]],
    B: int,
    seed: int,
    bootstrap_reps: int = 0,
    bootstrap_estimators: Optional[Sequence[str]] = None,
    fusion: Optional[FusionEstimator] = None,
    level: Optional[float] = None,
    threads: Optional[int] = None,
    calibration_draws: Optional[int] = None,
    preset: Optional[str] = None,
) -> StudyReport:
    """Estudio de simulación: generar, ajustar cada estimador y acumular métricas.

    ``estimators`` son etiquetas (RL.cv, OA.or, ...) o funciones sobre el
    contexto de la réplica. El bootstrap se aplica a ``bootstrap_estimators``
    (por defecto a todos) cuando ``bootstrap_reps`` > 0.
    """
    if B < 1:
        raise ValueError(f"el estudio necesita B >= 1, recibido {B}")
    level = settings.level if level is None else level
    fusion = fusion or FusionEstimator(threads=1)

    if isinstance(estimators, Mapping):
        functions = dict(estimators)
    else:
        boot = set(estimators if bootstrap_estimators is None else bootstrap_estimators)
        functions = {
            label: variant_estimator(BaselineVariant.parse(label), bootstrap_reps if label in boot else 0, level)
            for label in estimators
        }
    labels = list(functions)

    started = time.perf_counter()
    logger.info(f"=== ESTUDIO DE SIMULACIÓN: {B} réplicas, estimadores {labels} ===")
    t0, t1 = calibrate_censoring(config, mc=calibration_draws, seed=seed)
    seeds = replicate_seeds(seed, B)

    workers = max(1, threads or settings.threads)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(_run_replicate, b, s, config, (t0, t1), functions, fusion) for b, s in enumerate(seeds)]
        records = []
        for b, future in enumerate(futures):
            records.append(future.result())
            if (b + 1) % max(1, B // 10) == 0:
                logger.info(f"Réplicas completadas: {b + 1}/{B}")

    alpha, beta = true_coefficients(config.p, config.signal, config.confounded)
    truth = SimulationTruth(alpha=alpha, beta=beta, confounded=config.confounded, t0=t0, t1=t1)
    report = build_report(records, config, truth, labels, seed, level, bootstrap_reps, preset)
    runtime = time.perf_counter() - started
    logger.info(f"=== ESTUDIO COMPLETADO en {runtime:.1f} s ===")
    return report.model_copy(update={"runtime_seconds": runtime})


def report_tables(report: StudyReport) -> Dict[str, pd.DataFrame]:
    """Tablas RMSE (x100), selección (FDR y TIR en %) y coeficientes"""
    rmse = pd.DataFrame(
        {"estimator": [m.estimator for m in report.metrics], "RMSE_x100": [100 * m.rmse for m in report.metrics], "failed": [m.n_failed for m in report.metrics]}
    )
    selection = pd.DataFrame(
        {
            "estimator": [m.estimator for m in report.metrics],
            "FDR_pct": [100 * m.fdr for m in report.metrics],
            "TIR_pct": [None if m.tir is None else 100 * m.tir for m in report.metrics],
        }
    )
    coefficients = pd.DataFrame([c.model_dump() for c in report.coefficients])
    return {"rmse": rmse, "selection": selection, "coefficients": coefficients}


def render_tables(report: StudyReport, coefficients: int = 4) -> str:
    """Tablas alineadas para lectura humana; solo los primeros ``coefficients`` coeficientes"""
    tables = report_tables(report)
    parts = [
        f"Estudio {report.preset or ''} B={report.B} p={report.config.p} CR={report.config.target_cr} Signal={report.config.signal} confusión={report.config.confounded}",
        tables["rmse"].to_string(index=False, float_format=lambda v: f"{v:.2f}"),
        tables["selection"].to_string(index=False, float_format=lambda v: f"{v:.2f}", na_rep="-"),
    ]
    coef = tables["coefficients"]
    if not coef.empty:
        keep = [f"x{j}" for j in range(1, coefficients + 1)]
        coef = coef[coef["coefficient"].isin(keep)].drop(columns=["truth"])
        parts.append(coef.to_string(index=False, float_format=lambda v: f"{v:.3f}", na_rep="-"))
    return "\n\n".join(parts) + "\n"


def write_replicate_log(records: Sequence[ReplicateRecord], path: Union[str, Path]) -> Path:
    """Un registro JSON por línea"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")
    return path


def read_replicate_log(path: Union[str, Path]) -> List[ReplicateRecord]:
    with Path(path).open(encoding="utf-8") as handle:
        return [ReplicateRecord.model_validate_json(line) for line in handle if line.strip()]
