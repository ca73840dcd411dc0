import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, Optional

import pandas as pd

from core.errors import HTEFuseError
from ingestion.pipeline import load_dataset, write_dataset
from models.data import ColumnSchema
from models.schemas import BaselineKind, BaselineVariant, BootstrapResult, FitResult, PropensityMode, RunConfig
from models.study import SimulationConfig
from services.fusion import FusionEstimator
from services.inference import detect_confounding
from services.nuisance import nuisance_config
from simulation.generator import calibrate_censoring, generate
from simulation.study import FAST_BOOTSTRAP, FAST_REPLICATES, PRESETS, render_tables, run_study, write_replicate_log

logger = logging.getLogger(__name__)


def _emit(text: str, output: Optional[str]) -> None:
    """Escribir en el fichero de salida o en stdout"""
    if output:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Resultado escrito en {path}")
    else:
        sys.stdout.write(text)


def _to_json(payload: Dict) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def _estimator(cfg: RunConfig) -> FusionEstimator:
    overrides = {"k_folds": cfg.folds}
    if cfg.known_propensity is not None:
        overrides.update(propensity_mode=PropensityMode.KNOWN, known_e1=cfg.known_propensity[0], known_e0=cfg.known_propensity[1])
    return FusionEstimator(
        penalty=cfg.penalty,
        gamma=cfg.gamma,
        nuisance=nuisance_config(**overrides),
        tuning_folds=cfg.tuning_folds,
        threads=cfg.threads,
    )


def _variant(cfg: RunConfig) -> BaselineVariant:
    return BaselineVariant(kind=BaselineKind(cfg.method), tuning_method=cfg.tuning, rct_only=cfg.rct_only)


def _coefficient_table(fit: FitResult, names, boot: Optional[BootstrapResult] = None) -> pd.DataFrame:
    labels = ["(intercept)"] + list(names)
    q = len(labels)
    rows = {"coefficient": labels, "alpha": fit.alpha}
    if fit.beta is not None:
        rows["beta"] = fit.beta
    frame = pd.DataFrame(rows)
    if boot is not None:
        frame["se_alpha"] = boot.se[:q]
        frame["ci_lower_alpha"] = boot.ci_lower[:q]
        frame["ci_upper_alpha"] = boot.ci_upper[:q]
        if fit.beta is not None:
            frame["se_beta"] = boot.se[q:]
    return frame


def _fit_payload(fit: FitResult, names) -> Dict:
    payload = fit.summary(tuple(names))
    verdict = detect_confounding(fit)
    labels = ["(intercept)"] + list(names)
    if fit.beta is not None:
        payload["confounding"] = {"confounded": verdict.confounded, "support_beta": [labels[j] for j in verdict.support_beta]}
    return payload


def handle_fit(cfg: RunConfig) -> int:
    """Ajustar el estimador pedido sobre un fichero de datos"""
    try:
        d = load_dataset(cfg.input, ColumnSchema(covariates=cfg.covariates))
        fit = _estimator(cfg).fit(d, _variant(cfg), seed=cfg.seed)
        if cfg.output_format == "table":
            text = f"{fit.label}: confusión={fit.confounded}\n" + _coefficient_table(fit, d.covariate_names).to_string(index=False) + "\n"
        else:
            text = _to_json(_fit_payload(fit, d.covariate_names))
        _emit(text, cfg.output)
        return 0
    except HTEFuseError as e:
        logger.error(f"Error en fit: {str(e)}")
        raise


def handle_bootstrap(cfg: RunConfig) -> int:
    """Ajuste más errores estándar e intervalos por bootstrap 0.632"""
    try:
        d = load_dataset(cfg.input, ColumnSchema(covariates=cfg.covariates))
        fit, boot = _estimator(cfg).bootstrap(d, _variant(cfg), B=cfg.bootstrap or None, level=cfg.level, seed=cfg.seed)
        if cfg.output_format == "table":
            text = f"{fit.label}: B={boot.B}, nivel={boot.level}\n" + _coefficient_table(fit, d.covariate_names, boot).to_string(index=False) + "\n"
        else:
            payload = _fit_payload(fit, d.covariate_names)
            labels = ["(intercept)"] + list(d.covariate_names)
            blocks = ["alpha"] + (["beta"] if fit.beta is not None else [])
            keys = [f"{block}.{name}" for block in blocks for name in labels]
            payload["bootstrap"] = {
                "B": boot.B,
                "level": boot.level,
                "subsample_size": boot.subsample_size,
                "attempts": boot.attempts,
                "se": dict(zip(keys, boot.se.tolist())),
                "ci_lower": dict(zip(keys, boot.ci_lower.tolist())),
                "ci_upper": dict(zip(keys, boot.ci_upper.tolist())),
            }
            text = _to_json(payload)
        _emit(text, cfg.output)
        return 0
    except HTEFuseError as e:
        logger.error(f"Error en bootstrap: {str(e)}")
        raise


def _simulation_config(cfg: RunConfig, base: Optional[SimulationConfig] = None) -> SimulationConfig:
    base = base or SimulationConfig()
    overrides = {
        "n": cfg.n,
        "p": cfg.p,
        "target_cr": cfg.cr,
        "signal": cfg.signal,
        "confounded": cfg.confounded,
        "error_dist": cfg.error_dist,
        "seed": cfg.seed,
    }
    return SimulationConfig(**{**base.model_dump(), **{k: v for k, v in overrides.items() if v is not None}})


def handle_simulate(cfg: RunConfig) -> int:
    """Generar un dataset simulado y su verdad"""
    try:
        sim = _simulation_config(cfg)
        t0, t1 = calibrate_censoring(sim, seed=cfg.seed)
        d, truth = generate(sim, t0, t1, cfg.seed)
        path = write_dataset(d, cfg.output)
        truth_path = Path(f"{path}.truth.json")
        truth_path.write_text(_to_json({**truth.to_dict(), "config": sim.model_dump()}), encoding="utf-8")
        logger.info(f"Verdad escrita en {truth_path}")
        return 0
    except HTEFuseError as e:
        logger.error(f"Error en simulate: {str(e)}")
        raise


def handle_benchmark(cfg: RunConfig) -> int:
    """Estudio de simulación a partir de un preset"""
    preset = PRESETS[cfg.preset or "table1"]
    try:
        sim = _simulation_config(cfg, preset.config)
        B = cfg.reps or (FAST_REPLICATES if cfg.fast else preset.B)
        bootstrap_reps = cfg.bootstrap or (min(FAST_BOOTSTRAP, preset.bootstrap_reps) if cfg.fast else preset.bootstrap_reps)
        estimators = cfg.estimators or preset.estimators
        fusion = _estimator(cfg.model_copy(update={"threads": 1}))

        report = run_study(
            sim,
            estimators,
            B=B,
            seed=cfg.seed,
            bootstrap_reps=bootstrap_reps,
            bootstrap_estimators=preset.bootstrap_estimators or None,
            fusion=fusion,
            level=cfg.level,
            threads=cfg.threads,
            preset=preset.name,
        )
        if cfg.output_format == "table":
            text = render_tables(report)
        else:
            text = report.model_dump_json(indent=2) + "\n"
        _emit(text, cfg.output)
        if cfg.output:
            write_replicate_log(report.records, f"{cfg.output}.replicates.jsonl")
        return 0
    except HTEFuseError as e:
        logger.error(f"Error en benchmark: {str(e)}")
        raise


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "fit": handle_fit,
    "bootstrap": handle_bootstrap,
    "simulate": handle_simulate,
    "benchmark": handle_benchmark,
}
