import argparse
import logging
import sys
from typing import List, Optional, Sequence

from pydantic import ValidationError

from api.cli import HANDLERS
from core.config import settings
from core.errors import HTEFuseError
from models.schemas import BaselineKind, PenaltyFamily, RunConfig, TuningMethod
from simulation.study import PRESETS

logger = logging.getLogger(__name__)


def _pair(value: str) -> List[float]:
    parts = value.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("se esperan dos valores: e1,e0")
    try:
        return [float(v) for v in parts]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"valores no numéricos: {value}") from e


def _names(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htefuse",
        description="Efectos heterogéneos de tratamiento con datos de supervivencia censurados combinando RCT y RWD",
    )
    parser.add_argument("--log-level", default=None, help="Nivel de logging (por defecto HTEFUSE_LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="Fichero de salida (por defecto stdout)")
    common.add_argument("--format", dest="output_format", choices=["json", "table"], default="json")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)

    estimation = argparse.ArgumentParser(add_help=False)
    estimation.add_argument("--method", choices=[k.value for k in BaselineKind], default="rl")
    estimation.add_argument("--rct-only", action="store_true", help="Usar solo las filas RCT y omitir el bloque beta")
    estimation.add_argument("--tuning", choices=[t.value for t in TuningMethod])
    estimation.add_argument("--penalty", choices=[f.value for f in PenaltyFamily])
    estimation.add_argument("--gamma", type=float)
    estimation.add_argument("--folds", type=int, help="Folds del cross-fitting de nuisances")
    estimation.add_argument("--tuning-folds", type=int, help="Folds de la validación cruzada de lambda")
    estimation.add_argument("--known-propensity", type=_pair, metavar="E1,E0")
    estimation.add_argument("--bootstrap", type=int, help="Réplicas bootstrap")
    estimation.add_argument("--level", type=float)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="Fichero delimitado con time, status, treat, source y covariables")
    data.add_argument("--covariates", type=_names, help="Columnas de covariables separadas por comas")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--p", type=int)
    scenario.add_argument("--n", type=int)
    scenario.add_argument("--cr", type=float, help="Tasa de censura objetivo")
    scenario.add_argument("--signal", type=float)
    scenario.add_argument("--confounded", action=argparse.BooleanOptionalAction, default=None)
    scenario.add_argument("--error-dist", choices=["normal", "logistic"])

    commands.add_parser("fit", parents=[common, estimation, data], help="Ajustar un estimador sobre un fichero")
    commands.add_parser("bootstrap", parents=[common, estimation, data], help="Ajuste con errores estándar bootstrap 0.632")
    commands.add_parser("simulate", parents=[common, scenario], help="Generar un dataset simulado y su verdad")
    bench = commands.add_parser("benchmark", parents=[common, estimation, scenario], help="Estudio de simulación")
    bench.add_argument("--preset", choices=sorted(PRESETS))
    bench.add_argument("--reps", type=int, help="Número de réplicas del estudio")
    bench.add_argument("--fast", action="store_true", help="Réplicas y bootstrap reducidos")
    bench.add_argument("--estimators", type=_names, help="Etiquetas separadas por comas (RL.cv, OA.or, ...)")
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Ejecutar la CLI; devuelve el código de salida (0 ok, 1 error de datos, 2 uso incorrecto)"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    values = {k: v for k, v in vars(args).items() if v is not None and k != "log_level"}
    try:
        cfg = RunConfig(**values)
    except ValidationError as e:
        print(f"htefuse {args.command}: argumentos inválidos\n{e}", file=sys.stderr)
        return 2

    try:
        return HANDLERS[cfg.command](cfg)
    except HTEFuseError as e:
        print(f"htefuse {cfg.command}: {str(e)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run_command())
