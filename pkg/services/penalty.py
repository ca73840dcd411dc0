import logging
from typing import Tuple, Union

import numpy as np

from models.schemas import PenaltyFamily, PenaltySpec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_KNOT_RTOL = 1e-12


def _mcp(t: np.ndarray, lam: float, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    knot = gamma * lam
    # gamma * lam redondeado puede quedar justo por encima de t = gamma * lam
    flat = (t >= knot) | np.isclose(t, knot, rtol=_KNOT_RTOL, atol=0.0)
    value = np.where(flat, 0.5 * gamma * lam**2, lam * t - t**2 / (2.0 * gamma))
    derivative = np.where(flat, 0.0, np.maximum(lam - t / gamma, 0.0))
    return value, derivative


def _scad(t: np.ndarray, lam: float, a: float) -> Tuple[np.ndarray, np.ndarray]:
    value = np.where(
        t <= lam,
        lam * t,
        np.where(t <= a * lam, (2.0 * a * lam * t - t**2 - lam**2) / (2.0 * (a - 1.0)), 0.5 * lam**2 * (a + 1.0)),
    )
    derivative = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
    return value, derivative


def rho_eval(t: ArrayLike, lam: ArrayLike, spec: PenaltySpec, weight: ArrayLike = 1.0) -> Tuple[ArrayLike, ArrayLike]:
    """Valor y derivada por la derecha de rho(t; lambda) para t >= 0.

    ``lam`` y ``weight`` pueden ser vectores alineados con ``t``. ``weight`` es el
    peso del lasso adaptativo (ignorado por MCP y SCAD).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("rho está definida para t >= 0")
    lam_arr = np.asarray(lam, dtype=float)
    if np.all(lam_arr <= 0):
        # lambda = 0 anula la penalización
        zeros = np.zeros(np.broadcast(t_arr, lam_arr).shape)
        return (float(zeros), float(zeros)) if zeros.ndim == 0 else (zeros, zeros)
    lam = np.maximum(lam_arr, 0.0)

    if spec.family == PenaltyFamily.MCP:
        value, derivative = _mcp(t_arr, lam, spec.gamma)
    elif spec.family == PenaltyFamily.SCAD:
        value, derivative = _scad(t_arr, lam, spec.gamma)
    else:
        w = np.asarray(weight, dtype=float)
        value, derivative = w * lam * t_arr, w * lam * np.ones_like(t_arr)

    if np.ndim(value) == 0:
        return float(value), float(derivative)
    return value, derivative


def coordinate_update(z: float, v: float, lam: float, spec: PenaltySpec, weight: float = 1.0) -> float:
    """Minimizador global de 0.5*v*theta^2 - z*theta + rho(|theta|; lambda)"""
    if v <= 0:
        raise ValueError(f"v debe ser positivo, recibido {v}")
    if lam <= 0:
        return z / v

    abs_z = abs(z)
    sign = 1.0 if z >= 0 else -1.0

    if spec.family == PenaltyFamily.MCP:
        gamma = spec.gamma
        if v <= 1.0 / gamma:
            raise ValueError(f"MCP necesita v > 1/gamma (v={v}, gamma={gamma})")
        if abs_z <= v * gamma * lam:
            return sign * max(abs_z - lam, 0.0) / (v - 1.0 / gamma)
        return z / v

    if spec.family == PenaltyFamily.SCAD:
        a = spec.gamma
        if v <= 1.0 / (a - 1.0):
            raise ValueError(f"SCAD necesita v > 1/(gamma-1) (v={v}, gamma={a})")
        if abs_z <= lam * (1.0 + v):
            return sign * max(abs_z - lam, 0.0) / v
        if abs_z <= a * lam * v:
            return sign * (abs_z * (a - 1.0) - a * lam) / (v * (a - 1.0) - 1.0)
        return z / v

    threshold = weight * lam
    return sign * max(abs_z - threshold, 0.0) / v
