import numpy as np
import pytest

from models.schemas import PenaltyFamily, PenaltySpec
from services.penalty import coordinate_update, rho_eval

MCP = PenaltySpec(family=PenaltyFamily.MCP, gamma=3.0)
SCAD = PenaltySpec(family=PenaltyFamily.SCAD)


def _scalar_objective(theta, z, v, lam, spec, weight=1.0):
    return 0.5 * v * theta**2 - z * theta + rho_eval(np.abs(theta), lam, spec, weight)[0]


def test_mcp_values():
    assert rho_eval(0.0, 0.2, MCP) == (0.0, pytest.approx(0.2))
    value, derivative = rho_eval(0.6, 0.2, MCP)
    assert value == pytest.approx(0.06)
    assert derivative == 0.0
    value, derivative = rho_eval(0.1, 0.2, MCP)
    assert value == pytest.approx(0.02 - 0.01 / 6)
    assert derivative == pytest.approx(1 / 6)


@pytest.mark.parametrize("lam", [0.1, 0.2, 0.3, 0.7, 1.1])
def test_mcp_derivative_vanishes_at_the_knot(lam):
    # el nudo escrito en decimal, no como el producto gamma * lam en coma flotante
    knot = float(f"{MCP.gamma * lam:.10g}")
    value, derivative = rho_eval(knot, lam, MCP)
    assert derivative == 0.0
    assert value == pytest.approx(0.5 * MCP.gamma * lam**2)
    _, derivatives = rho_eval(np.array([knot, 2 * knot]), np.array([lam, lam]), MCP)
    np.testing.assert_array_equal(derivatives, [0.0, 0.0])


def test_scad_is_continuous_at_knots():
    lam, a = 0.5, SCAD.gamma
    for knot in (lam, a * lam):
        below = rho_eval(knot - 1e-9, lam, SCAD)[0]
        above = rho_eval(knot + 1e-9, lam, SCAD)[0]
        assert below == pytest.approx(above, abs=1e-7)
    assert rho_eval(10.0, lam, SCAD) == (pytest.approx(0.5 * lam**2 * (a + 1)), 0.0)


def test_adaptive_lasso_scales_with_weight():
    spec = PenaltySpec(family=PenaltyFamily.ADAPTIVE_LASSO)
    assert rho_eval(2.0, 0.5, spec, weight=3.0) == (pytest.approx(3.0), pytest.approx(1.5))


def test_rho_rejects_negative_argument():
    with pytest.raises(ValueError):
        rho_eval(-0.1, 0.2, MCP)


@pytest.mark.parametrize("spec", [MCP, SCAD, PenaltySpec(family=PenaltyFamily.ADAPTIVE_LASSO)])
def test_rho_is_nondecreasing(spec):
    t = np.linspace(0, 5, 500)
    values, _ = rho_eval(t, 0.7, spec)
    assert values[0] == 0.0
    assert np.all(np.diff(values) >= -1e-12)


def test_mcp_update_examples():
    assert coordinate_update(0.15, 1.0, 0.2, MCP) == 0.0
    assert coordinate_update(0.9, 1.0, 0.2, MCP) == pytest.approx(0.9)
    assert coordinate_update(0.3, 1.0, 0.2, MCP) == pytest.approx(0.15)


def test_update_is_odd_and_reduces_to_least_squares():
    for spec in (MCP, SCAD):
        assert coordinate_update(-0.37, 1.3, 0.2, spec) == -coordinate_update(0.37, 1.3, 0.2, spec)
        assert coordinate_update(0.37, 1.3, 0.0, spec) == pytest.approx(0.37 / 1.3)


def test_mcp_requires_convexity_in_v():
    with pytest.raises(ValueError):
        coordinate_update(0.5, 0.2, 0.1, MCP)


@pytest.mark.parametrize("spec", [MCP, SCAD, PenaltySpec(family=PenaltyFamily.ADAPTIVE_LASSO)])
def test_update_matches_grid_minimization(spec, rng):
    for _ in range(100):
        z = rng.uniform(-2, 2)
        v = rng.uniform(1.0, 3.0)
        lam = rng.uniform(0.01, 1.0)
        theta = coordinate_update(z, v, lam, spec)
        bound = max(2 * abs(z) / v, 1e-3)
        grid = np.linspace(-bound, bound, 40001)
        best = _scalar_objective(grid, z, v, lam, spec).min()
        assert _scalar_objective(theta, z, v, lam, spec) <= best + 1e-9


def test_penalty_spec_defaults_and_validation():
    assert PenaltySpec().gamma == 3.0
    assert SCAD.gamma == 3.7
    with pytest.raises(ValueError):
        PenaltySpec(family=PenaltyFamily.MCP, gamma=1.0)
    with pytest.raises(ValueError):
        PenaltySpec(family=PenaltyFamily.SCAD, gamma=2.0)
