import numpy as np
import pytest

from core.errors import TuningError
from models.schemas import PenaltySpec, TuningMethod
from services.solver import lambda_grid, robinson_data, solution_path
from services.tuning import bic_criterion, bic_select, cv_select
from tests.conftest import make_dataset, oracle_nuisances


@pytest.fixture
def data(rng):
    d = make_dataset(rng, n=240, p=4, censor=0.2)
    return robinson_data(d, oracle_nuisances(d))


def test_single_pair_grid_is_returned(data):
    result = cv_select(data, [0.05], [0.1], k=3, seed=0)
    assert (result.lambda1, result.lambda2) == (0.05, 0.1)
    assert result.criterion_table.shape == (1, 1)
    assert result.method == TuningMethod.CV


def test_cv_is_deterministic_across_thread_counts(data):
    prob = data.problem()
    grid1, grid2 = lambda_grid(prob, size=4)
    first = cv_select(data, grid1, grid2, k=3, seed=9, threads=1)
    second = cv_select(data, grid1, grid2, k=3, seed=9, threads=3)
    np.testing.assert_array_equal(first.criterion_table, second.criterion_table)
    assert first.index == second.index
    assert first.criterion_table.shape == (4, 4)


def test_cv_selects_the_table_minimum(data):
    grid1, grid2 = lambda_grid(data.problem(), size=5)
    result = cv_select(data, grid1, grid2, k=3, seed=1)
    i1, i2 = result.index
    assert result.criterion_table[i1, i2] == result.criterion_table.min()
    assert result.lambda1 == result.grid1[i1] and result.lambda2 == result.grid2[i2]


def test_empty_grid_fails(data):
    with pytest.raises(TuningError):
        cv_select(data, [], [0.1], k=3)


def test_bic_uses_the_stute_weighted_rss(data):
    prob = data.problem()
    path = solution_path(prob, *lambda_grid(prob, size=3))
    table = bic_criterion(prob, path)
    for value, c, (lam1, lam2) in zip(table, path.solutions, path.grid):
        rss = 2.0 * (c.objective - prob.penalty_total(c.theta_std, lam1, lam2, PenaltySpec()))
        expected = prob.n_eff * np.log(rss / prob.weights.sum()) + np.log(prob.n_eff) * c.df
        assert value == pytest.approx(expected, rel=1e-8)


def test_bic_prefers_sparser_model_on_ties(data):
    prob = data.problem()
    path = solution_path(prob, *lambda_grid(prob, size=4))
    result = bic_select(prob, path)
    table = result.criterion_table
    i1, i2 = result.index
    assert table[i1, i2] == table.min()
    flat = int(np.flatnonzero(table.ravel() == table.min())[0])
    assert divmod(flat, table.shape[1]) == (i1, i2)
    assert result.method == TuningMethod.BIC
