import numpy as np
import pytest

from core.errors import DataValidationError
from ingestion.pipeline import load_dataset, write_dataset
from models.data import ColumnSchema, Dataset, Observation


def test_load_small_file(csv_file):
    d = load_dataset(csv_file)
    assert (d.n, d.p) == (4, 2)
    assert d.covariate_names == ("x1", "x2")
    assert d.n1 == 2 and d.n0 == 2
    np.testing.assert_array_equal(d.design()[:, 0], np.ones(4))


def test_nonpositive_time_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "time,status,treat,source,x1\n1.0,1,1,1,0.1\n2.0,1,0,1,0.2\n0,1,1,0,0.3\n",
        encoding="utf-8",
    )
    with pytest.raises(DataValidationError) as err:
        load_dataset(path)
    assert err.value.rows == [3]
    assert "fila 3" in str(err.value)


def test_non_binary_status_and_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,status,treat,source,x1\n1.0,2,1,1,0.1\n2.0,1,0,1,0.2\n", encoding="utf-8")
    with pytest.raises(DataValidationError) as err:
        load_dataset(path)
    assert err.value.rows == [1]

    path.write_text("time,status,source,x1\n1.0,1,1,0.1\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="Faltan columnas"):
        load_dataset(path)


def test_ragged_row_is_reported(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("time,status,treat,source,x1\n1.0,1,1,1,0.1\n2.0,1,0,1,0.2,9.9\n", encoding="utf-8")
    with pytest.raises(DataValidationError) as err:
        load_dataset(path)
    assert err.value.rows == [2]


def test_requires_rct_rows(tmp_path):
    path = tmp_path / "rwd.csv"
    path.write_text("time,status,treat,source,x1\n1.0,1,1,0,0.1\n2.0,1,0,0,0.2\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="RCT"):
        load_dataset(path)


def test_custom_column_schema(tmp_path):
    path = tmp_path / "custom.csv"
    path.write_text("T,D,A,S,age\n1.0,1,1,1,40\n2.0,0,0,1,50\n", encoding="utf-8")
    schema = ColumnSchema(time="T", status="D", treatment="A", source="S", covariates=["age"])
    d = load_dataset(path, schema)
    assert d.covariate_names == ("age",)
    np.testing.assert_array_equal(d.status, [1, 0])


def test_write_then_load_is_identical(simulated_dataset, tmp_path):
    path = write_dataset(simulated_dataset, tmp_path / "sim.csv")
    assert load_dataset(path) == simulated_dataset


def test_written_floats_load_back_bit_for_bit(rng, tmp_path):
    n = 400
    d = Dataset(
        time=np.exp(rng.standard_normal(n)),
        status=rng.binomial(1, 0.8, n),
        treatment=rng.binomial(1, 0.5, n),
        source=np.r_[np.ones(n // 2, dtype=int), np.zeros(n - n // 2, dtype=int)],
        covariates=np.column_stack([rng.standard_normal(n) / 3.0, np.full(n, 0.1 + 0.2)]),
    )
    loaded = load_dataset(write_dataset(d, tmp_path / "floats.csv"))
    assert np.array_equal(loaded.time, d.time)
    assert np.array_equal(loaded.covariates, d.covariates)


def test_dataset_is_immutable(dataset):
    with pytest.raises(ValueError):
        dataset.time[0] = 1.0


def test_observations_round_trip(csv_file):
    d = load_dataset(csv_file)
    rebuilt = Dataset.from_observations(d.observations(), d.covariate_names)
    assert rebuilt == d


def test_observation_rejects_invalid_values():
    with pytest.raises(ValueError):
        Observation(time=0.0, status=1, treatment=0, source=1, covariates=(0.1,))
    with pytest.raises(ValueError):
        Observation(time=1.0, status=1, treatment=0, source=1, covariates=(float("nan"),))


def test_strata_encoding(csv_file):
    d = load_dataset(csv_file)
    np.testing.assert_array_equal(d.strata, [3, 2, 1, 0])
