import numpy as np
import pytest

from models.data import Dataset
from models.schemas import NuisanceFit
from models.study import SimulationConfig
from ingestion.splitter import split_folds
from services.nuisance import nuisance_config
from simulation.generator import generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return SimulationConfig(n=400, p=8, seed=3)


@pytest.fixture
def simulated(small_config):
    """Muestra simulada pequeña con una ventana de censura fija"""
    return generate(small_config, 2.0, 6.0, seed=11)


@pytest.fixture
def simulated_dataset(simulated):
    return simulated[0]


def make_dataset(rng, n=200, p=3, censor=0.0, rct_share=0.5, beta_time=None):
    """Dataset sintético con log T lineal en X y censura aleatoria"""
    x = rng.standard_normal((n, p))
    source = (rng.random(n) < rct_share).astype(int)
    source[0] = 1
    treatment = rng.binomial(1, 0.5, n)
    coef = np.ones(p) if beta_time is None else np.asarray(beta_time)
    log_t = 1.0 + x @ coef * 0.3 + treatment * 0.5 + 0.3 * rng.standard_normal(n)
    status = (rng.random(n) >= censor).astype(int)
    return Dataset(time=np.exp(log_t), status=status, treatment=treatment, source=source, covariates=x)


def oracle_nuisances(d: Dataset, e: float = 0.5, k: int = 2, seed: int = 0) -> NuisanceFit:
    """Nuisances fijas (propensión constante, medias nulas) para aislar el solver"""
    zeros = np.zeros(d.n)
    return NuisanceFit(
        e_hat=np.full(d.n, e),
        mu_hat=zeros,
        mu0_hat=zeros,
        mu1_hat=zeros,
        folds=split_folds(d, k, seed),
        config=nuisance_config(),
    )


@pytest.fixture
def dataset(rng):
    return make_dataset(rng)


@pytest.fixture
def csv_file(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(
        "time,status,treat,source,x1,x2\n"
        "1.5,1,1,1,0.1,0.2\n"
        "2.0,0,0,1,-0.3,1.1\n"
        "0.7,1,1,0,0.5,-0.4\n"
        "3.2,1,0,0,1.2,0.0\n",
        encoding="utf-8",
    )
    return path
