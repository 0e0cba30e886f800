import os
from pathlib import Path

import numpy as np
import pytest

from times_adapt.core import eigendecompose
from times_adapt.models import build_xxz, xxz
from times_adapt.tepid import oracle_model

FIG3_LABELS = (21, 42, 10, 43, 22)


@pytest.fixture(scope="session")
def xxz6():
    return build_xxz(xxz(6, 1.5))


@pytest.fixture(scope="session")
def xxz6_spectrum(xxz6):
    return eigendecompose(xxz6)


@pytest.fixture(scope="session")
def exact_model(xxz6, xxz6_spectrum):
    """Basis change mapping the five reference labels exactly onto the five lowest levels."""
    return oracle_model(xxz6, xxz6_spectrum, FIG3_LABELS, list(range(5)), beta=2.0)


@pytest.fixture(scope="session")
def model_cache(tmp_path_factory):
    """Trained-model cache; set TIMES_ADAPT_TEST_CACHE to keep it between sessions."""
    keep = os.environ.get("TIMES_ADAPT_TEST_CACHE")
    if keep:
        path = Path(keep)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("model-cache")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(rng, dim):
    a = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return a / np.linalg.norm(a)


@pytest.fixture(scope="session")
def fig3_model(xxz6, xxz6_spectrum, model_cache):
    """Trained rank-5 model of the 6-site chain (about a minute)."""
    from times_adapt.bench.config import default_config
    from times_adapt.bench.experiments import train_or_load

    return train_or_load(default_config("fig3_uniform"), xxz6, xxz6_spectrum, model_cache)
