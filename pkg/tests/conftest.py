import pytest

from veilboost.fhe import FheParams, ReferenceBackend
from veilboost.rng import DeterministicRng


@pytest.fixture
def params():
    # desk-scale N; t stays above 2^20 per the parameter rule
    return FheParams.default(slot_count=256)


@pytest.fixture
def backend(params):
    return ReferenceBackend(params)


@pytest.fixture
def key(backend):
    return backend.keygen(DeterministicRng(1234))


@pytest.fixture
def rng():
    return DeterministicRng(20240811)
