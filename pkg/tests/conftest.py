import numpy as np
import pytest

from poa.generator import SurrogateBackend, embedding_from_prompt
from poa.latent import Latent
from poa.seeding import Identity, Kappa, MetaParams

TEST_EPOCH = "1970-01-01T00:00:00+00:00"


@pytest.fixture
def meta():
    return MetaParams()


@pytest.fixture
def backend(meta):
    return SurrogateBackend(default_m=meta)


@pytest.fixture
def author():
    return Identity(id_bytes=bytes(range(32)), label="alice", registered_at=TEST_EPOCH)


@pytest.fixture
def forger_identity():
    return Identity(id_bytes=bytes(range(32, 64)), label="mallory", registered_at=TEST_EPOCH)


@pytest.fixture
def embedding():
    return embedding_from_prompt("test prompt: lighthouse at dusk")


@pytest.fixture
def kappa(meta, embedding):
    return Kappa(m=meta, e_digest=embedding.digest, r=bytes(range(16)))


def make_latent(shape, seed=0):
    rng = np.random.default_rng(seed)
    return Latent.from_grid(rng.standard_normal(shape))
