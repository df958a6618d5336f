import numpy as np
import pytest

from modules.qan_model import ImageSet, QanConfig, QanModel, Sample
from modules.synth_data import GenSpec, generate
from utils.netcore import RngState

SMALL_CONFIG = QanConfig(
    d_in=6, trunk_dims=(8, 6), split_index=1, d_embed=4, quality_hidden=3, n_classes=4,
)
SMALL_SPEC = GenSpec(n_identities=4, sets_per_identity=2, samples_per_set=3, d_in=6, rho=0.5, seed=7)


@pytest.fixture
def rng():
    return RngState(1234)


@pytest.fixture
def small_config():
    return SMALL_CONFIG


@pytest.fixture
def small_model(rng):
    return QanModel(SMALL_CONFIG, rng)


@pytest.fixture
def small_dataset():
    return generate(SMALL_SPEC)


@pytest.fixture
def make_set():
    """Monta um ImageSet a partir de uma matriz [N × d_in]"""

    def _make(X, identity=0, set_id=0, q_true=None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        q_true = [1.0] * len(X) if q_true is None else q_true
        samples = tuple(Sample(x, identity, float(q)) for x, q in zip(X, q_true))
        return ImageSet(samples, identity, set_id)

    return _make
