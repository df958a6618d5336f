import numpy as np
import pytest

from modules.qan_model import (
    ImageSet, QanConfig, QanModel, Sample, backward_set, embed_set, forward_sample, forward_samples,
    normalize_qualities, normalize_qualities_backward, set_pool_backward, set_pool_forward,
    set_uniform_quality,
)
from utils.exceptions import ConfigError, DimensionError, QanError, StaleCacheError
from utils.netcore import RngState, sgd_step


def _pooling_instance(seed):
    rng = RngState(seed)
    n = int(rng.integers(1, 9))
    d = int(rng.integers(1, 7))
    R = rng.normal(size=(n, d))
    mu = normalize_qualities(rng.uniform(0.01, 1.0, size=n))
    return rng, R, mu


def test_nomes_e_blocos_do_modelo(small_model):
    names = small_model.params.names()
    assert "trunk.0.W" in names and "trunk.1.b" in names
    assert "feature.0.W" in names
    assert "quality.0.W" in names and "quality.1.W" in names
    assert "classifier.W" in names
    blocks = small_model.blocks()
    assert sorted(n for group in blocks.values() for n in group) == sorted(names)
    assert small_model.quality_head[-1].activation == "sigmoid"


def test_ramo_de_qualidade_sem_camada_oculta():
    model = QanModel(QanConfig(d_in=4, trunk_dims=(5,), split_index=1, d_embed=3, quality_hidden=0, n_classes=2))
    assert [layer.name for layer in model.quality_head] == ["quality.0"]
    assert model.quality_head[0].weights.shape == (1, 5)


def test_ramo_de_features_com_camadas_ocultas(rng):
    config = QanConfig(d_in=4, trunk_dims=(5,), split_index=1, d_embed=3, feature_hidden=(6,), n_classes=2)
    model = QanModel(config, rng)
    assert [layer.activation for layer in model.feature_head] == ["relu", "identity"]
    _, R, _, _ = forward_samples(model, np.ones((2, 4)))
    assert R.shape == (2, 3)


@pytest.mark.parametrize("split_index", [0, 4])
def test_split_index_fora_do_tronco(split_index):
    with pytest.raises(ConfigError):
        QanConfig(trunk_dims=(8, 8, 8), split_index=split_index)


@pytest.mark.parametrize("kwargs", [{"margin": 0.0}, {"margin": float("inf")}, {"lambda_class": -1.0}])
def test_objetivo_invalido_na_config_do_modelo(kwargs):
    with pytest.raises(ConfigError):
        QanConfig(**kwargs)


def test_split_index_define_entrada_do_ramo_de_qualidade(rng):
    config = QanConfig(d_in=4, trunk_dims=(7, 5), split_index=1, d_embed=3, quality_hidden=2, n_classes=2)
    model = QanModel(config, rng)
    assert model.quality_head[0].in_size == 7
    middle, _, _, _ = forward_samples(model, np.ones((3, 4)))
    assert middle.shape == (3, 7)


def test_forward_em_lote_igual_ao_individual(small_model, rng):
    X = rng.normal(size=(5, small_model.config.d_in))
    middle, R, mu_raw, _ = forward_samples(small_model, X)
    for i, x in enumerate(X):
        m_i, r_i, q_i, _ = forward_sample(small_model, x)
        assert np.allclose(m_i, middle[i], rtol=1e-12, atol=1e-15)
        assert np.allclose(r_i, R[i], rtol=1e-12, atol=1e-15)
        assert q_i == pytest.approx(mu_raw[i], rel=1e-12)
    assert np.all((mu_raw > 0) & (mu_raw < 1))


def test_forward_dimensao_errada(small_model):
    with pytest.raises(DimensionError):
        forward_samples(small_model, np.ones((2, small_model.config.d_in + 1)))


def test_normalizacao_rejeita_escores_invalidos():
    with pytest.raises(QanError):
        normalize_qualities([0.5, 0.0])
    with pytest.raises(DimensionError):
        normalize_qualities([])


def test_pooling_exige_qualidades_normalizadas():
    with pytest.raises(QanError):
        set_pool_forward(np.ones((2, 3)), np.array([0.5, 0.6]))
    with pytest.raises(DimensionError):
        set_pool_forward(np.ones((2, 3)), np.array([1.0]))


def test_invariantes_do_pooling_em_1000_instancias():
    for seed in range(1000):
        rng, R, mu = _pooling_instance(seed)
        n = len(R)
        assert abs(mu.sum() - 1.0) <= 1e-12
        Ra = set_pool_forward(R, mu)
        assert np.all(Ra >= R.min(axis=0) - 1e-12)
        assert np.all(Ra <= R.max(axis=0) + 1e-12)
        assert np.array_equal(set_pool_forward(R[:1], np.array([1.0])), R[0])
        assert np.allclose(set_pool_forward(R, np.full(n, 1.0 / n)), R.mean(axis=0), rtol=1e-12, atol=1e-12)
        order = rng.permutation(n)
        assert np.array_equal(set_pool_forward(R[order], mu[order]), Ra)


def test_sinal_do_gradiente_de_qualidade_em_1000_instancias():
    for seed in range(1000):
        rng, R, mu = _pooling_instance(seed)
        Ra = set_pool_forward(R, mu)
        g = rng.normal(size=R.shape[1])
        dR, dmu = set_pool_backward(R, mu, Ra, g)
        expected = np.array([np.dot(g, r - Ra) for r in R])
        assert np.array_equal(np.sign(dmu), np.sign(expected))
        assert np.array_equal(dR, mu[:, None] * g[None, :])


def test_jacobiano_da_normalizacao_confere_com_diferencas_finitas():
    rng = RngState(3)
    mu_raw = rng.uniform(0.1, 0.9, size=5)
    dmu = rng.normal(size=5)
    analytic = normalize_qualities_backward(mu_raw, dmu)
    h = 1e-6
    numeric = np.empty(5)
    for j in range(5):
        plus = mu_raw.copy()
        minus = mu_raw.copy()
        plus[j] += h
        minus[j] -= h
        numeric[j] = (normalize_qualities(plus) @ dmu - normalize_qualities(minus) @ dmu) / (2 * h)
    assert np.allclose(analytic, numeric, atol=1e-8)


def test_embed_set_conserva_normalizacao(small_model, small_dataset):
    for image_set in small_dataset.sets:
        emb = embed_set(small_model, image_set)
        assert abs(emb.mu.sum() - 1.0) <= 1e-12
        assert emb.Ra.shape == (small_model.config.d_embed,)
        assert emb.version == small_model.params.version
        assert emb.identity == image_set.identity


def test_conjunto_unitario_tem_embedding_da_amostra(small_model, make_set, rng):
    image_set = make_set(rng.normal(size=(1, small_model.config.d_in)))
    emb = embed_set(small_model, image_set)
    assert np.array_equal(emb.mu, [1.0])
    assert np.array_equal(emb.Ra, emb.R[0])


def test_qualidade_uniforme(small_model, make_set, rng):
    set_uniform_quality(small_model)
    emb = embed_set(small_model, make_set(rng.normal(size=(4, small_model.config.d_in))))
    assert np.all(emb.mu_raw == 0.5)
    assert np.array_equal(emb.mu, np.full(4, 0.25))


def test_backward_set_com_cache_obsoleto(small_model, small_dataset):
    emb = embed_set(small_model, small_dataset.sets[0])
    sgd_step(small_model.params, lr=0.01, momentum=0.0)
    with pytest.raises(StaleCacheError):
        backward_set(small_model, emb, np.ones(small_model.config.d_embed))


def test_backward_set_dimensao_do_gradiente(small_model, small_dataset):
    emb = embed_set(small_model, small_dataset.sets[0])
    with pytest.raises(DimensionError):
        backward_set(small_model, emb, np.ones(small_model.config.d_embed + 1))


def test_backward_set_alcanca_todos_os_blocos_exceto_classificador(small_model, small_dataset):
    emb = embed_set(small_model, small_dataset.sets[0])
    backward_set(small_model, emb, np.ones(small_model.config.d_embed))
    grads = small_model.params.grads
    assert np.any(grads["feature.0.W"])
    assert np.any(grads["quality.1.W"])
    assert not np.any(grads["classifier.W"])


def test_conjuntos_invalidos(make_set):
    with pytest.raises(QanError):
        ImageSet((), 0, 0)
    with pytest.raises(QanError):
        ImageSet((Sample(np.ones(3), 0), Sample(np.ones(3), 1)), 0, 0)
    with pytest.raises(ConfigError):
        Sample(np.ones(3), 0, 1.5)
    with pytest.raises(DimensionError):
        Sample(np.ones((2, 3)), 0)
