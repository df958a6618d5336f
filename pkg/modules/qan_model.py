"""
Rede com consciência de qualidade: tronco compartilhado gerando a
representação intermediária, ramo de features (R_I por amostra), ramo de
qualidade (μ por amostra) e a unidade de pooling de conjunto

    R_a(S) = Σ μ_i R_i,   μ_i = m_i / Σ_j m_j,   m_i = sigmoid(Q(middle_i)).

As qualidades são normalizadas uma única vez; com Σμ = 1 o denominador do
pooling é 1 e as derivadas ∂R_a/∂R_i = μ_i e ∂R_a/∂μ_i = R_i − R_a valem
exatamente. O backward completo passa pelo Jacobiano da normalização L1.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from utils.exceptions import ConfigError, DimensionError, QanError, StaleCacheError
from utils.netcore import ParamStore, dense_backward, dense_forward, make_dense
from utils.validators import validar_probabilidade, validar_qan_config

logger = logging.getLogger(__name__)

# tolerância para aceitar μ como normalizado no pooling
NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Sample:
    x: np.ndarray
    identity: int
    q_true: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionError(f"amostra deve ser um vetor, recebido forma {x.shape}")
        ok, msg = validar_probabilidade(self.q_true, "q_true")
        if not ok:
            raise ConfigError(msg)
        object.__setattr__(self, "x", x)


@dataclass(frozen=True, eq=False)
class ImageSet:
    """Lista ordenada de amostras de uma mesma identidade"""
    samples: tuple
    identity: int
    set_id: int

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise QanError(f"conjunto {self.set_id} vazio")
        for sample in samples:
            if sample.identity != self.identity:
                raise QanError(
                    f"conjunto {self.set_id}: amostra da identidade {sample.identity}, "
                    f"esperado {self.identity}"
                )
        if len({len(s.x) for s in samples}) != 1:
            raise DimensionError(f"conjunto {self.set_id}: amostras com tamanhos diferentes")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def X(self):
        return np.stack([s.x for s in self.samples])

    @property
    def q_true(self):
        return np.array([s.q_true for s in self.samples], dtype=np.float64)


@dataclass(frozen=True)
class QanConfig:
    d_in: int = 32
    trunk_dims: tuple = (64, 48, 32)
    split_index: int = 2
    d_embed: int = 16
    quality_hidden: int = 16
    feature_hidden: tuple = ()
    n_classes: int = 100
    margin: float = 1.0
    lambda_class: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "trunk_dims", tuple(int(d) for d in self.trunk_dims))
        object.__setattr__(self, "feature_hidden", tuple(int(d) for d in self.feature_hidden))
        ok, msg = validar_qan_config(self)
        if not ok:
            raise ConfigError(msg)


@dataclass
class ForwardCaches:
    trunk: list
    feature: list
    quality: list


@dataclass
class SetEmbedding:
    R: np.ndarray
    mu: np.ndarray
    mu_raw: np.ndarray
    Ra: np.ndarray
    middle: np.ndarray
    caches: ForwardCaches
    version: int
    set_id: int = -1
    identity: int = -1

    def __len__(self):
        return len(self.mu)


class QanModel:
    """
    Parâmetros do tronco, do ramo de features, do ramo de qualidade e do
    classificador por identidade. Sem `rng` todos os pesos começam em zero.
    """

    def __init__(self, config, rng=None, scheme="uniform-he"):
        self.config = config
        self.params = ParamStore()
        dims = (config.d_in, *config.trunk_dims)
        self.trunk = [
            make_dense(self.params, f"trunk.{i}", dims[i], dims[i + 1], "relu", rng, scheme)
            for i in range(len(config.trunk_dims))
        ]
        feature_dims = (config.trunk_dims[-1], *config.feature_hidden, config.d_embed)
        self.feature_head = [
            make_dense(
                self.params, f"feature.{i}", feature_dims[i], feature_dims[i + 1],
                "identity" if i == len(feature_dims) - 2 else "relu", rng, scheme,
            )
            for i in range(len(feature_dims) - 1)
        ]
        middle_size = config.trunk_dims[config.split_index - 1]
        if config.quality_hidden > 0:
            self.quality_head = [
                make_dense(self.params, "quality.0", middle_size, config.quality_hidden, "relu", rng, scheme),
                make_dense(self.params, "quality.1", config.quality_hidden, 1, "sigmoid", rng, scheme),
            ]
        else:
            self.quality_head = [
                make_dense(self.params, "quality.0", middle_size, 1, "sigmoid", rng, scheme),
            ]
        self.classifier = make_dense(
            self.params, "classifier", config.d_embed, config.n_classes, "identity", rng, scheme
        )

    def blocks(self):
        """Nome de cada bloco treinável: tronco, features, qualidade, classificador"""
        return {
            "trunk": [n for n in self.params.names() if n.startswith("trunk.")],
            "feature": [n for n in self.params.names() if n.startswith("feature.")],
            "quality": [n for n in self.params.names() if n.startswith("quality.")],
            "classifier": [n for n in self.params.names() if n.startswith("classifier.")],
        }


def set_uniform_quality(model):
    """Zera a última camada do ramo de qualidade: m_i = 0.5 para toda amostra"""
    final = model.quality_head[-1]
    final.weights.fill(0.0)
    final.bias.fill(0.0)


def forward_samples(model, X):
    """Forward de uma matriz [N × d_in], uma amostra por linha"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.config.d_in:
        raise DimensionError(f"entrada de forma {X.shape}, esperado d_in={model.config.d_in}")
    trunk_caches = []
    h = X
    middle = None
    for index, layer in enumerate(model.trunk, start=1):
        h, cache = dense_forward(layer, h)
        trunk_caches.append(cache)
        if index == model.config.split_index:
            middle = h
    feature_caches = []
    R = h
    for layer in model.feature_head:
        R, cache = dense_forward(layer, R)
        feature_caches.append(cache)
    quality_caches = []
    q = middle
    for layer in model.quality_head:
        q, cache = dense_forward(layer, q)
        quality_caches.append(cache)
    return middle, R, q[:, 0], ForwardCaches(trunk_caches, feature_caches, quality_caches)


def forward_sample(model, x):
    """Forward de uma única amostra: (middle, R_I, mu_raw, caches)"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"forward_sample espera um vetor, recebido forma {x.shape}")
    middle, R, mu_raw, caches = forward_samples(model, x)
    return middle[0], R[0], float(mu_raw[0]), caches


def normalize_qualities(mu_raw):
    """Normalização L1 dos escores de qualidade dentro do conjunto"""
    mu_raw = np.asarray(mu_raw, dtype=np.float64)
    if mu_raw.ndim != 1 or len(mu_raw) == 0:
        raise DimensionError("normalize_qualities requer pelo menos um escore")
    if np.any(mu_raw <= 0) or not np.all(np.isfinite(mu_raw)):
        raise QanError("escores de qualidade devem ser positivos e finitos")
    return mu_raw / math.fsum(mu_raw)


def normalize_qualities_backward(mu_raw, dmu):
    """Jacobiano da normalização L1: dm_j = (dmu_j − Σ_i μ_i dmu_i) / Σ m"""
    mu_raw = np.asarray(mu_raw, dtype=np.float64)
    total = math.fsum(mu_raw)
    mu = mu_raw / total
    return (dmu - math.fsum(mu * dmu)) / total


def _weighted_sum(weights, R):
    # soma compensada por dimensão, em ordem crescente de amostra
    terms = weights[:, None] * R
    return np.array([math.fsum(column) for column in terms.T], dtype=np.float64)


def set_pool_forward(R, mu):
    """R_a = Σ μ_i R_i, com μ já normalizado"""
    R = np.asarray(R, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if R.ndim != 2 or len(R) == 0:
        raise DimensionError("set_pool_forward requer um conjunto não vazio")
    if mu.shape != (len(R),):
        raise DimensionError(f"{len(R)} embeddings e {mu.shape} qualidades")
    if abs(math.fsum(mu) - 1.0) > NORMALIZATION_TOL:
        raise QanError(f"qualidades não normalizadas: soma {math.fsum(mu)!r}")
    return _weighted_sum(mu, R)


def set_pool_backward(R, mu, Ra, g):
    """
    dR_i = μ_i · g e dmu_i = ⟨g, R_i − R_a⟩ (gradiente em relação a μ
    normalizado).
    """
    R = np.asarray(R, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if R.ndim != 2 or mu.shape != (len(R),) or g.shape != (R.shape[1],) or np.shape(Ra) != g.shape:
        raise DimensionError(
            f"set_pool_backward: R {R.shape}, mu {mu.shape}, Ra {np.shape(Ra)}, g {g.shape}"
        )
    dR = mu[:, None] * g[None, :]
    dmu = (R - Ra) @ g
    return dR, dmu


def embed_set(model, image_set):
    """Embedding do conjunto com caches para o backward"""
    if len(image_set) == 0:
        raise QanError("conjunto vazio")
    middle, R, mu_raw, caches = forward_samples(model, image_set.X)
    mu = normalize_qualities(mu_raw)
    Ra = set_pool_forward(R, mu)
    return SetEmbedding(
        R=R, mu=mu, mu_raw=mu_raw, Ra=Ra, middle=middle, caches=caches,
        version=model.params.version, set_id=image_set.set_id, identity=image_set.identity,
    )


def backward_trunk(model, caches, d_top, d_middle=None):
    """Backward do tronco; d_middle entra na saída da camada split_index"""
    grad = d_top
    for index in range(len(model.trunk), 0, -1):
        if d_middle is not None and index == model.config.split_index:
            grad = grad + d_middle
        grad = dense_backward(model.trunk[index - 1], caches.trunk[index - 1], grad)
    return grad


def backward_features(model, caches, dR):
    """Backward do ramo de features; retorna o gradiente na saída do tronco"""
    grad = dR
    for layer, cache in zip(reversed(model.feature_head), reversed(caches.feature)):
        grad = dense_backward(layer, cache, grad)
    return grad


def backward_quality(model, caches, dm):
    """Backward do ramo de qualidade a partir de ∂L/∂m (saída da sigmoide)"""
    grad = np.asarray(dm, dtype=np.float64)[:, None]
    for layer, cache in zip(reversed(model.quality_head), reversed(caches.quality)):
        grad = dense_backward(layer, cache, grad)
    return grad


def backward_set(model, emb, g, per_sample_class_grads=None):
    """
    Acumula os gradientes de todos os parâmetros a partir de g = ∂L/∂R_a.
    O ramo de features recebe μ_i·g (mais o gradiente da softmax por
    amostra); o ramo de qualidade recebe dmu pelo Jacobiano da normalização.
    """
    if emb.version != model.params.version:
        raise StaleCacheError(
            f"embedding do conjunto {emb.set_id} calculado na versão {emb.version}, "
            f"parâmetros na versão {model.params.version}"
        )
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (model.config.d_embed,):
        raise DimensionError(f"gradiente de forma {g.shape}, esperado ({model.config.d_embed},)")
    dR, dmu = set_pool_backward(emb.R, emb.mu, emb.Ra, g)
    if per_sample_class_grads is not None:
        class_grads = np.asarray(per_sample_class_grads, dtype=np.float64)
        if class_grads.shape != dR.shape:
            raise DimensionError(f"gradientes de classe de forma {class_grads.shape}, esperado {dR.shape}")
        dR = dR + class_grads
    dm = normalize_qualities_backward(emb.mu_raw, dmu)
    d_top = backward_features(model, emb.caches, dR)
    d_middle = backward_quality(model, emb.caches, dm)
    backward_trunk(model, emb.caches, d_top, d_middle)
