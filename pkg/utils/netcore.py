"""
Núcleo numérico mínimo: camadas densas, ativações, armazenamento de
parâmetros, inicialização semeada e SGD com momento.

Toda a aritmética é feita em float64. O gerador pseudoaleatório é o PCG64
do numpy (numpy.random.default_rng), estável dentro de uma mesma build.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from utils.exceptions import ConfigError, DimensionError, NonFiniteError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu", "sigmoid")
INIT_SCHEMES = ("uniform-he", "zeros")


class RngState:
    """Estado do gerador pseudoaleatório a partir de uma semente de 64 bits"""

    def __init__(self, seed):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2 ** 64:
            raise ConfigError(f"seed inválida: {seed!r}")
        self.seed = int(seed)
        self.generator = np.random.default_rng(self.seed)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)


class ParamStore:
    """
    Parâmetros nomeados com acumuladores de gradiente e buffers de momento
    de mesma forma. `version` é incrementada a cada passo do otimizador.
    """

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.momentum = {}
        self.version = 0

    def add(self, name, value):
        if name in self.params:
            raise ConfigError(f"parâmetro duplicado: {name}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.momentum[name] = np.zeros_like(value)
        return value

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for grad in self.grads.values():
            grad.fill(0.0)

    def reset_momentum(self):
        for buffer in self.momentum.values():
            buffer.fill(0.0)

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))


@dataclass
class DenseLayer:
    """Camada densa y = activation(W·x + b); W tem forma [out × in]"""
    name: str
    weights: np.ndarray
    bias: np.ndarray
    activation: str
    grad_weights: np.ndarray
    grad_bias: np.ndarray

    @property
    def in_size(self):
        return self.weights.shape[1]

    @property
    def out_size(self):
        return self.weights.shape[0]


@dataclass
class ForwardCache:
    layer_name: str
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray


def init_params(shape, rng, scheme="uniform-he"):
    """
    Inicializa um tensor. uniform-he sorteia de U(-√(6/fan_in), +√(6/fan_in)),
    com fan_in igual à última dimensão da forma.
    """
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ConfigError(f"forma inválida: {shape}")
    if scheme == "zeros":
        return np.zeros(shape, dtype=np.float64)
    if scheme != "uniform-he":
        raise ConfigError(f"esquema de inicialização desconhecido: {scheme}")
    bound = np.sqrt(6.0 / shape[-1])
    return rng.uniform(-bound, bound, size=shape)


def make_dense(store, name, n_in, n_out, activation, rng=None, scheme="uniform-he"):
    """Cria uma camada densa registrando W e b no ParamStore"""
    if activation not in ACTIVATIONS:
        raise ConfigError(f"ativação desconhecida: {activation}")
    if rng is None:
        scheme = "zeros"
    weights = store.add(f"{name}.W", init_params((n_out, n_in), rng, scheme))
    bias = store.add(f"{name}.b", np.zeros(n_out))
    return DenseLayer(
        name=name,
        weights=weights,
        bias=bias,
        activation=activation,
        grad_weights=store.grads[f"{name}.W"],
        grad_bias=store.grads[f"{name}.b"],
    )


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return expit(z)
    return z


def _activation_derivative(cache, activation):
    if activation == "relu":
        return (cache.z > 0).astype(np.float64)
    if activation == "sigmoid":
        return cache.y * (1.0 - cache.y)
    return np.ones_like(cache.z)


def dense_forward(layer, x):
    """
    Aplica a camada a um vetor [in] ou a uma matriz [N × in] (uma amostra
    por linha). Retorna a saída e o cache para o backward.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != layer.in_size:
        raise DimensionError(
            f"camada {layer.name}: entrada de forma {x.shape}, esperado tamanho {layer.in_size}"
        )
    z = x @ layer.weights.T + layer.bias
    y = _activate(z, layer.activation)
    return y, ForwardCache(layer.name, x, z, y)


def dense_backward(layer, cache, dy):
    """
    Propaga dy pela camada: acumula dW e db nos buffers de gradiente e
    retorna dx = Wᵀ·(dy ⊙ activation′).
    """
    if cache.layer_name != layer.name:
        raise DimensionError(f"cache da camada {cache.layer_name} usado na camada {layer.name}")
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != cache.y.shape:
        raise DimensionError(
            f"camada {layer.name}: gradiente de forma {dy.shape}, esperado {cache.y.shape}"
        )
    dz = dy * _activation_derivative(cache, layer.activation)
    if cache.x.ndim == 1:
        layer.grad_weights += np.outer(dz, cache.x)
        layer.grad_bias += dz
    else:
        layer.grad_weights += dz.T @ cache.x
        layer.grad_bias += dz.sum(axis=0)
    return dz @ layer.weights


def _matches(name, prefixes):
    return any(name.startswith(prefix) for prefix in prefixes)


def sgd_step(store, lr, momentum, frozen=(), lr_scale=None):
    """
    v ← momentum·v + grad; p ← p − lr·v para todo parâmetro não congelado.
    `lr_scale` multiplica o passo dos parâmetros por prefixo de nome.
    Gradientes são zerados ao final. Nenhum parâmetro é alterado se algum
    gradiente for não finito.
    """
    for name, grad in store.grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"gradiente não finito no parâmetro {name}")
    lr_scale = lr_scale or {}
    for name, param in store.params.items():
        if _matches(name, frozen):
            continue
        velocity = store.momentum[name]
        velocity *= momentum
        velocity += store.grads[name]
        step = lr * next((s for prefix, s in lr_scale.items() if name.startswith(prefix)), 1.0)
        if step != 0:
            param -= step * velocity
    store.zero_grad()
    store.version += 1


def shrink_params(store, decay, exclude=()):
    """p ← (1 − decay)·p nos parâmetros fora de `exclude`; conta como um passo"""
    if not 0 <= decay < 1:
        raise ConfigError(f"decay deve estar em [0, 1), recebido {decay!r}")
    if decay:
        for name, param in store.params.items():
            if not _matches(name, exclude):
                param *= 1.0 - decay
    store.version += 1
