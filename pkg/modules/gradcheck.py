"""
Oráculo de diferenças finitas centrais para todos os gradientes analíticos.
O oráculo só avalia a perda (forward); nunca chama rotinas de backward.
"""
import logging
from dataclasses import dataclass

import numpy as np

from modules.losses import triplet_margin
from modules.qan_model import ImageSet, QanConfig, QanModel, Sample, embed_set
from modules.trainer import TrainConfig, compute_gradients, total_loss
from utils.exceptions import ConfigError, NonFiniteError, QanError
from utils.netcore import RngState

logger = logging.getLogger(__name__)

MAX_REL_TOL = 1e-4
MEDIAN_REL_TOL = 1e-6
REL_FLOOR = 1e-8
# erro absoluto abaixo deste valor é arredondamento das diferenças finitas
ABS_FLOOR = 1e-9

TINY_CONFIG = QanConfig(
    d_in=5, trunk_dims=(6,), split_index=1, d_embed=4, quality_hidden=3, n_classes=3,
    margin=1.0, lambda_class=1.0,
)
TINY_TRAIN = TrainConfig(epochs=1, triplets_per_epoch=1)


@dataclass(frozen=True)
class BlockReport:
    name: str
    size: int
    max_rel: float
    median_rel: float
    max_abs: float
    worst_index: int

    @property
    def passed(self):
        return self.max_rel < MAX_REL_TOL and self.median_rel < MEDIAN_REL_TOL


@dataclass(frozen=True)
class GradCheckReport:
    blocks: tuple
    vacuous: bool
    loss: float

    @property
    def passed(self):
        return not self.vacuous and all(b.passed for b in self.blocks)

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)


def numeric_grad(f, p, h=1e-5):
    """(f(p + h·e_i) − f(p − h·e_i)) / (2h) para cada coordenada"""
    if not h > 0:
        raise ConfigError("h deve ser maior que zero")
    p = np.array(p, dtype=np.float64).ravel()
    grad = np.zeros_like(p)
    x = p.copy()
    for i in range(len(p)):
        x[i] = p[i] + h
        f_plus = f(x)
        x[i] = p[i] - h
        f_minus = f(x)
        x[i] = p[i]
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"f não finita na coordenada {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_errors(analytic, numeric):
    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    rel = abs_err / denom
    rel[abs_err <= ABS_FLOOR] = 0.0
    return rel, abs_err


def check_model(model, triplet, cfg, h=1e-5):
    """
    Compara o gradiente analítico da perda total com diferenças finitas,
    bloco de parâmetros por bloco. Sinaliza checagem vazia quando todos os
    gradientes analíticos são nulos.
    """
    store = model.params
    loss = compute_gradients(model, triplet, cfg).total
    analytic = {name: grad.copy() for name, grad in store.grads.items()}
    store.zero_grad()
    vacuous = all(not np.any(g) for g in analytic.values())

    blocks = []
    for name, param in store.params.items():
        original = param.copy()

        def f(vector, param=param):
            param[...] = vector.reshape(param.shape)
            return total_loss(model, triplet, cfg)

        try:
            numeric = numeric_grad(f, original, h)
        finally:
            param[...] = original
        rel, abs_err = relative_errors(analytic[name].ravel(), numeric)
        worst = int(np.argmax(rel))
        report = BlockReport(
            name=name,
            size=int(param.size),
            max_rel=float(rel.max()),
            median_rel=float(np.median(rel)),
            max_abs=float(abs_err.max()),
            worst_index=worst,
        )
        logger.debug(
            "%s: max_rel=%.3e median_rel=%.3e max_abs=%.3e", name, report.max_rel,
            report.median_rel, report.max_abs,
        )
        blocks.append(report)
    if vacuous:
        logger.warning("Checagem vazia: todos os gradientes analíticos são nulos (hinge inativo)")
    return GradCheckReport(blocks=tuple(blocks), vacuous=vacuous, loss=loss)


def kink_margin(model, image_sets):
    """Menor |pré-ativação| entre as camadas ReLU para os conjuntos dados"""
    smallest = np.inf
    for image_set in image_sets:
        caches = embed_set(model, image_set).caches
        for layer, cache in zip([*model.trunk, *model.feature_head, *model.quality_head],
                                [*caches.trunk, *caches.feature, *caches.quality]):
            if layer.activation == "relu":
                smallest = min(smallest, float(np.min(np.abs(cache.z))))
    return smallest


def tiny_instance(seed, config=TINY_CONFIG, min_margin=1e-3, max_attempts=1000):
    """
    Modelo minúsculo e tripla aleatórios. Sorteia de novo até a tripla
    violar a margem e nenhuma pré-ativação ReLU ficar a menos de
    `min_margin` de zero.
    """
    rng = RngState(seed)
    for _ in range(max_attempts):
        model = QanModel(config, rng)
        identities = (0, 0, 1)
        triplet = []
        for set_id, identity in enumerate(identities):
            n = int(rng.integers(1, 5))
            samples = tuple(
                Sample(rng.uniform(-1.0, 1.0, size=config.d_in), identity) for _ in range(n)
            )
            triplet.append(ImageSet(samples, identity, set_id))
        ra = [embed_set(model, s).Ra for s in triplet]
        if triplet_margin(*ra, config.margin) <= min_margin:
            continue
        if kink_margin(model, triplet) <= min_margin:
            continue
        return model, tuple(triplet)
    raise QanError(f"nenhuma instância válida após {max_attempts} tentativas (seed {seed})")
