"""
Treinamento conjunto de ponta a ponta: pré-treino opcional por
classificação, depois triplas de conjuntos com perda tripla sobre os
embeddings agregados mais softmax por imagem.
"""
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from modules.losses import (
    TripletBatch, combine_losses, softmax_losses, softmax_xent, triplet_loss, triplet_margin,
)
from modules.qan_model import (
    backward_features, backward_set, backward_trunk, embed_set, forward_samples, set_uniform_quality,
)
from utils.exceptions import ConfigError, NonFiniteError, TripletError
from utils.formatters import format_duration
from utils.netcore import RngState, sgd_step, shrink_params
from utils.validators import validar_train_config

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["epoch", "l_veri", "l_class", "active_frac", "mu_clean", "mu_corrupt"]
FEATURE_PREFIXES = ("trunk.", "feature.")


@dataclass(frozen=True)
class TrainConfig:
    """
    Hiperparâmetros de treino. Margem δ e peso da perda de classe ficam na
    QanConfig do modelo.
    """
    epochs: int = 30
    triplets_per_epoch: int = 200
    lr: float = 0.01
    lr_decay: float = 0.95
    momentum: float = 0.9
    pretrain_epochs: int = 3
    pretrain_lr: float = 0.02
    pretrain_momentum: float = 0.5
    # multiplicador do passo do ramo de qualidade no treino conjunto
    quality_lr_scale: float = 10.0
    # encolhimento por época de tronco, features e classificador
    weight_decay: float = 0.05
    uniform_quality_start: bool = True
    freeze_features: bool = False
    seed: int = 0
    hinge: bool = True

    def __post_init__(self):
        ok, msg = validar_train_config(self)
        if not ok:
            raise ConfigError(msg)


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    l_veri: float
    l_class: float
    active_frac: float
    mu_clean: float
    mu_corrupt: float


@dataclass(frozen=True)
class PretrainRecord:
    epoch: int
    l_class: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    pretrain_records: list = field(default_factory=list)

    def to_frame(self):
        return pd.DataFrame([r.__dict__ for r in self.records], columns=TRAIN_LOG_COLUMNS)

    def pretrain_frame(self):
        return pd.DataFrame([r.__dict__ for r in self.pretrain_records], columns=["epoch", "l_class"])


def sample_triplet(dataset, rng):
    """
    Âncora e positivo: dois conjuntos distintos de uma identidade com pelo
    menos dois conjuntos. Negativo: conjunto uniforme de outra identidade.
    """
    grouped = dataset.sets_by_identity
    identities = dataset.identities
    eligible = [i for i in identities if len(grouped[i]) >= 2]
    if len(identities) < 2 or not eligible:
        raise TripletError(
            "o dataset precisa de pelo menos 2 identidades e de uma identidade com 2 conjuntos"
        )
    anchor_id = eligible[int(rng.integers(len(eligible)))]
    first, second = rng.generator.choice(len(grouped[anchor_id]), size=2, replace=False)
    others = [i for i in identities if i != anchor_id]
    negative_id = others[int(rng.integers(len(others)))]
    negatives = grouped[negative_id]
    negative = negatives[int(rng.integers(len(negatives)))]
    return grouped[anchor_id][int(first)], grouped[anchor_id][int(second)], negative


def check_class_labels(model, dataset):
    """O classificador espera as identidades 0..n_classes-1"""
    n_classes = model.config.n_classes
    identities = dataset.identities
    if identities[0] < 0 or identities[-1] >= n_classes:
        raise ConfigError(
            f"o classificador tem {n_classes} classes; identidades de treino de "
            f"{identities[0]} a {identities[-1]}"
        )


def _embed_triplet(model, triplet):
    embeddings = [embed_set(model, s) for s in triplet]
    TripletBatch(*embeddings, identities=tuple(s.identity for s in triplet))
    return embeddings


def _labels(emb):
    return np.full(len(emb), emb.identity, dtype=np.int64)


def total_loss(model, triplet, cfg):
    """Perda total da tripla, somente forward"""
    margin, lambda_class = model.config.margin, model.config.lambda_class
    embeddings = _embed_triplet(model, triplet)
    l_veri, _ = triplet_loss(*(e.Ra for e in embeddings), margin, hinge=cfg.hinge)
    class_losses = []
    if lambda_class > 0:
        for emb in embeddings:
            class_losses.extend(softmax_losses(model.classifier, emb.R, _labels(emb)))
    return combine_losses(l_veri, class_losses, lambda_class).total


def compute_gradients(model, triplet, cfg):
    """
    Zera os gradientes, calcula a perda conjunta da tripla e acumula os
    gradientes de todos os parâmetros, sem passo do otimizador.
    """
    margin, lambda_class = model.config.margin, model.config.lambda_class
    model.params.zero_grad()
    embeddings = _embed_triplet(model, triplet)
    ra = [e.Ra for e in embeddings]
    l_veri, grads = triplet_loss(*ra, margin, hinge=cfg.hinge)

    scale = lambda_class / sum(len(e) for e in embeddings)
    class_losses = []
    class_grads = []
    for emb in embeddings:
        if lambda_class > 0:
            losses, dR = softmax_xent(model.classifier, emb.R, _labels(emb), scale=scale)
            class_losses.extend(losses)
            class_grads.append(dR)
        else:
            class_grads.append(None)

    value = combine_losses(l_veri, class_losses, lambda_class)
    value = replace(value, active=triplet_margin(*ra, margin) > 0)
    if not math.isfinite(value.total):
        model.params.zero_grad()
        raise NonFiniteError(f"perda não finita: l_veri={value.l_veri!r}, l_class={value.l_class!r}")
    for emb, g, dR in zip(embeddings, grads, class_grads):
        backward_set(model, emb, g, dR)
    return value


def frozen_prefixes(cfg):
    return FEATURE_PREFIXES if cfg.freeze_features else ()


def train_step(model, triplet, cfg, lr=None):
    """Um passo de otimização sobre uma tripla de conjuntos"""
    value = compute_gradients(model, triplet, cfg)
    sgd_step(
        model.params, cfg.lr if lr is None else lr, cfg.momentum,
        frozen=frozen_prefixes(cfg), lr_scale={"quality.": cfg.quality_lr_scale},
    )
    return value


def pretrain_epoch(model, dataset, cfg, rng, epoch=1, lr=None):
    """
    Uma época de pré-treino por classificação, amostra a amostra em ordem
    embaralhada. Atualiza tronco, ramo de features e classificador; o ramo
    de qualidade fica congelado.
    """
    check_class_labels(model, dataset)
    lr = cfg.pretrain_lr if lr is None else lr
    samples = dataset.samples()
    losses = []
    for index in rng.permutation(len(samples)):
        sample = samples[index]
        model.params.zero_grad()
        _, R, _, caches = forward_samples(model, sample.x)
        losses_row, dR = softmax_xent(model.classifier, R, np.array([sample.identity]))
        loss = float(losses_row[0])
        if not math.isfinite(loss):
            raise NonFiniteError(f"perda de classe não finita na amostra da identidade {sample.identity}")
        losses.append(loss)
        backward_trunk(model, caches, backward_features(model, caches, dR))
        sgd_step(model.params, lr, cfg.pretrain_momentum, frozen=("quality.",))
    record = PretrainRecord(epoch=epoch, l_class=math.fsum(losses) / len(losses))
    logger.info("Pré-treino época %d: l_class=%.6f", epoch, record.l_class)
    return record


def _mean(values):
    return math.fsum(values) / len(values) if values else float("nan")


def quality_split(model, dataset):
    """Média de μ normalizado em amostras limpas (q_true = 1) e corrompidas"""
    clean = []
    corrupt = []
    for image_set in dataset.sets:
        emb = embed_set(model, image_set)
        q_true = image_set.q_true
        clean.extend(emb.mu[q_true == 1.0])
        corrupt.extend(emb.mu[q_true < 1.0])
    return _mean(clean), _mean(corrupt)


def train(model, dataset, cfg, out_dir=None):
    """
    pretrain_epochs de pré-treino e depois epochs de treino conjunto com
    lr ← lr·lr_decay a cada época. Ao fim de cada época os pesos fora do
    ramo de qualidade encolhem por weight_decay. Com out_dir grava ckpt_0
    (após o pré-treino) e ckpt_<época> ao fim de cada época, além dos logs
    CSV.
    """
    from database.checkpoint import save_checkpoint

    check_class_labels(model, dataset)
    rng = RngState(cfg.seed)
    log = TrainLog()
    started = time.monotonic()

    if cfg.uniform_quality_start and cfg.epochs > 0:
        set_uniform_quality(model)
    for epoch in range(1, cfg.pretrain_epochs + 1):
        log.pretrain_records.append(pretrain_epoch(model, dataset, cfg, rng, epoch=epoch))
    model.params.reset_momentum()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(out_dir, "ckpt_0.qanmodel"))

    sem_decaimento = ("quality.", *frozen_prefixes(cfg))
    lr = cfg.lr
    for epoch in range(1, cfg.epochs + 1):
        l_veri = []
        l_class = []
        active = 0
        for _ in range(cfg.triplets_per_epoch):
            value = train_step(model, sample_triplet(dataset, rng), cfg, lr=lr)
            l_veri.append(value.l_veri)
            l_class.append(value.l_class)
            active += value.active
        shrink_params(model.params, cfg.weight_decay, exclude=sem_decaimento)
        mu_clean, mu_corrupt = quality_split(model, dataset)
        record = TrainRecord(
            epoch=epoch,
            l_veri=math.fsum(l_veri) / len(l_veri),
            l_class=math.fsum(l_class) / len(l_class),
            active_frac=active / cfg.triplets_per_epoch,
            mu_clean=mu_clean,
            mu_corrupt=mu_corrupt,
        )
        log.records.append(record)
        logger.info(
            "Época %d/%d [%s]: l_veri=%.6f l_class=%.6f ativas=%.3f mu_limpo=%.4f mu_corrompido=%.4f lr=%.5f",
            epoch, cfg.epochs, format_duration(time.monotonic() - started), record.l_veri,
            record.l_class, record.active_frac, mu_clean, mu_corrupt, lr,
        )
        if out_dir is not None:
            save_checkpoint(model, os.path.join(out_dir, f"ckpt_{epoch}.qanmodel"))
        lr *= cfg.lr_decay

    if out_dir is not None:
        log.to_frame().to_csv(os.path.join(out_dir, "train_log.csv"), index=False)
        log.pretrain_frame().to_csv(os.path.join(out_dir, "pretrain_log.csv"), index=False)
    return model, log
