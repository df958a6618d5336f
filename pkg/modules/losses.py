import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from utils.exceptions import ConfigError, DimensionError, QanError, TripletError
from utils.netcore import dense_backward, dense_forward

logger = logging.getLogger(__name__)


@dataclass
class TripletBatch:
    anchor: object
    positive: object
    negative: object
    identities: tuple

    def __post_init__(self):
        a, p, n = self.identities
        if a != p or a == n:
            raise TripletError(f"identidades inválidas para tripla: {self.identities}")


@dataclass(frozen=True)
class LossValue:
    l_veri: float
    l_class: float
    total: float
    active: bool


def triplet_margin(ra_a, ra_p, ra_n, delta):
    """‖a−p‖² − ‖a−n‖² + δ, sem hinge"""
    d_ap = ra_a - ra_p
    d_an = ra_a - ra_n
    return float(d_ap @ d_ap - d_an @ d_an + delta)


def triplet_loss(ra_a, ra_p, ra_n, delta, hinge=True):
    """
    Perda tripla sobre embeddings de conjunto. Com hinge retorna
    max(0, raw) e gradientes nulos quando raw ≤ 0.
    """
    ra_a, ra_p, ra_n = (np.asarray(v, dtype=np.float64) for v in (ra_a, ra_p, ra_n))
    if not (ra_a.shape == ra_p.shape == ra_n.shape) or ra_a.ndim != 1:
        raise DimensionError(f"dimensões da tripla: {ra_a.shape}, {ra_p.shape}, {ra_n.shape}")
    if not delta > 0:
        raise ConfigError("delta deve ser maior que zero")
    raw = triplet_margin(ra_a, ra_p, ra_n, delta)
    if hinge and raw <= 0:
        zero = np.zeros_like(ra_a)
        return 0.0, (zero, zero.copy(), zero.copy())
    grad_a = 2.0 * (ra_n - ra_p)
    grad_p = -2.0 * (ra_a - ra_p)
    grad_n = 2.0 * (ra_a - ra_n)
    return raw, (grad_a, grad_p, grad_n)


def softmax_probabilities(logits):
    logits = np.atleast_2d(logits)
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def _check_labels(classifier, label, n_rows):
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape != (n_rows,) or not np.issubdtype(labels.dtype, np.integer):
        raise QanError(f"rótulos inválidos: {label!r}")
    if np.any(labels < 0) or np.any(labels >= classifier.out_size):
        raise QanError(f"rótulo fora de [0, {classifier.out_size}): {label!r}")
    return labels


def softmax_losses(classifier, R, labels):
    """Perdas de entropia cruzada por linha, somente forward"""
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    labels = _check_labels(classifier, labels, len(R))
    logits, _ = dense_forward(classifier, R)
    return logsumexp(logits, axis=1) - logits[np.arange(len(R)), labels]


def softmax_xent(classifier, R_I, label, scale=1.0):
    """
    Entropia cruzada da softmax sobre classifier·R_I. Aceita um vetor com
    um rótulo ou uma matriz [N × d_embed] com N rótulos. Os gradientes do
    classificador são acumulados multiplicados por `scale`; dR_I também
    sai escalado. A perda retornada não é escalada.
    """
    R_I = np.asarray(R_I, dtype=np.float64)
    n_rows = 1 if R_I.ndim == 1 else len(R_I)
    labels = _check_labels(classifier, label, n_rows)
    logits, cache = dense_forward(classifier, R_I)
    logits_2d = np.atleast_2d(logits)
    rows = np.arange(n_rows)
    losses = logsumexp(logits_2d, axis=1) - logits_2d[rows, labels]
    dlogits = softmax_probabilities(logits_2d)
    dlogits[rows, labels] -= 1.0
    dlogits *= scale
    dR = dense_backward(classifier, cache, dlogits.reshape(logits.shape))
    if R_I.ndim == 1:
        return float(losses[0]), dR
    return losses, dR


def combine_losses(l_veri, class_losses, lambda_class):
    """total = l_veri + lambda_class · média das perdas de classe por imagem"""
    if lambda_class < 0:
        raise ConfigError("lambda_class deve ser maior ou igual a zero")
    class_losses = [float(v) for v in np.ravel(class_losses)] if class_losses is not None else []
    l_class = math.fsum(class_losses) / len(class_losses) if class_losses else 0.0
    return LossValue(
        l_veri=float(l_veri),
        l_class=l_class,
        total=float(l_veri) + lambda_class * l_class,
        active=l_veri > 0,
    )
