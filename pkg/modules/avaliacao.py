"""
Avaliação conjunto-a-conjunto: CMC em probe/galeria, ROC de verificação,
baselines de agregação e concordância das qualidades aprendidas com a
qualidade de referência (q_true).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from modules.qan_model import embed_set, set_pool_forward
from utils.calculadora import (
    calcular_cmc, calcular_concordancia, calcular_roc, calcular_spearman, cmc_nos_ranks, tabela_decis,
)
from utils.exceptions import ConfigError, EvaluationError, QanError
from utils.netcore import RngState
from utils.validators import validar_eval_options

logger = logging.getLogger(__name__)

AGGREGATIONS = ("qan", "avepool", "oracle", "maxpool")
DISTANCES = ("pooled-l2", "pooled-cos", "min-cos", "min-l2")
# método de avaliação -> (agregação, distância); None = distância entre amostras
METHODS = {
    "qan": ("qan", "pooled-l2"),
    "avepool": ("avepool", "pooled-l2"),
    "oracle": ("oracle", "pooled-l2"),
    "maxpool": ("maxpool", "pooled-l2"),
    "min-cos": (None, "min-cos"),
    "min-l2": (None, "min-l2"),
}
DEFAULT_METHODS = ("qan", "avepool", "min-cos", "oracle")


@dataclass(frozen=True)
class EvalOptions:
    methods: tuple = DEFAULT_METHODS
    seed: int = 0
    pooled_distance: str = "pooled-l2"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        ok, msg = validar_eval_options(self, METHODS, ("pooled-l2", "pooled-cos"))
        if not ok:
            raise ConfigError(msg)


@dataclass(frozen=True)
class CmcTable:
    ranks: tuple
    curve: np.ndarray = field(repr=False)

    def rate(self, k):
        return dict(self.ranks)[k]


@dataclass(frozen=True)
class RocReport:
    points: tuple
    auc: float
    accuracy: float
    tpr_at: dict


@dataclass(frozen=True)
class AgreementReport:
    spearman_rho: float
    pairwise_agreement: float
    deciles: pd.DataFrame = field(repr=False)


@dataclass
class EvalReport:
    cmc: dict = field(default_factory=dict)
    roc: dict = field(default_factory=dict)
    agreement: AgreementReport = None


def aggregate(method, model, image_set, emb=None):
    """Vetor agregado do conjunto segundo a ponderação escolhida"""
    if method not in AGGREGATIONS:
        raise QanError(f"agregação desconhecida: {method}")
    emb = emb if emb is not None else embed_set(model, image_set)
    n = len(emb)
    if method == "qan":
        return emb.Ra
    if method == "avepool":
        return set_pool_forward(emb.R, np.full(n, 1.0 / n))
    if method == "maxpool":
        return emb.R.max(axis=0)
    q_true = image_set.q_true
    if not np.any(q_true > 0):
        logger.warning("Conjunto %s com q_true todo nulo: pesos uniformes no oráculo", image_set.set_id)
        return set_pool_forward(emb.R, np.full(n, 1.0 / n))
    weights = q_true / q_true.sum()
    return set_pool_forward(emb.R, weights)


def _cosine_distance(a, b):
    norms = np.linalg.norm(a, axis=-1)[..., :, None] * np.linalg.norm(b, axis=-1)[..., None, :]
    if np.any(norms == 0):
        raise EvaluationError("vetor de norma nula na distância cosseno")
    return 1.0 - (a @ b.T) / norms


def set_distance(method, A, B):
    """
    pooled-l2 e pooled-cos recebem vetores agregados; min-cos e min-l2
    recebem as matrizes de embeddings por amostra e tomam o mínimo sobre
    todos os pares cruzados.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if method == "pooled-l2":
        return float(np.linalg.norm(A - B))
    if method == "pooled-cos":
        return float(_cosine_distance(A[None, :], B[None, :])[0, 0])
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if method == "min-cos":
        return float(max(_cosine_distance(A, B).min(), 0.0))
    if method == "min-l2":
        return float(np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)).min())
    raise QanError(f"distância desconhecida: {method}")


class Representations:
    """Cache de embeddings por conjunto para um modelo só de leitura"""

    def __init__(self, model):
        self.model = model
        self._embeddings = {}

    def embedding(self, image_set):
        key = id(image_set)
        if key not in self._embeddings:
            self._embeddings[key] = (image_set, embed_set(self.model, image_set))
        return self._embeddings[key][1]

    def represent(self, method, image_set, pooled_distance="pooled-l2"):
        aggregation, distance = resolve_method(method, pooled_distance)
        emb = self.embedding(image_set)
        if aggregation is None:
            return emb.R, distance
        return aggregate(aggregation, self.model, image_set, emb), distance


def resolve_method(method, pooled_distance="pooled-l2"):
    if method not in METHODS:
        raise QanError(f"método desconhecido: {method}")
    aggregation, distance = METHODS[method]
    if aggregation is not None:
        distance = pooled_distance
    return aggregation, distance


def distance_matrix(reps, method, rows, columns, pooled_distance="pooled-l2"):
    left = [reps.represent(method, s, pooled_distance) for s in rows]
    right = [reps.represent(method, s, pooled_distance) for s in columns]
    dist = np.empty((len(rows), len(columns)))
    for i, (a, distance) in enumerate(left):
        for j, (b, _) in enumerate(right):
            dist[i, j] = set_distance(distance, a, b)
    return dist


def cmc(probes, gallery, method, model, pooled_distance="pooled-l2", reps=None):
    """Ranking da galeria por distância crescente para cada probe"""
    reps = reps or Representations(model)
    dist = distance_matrix(reps, method, probes, gallery, pooled_distance)
    curve = calcular_cmc(dist, [p.identity for p in probes], [g.identity for g in gallery])
    return CmcTable(ranks=cmc_nos_ranks(curve), curve=curve)


def roc(pairs, method, model, pooled_distance="pooled-l2", reps=None):
    """Verificação 1:1 sobre pares (conjunto, conjunto, mesma identidade)"""
    reps = reps or Representations(model)
    scores = []
    labels = []
    for a, b, same in pairs:
        (ra, distance), (rb, _) = reps.represent(method, a, pooled_distance), reps.represent(method, b, pooled_distance)
        scores.append(-set_distance(distance, ra, rb))
        labels.append(bool(same))
    fpr, tpr, _, area, accuracy, tpr_at = calcular_roc(scores, labels)
    return RocReport(points=tuple(zip(fpr.tolist(), tpr.tolist())), auc=area, accuracy=accuracy, tpr_at=tpr_at)


def quality_agreement(model, dataset, reps=None):
    """Spearman e concordância par a par entre m_i (sigmoide bruta) e q_true"""
    reps = reps or Representations(model)
    mu_raw = []
    q_true = []
    for image_set in dataset.sets:
        mu_raw.extend(reps.embedding(image_set).mu_raw)
        q_true.extend(image_set.q_true)
    mu_raw = np.asarray(mu_raw)
    q_true = np.asarray(q_true)
    if len(np.unique(q_true)) < 2:
        raise EvaluationError("quality_agreement exige pelo menos 2 valores distintos de q_true")
    return AgreementReport(
        spearman_rho=calcular_spearman(mu_raw, q_true),
        pairwise_agreement=calcular_concordancia(mu_raw, q_true),
        deciles=tabela_decis(q_true, mu_raw),
    )


def build_probe_gallery(dataset):
    """Primeiro conjunto de cada identidade é probe, o segundo é galeria"""
    probes = []
    gallery = []
    for identity in dataset.identities:
        sets = dataset.sets_by_identity[identity]
        if len(sets) < 2:
            logger.warning("Identidade %s com um só conjunto fica fora do CMC", identity)
            continue
        probes.append(sets[0])
        gallery.append(sets[1])
    if not probes:
        raise EvaluationError("nenhuma identidade com dois conjuntos para probe/galeria")
    return probes, gallery


def build_verification_pairs(dataset, rng):
    """Todos os pares positivos e o mesmo número de negativos sorteados"""
    positives = []
    for identity in dataset.identities:
        sets = dataset.sets_by_identity[identity]
        positives.extend((sets[i], sets[j], True) for i in range(len(sets)) for j in range(i + 1, len(sets)))
    if not positives or len(dataset.identities) < 2:
        raise EvaluationError("dados insuficientes para pares de verificação")
    negatives = []
    all_sets = dataset.sets
    while len(negatives) < len(positives):
        i, j = (int(v) for v in rng.integers(len(all_sets), size=2))
        if all_sets[i].identity != all_sets[j].identity:
            negatives.append((all_sets[i], all_sets[j], False))
    return positives + negatives


def evaluate(model, dataset, options=None):
    """CMC e ROC por método, mais a concordância de qualidade"""
    options = options or EvalOptions()
    if model.config.d_in != dataset.d_in:
        raise EvaluationError(f"modelo com d_in={model.config.d_in}, dataset com d_in={dataset.d_in}")
    reps = Representations(model)
    probes, gallery = build_probe_gallery(dataset)
    pairs = build_verification_pairs(dataset, RngState(options.seed))
    report = EvalReport()
    for method in options.methods:
        report.cmc[method] = cmc(probes, gallery, method, model, options.pooled_distance, reps)
        report.roc[method] = roc(pairs, method, model, options.pooled_distance, reps)
        logger.info(
            "%s: CMC@1=%.4f AUC=%.4f", method, report.cmc[method].rate(1), report.roc[method].auc,
        )
    try:
        report.agreement = quality_agreement(model, dataset, reps)
    except EvaluationError as e:
        logger.warning("Concordância de qualidade não calculada: %s", e)
    return report
