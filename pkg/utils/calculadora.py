import numpy as np
import pandas as pd
from scipy.stats import spearmanr
from sklearn.metrics import auc, roc_curve

from utils.exceptions import EvaluationError

CMC_RANKS = (1, 5, 10, 20)
TPR_TARGETS = (1e-3, 1e-2, 1e-1)
# rótulos fixos das colunas tpr@ nos CSVs
TPR_LABELS = {1e-3: "1e-3", 1e-2: "1e-2", 1e-1: "1e-1"}


def calcular_ranks(dist, probe_labels, gallery_labels):
    """
    Posição (1 = primeiro) do par correto de cada probe na galeria ordenada
    por distância crescente. Empates são resolvidos pela ordem da galeria.
    """
    dist = np.asarray(dist, dtype=np.float64)
    gallery_labels = list(gallery_labels)
    missing = [p for p in probe_labels if gallery_labels.count(p) != 1]
    if missing:
        raise EvaluationError(
            f"identidades de probe sem exatamente um conjunto na galeria: {sorted(set(missing))}"
        )
    ranks = np.empty(len(probe_labels), dtype=np.int64)
    for row, label in enumerate(probe_labels):
        true_index = gallery_labels.index(label)
        d_true = dist[row, true_index]
        closer = np.count_nonzero(dist[row] < d_true)
        tied_before = np.count_nonzero(dist[row, :true_index] == d_true)
        ranks[row] = closer + tied_before + 1
    return ranks


def calcular_cmc(dist, probe_labels, gallery_labels):
    """Curva CMC completa: curve[k-1] = fração de probes com rank ≤ k"""
    ranks = calcular_ranks(dist, probe_labels, gallery_labels)
    n_gallery = np.shape(dist)[1]
    return np.array([np.mean(ranks <= k) for k in range(1, n_gallery + 1)], dtype=np.float64)


def cmc_nos_ranks(curve, ranks=CMC_RANKS):
    """Taxa de acerto nos ranks pedidos; além do tamanho da galeria vale 1"""
    return tuple((k, float(curve[min(k, len(curve)) - 1])) for k in ranks)


def calcular_roc(scores, labels):
    """
    Escada ROC varrendo todos os valores distintos de similaridade (positivo
    se score ≥ limiar). Retorna fpr, tpr, limiares, AUC (trapézios),
    melhor acurácia e TPR nos FPR alvo.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC exige pelo menos um par positivo e um negativo")
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    accuracy = np.max((tpr * n_pos + (1.0 - fpr) * n_neg) / (n_pos + n_neg))
    tpr_at = {target: float(tpr[fpr <= target].max()) for target in TPR_TARGETS}
    return fpr, tpr, thresholds, float(auc(fpr, tpr)), float(accuracy), tpr_at


def calcular_spearman(values, reference):
    """Correlação de postos de Spearman (nan se um dos lados for constante)"""
    if np.ptp(values) == 0 or np.ptp(reference) == 0:
        return float("nan")
    rho, _ = spearmanr(values, reference)
    return float(rho)


def calcular_concordancia(values, reference):
    """
    Fração de pares (i, j) com q distintos em que sign(values_i − values_j)
    coincide com sign(reference_i − reference_j). Empates em values contam
    como discordância.
    """
    values = np.asarray(values, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    upper = np.triu_indices(len(values), k=1)
    ref_sign = np.sign(reference[:, None] - reference[None, :])[upper]
    val_sign = np.sign(values[:, None] - values[None, :])[upper]
    mask = ref_sign != 0
    if not np.any(mask):
        raise EvaluationError("nenhum par com qualidade de referência distinta")
    return float(np.mean(val_sign[mask] == ref_sign[mask]))


def tabela_decis(q_true, values):
    """Média dos escores por decil de q_true ([0, 0.1), ..., [0.9, 1.0])"""
    q_true = np.asarray(q_true, dtype=np.float64)
    df = pd.DataFrame({"q_true": q_true, "mu_raw": np.asarray(values, dtype=np.float64)})
    df["decile"] = np.minimum(np.floor(q_true * 10).astype(int), 9)
    table = df.groupby("decile").agg(
        count=("mu_raw", "size"), mu_mean=("mu_raw", "mean"), q_mean=("q_true", "mean"),
    )
    table = table.reindex(range(10)).reset_index()
    table["q_lo"] = table["decile"] / 10
    table["q_hi"] = (table["decile"] + 1) / 10
    table["count"] = table["count"].fillna(0).astype(int)
    return table[["decile", "q_lo", "q_hi", "count", "q_mean", "mu_mean"]]
