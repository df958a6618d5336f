import logging
import os

import pandas as pd

from modules.qan_model import embed_set
from utils.calculadora import CMC_RANKS, TPR_LABELS, TPR_TARGETS
from utils.formatters import format_decimal, format_percentage

logger = logging.getLogger(__name__)

INSPECT_COLUMNS = ["identity", "set_id", "q_true", "mu_raw", "mu_normalized"]


def tabela_cmc(report):
    rows = [
        {"method": method, **{f"cmc@{k}": rate for k, rate in table.ranks}}
        for method, table in report.cmc.items()
    ]
    return pd.DataFrame(rows, columns=["method", *(f"cmc@{k}" for k in CMC_RANKS)])


def tabela_roc(report):
    tpr_columns = [f"tpr@{TPR_LABELS[t]}" for t in TPR_TARGETS]
    rows = []
    for method, roc in report.roc.items():
        row = {"method": method, "auc": roc.auc, "accuracy": roc.accuracy}
        row.update({column: roc.tpr_at[t] for column, t in zip(tpr_columns, TPR_TARGETS)})
        rows.append(row)
    return pd.DataFrame(rows, columns=["method", "auc", "accuracy", *tpr_columns])


def tabela_concordancia(report):
    if report.agreement is None:
        return pd.DataFrame(columns=["spearman", "pair_agreement"])
    return pd.DataFrame(
        [{"spearman": report.agreement.spearman_rho, "pair_agreement": report.agreement.pairwise_agreement}]
    )


def salvar_relatorio(report, out_dir):
    """
    Grava eval_cmc.csv, eval_roc.csv, eval_agreement.csv e eval_deciles.csv
    em out_dir. Retorna a lista de caminhos gravados.
    """
    os.makedirs(out_dir, exist_ok=True)
    tabelas = {
        "eval_cmc.csv": tabela_cmc(report),
        "eval_roc.csv": tabela_roc(report),
        "eval_agreement.csv": tabela_concordancia(report),
    }
    if report.agreement is not None:
        tabelas["eval_deciles.csv"] = report.agreement.deciles
    caminhos = []
    for nome, df in tabelas.items():
        caminho = os.path.join(out_dir, nome)
        df.to_csv(caminho, index=False, float_format="%.17g")
        caminhos.append(caminho)
    logger.info("Relatório de avaliação gravado em %s", out_dir)
    return caminhos


def imprimir_relatorio(report, stream=None):
    """Tabelas legíveis no terminal"""
    cmc = tabela_cmc(report)
    roc = tabela_roc(report)
    linhas = ["CMC"]
    linhas.append(cmc.to_string(index=False, formatters={c: format_percentage for c in cmc.columns[1:]}))
    linhas.append("")
    linhas.append("Verificação")
    linhas.append(roc.to_string(index=False, formatters={c: format_decimal for c in roc.columns[1:]}))
    if report.agreement is not None:
        linhas.append("")
        linhas.append(
            f"Qualidade: spearman={format_decimal(report.agreement.spearman_rho)} "
            f"concordância={format_percentage(report.agreement.pairwise_agreement)}"
        )
        decis = report.agreement.deciles
        linhas.append(decis.to_string(index=False, na_rep="-"))
    texto = "\n".join(linhas)
    print(texto, file=stream)
    return texto


def dump_qualidades(model, dataset):
    """Uma linha por amostra, ordenada por mu_raw (ordenação estável)"""
    rows = []
    for image_set in dataset.sets:
        emb = embed_set(model, image_set)
        for sample, mu_raw, mu in zip(image_set.samples, emb.mu_raw, emb.mu):
            rows.append({
                "identity": image_set.identity,
                "set_id": image_set.set_id,
                "q_true": sample.q_true,
                "mu_raw": float(mu_raw),
                "mu_normalized": float(mu),
            })
    df = pd.DataFrame(rows, columns=INSPECT_COLUMNS)
    return df.sort_values("mu_raw", kind="mergesort").reset_index(drop=True)


def salvar_dump(df, path):
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info("Dump de qualidade com %d amostras gravado em %s", len(df), path)
