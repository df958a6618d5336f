"""
Checkpoint do modelo em texto:

    QANMODEL v1
    config <chave>=<valor>          (uma linha por campo de QanConfig)
    param <nome> <forma...>
    <linha de valores>               (uma por linha da matriz, row-major)
"""
import dataclasses
import logging

import numpy as np

from modules.qan_model import QanConfig, QanModel
from utils.exceptions import ParseError, QanError
from utils.formatters import format_full

logger = logging.getLogger(__name__)

HEADER = "QANMODEL v1"
TUPLE_FIELDS = ("trunk_dims", "feature_hidden")
FLOAT_FIELDS = ("margin", "lambda_class")


def _format_config_value(name, value):
    if name in TUPLE_FIELDS:
        return ",".join(str(v) for v in value)
    if name in FLOAT_FIELDS:
        return format_full(value)
    return str(value)


def _parse_config_value(name, text):
    if name in TUPLE_FIELDS:
        return tuple(int(v) for v in text.split(",") if v)
    if name in FLOAT_FIELDS:
        return float(text)
    return int(text)


def save_checkpoint(model, path):
    """Grava config e parâmetros; ordem dos parâmetros = ordem de registro"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(HEADER + "\n")
        for item in dataclasses.fields(QanConfig):
            value = getattr(model.config, item.name)
            f.write(f"config {item.name}={_format_config_value(item.name, value)}\n")
        for name, value in model.params.params.items():
            f.write(f"param {name} {' '.join(str(s) for s in value.shape)}\n")
            for row in np.atleast_2d(value):
                f.write(" ".join(format_full(v) for v in row) + "\n")
    logger.debug("Checkpoint salvo em %s", path)


def load_checkpoint(path):
    """Reconstrói o modelo a partir do checkpoint, validando formas contra a config"""
    with open(path, encoding="utf-8") as f:
        lines = [(n, line.strip()) for n, line in enumerate(f, start=1)]
    lines = [(n, line) for n, line in lines if line and not line.startswith("#")]
    if not lines or lines[0][1] != HEADER:
        raise ParseError(f"cabeçalho inválido, esperado '{HEADER}'", lines[0][0] if lines else None, path)

    config_values = {}
    pos = 1
    while pos < len(lines) and lines[pos][1].startswith("config "):
        lineno, line = lines[pos]
        key, _, text = line[len("config "):].partition("=")
        try:
            config_values[key] = _parse_config_value(key, text)
        except ValueError:
            raise ParseError(f"valor inválido para {key}", lineno, path) from None
        pos += 1
    try:
        config = QanConfig(**config_values)
    except (TypeError, QanError) as e:
        raise ParseError(f"config inválida: {e}", lines[pos - 1][0], path) from None

    model = QanModel(config)
    loaded = set()
    while pos < len(lines):
        lineno, line = lines[pos]
        fields = line.split()
        if fields[0] != "param" or len(fields) < 3:
            raise ParseError("esperado registro 'param'", lineno, path)
        name = fields[1]
        if name not in model.params.params:
            raise ParseError(f"parâmetro desconhecido {name}", lineno, path)
        target = model.params.params[name]
        try:
            shape = tuple(int(s) for s in fields[2:])
        except ValueError:
            raise ParseError(f"{name}: forma inválida", lineno, path) from None
        if shape != target.shape:
            raise ParseError(f"{name}: forma {shape}, config exige {target.shape}", lineno, path)
        n_rows = shape[0] if len(shape) == 2 else 1
        rows = lines[pos + 1: pos + 1 + n_rows]
        if len(rows) != n_rows:
            raise ParseError(f"{name}: linhas de valores ausentes", lineno, path)
        try:
            values = np.array([[float(v) for v in row.split()] for _, row in rows], dtype=np.float64)
        except ValueError:
            raise ParseError(f"{name}: valor não numérico", rows[0][0], path) from None
        if values.size != target.size:
            raise ParseError(f"{name}: {values.size} valores, esperado {target.size}", rows[0][0], path)
        target[...] = values.reshape(shape)
        loaded.add(name)
        pos += 1 + n_rows
    missing = [n for n in model.params.names() if n not in loaded]
    if missing:
        raise ParseError(f"parâmetros ausentes: {', '.join(missing)}", None, path)
    return model
