"""
Arquivo de dataset (texto UTF-8):

    QANSET v1 d_in=<int>
    <identity> <set_id> <q_true> <x_0> ... <x_{d_in-1}>

Linhas iniciadas por `#` são comentários. Reais com 17 dígitos significativos.
"""
import logging
import re

from modules.qan_model import ImageSet, Sample
from modules.synth_data import Dataset
from utils.exceptions import ParseError, QanError
from utils.formatters import format_full

logger = logging.getLogger(__name__)

HEADER_RE = re.compile(r"^QANSET v1 d_in=(\d+)$")


def save_dataset(dataset, path):
    """Grava o dataset no formato QANSET"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"QANSET v1 d_in={dataset.d_in}\n")
        for image_set in dataset.sets:
            for sample in image_set.samples:
                values = " ".join(format_full(v) for v in sample.x)
                f.write(f"{image_set.identity} {image_set.set_id} {format_full(sample.q_true)} {values}\n")
    logger.info("Dataset salvo em %s (%d amostras)", path, dataset.num_samples)


def _parse_sample_line(line, lineno, d_in, path):
    fields = line.split()
    if len(fields) != 3 + d_in:
        raise ParseError(f"esperados {3 + d_in} campos, encontrados {len(fields)}", lineno, path)
    try:
        identity = int(fields[0])
        set_id = int(fields[1])
    except ValueError:
        raise ParseError("identity e set_id devem ser inteiros", lineno, path) from None
    try:
        values = [float(v) for v in fields[2:]]
    except ValueError:
        raise ParseError("campo não numérico", lineno, path) from None
    try:
        sample = Sample(values[1:], identity, values[0])
    except QanError as e:
        raise ParseError(str(e), lineno, path) from None
    return set_id, sample


def load_dataset(path):
    """Lê um arquivo QANSET, validando cabeçalho, dimensões e campos"""
    d_in = None
    grouped = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if d_in is None:
                match = HEADER_RE.match(line)
                if not match:
                    raise ParseError("cabeçalho inválido, esperado 'QANSET v1 d_in=<int>'", lineno, path)
                d_in = int(match.group(1))
                if d_in < 1:
                    raise ParseError("d_in deve ser positivo", lineno, path)
                continue
            set_id, sample = _parse_sample_line(line, lineno, d_in, path)
            entry = grouped.setdefault(set_id, (sample.identity, []))
            if entry[0] != sample.identity:
                raise ParseError(
                    f"conjunto {set_id} com identidades {entry[0]} e {sample.identity}", lineno, path
                )
            entry[1].append(sample)
    if d_in is None:
        raise ParseError("arquivo vazio, cabeçalho ausente", None, path)
    if not grouped:
        raise ParseError("nenhum conjunto no arquivo", None, path)
    sets = tuple(ImageSet(tuple(samples), identity, set_id) for set_id, (identity, samples) in grouped.items())
    return Dataset(sets, d_in)
